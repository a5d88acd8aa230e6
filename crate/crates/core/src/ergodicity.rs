//! Invariant-measure empirics: occupation-time summaries, the two-initial
//! -condition uniqueness probe via observable-marginal KS distances, the
//! pathwise continuity probe behind the strong-Feller estimate, and the
//! small-ball return experiment.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{
    solve_trajectory_indexed, solve_with_zpath, DynError, Observable, SimConfig,
    TrajectoryRecord,
};
use crate::noise::NoiseSpec;
use crate::ou::{simulate_z, uniform_grid};
use crate::spectral::SpectralField;
use crate::stats::{ks_two_sample, quantile_sorted, wilson_lower, Histogram};

#[derive(Debug, Error)]
pub enum ErgodicityError {
    #[error("burn-in {burn_in} does not leave a window before the horizon {horizon}")]
    EmptyWindow { burn_in: f64, horizon: f64 },
    #[error("observable {0} needs full-field checkpoints at every node")]
    NeedsCheckpoints(String),
    #[error("all trajectories aborted")]
    AllAborted,
    #[error(transparent)]
    Dyn(#[from] DynError),
    #[error(transparent)]
    Ou(#[from] crate::ou::OuError),
}

/// Occupation statistics of an observable over a time window.
#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalSummary {
    pub observable: String,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// (level, value) pairs, levels increasing.
    pub quantiles: Vec<(f64, f64)>,
    pub histogram: Histogram,
    pub burn_in: f64,
}

/// Occupation statistics of `obs` over t in [burn_in, horizon]. Norm
/// observables read the recorded per-node norms; field observables need
/// checkpoints at every node (checkpoint_stride = 1).
pub fn time_average_summary(
    tr: &TrajectoryRecord,
    burn_in: f64,
    obs: &Observable,
) -> Result<EmpiricalSummary, ErgodicityError> {
    let horizon = tr.final_time();
    if !(burn_in < horizon) {
        return Err(ErgodicityError::EmptyWindow { burn_in, horizon });
    }
    let values: Vec<f64> = match obs {
        Observable::NormH => tr
            .rows
            .iter()
            .filter(|r| r.t >= burn_in)
            .map(|r| r.norm_h_x)
            .collect(),
        Observable::NormV => tr
            .rows
            .iter()
            .filter(|r| r.t >= burn_in)
            .map(|r| r.norm_v_x)
            .collect(),
        other => {
            if tr.config.checkpoint_stride != 1 {
                return Err(ErgodicityError::NeedsCheckpoints(other.name()));
            }
            tr.checkpoints
                .iter()
                .filter(|c| c.t >= burn_in)
                .map(|c| other.eval(&c.x()))
                .collect()
        }
    };
    if values.is_empty() {
        return Err(ErgodicityError::EmptyWindow { burn_in, horizon });
    }
    let mut sorted = values.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let levels = [0.05, 0.25, 0.5, 0.75, 0.95];
    let quantiles: Vec<(f64, f64)> = levels
        .iter()
        .map(|&q| (q, quantile_sorted(&sorted, q)))
        .collect();
    Ok(EmpiricalSummary {
        observable: obs.name(),
        count: values.len(),
        mean: values.iter().sum::<f64>() / values.len() as f64,
        median: quantile_sorted(&sorted, 0.5),
        quantiles,
        histogram: Histogram::new(&values, 30),
        burn_in,
    })
}

/// KS comparison of one observable's laws at the final time under two
/// initial conditions.
#[derive(Debug, Clone, Serialize)]
pub struct KsReport {
    pub observable: String,
    pub statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
    pub x1_norm_h: f64,
    pub x2_norm_h: f64,
    /// False when (alpha, beta) sits outside the uniqueness window; the
    /// probe still runs but the merging contract is not claimed there.
    pub within_uniqueness_window: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    pub reports: Vec<KsReport>,
    pub burn_in: f64,
    pub horizon: f64,
    pub aborted_paths: usize,
    /// Raw terminal samples per observable (row order = observables),
    /// kept out of the JSON summary but dumped as CSV by the runner.
    #[serde(skip)]
    pub x1_samples: Vec<Vec<f64>>,
    #[serde(skip)]
    pub x2_samples: Vec<Vec<f64>>,
}

/// Ensemble values of each observable at the final time, one value per
/// trajectory, from independent-noise paths started at x0. Aborted paths
/// (step-budget or non-finite) are dropped and counted.
#[allow(clippy::type_complexity)]
fn terminal_ensemble(
    x0: &SpectralField,
    spec: &NoiseSpec,
    cfg: &SimConfig,
    observables: &[Observable],
    n_mc: usize,
    traj_offset: u64,
) -> (Vec<Vec<f64>>, usize) {
    let need_fields = observables
        .iter()
        .any(|o| !matches!(o, Observable::NormH | Observable::NormV));
    let mut cfg_run = cfg.clone();
    // Record only the endpoint field when an observable needs it.
    cfg_run.checkpoint_stride = if need_fields { cfg.n_steps().max(1) } else { 0 };
    let per_path: Vec<Option<Vec<f64>>> = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let rec =
                match solve_trajectory_indexed(x0, spec, &cfg_run, traj_offset + i as u64) {
                    Ok(r) => r,
                    Err(_) => return None,
                };
            let last_row = rec.rows.last().expect("nonempty grid");
            let vals = observables
                .iter()
                .map(|o| match o {
                    Observable::NormH => last_row.norm_h_x,
                    Observable::NormV => last_row.norm_v_x,
                    other => {
                        let c = rec.checkpoints.last().expect("endpoint checkpoint");
                        other.eval(&c.x())
                    }
                })
                .collect();
            Some(vals)
        })
        .collect();
    let aborted = per_path.iter().filter(|p| p.is_none()).count();
    let mut columns = vec![Vec::with_capacity(n_mc); observables.len()];
    for vals in per_path.into_iter().flatten() {
        for (c, v) in columns.iter_mut().zip(vals) {
            c.push(v);
        }
    }
    (columns, aborted)
}

/// Two-initial-condition uniqueness probe: independent-noise ensembles from
/// x1 and x2, with the law of each observable at t = horizon compared by a
/// two-sample KS test. Under the uniqueness window the two laws merge for
/// large horizons, so the test should pass at the 0.01 level.
pub fn uniqueness_probe(
    x1: &SpectralField,
    x2: &SpectralField,
    spec: &NoiseSpec,
    cfg: &SimConfig,
    observables: &[Observable],
    burn_in: f64,
    n_mc: usize,
    seed: u64,
) -> Result<UniquenessReport, ErgodicityError> {
    if !(burn_in < cfg.horizon) {
        return Err(ErgodicityError::EmptyWindow {
            burn_in,
            horizon: cfg.horizon,
        });
    }
    let mut cfg_run = cfg.clone();
    cfg_run.seed = seed;
    let (cols1, ab1) = terminal_ensemble(x1, spec, &cfg_run, observables, n_mc, 0);
    let (cols2, ab2) =
        terminal_ensemble(x2, spec, &cfg_run, observables, n_mc, n_mc as u64);
    if cols1.iter().any(|c| c.is_empty()) || cols2.iter().any(|c| c.is_empty()) {
        return Err(ErgodicityError::AllAborted);
    }
    let window = spec.ergodic_window();
    let reports = observables
        .iter()
        .zip(cols1.iter().zip(&cols2))
        .map(|(obs, (a, b))| {
            let ks = ks_two_sample(a, b);
            KsReport {
                observable: obs.name(),
                statistic: ks.statistic,
                p_value: ks.p_value,
                n1: ks.n1,
                n2: ks.n2,
                x1_norm_h: x1.norm_h(),
                x2_norm_h: x2.norm_h(),
                within_uniqueness_window: window,
            }
        })
        .collect();
    Ok(UniquenessReport {
        reports,
        burn_in,
        horizon: cfg.horizon,
        aborted_paths: ab1 + ab2,
        x1_samples: cols1,
        x2_samples: cols2,
    })
}

/// R(delta, t) table of the pathwise continuity probe.
#[derive(Debug, Clone, Serialize)]
pub struct ContinuityCell {
    pub delta: f64,
    pub t: f64,
    /// Mean over the ensemble of ||X^x_t - X^y_t||_V / ||x - y||_H.
    pub ratio_mean: f64,
    pub ratio_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuityReport {
    pub cells: Vec<ContinuityCell>,
    pub n_mc: usize,
}

/// Common-noise sensitivity to the initial condition: y = x + delta * e with
/// e the unit mode-1 cosine. Contracts: for fixed t the ratio is bounded
/// uniformly over delta (Lipschitz in initial data), and ratio * sqrt(t)
/// stays bounded over the probed times.
#[allow(clippy::too_many_arguments)]
pub fn pathwise_continuity_probe(
    x: &SpectralField,
    delta_list: &[f64],
    t_list: &[f64],
    spec: &NoiseSpec,
    cfg: &SimConfig,
    n_mc: usize,
    seed: u64,
) -> Result<ContinuityReport, ErgodicityError> {
    assert!(!delta_list.is_empty() && !t_list.is_empty());
    let t_max = t_list.iter().cloned().fold(0.0, f64::max);
    let mut cfg_run = cfg.clone();
    cfg_run.horizon = t_max;
    cfg_run.seed = seed;
    cfg_run.checkpoint_stride = 1;

    let per_traj: Vec<Option<Vec<Vec<f64>>>> = (0..n_mc)
        .into_par_iter()
        .map(|traj| {
            let grid = uniform_grid(t_max, cfg_run.n_steps());
            let zp = simulate_z(spec, &grid, seed, traj as u64).ok()?;
            let base = solve_with_zpath(x, &zp, &cfg_run, traj as u64).ok()?;
            let mut rows = Vec::with_capacity(delta_list.len());
            for &delta in delta_list {
                let e = SpectralField::cosine_mode(cfg.m, 1, delta);
                let y0 = x.add(&e);
                let pert = solve_with_zpath(&y0, &zp, &cfg_run, traj as u64).ok()?;
                let mut ratios = Vec::with_capacity(t_list.len());
                for &t in t_list {
                    let idx = base
                        .checkpoints
                        .iter()
                        .position(|c| (c.t - t).abs() < 0.5 * cfg.dt)
                        .expect("probe time on the grid");
                    let diff = base.checkpoints[idx]
                        .x()
                        .distance(&pert.checkpoints[idx].x(), 0.5);
                    ratios.push(diff / delta);
                }
                rows.push(ratios);
            }
            Some(rows)
        })
        .collect();

    let kept: Vec<&Vec<Vec<f64>>> = per_traj.iter().flatten().collect();
    if kept.is_empty() {
        return Err(ErgodicityError::AllAborted);
    }
    let mut cells = Vec::new();
    for (di, &delta) in delta_list.iter().enumerate() {
        for (ti, &t) in t_list.iter().enumerate() {
            let vals: Vec<f64> = kept.iter().map(|rows| rows[di][ti]).collect();
            cells.push(ContinuityCell {
                delta,
                t,
                ratio_mean: vals.iter().sum::<f64>() / vals.len() as f64,
                ratio_max: vals.iter().cloned().fold(0.0, f64::max),
            });
        }
    }
    Ok(ContinuityReport {
        cells,
        n_mc: kept.len(),
    })
}

/// Decay rate of the deterministic contraction ||X_t||_H <= e^{-(pi - 3/2) t} R.
pub const RETURN_RATE: f64 = std::f64::consts::PI - 1.5;

/// Additive constant of the small-ball return bound
/// e^{-(pi-3/2)t} R + C (eps^4 + eps^2 + eps), derived from the energy
/// estimate: sqrt((eps^2 + C* eps^4)/(2pi-3)) + eps/(2pi) with C* the frozen
/// splitting constant, rounded up with a factor-2 safety margin.
pub fn return_bound_constant() -> f64 {
    let c_star = crate::inequalities::calibration::ENERGY_C_STAR;
    let lam = crate::dynamics::ENERGY_RATE;
    2.0 * ((1.0f64 / lam).sqrt().max((c_star / lam).sqrt()) + 1.0 / (2.0 * std::f64::consts::PI))
}

#[derive(Debug, Clone, Serialize)]
pub struct ReturnReport {
    pub r_init: f64,
    pub eps: f64,
    pub delta: f64,
    pub n_mc: usize,
    /// Paths with sup_t ||Z_t||_V <= eps.
    pub accepted: usize,
    /// Pathwise violations of the contraction bound among accepted paths.
    pub bound_violations: usize,
    /// Unconditional count of ||X_T||_H < delta.
    pub returns: usize,
    pub return_frequency: f64,
    pub wilson_lower: f64,
    /// No accepted paths: the bound could not be probed at this eps.
    pub inconclusive: bool,
}

/// Small-ball return probe: start from ||x0||_H = R (mode-1 profile), filter
/// paths by sup ||Z||_V <= eps, verify the deterministic contraction bound
/// pathwise on the accepted set, and report the unconditional frequency of
/// X_T landing in B_H(delta) with a Wilson lower bound.
#[allow(clippy::too_many_arguments)]
pub fn small_ball_return_probe(
    r_init: f64,
    eps: f64,
    delta: f64,
    spec: &NoiseSpec,
    cfg: &SimConfig,
    n_mc: usize,
    seed: u64,
) -> Result<ReturnReport, ErgodicityError> {
    let x0 = SpectralField::cosine_mode(cfg.m, 1, r_init);
    let bound_c = return_bound_constant();
    let eps_term = bound_c * (eps.powi(4) + eps * eps + eps);
    let mut cfg_run = cfg.clone();
    cfg_run.seed = seed;
    cfg_run.checkpoint_stride = 0;

    #[derive(Default)]
    struct Tally {
        accepted: usize,
        violations: usize,
        returns: usize,
        solved: usize,
    }

    let tallies: Vec<Tally> = (0..n_mc)
        .into_par_iter()
        .map(|traj| {
            let mut t = Tally::default();
            let rec = match solve_trajectory_indexed(&x0, spec, &cfg_run, traj as u64) {
                Ok(r) => r,
                Err(_) => return t,
            };
            t.solved = 1;
            let z_sup = rec.rows.iter().map(|r| r.norm_v_z).fold(0.0, f64::max);
            if z_sup <= eps {
                t.accepted = 1;
                for row in &rec.rows {
                    let bound = (-RETURN_RATE * row.t).exp() * r_init + eps_term;
                    if row.norm_h_x > bound * (1.0 + 1e-9) {
                        t.violations += 1;
                        break;
                    }
                }
            }
            if rec.rows.last().expect("nonempty").norm_h_x < delta {
                t.returns = 1;
            }
            t
        })
        .collect();

    let accepted = tallies.iter().map(|t| t.accepted).sum();
    let violations = tallies.iter().map(|t| t.violations).sum();
    let returns: usize = tallies.iter().map(|t| t.returns).sum();
    let solved: usize = tallies.iter().map(|t| t.solved).sum();
    if solved == 0 {
        return Err(ErgodicityError::AllAborted);
    }
    Ok(ReturnReport {
        r_init,
        eps,
        delta,
        n_mc,
        accepted,
        bound_violations: violations,
        returns,
        return_frequency: returns as f64 / n_mc as f64,
        wilson_lower: wilson_lower(returns as u64, n_mc as u64, 1.96),
        inconclusive: accepted == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::solve_trajectory;

    fn tiny_cfg(m: usize) -> SimConfig {
        SimConfig {
            m,
            n_g: 3 * m,
            dt: 1e-2,
            horizon: 1.0,
            ..SimConfig::default()
        }
    }

    #[test]
    fn summary_of_degenerate_path() {
        // c0 = 0 and x0 = 0: all occupation mass at obs(0) = 0.
        let spec = NoiseSpec::new(1.8, 0.85, 0.0, 4).unwrap();
        let tr = solve_trajectory(&SpectralField::zeros(4), &spec, &tiny_cfg(4)).unwrap();
        let s = time_average_summary(&tr, 0.5, &Observable::NormH).unwrap();
        assert_eq!(s.mean, 0.0);
        assert_eq!(s.median, 0.0);
        assert_eq!(s.histogram.total() as usize, s.count);
        for w in s.quantiles.windows(2) {
            assert!(w[0].1 <= w[1].1);
        }
    }

    #[test]
    fn summary_rejects_empty_window() {
        let spec = NoiseSpec::new(1.8, 0.85, 0.0, 4).unwrap();
        let tr = solve_trajectory(&SpectralField::zeros(4), &spec, &tiny_cfg(4)).unwrap();
        assert!(matches!(
            time_average_summary(&tr, 2.0, &Observable::NormH),
            Err(ErgodicityError::EmptyWindow { .. })
        ));
    }

    #[test]
    fn summary_field_observable_needs_checkpoints() {
        let spec = NoiseSpec::new(1.8, 0.85, 0.0, 4).unwrap();
        let tr = solve_trajectory(&SpectralField::zeros(4), &spec, &tiny_cfg(4)).unwrap();
        assert!(matches!(
            time_average_summary(&tr, 0.5, &Observable::ModeAmp(1)),
            Err(ErgodicityError::NeedsCheckpoints(_))
        ));
    }

    #[test]
    fn deterministic_contraction_exact_rate() {
        // c0 = 0: log ||X_t|| - log R <= -(pi - 3/2) t at every grid node.
        let spec = NoiseSpec::new(1.8, 0.85, 0.0, 8).unwrap();
        let cfg = SimConfig {
            m: 8,
            n_g: 24,
            dt: 1e-3,
            horizon: 2.0,
            ..SimConfig::default()
        };
        for r_init in [1.0, 5.0] {
            let x0 = SpectralField::cosine_mode(8, 1, r_init);
            let tr = solve_trajectory(&x0, &spec, &cfg).unwrap();
            for row in &tr.rows {
                let bound = (-RETURN_RATE * row.t).exp() * r_init;
                assert!(
                    row.norm_h_x <= bound * (1.0 + 1e-9),
                    "t {}: {} vs {}",
                    row.t,
                    row.norm_h_x,
                    bound
                );
            }
        }
    }

    #[test]
    fn return_probe_zero_noise() {
        let spec = NoiseSpec::new(1.8, 0.85, 0.0, 8).unwrap();
        let cfg = SimConfig {
            m: 8,
            n_g: 24,
            dt: 1e-2,
            horizon: 3.0,
            ..SimConfig::default()
        };
        let rep = small_ball_return_probe(5.0, 0.0, 1.0, &spec, &cfg, 16, 0).unwrap();
        assert_eq!(rep.accepted, 16); // Z = 0 passes any eps filter
        assert_eq!(rep.bound_violations, 0);
        // e^{-(pi-3/2) * 3} * 5 = 0.036 < 1: every path returns.
        assert_eq!(rep.returns, 16);
        assert!(rep.wilson_lower > 0.0);
        assert!(!rep.inconclusive);
    }

    #[test]
    fn continuity_probe_zero_noise_single_mode() {
        // c0 = 0, x = 0, linear regime: the mode-1 difference evolves as
        // delta e^{-(gamma_1 - 1) t} (1 + O(delta^2)), so R ~ sqrt(gamma_1)
        // e^{-(gamma_1 - 1) t} for the V/H ratio.
        let spec = NoiseSpec::new(1.8, 0.85, 0.0, 8).unwrap();
        let cfg = SimConfig {
            m: 8,
            n_g: 24,
            dt: 1e-4,
            horizon: 0.05,
            ..SimConfig::default()
        };
        let rep = pathwise_continuity_probe(
            &SpectralField::zeros(8),
            &[1e-4],
            &[0.01, 0.05],
            &spec,
            &cfg,
            1,
            0,
        )
        .unwrap();
        for cell in &rep.cells {
            let g1 = crate::spectral::gamma(1);
            let expect = g1.sqrt() * (-(g1 - 1.0) * cell.t).exp();
            assert!(
                (cell.ratio_mean - expect).abs() < 0.02 * expect,
                "t {}: {} vs {}",
                cell.t,
                cell.ratio_mean,
                expect
            );
        }
    }
}
