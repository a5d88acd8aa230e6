//! Mode-truncation hierarchy: the projection pi_m, the Galerkin convergence
//! experiment against a high-resolution reference run on common noise, and
//! the sup-moment growth experiment behind the existence of invariant
//! measures.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{solve_with_zpath, DynError, SimConfig};
use crate::noise::NoiseSpec;
use crate::ou::{simulate_z, uniform_grid};
use crate::spectral::SpectralField;
use crate::stats::{fit_affine_plus_root, quantile, AffineRootFit};

#[derive(Debug, Error)]
pub enum GalerkinError {
    #[error("projection level m = {m} exceeds the field cutoff {cutoff}")]
    LevelTooHigh { m: usize, cutoff: usize },
    #[error("projection level must be at least 1 (the space has no k = 0 mode)")]
    LevelZero,
    #[error("need max(m_list) <= m_ref / 2, got max {max_m} vs m_ref {m_ref}")]
    ReferenceTooClose { max_m: usize, m_ref: usize },
    #[error(transparent)]
    Dyn(#[from] DynError),
    #[error(transparent)]
    Ou(#[from] crate::ou::OuError),
}

/// pi_m: zero every mode above m. Idempotent, contraction in every
/// A^sigma norm; extension to a larger cutoff is a different operation.
pub fn project(x: &SpectralField, m: usize) -> Result<SpectralField, GalerkinError> {
    if m == 0 {
        return Err(GalerkinError::LevelZero);
    }
    if m > x.modes() {
        return Err(GalerkinError::LevelTooHigh {
            m,
            cutoff: x.modes(),
        });
    }
    Ok(SpectralField::new(
        x.cos_amps()[..m].to_vec(),
        x.sin_amps()[..m].to_vec(),
    )
    .expect("projection preserves validity"))
}

/// Representation plumbing: re-cut a field to exactly m modes, truncating
/// or zero-padding (padding does not change the function).
pub fn fit_to_modes(x: &SpectralField, m: usize) -> SpectralField {
    let mut a = vec![0.0; m];
    let mut b = vec![0.0; m];
    let n = x.modes().min(m);
    a[..n].copy_from_slice(&x.cos_amps()[..n]);
    b[..n].copy_from_slice(&x.sin_amps()[..n]);
    SpectralField::new(a, b).expect("copy preserves validity")
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelError {
    pub m: usize,
    pub err_h: f64,
    pub err_v: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub m_ref: usize,
    pub seed: u64,
    pub trajectory: u64,
    pub errors: Vec<LevelError>,
    /// Set when any run aborted (heavy-tail step-budget or non-finite
    /// state); the errors are then meaningless and the report is voided.
    pub voided: bool,
}

/// Galerkin truncation errors at the final time against an m_ref reference
/// run, all levels driven by the identical noise realization: the m-level
/// noise is the mode projection of the reference Z path, so the counter
/// -based streams guarantee bit-identical shared-mode increments.
pub fn galerkin_convergence_experiment(
    x0: &SpectralField,
    spec: &NoiseSpec,
    cfg: &SimConfig,
    m_list: &[usize],
    m_ref: usize,
    seed: u64,
    trajectory: u64,
) -> Result<ConvergenceReport, GalerkinError> {
    let max_m = m_list.iter().copied().max().unwrap_or(0);
    if max_m == 0 {
        return Err(GalerkinError::LevelZero);
    }
    if max_m > m_ref / 2 {
        return Err(GalerkinError::ReferenceTooClose { max_m, m_ref });
    }
    let spec_ref = spec.with_modes(m_ref).map_err(crate::ou::OuError::from)?;

    // One Z realization at the reference cutoff; the grid is fixed by its
    // first pass so that every level shares bit-identical times and modes.
    let base = uniform_grid(cfg.horizon, cfg.n_steps());
    let first = simulate_z(&spec_ref, &base, seed, trajectory)?;
    let norms: Vec<f64> = first.fields.iter().map(|f| f.norm_v()).collect();
    let zref = match crate::dynamics::refine_grid(
        &base,
        &norms,
        cfg.adapt_threshold,
        cfg.max_halvings,
    )? {
        Some(grid) => simulate_z(&spec_ref, &grid, seed, trajectory)?,
        None => first,
    };

    // Only the final field of each level is compared; a checkpoint stride
    // equal to the last index records exactly the endpoints.
    let final_field = |m: usize| -> Result<SpectralField, DynError> {
        let mut cfg_m = cfg.clone();
        cfg_m.m = m;
        cfg_m.n_g = 3 * m;
        cfg_m.seed = seed;
        cfg_m.checkpoint_stride = (zref.times.len() - 1).max(1);
        let zp = zref.project(m);
        let x0_m = fit_to_modes(x0, m);
        let rec = solve_with_zpath(&x0_m, &zp, &cfg_m, trajectory)?;
        let last = rec
            .checkpoints
            .last()
            .expect("stride divides the last index");
        debug_assert_eq!(last.index, zref.times.len() - 1);
        Ok(last.x())
    };

    let reference = match final_field(m_ref) {
        Ok(f) => f,
        Err(DynError::StepBudgetExceeded { .. }) | Err(DynError::NonFinite { .. }) => {
            return Ok(ConvergenceReport {
                m_ref,
                seed,
                trajectory,
                errors: Vec::new(),
                voided: true,
            })
        }
        Err(e) => return Err(e.into()),
    };

    let mut errors = Vec::with_capacity(m_list.len());
    let mut voided = false;
    for &m in m_list {
        match final_field(m) {
            Ok(f) => errors.push(LevelError {
                m,
                err_h: f.distance(&reference, 0.0),
                err_v: f.distance(&reference, 0.5),
            }),
            Err(DynError::StepBudgetExceeded { .. }) | Err(DynError::NonFinite { .. }) => {
                voided = true;
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(ConvergenceReport {
        m_ref,
        seed,
        trajectory,
        errors,
        voided,
    })
}

/// Ensemble version across independent trajectories (common cfg/spec).
pub fn galerkin_convergence_ensemble(
    x0: &SpectralField,
    spec: &NoiseSpec,
    cfg: &SimConfig,
    m_list: &[usize],
    m_ref: usize,
    seed: u64,
    n_seeds: usize,
) -> Result<Vec<ConvergenceReport>, GalerkinError> {
    let reports: Vec<Result<ConvergenceReport, String>> = (0..n_seeds)
        .into_par_iter()
        .map(|traj| {
            galerkin_convergence_experiment(x0, spec, cfg, m_list, m_ref, seed, traj as u64)
                .map_err(|e| e.to_string())
        })
        .collect();
    let mut out = Vec::with_capacity(n_seeds);
    for r in reports {
        match r {
            Ok(rep) => out.push(rep),
            Err(e) => return Err(GalerkinError::Dyn(DynError::BadConfig(e))),
        }
    }
    Ok(out)
}

/// Per-horizon Monte Carlo estimates of the sup-moment functionals.
#[derive(Debug, Clone, Serialize)]
pub struct MomentRow {
    pub t: f64,
    /// E sup_{s <= t} (||X_s||_H^2 + 1)^{1/2}.
    pub sup_mean: f64,
    pub sup_median: f64,
    /// E int_0^t ||X_s||_V^2 / (||X_s||_H^2 + 1)^{1/2} ds.
    pub dissipation_mean: f64,
    pub dissipation_median: f64,
    /// E int_0^t ||X_s||_V ds.
    pub v_integral_mean: f64,
    pub v_integral_median: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentGrowthReport {
    pub rows: Vec<MomentRow>,
    /// Fit of the sup-moment means to a + b t + c sqrt(t), b and c >= 0;
    /// None when fewer than three horizons were probed.
    pub sup_fit: Option<AffineRootFit>,
    /// Growth ratios of the V-norm time integral between consecutive
    /// horizons (near 2 when horizons double and the dynamics is
    /// statistically stationary after burn-in).
    pub v_integral_ratios: Vec<f64>,
    pub n_mc: usize,
    pub aborted_paths: usize,
}

/// Runs n_mc paths from x0 = 0 to max(t_list) and reads every horizon off
/// the same paths (prefix sups and prefix integrals). Heavy-tail outliers
/// are retained; medians are reported alongside means.
pub fn moment_growth_experiment(
    spec: &NoiseSpec,
    cfg: &SimConfig,
    t_list: &[f64],
    n_mc: usize,
    seed: u64,
) -> Result<MomentGrowthReport, GalerkinError> {
    assert!(!t_list.is_empty());
    let mut horizons = t_list.to_vec();
    horizons.sort_by(|a, b| a.total_cmp(b));
    let t_max = *horizons.last().unwrap();
    let mut cfg_run = cfg.clone();
    cfg_run.horizon = t_max;
    cfg_run.seed = seed;
    cfg_run.checkpoint_stride = 0;
    let x0 = SpectralField::zeros(cfg.m);

    struct PathStats {
        sup: Vec<f64>,
        dissipation: Vec<f64>,
        v_integral: Vec<f64>,
    }

    let results: Vec<Option<PathStats>> = (0..n_mc)
        .into_par_iter()
        .map(|traj| {
            let rec =
                match crate::dynamics::solve_trajectory_indexed(&x0, spec, &cfg_run, traj as u64) {
                    Ok(r) => r,
                    Err(DynError::StepBudgetExceeded { .. }) | Err(DynError::NonFinite { .. }) => {
                        return None
                    }
                    Err(_) => return None,
                };
            let mut sup = Vec::with_capacity(horizons.len());
            let mut dis = Vec::with_capacity(horizons.len());
            let mut vint = Vec::with_capacity(horizons.len());
            let mut hi = 0;
            let mut running_sup = 0.0f64;
            let mut running_dis = 0.0f64;
            let mut running_vint = 0.0f64;
            for (j, row) in rec.rows.iter().enumerate() {
                let f = (row.norm_h_x * row.norm_h_x + 1.0).sqrt();
                running_sup = running_sup.max(f);
                if j > 0 {
                    let prev = &rec.rows[j - 1];
                    let h = row.t - prev.t;
                    let g0 = prev.norm_v_x * prev.norm_v_x
                        / (prev.norm_h_x * prev.norm_h_x + 1.0).sqrt();
                    let g1 =
                        row.norm_v_x * row.norm_v_x / (row.norm_h_x * row.norm_h_x + 1.0).sqrt();
                    running_dis += 0.5 * h * (g0 + g1);
                    running_vint += 0.5 * h * (prev.norm_v_x + row.norm_v_x);
                }
                while hi < horizons.len() && row.t >= horizons[hi] - 1e-12 {
                    sup.push(running_sup);
                    dis.push(running_dis);
                    vint.push(running_vint);
                    hi += 1;
                }
            }
            while hi < horizons.len() {
                sup.push(running_sup);
                dis.push(running_dis);
                vint.push(running_vint);
                hi += 1;
            }
            Some(PathStats {
                sup,
                dissipation: dis,
                v_integral: vint,
            })
        })
        .collect();

    let aborted = results.iter().filter(|r| r.is_none()).count();
    let kept: Vec<&PathStats> = results.iter().flatten().collect();
    assert!(!kept.is_empty(), "all paths aborted");

    let mut rows = Vec::with_capacity(horizons.len());
    for (i, &t) in horizons.iter().enumerate() {
        let sups: Vec<f64> = kept.iter().map(|p| p.sup[i]).collect();
        let diss: Vec<f64> = kept.iter().map(|p| p.dissipation[i]).collect();
        let vints: Vec<f64> = kept.iter().map(|p| p.v_integral[i]).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        rows.push(MomentRow {
            t,
            sup_mean: mean(&sups),
            sup_median: quantile(&sups, 0.5),
            dissipation_mean: mean(&diss),
            dissipation_median: quantile(&diss, 0.5),
            v_integral_mean: mean(&vints),
            v_integral_median: quantile(&vints, 0.5),
        });
    }

    let t: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.sup_mean).collect();
    let sup_fit = (t.len() >= 3).then(|| fit_affine_plus_root(&t, &y));
    let v_integral_ratios: Vec<f64> = rows
        .windows(2)
        .map(|w| w[1].v_integral_mean / w[0].v_integral_mean.max(1e-300))
        .collect();

    Ok(MomentGrowthReport {
        rows,
        sup_fit,
        v_integral_ratios,
        n_mc,
        aborted_paths: aborted,
    })
}
