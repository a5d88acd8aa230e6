//! Nonlinearity estimates checked empirically over random field families:
//! the constant-free bound <x, -N(x)> <= 1/4, the calibrated-constant
//! growth and Lipschitz bounds, and the cubic scaling exponents.
//!
//! The existential constants are pinned by a one-off pilot (see
//! `measure_ratio_sups` and the `calibrate` example): the supremum of each
//! empirical ratio over a 1e5-sample pilot set, including amplitude sweeps
//! s in {1, ..., 2^10}, multiplied by a safety factor of 2 and frozen in
//! [`calibration`].

use serde::Serialize;

use crate::dynamics::{NlEvaluator, Forcing};
use crate::noise::{stream_id, RngStream, PURPOSE_FIELD};
use crate::spectral::{gamma, SpectralField};
use crate::stats::fit_line;

/// Frozen constants from the calibration pilot (seed 7191, 25000 sample
/// pairs per family at m = 64, amplitude sweep to 2^10, safety factor 2 on
/// the measured suprema; see the `calibrate` example for the procedure).
pub mod calibration {
    /// ||N(x)||_V <= C (||x||_V + ||x||_V^3). Pilot sup 0.99999.
    pub const C_NV: f64 = 2.0;
    /// ||N(x)-N(y)||_H <= C (1 + ||A^{1/4}x||_H^2 + ||A^{1/4}y||_H^2) ||x-y||_H.
    /// Pilot sup 0.99565.
    pub const C_LIP_QUARTER: f64 = 1.9913;
    /// ||N(x)-N(y)||_H <= C (1 + ||A^{1/6}x||_H^2 + ||A^{1/6}y||_H^2) ||A^{1/6}(x-y)||_H.
    /// Pilot sup 0.50884.
    pub const C_LIP_SIXTH: f64 = 1.0177;
    /// ||N(x)||_H <= C (1 + ||A^{1/6}x||_H^3). Pilot sup 0.34742.
    pub const C_GROWTH: f64 = 0.6948;
    /// <-N(u+v), u> <= 3/2 ||u||_H^2 + 1/2 ||v||_H^2 + C ||v||_V^4.
    /// Pilot sup 1.02e-4 (attained near u = -v/4 at large amplitude).
    pub const C_SPLIT: f64 = 2.1e-4;
    /// Coefficient of ||Z||_V^4 in the integrated energy estimate; the
    /// Gronwall derivation doubles the splitting constant.
    pub const ENERGY_C_STAR: f64 = 2.0 * C_SPLIT;
    /// Noise amplitude with E sup_{t<=1} ||Z_t||_V near 1 (pilot 0.358 at
    /// c0 = 1); at this level P(sup <= 0.5) ~ 0.37, so the accessibility
    /// probe has an estimable target.
    pub const ACCESSIBILITY_C0: f64 = 2.8;
    /// Noise amplitude giving ~5% acceptance of {sup_{t<=5} ||Z||_V <= 0.5}
    /// in the small-ball return probe at the solver grid resolution
    /// dt = 1e-3 (the grid sup grows with resolution, so the level is tied
    /// to it; pilot acceptance 0.067).
    pub const RETURN_PROBE_C0: f64 = 1.5;
}

/// Documented random-field families the suite samples from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FieldFamily {
    /// Flat H spectrum: every real amplitude N(0,1)/sqrt(2m).
    WhiteH,
    /// Flat V spectrum: amplitudes N(0,1) gamma_k^{-1/2} / sqrt(2m).
    WhiteV,
    /// One random mode with a standard normal amplitude.
    SingleMode,
    /// One random mode with amplitude log-uniform in [1, 2^10].
    LargeAmplitude,
}

pub const ALL_FAMILIES: [FieldFamily; 4] = [
    FieldFamily::WhiteH,
    FieldFamily::WhiteV,
    FieldFamily::SingleMode,
    FieldFamily::LargeAmplitude,
];

impl FieldFamily {
    pub fn sample(self, m: usize, rng: &mut RngStream) -> SpectralField {
        match self {
            FieldFamily::WhiteH => {
                let s = 1.0 / (2.0 * m as f64).sqrt();
                let mut a = vec![0.0; m];
                let mut b = vec![0.0; m];
                for k in 0..m {
                    let (g1, g2) = rng.normal_pair();
                    a[k] = s * g1;
                    b[k] = s * g2;
                }
                SpectralField::new(a, b).expect("finite draws")
            }
            FieldFamily::WhiteV => {
                let s = 1.0 / (2.0 * m as f64).sqrt();
                let mut a = vec![0.0; m];
                let mut b = vec![0.0; m];
                for k in 0..m {
                    let w = s / gamma(k + 1).sqrt();
                    let (g1, g2) = rng.normal_pair();
                    a[k] = w * g1;
                    b[k] = w * g2;
                }
                SpectralField::new(a, b).expect("finite draws")
            }
            FieldFamily::SingleMode => {
                let k = 1 + (rng.uniform() * m as f64) as usize;
                let k = k.min(m);
                let (g, _) = rng.normal_pair();
                if rng.uniform() < 0.5 {
                    SpectralField::cosine_mode(m, k, g)
                } else {
                    SpectralField::sine_mode(m, k, g)
                }
            }
            FieldFamily::LargeAmplitude => {
                let k = 1 + (rng.uniform() * m as f64) as usize;
                let k = k.min(m);
                let c = (rng.uniform() * 10.0 * std::f64::consts::LN_2).exp();
                SpectralField::cosine_mode(m, k, c)
            }
        }
    }
}

/// Empirical ratio suprema, one per calibrated inequality.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct RatioSups {
    pub nv: f64,
    pub lip_quarter: f64,
    pub lip_sixth: f64,
    pub growth: f64,
    pub split: f64,
}

impl RatioSups {
    fn merge(&mut self, other: &RatioSups) {
        self.nv = self.nv.max(other.nv);
        self.lip_quarter = self.lip_quarter.max(other.lip_quarter);
        self.lip_sixth = self.lip_sixth.max(other.lip_sixth);
        self.growth = self.growth.max(other.growth);
        self.split = self.split.max(other.split);
    }
}

fn ratios_for_pair(nl: &NlEvaluator, x: &SpectralField, y: &SpectralField) -> RatioSups {
    let nx = nl.eval(x);
    let ny = nl.eval(y);
    let mut r = RatioSups::default();

    let xv = x.norm_v();
    if xv > 0.0 {
        r.nv = nx.norm_v() / (xv + xv * xv * xv);
    }
    let xh = x.norm_h();
    if xh > 0.0 {
        let x6 = x.apply_a_power(1.0 / 6.0).norm_h();
        r.growth = nx.norm_h() / (1.0 + x6 * x6 * x6);
    }

    let diff_h = x.distance(y, 0.0);
    if diff_h > 0.0 {
        let dn = nx.distance(&ny, 0.0);
        let x4 = x.apply_a_power(0.25).norm_h();
        let y4 = y.apply_a_power(0.25).norm_h();
        r.lip_quarter = dn / ((1.0 + x4 * x4 + y4 * y4) * diff_h);
        let x6 = x.apply_a_power(1.0 / 6.0).norm_h();
        let y6 = y.apply_a_power(1.0 / 6.0).norm_h();
        let d6 = x.sub(y).apply_a_power(1.0 / 6.0).norm_h();
        if d6 > 0.0 {
            r.lip_sixth = dn / ((1.0 + x6 * x6 + y6 * y6) * d6);
        }
    }

    // Splitting estimate with u = x, v = y.
    r.split = split_ratio(nl, x, y).max(split_ratio_structured(nl, y));
    r
}

/// (<-N(u+v), u> - 3/2 ||u||^2 - 1/2 ||v||^2) / ||v||_V^4, zero when the
/// numerator is not positive.
fn split_ratio(nl: &NlEvaluator, u: &SpectralField, v: &SpectralField) -> f64 {
    let vv = v.norm_v();
    if vv == 0.0 {
        return 0.0;
    }
    let n_sum = nl.eval(&u.add(v));
    let lhs = -n_sum.inner_h(u);
    let uh = u.norm_h();
    let vh = v.norm_h();
    let excess = lhs - 1.5 * uh * uh - 0.5 * vh * vh;
    if excess > 0.0 {
        excess / (vv * vv * vv * vv)
    } else {
        0.0
    }
}

/// Independent pairs almost never make the splitting numerator positive;
/// the binding configurations are anticorrelated, u ~ -v/4 pointwise. Scan
/// those directions explicitly so the calibrated constant dominates them.
fn split_ratio_structured(nl: &NlEvaluator, v: &SpectralField) -> f64 {
    let mut best = 0.0f64;
    for alpha in [-0.75, -0.5, -0.25, -0.125] {
        best = best.max(split_ratio(nl, &v.scale(alpha), v));
    }
    best
}

/// Scan the empirical ratio suprema over `n_samples` pairs per family,
/// sweeping amplitudes s in {1, 2, ..., 2^10} on every `sweep_stride`-th
/// pair. This is the calibration backend; the suite reuses it against the
/// frozen constants.
pub fn measure_ratio_sups(
    n_samples: usize,
    m: usize,
    seed: u64,
    sweep_stride: usize,
) -> RatioSups {
    let nl = NlEvaluator::new(m, 3 * m).expect("3m grid accepted");
    let mut sups = RatioSups::default();
    let mut idx = 0u64;
    for family in ALL_FAMILIES {
        let mut rng = RngStream::new(seed, stream_id(0, PURPOSE_FIELD, idx));
        idx += 1;
        for i in 0..n_samples {
            let x = family.sample(m, &mut rng);
            let y = family.sample(m, &mut rng);
            sups.merge(&ratios_for_pair(&nl, &x, &y));
            if sweep_stride > 0 && i % sweep_stride == 0 {
                let mut s = 1.0;
                for _ in 0..=10 {
                    sups.merge(&ratios_for_pair(&nl, &x.scale(s), &y.scale(s)));
                    s *= 2.0;
                }
            }
        }
    }
    sups
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    pub samples_per_family: usize,
    pub modes: usize,
    /// Max of <x, -N(x)> over all samples; must stay below 1/4.
    pub inner_bound_max: f64,
    pub inner_bound_violations: usize,
    pub ratio_sups: RatioSups,
    /// Count of ratios exceeding the frozen calibrated constants.
    pub ratio_violations: usize,
    /// Fitted log-log slopes of ||N(s x)||_V and ||N(s x)||_H against s
    /// over s in {2^7..2^10}, one per probe field; all must be within 0.05
    /// of the cubic exponent 3.
    pub scaling_exponents_v: Vec<f64>,
    pub scaling_exponents_h: Vec<f64>,
    pub max_exponent_error: f64,
    /// The truncated nonlinearity vanishes identically once s ||x||_V >= 2 rho.
    pub truncated_tail_vanishes: bool,
    pub passed: bool,
}

/// Machine-arithmetic slack on the exact bound <x, -N(x)> <= 1/4: the grid
/// quadrature satisfies the bound pointwise, so only rounding can exceed it.
const INNER_SLACK: f64 = 1e-10;

pub fn inequality_suite(n_samples: usize, seed: u64) -> InequalityReport {
    let m = 64;
    let nl = NlEvaluator::new(m, 3 * m).expect("3m grid accepted");

    let mut inner_max = f64::NEG_INFINITY;
    let mut inner_violations = 0usize;
    let mut sups = RatioSups::default();
    let mut idx = 0u64;
    for family in ALL_FAMILIES {
        let mut rng = RngStream::new(seed, stream_id(1, PURPOSE_FIELD, idx));
        idx += 1;
        for i in 0..n_samples {
            let x = family.sample(m, &mut rng);
            let y = family.sample(m, &mut rng);
            let inner = nl.energy_inner(&x);
            inner_max = inner_max.max(inner);
            if inner > 0.25 + INNER_SLACK * (1.0 + inner.abs()) {
                inner_violations += 1;
            }
            sups.merge(&ratios_for_pair(&nl, &x, &y));
            if i % 20 == 0 {
                let mut s = 1.0;
                for _ in 0..=10 {
                    sups.merge(&ratios_for_pair(&nl, &x.scale(s), &y.scale(s)));
                    s *= 2.0;
                }
            }
        }
    }

    let mut ratio_violations = 0usize;
    if sups.nv > calibration::C_NV {
        ratio_violations += 1;
    }
    if sups.lip_quarter > calibration::C_LIP_QUARTER {
        ratio_violations += 1;
    }
    if sups.lip_sixth > calibration::C_LIP_SIXTH {
        ratio_violations += 1;
    }
    if sups.growth > calibration::C_GROWTH {
        ratio_violations += 1;
    }
    if sups.split > calibration::C_SPLIT {
        ratio_violations += 1;
    }

    // Cubic growth exponents on 20 probe fields. The exponent is scale
    // invariant, so anchor the sweep where the cube dominates pointwise:
    // s_base puts the max grid amplitude at 2^7, and the ladder climbs to
    // 2^10 from there.
    let mut rng = RngStream::new(seed, stream_id(2, PURPOSE_FIELD, 0));
    let mut exps_v = Vec::new();
    let mut exps_h = Vec::new();
    let mut trunc_ok = true;
    for i in 0..20 {
        let family = ALL_FAMILIES[i % 3]; // skip LargeAmplitude: scaling is explicit here
        let x = family.sample(m, &mut rng);
        if x.norm_v() == 0.0 {
            continue;
        }
        let amp = x
            .to_grid(4 * m + 1)
            .expect("padded grid")
            .values
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()));
        let s_base = 128.0 / amp;
        let scales: Vec<f64> = (0..=3).map(|p| s_base * (1u64 << p) as f64).collect();
        let log_s: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
        let log_nv: Vec<f64> = scales
            .iter()
            .map(|&s| nl.eval(&x.scale(s)).norm_v().ln())
            .collect();
        let log_nh: Vec<f64> = scales
            .iter()
            .map(|&s| nl.eval(&x.scale(s)).norm_h().ln())
            .collect();
        exps_v.push(fit_line(&log_s, &log_nv).slope);
        exps_h.push(fit_line(&log_s, &log_nh).slope);

        // Truncation kills growth: N^rho(s x) = 0 once s ||x||_V >= 2 rho.
        let rho = 4.0 * x.norm_v();
        let s_dead = 16.0; // s ||x||_V = 16 ||x||_V > 2 rho = 8 ||x||_V
        let dead = nl.eval_forcing(&x.scale(s_dead), Forcing::Truncated(rho));
        if dead.norm_h() != 0.0 {
            trunc_ok = false;
        }
    }
    let max_exp_err = exps_v
        .iter()
        .chain(&exps_h)
        .map(|e| (e - 3.0).abs())
        .fold(0.0, f64::max);

    let passed = inner_violations == 0
        && ratio_violations == 0
        && max_exp_err <= 0.05
        && trunc_ok;
    InequalityReport {
        samples_per_family: n_samples,
        modes: m,
        inner_bound_max: inner_max,
        inner_bound_violations: inner_violations,
        ratio_sups: sups,
        ratio_violations,
        scaling_exponents_v: exps_v,
        scaling_exponents_h: exps_h,
        max_exponent_error: max_exp_err,
        truncated_tail_vanishes: trunc_ok,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_satisfies_all_bounds() {
        let nl = NlEvaluator::new(8, 24).unwrap();
        let zero = SpectralField::zeros(8);
        assert_eq!(nl.energy_inner(&zero), 0.0);
        let r = ratios_for_pair(&nl, &zero, &zero);
        assert_eq!(r.nv, 0.0);
        assert_eq!(r.split, 0.0);
    }

    #[test]
    fn cosine_family_max_is_one_sixth() {
        // max_c <c cos-profile, -N(...)> = 1/6 < 1/4.
        let nl = NlEvaluator::new(4, 12).unwrap();
        let mut best = f64::NEG_INFINITY;
        for i in 0..400 {
            let c = 0.01 + i as f64 * 0.005;
            let u = SpectralField::cosine_mode(4, 1, c);
            best = best.max(nl.energy_inner(&u));
        }
        assert!((best - 1.0 / 6.0).abs() < 1e-4, "max {best}");
        assert!(best <= 0.25);
    }

    #[test]
    fn families_produce_valid_fields() {
        let mut rng = RngStream::new(3, 1);
        for family in ALL_FAMILIES {
            for _ in 0..50 {
                let f = family.sample(16, &mut rng);
                assert!(f.is_finite());
                assert_eq!(f.modes(), 16);
            }
        }
    }

    #[test]
    fn suite_passes_on_small_run() {
        let rep = inequality_suite(100, 2024);
        assert_eq!(rep.inner_bound_violations, 0, "{:?}", rep);
        assert_eq!(rep.ratio_violations, 0, "{:?}", rep.ratio_sups);
        assert!(rep.max_exponent_error <= 0.05, "{:?}", rep.scaling_exponents_v);
        assert!(rep.truncated_tail_vanishes);
        assert!(rep.passed);
        assert!(rep.inner_bound_max <= 0.25 + 1e-10);
    }
}
