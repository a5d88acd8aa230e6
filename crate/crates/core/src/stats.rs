//! Small statistical toolbox shared by the experiment modules: two-sample
//! Kolmogorov-Smirnov, Wilson score intervals, least-squares line fits,
//! quantiles, histograms and empirical characteristic functions.

use serde::Serialize;

/// Two-sample Kolmogorov-Smirnov statistic D = sup |F1 - F2|.
///
/// Ties are handled by advancing both empirical CDFs past equal values
/// before the difference is taken, so identical samples give D = 0.
pub fn ks_statistic(sample_a: &[f64], sample_b: &[f64]) -> f64 {
    assert!(!sample_a.is_empty() && !sample_b.is_empty(), "empty sample");
    let mut a: Vec<f64> = sample_a.to_vec();
    let mut b: Vec<f64> = sample_b.to_vec();
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));

    let (na, nb) = (a.len(), b.len());
    let mut ia = 0;
    let mut ib = 0;
    let mut fa = 0.0;
    let mut fb = 0.0;
    let mut d: f64 = 0.0;
    while ia < na && ib < nb {
        let va = a[ia];
        let vb = b[ib];
        let v = va.min(vb);
        while ia < na && a[ia] == v {
            ia += 1;
        }
        while ib < nb && b[ib] == v {
            ib += 1;
        }
        fa = ia as f64 / na as f64;
        fb = ib as f64 / nb as f64;
        d = d.max((fa - fb).abs());
    }
    let _ = (fa, fb);
    d
}

/// Asymptotic Kolmogorov survival function Q(lambda) = 2 sum (-1)^{j-1} e^{-2 j^2 lambda^2}.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-10 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let term = (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample KS p-value with the usual small-sample correction
/// lambda = (sqrt(ne) + 0.12 + 0.11/sqrt(ne)) * D, ne = n1 n2 / (n1 + n2).
pub fn ks_p_value(d: f64, n1: usize, n2: usize) -> f64 {
    let ne = (n1 as f64 * n2 as f64) / (n1 as f64 + n2 as f64);
    let sqrt_ne = ne.sqrt();
    kolmogorov_q((sqrt_ne + 0.12 + 0.11 / sqrt_ne) * d)
}

/// Result of a two-sample KS comparison.
#[derive(Debug, Clone, Serialize)]
pub struct KsOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsOutcome {
    let d = ks_statistic(a, b);
    KsOutcome {
        statistic: d,
        p_value: ks_p_value(d, a.len(), b.len()),
        n1: a.len(),
        n2: b.len(),
    }
}

/// Wilson score lower confidence bound for a binomial proportion.
/// `z` is the normal quantile (1.96 for a 95% two-sided interval).
pub fn wilson_lower(successes: u64, trials: u64, z: f64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = p + z2 / (2.0 * n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half) / denom).max(0.0)
}

/// Wilson score upper bound, for symmetric reporting.
pub fn wilson_upper(successes: u64, trials: u64, z: f64) -> f64 {
    if trials == 0 {
        return 1.0;
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = p + z2 / (2.0 * n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center + half) / denom).min(1.0)
}

/// Ordinary least-squares line y = intercept + slope * x.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    /// Standard error of the slope (residual based).
    pub slope_se: f64,
    pub r_squared: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    assert!(x.len() >= 2, "need at least two points");
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|&v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(&u, &v)| (u - mx) * (v - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|&v| (v - my) * (v - my)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(&u, &v)| {
            let e = v - (intercept + slope * u);
            e * e
        })
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let dof = (x.len() as f64 - 2.0).max(1.0);
    let slope_se = (ss_res / dof / sxx).sqrt();
    LineFit {
        intercept,
        slope,
        slope_se,
        r_squared,
    }
}

/// Least squares fit of y = a + b*t + c*sqrt(t) with b, c clamped to be
/// nonnegative: if the unconstrained solution goes negative in b or c the
/// offending regressor is dropped and the fit redone (3-parameter active set).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AffineRootFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub r_squared: f64,
}

pub fn fit_affine_plus_root(t: &[f64], y: &[f64]) -> AffineRootFit {
    assert_eq!(t.len(), y.len());
    assert!(t.len() >= 3);

    let solve = |use_b: bool, use_c: bool| -> (f64, f64, f64) {
        // Normal equations on the active columns of [1, t, sqrt t].
        let cols: Vec<Vec<f64>> = {
            let mut c = vec![vec![1.0; t.len()]];
            if use_b {
                c.push(t.to_vec());
            }
            if use_c {
                c.push(t.iter().map(|v| v.sqrt()).collect());
            }
            c
        };
        let k = cols.len();
        let mut ata = vec![vec![0.0; k]; k];
        let mut aty = vec![0.0; k];
        for i in 0..k {
            for j in 0..k {
                ata[i][j] = cols[i].iter().zip(&cols[j]).map(|(u, v)| u * v).sum();
            }
            aty[i] = cols[i].iter().zip(y).map(|(u, v)| u * v).sum();
        }
        // Gaussian elimination, k <= 3.
        let mut m = ata;
        let mut rhs = aty;
        for p in 0..k {
            let piv = (p..k)
                .max_by(|&i, &j| m[i][p].abs().total_cmp(&m[j][p].abs()))
                .unwrap();
            m.swap(p, piv);
            rhs.swap(p, piv);
            for i in (p + 1)..k {
                let f = m[i][p] / m[p][p];
                for j in p..k {
                    m[i][j] -= f * m[p][j];
                }
                rhs[i] -= f * rhs[p];
            }
        }
        let mut sol = vec![0.0; k];
        for p in (0..k).rev() {
            let mut s = rhs[p];
            for j in (p + 1)..k {
                s -= m[p][j] * sol[j];
            }
            sol[p] = s / m[p][p];
        }
        let a = sol[0];
        let mut idx = 1;
        let b = if use_b {
            let v = sol[idx];
            idx += 1;
            v
        } else {
            0.0
        };
        let c = if use_c { sol[idx] } else { 0.0 };
        (a, b, c)
    };

    let r2_of = |a: f64, b: f64, c: f64| -> f64 {
        let my = y.iter().sum::<f64>() / y.len() as f64;
        let ss_tot: f64 = y.iter().map(|&v| (v - my) * (v - my)).sum();
        let ss_res: f64 = t
            .iter()
            .zip(y)
            .map(|(&u, &v)| {
                let e = v - (a + b * u + c * u.sqrt());
                e * e
            })
            .sum();
        if ss_tot > 0.0 {
            1.0 - ss_res / ss_tot
        } else {
            1.0
        }
    };

    let mut best: Option<AffineRootFit> = None;
    for (use_b, use_c) in [(true, true), (true, false), (false, true), (false, false)] {
        let (a, b, c) = solve(use_b, use_c);
        if b < 0.0 || c < 0.0 {
            continue;
        }
        let fit = AffineRootFit {
            a,
            b,
            c,
            r_squared: r2_of(a, b, c),
        };
        if best.map_or(true, |bst| fit.r_squared > bst.r_squared) {
            best = Some(fit);
        }
    }
    best.expect("constant fit is always feasible")
}

/// Linear-interpolated quantile (type 7) of an unsorted sample.
pub fn quantile(sample: &[f64], q: f64) -> f64 {
    assert!(!sample.is_empty());
    assert!((0.0..=1.0).contains(&q));
    let mut s = sample.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&s, q)
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// Fixed-width histogram over [min, max] of the data.
#[derive(Debug, Clone, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(sample: &[f64], bins: usize) -> Self {
        assert!(bins >= 1 && !sample.is_empty());
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in sample {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi <= lo {
            hi = lo + 1.0;
        }
        let w = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| lo + w * i as f64).collect();
        let mut counts = vec![0u64; bins];
        for &v in sample {
            let mut i = ((v - lo) / w) as usize;
            if i >= bins {
                i = bins - 1;
            }
            counts[i] += 1;
        }
        Histogram { edges, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Empirical characteristic function Re E[e^{i lambda Z}] of a real sample.
/// For symmetric laws the imaginary part vanishes, so only cos is averaged.
pub fn empirical_cf(sample: &[f64], lambda: f64) -> f64 {
    let mut s = 0.0;
    for &z in sample {
        s += (lambda * z).cos();
    }
    s / sample.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_identical_samples_give_zero() {
        let a = [1.0, 2.0, 3.0, 3.0, 5.0];
        assert_eq!(ks_statistic(&a, &a), 0.0);
    }

    #[test]
    fn ks_disjoint_samples_give_one() {
        let a = [1.0, 2.0, 3.0];
        let b = [10.0, 11.0, 12.0];
        assert_eq!(ks_statistic(&a, &b), 1.0);
    }

    #[test]
    fn ks_known_statistic() {
        // F1 jumps at {1,3}, F2 at {2,4}: max gap is 1/2 at x in [1,2).
        let a = [1.0, 3.0];
        let b = [2.0, 4.0];
        assert!((ks_statistic(&a, &b) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_q_endpoints() {
        assert!((kolmogorov_q(1e-12) - 1.0).abs() < 1e-12);
        assert!(kolmogorov_q(3.0) < 1e-6);
        // Q(1.628/sqrt(2)... ) sanity: Q(1.36) ~ 0.049 (the 5% critical point).
        let q = kolmogorov_q(1.36);
        assert!((q - 0.049).abs() < 0.003, "q = {q}");
    }

    #[test]
    fn wilson_positive_iff_successes() {
        assert_eq!(wilson_lower(0, 10_000, 1.96), 0.0);
        assert!(wilson_lower(1, 10_000, 1.96) > 0.0);
        assert!(wilson_lower(50, 100, 1.96) > 0.4);
        assert!(wilson_upper(50, 100, 1.96) < 0.6);
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 3.0 * v).collect();
        let f = fit_line(&x, &y);
        assert!((f.slope + 3.0).abs() < 1e-12);
        assert!((f.intercept - 2.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn affine_root_fit_exact() {
        let t: [f64; 4] = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = t.iter().map(|&v| 1.0 + 0.5 * v + 2.0 * v.sqrt()).collect();
        let f = fit_affine_plus_root(&t, &y);
        assert!((f.a - 1.0).abs() < 1e-9);
        assert!((f.b - 0.5).abs() < 1e-9);
        assert!((f.c - 2.0).abs() < 1e-9);
        assert!(f.r_squared > 0.999_999);
    }

    #[test]
    fn affine_root_fit_clamps_negative_terms() {
        // Pure decay in t: unconstrained b would be negative.
        let t = [1.0, 2.0, 4.0, 8.0];
        let y = [5.0, 4.0, 3.0, 2.0];
        let f = fit_affine_plus_root(&t, &y);
        assert!(f.b >= 0.0 && f.c >= 0.0);
    }

    #[test]
    fn quantiles_monotone() {
        let s = [3.0, 1.0, 2.0, 5.0, 4.0];
        let qs: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0]
            .iter()
            .map(|&q| quantile(&s, q))
            .collect();
        assert_eq!(qs[0], 1.0);
        assert_eq!(qs[4], 5.0);
        for w in qs.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn histogram_counts_sum() {
        let s: Vec<f64> = (0..100).map(|i| i as f64 / 10.0).collect();
        let h = Histogram::new(&s, 7);
        assert_eq!(h.total(), 100);
        assert_eq!(h.edges.len(), 8);
    }
}
