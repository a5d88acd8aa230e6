//! Independent reference routes used by the verification suites. These
//! deliberately avoid the production code paths they are compared against:
//! the OU oracle steps the scalar SDE with a plain Euler scheme instead of
//! the exact transition, and the cube oracle convolves coefficient triples
//! instead of going through the grid.

use crate::noise::{sample_standard_stable, RngStream};
use crate::spectral::SpectralField;

/// Fine-grid Euler-Maruyama simulation of dz = -gamma z dt + beta dl(t)
/// from z(0) = 0 up to `t_end`. The only shared primitive is the scalar
/// stable sampler (the driver), not the transition law under test.
pub fn euler_ou_endpoint(
    gamma: f64,
    beta: f64,
    alpha: f64,
    t_end: f64,
    h: f64,
    rng: &mut RngStream,
) -> f64 {
    let n = (t_end / h).round() as usize;
    let root = h.powf(1.0 / alpha);
    let mut z = 0.0;
    for _ in 0..n {
        let dl = root * sample_standard_stable(alpha, rng).expect("alpha validated by caller");
        z += -gamma * z * h + beta * dl;
    }
    z
}

/// Exact spectrum of u^3 for a band-limited real field, by brute-force
/// triple convolution in the complex representation. Only feasible for
/// small m; used to pin the dealiased grid evaluation.
///
/// Complex coefficients: c_k = (a_k - i b_k)/sqrt(2), c_{-k} = conj(c_k),
/// so that u = sum_{k != 0} c_k e^{i 2 pi k xi}. The cube's coefficient at
/// mode n is sum over k1 + k2 + k3 = n of c_{k1} c_{k2} c_{k3}.
pub fn cube_spectrum_bruteforce(u: &SpectralField, m_out: usize) -> SpectralField {
    let m = u.modes();
    let c = |k: i64| -> (f64, f64) {
        if k == 0 || k.unsigned_abs() as usize > m {
            return (0.0, 0.0);
        }
        let idx = k.unsigned_abs() as usize;
        let (a, b) = (u.cos_amp(idx), u.sin_amp(idx));
        let re = a / std::f64::consts::SQRT_2;
        let im = -b / std::f64::consts::SQRT_2;
        if k > 0 {
            (re, im)
        } else {
            (re, -im)
        }
    };
    let mi = m as i64;
    let mut out = SpectralField::zeros(m_out);
    for n in 1..=m_out as i64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for k1 in -mi..=mi {
            if k1 == 0 {
                continue;
            }
            for k2 in -mi..=mi {
                if k2 == 0 {
                    continue;
                }
                let k3 = n - k1 - k2;
                if k3 == 0 || k3.abs() > mi {
                    continue;
                }
                let (r1, i1) = c(k1);
                let (r2, i2) = c(k2);
                let (r3, i3) = c(k3);
                // (r1 + i i1)(r2 + i i2)(r3 + i i3)
                let (ra, ia) = (r1 * r2 - i1 * i2, r1 * i2 + i1 * r2);
                re += ra * r3 - ia * i3;
                im += ra * i3 + ia * r3;
            }
        }
        // Back to the real basis: a_n = sqrt(2) Re c_n, b_n = -sqrt(2) Im c_n.
        out.cos_amps_mut()[(n - 1) as usize] = std::f64::consts::SQRT_2 * re;
        out.sin_amps_mut()[(n - 1) as usize] = -std::f64::consts::SQRT_2 * im;
    }
    out
}

/// Mean (k = 0) coefficient of u^3, for checking the mean projection.
pub fn cube_mean_bruteforce(u: &SpectralField) -> f64 {
    let m = u.modes() as i64;
    let c = |k: i64| -> (f64, f64) {
        let idx = k.unsigned_abs() as usize;
        let (a, b) = (u.cos_amp(idx), u.sin_amp(idx));
        let re = a / std::f64::consts::SQRT_2;
        let im = -b / std::f64::consts::SQRT_2;
        if k > 0 {
            (re, im)
        } else {
            (re, -im)
        }
    };
    let mut re = 0.0;
    for k1 in -m..=m {
        if k1 == 0 {
            continue;
        }
        for k2 in -m..=m {
            if k2 == 0 {
                continue;
            }
            let k3 = -k1 - k2;
            if k3 == 0 || k3.abs() > m {
                continue;
            }
            let (r1, i1) = c(k1);
            let (r2, i2) = c(k2);
            let (r3, i3) = c(k3);
            let (ra, ia) = (r1 * r2 - i1 * i2, r1 * i2 + i1 * r2);
            re += ra * r3 - ia * i3;
        }
    }
    re
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_of_single_cosine_matches_hand_expansion() {
        // u = c sqrt(2) cos(2 pi xi): u^3 = c^3 2^{3/2} cos^3 =
        // c^3 2^{3/2} (3 cos + cos 3xi)/4, i.e. a_1 = (3/2) c^3, a_3 = c^3/2.
        let c = 0.7;
        let u = SpectralField::cosine_mode(1, 1, c);
        let cube = cube_spectrum_bruteforce(&u, 3);
        assert!((cube.cos_amp(1) - 1.5 * c * c * c).abs() < 1e-14);
        assert!((cube.cos_amp(2)).abs() < 1e-14);
        assert!((cube.cos_amp(3) - 0.5 * c * c * c).abs() < 1e-14);
        assert!(cube_mean_bruteforce(&u).abs() < 1e-14);
    }

    #[test]
    fn cube_mean_of_asymmetric_field_nonzero() {
        // Mode-1 + mode-2 mix has a genuinely nonzero mean in the cube.
        let u = SpectralField::new(vec![1.0, 0.5], vec![0.0, 0.0]).unwrap();
        assert!(cube_mean_bruteforce(&u).abs() > 1e-3);
    }
}
