//! Mean-zero real fields on the torus T = R/Z in the orthonormal basis
//! {sqrt(2) cos(2 pi k xi), sqrt(2) sin(2 pi k xi), k >= 1}, together with
//! fractional Sobolev norms, fractional powers of A = -d^2/dxi^2, the heat
//! semigroup e^{-At} and grid <-> spectral transforms.
//!
//! The negative Laplacian acts diagonally: A e_k = gamma_k e_k with
//! gamma_k = 4 pi^2 k^2, identically on the cosine and sine component of
//! mode k. Every field is mean-zero by construction since no k = 0
//! coefficient exists.

use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

/// Eigenvalue gamma_k = 4 pi^2 k^2 of A on mode k (k >= 1).
pub fn gamma(k: usize) -> f64 {
    let k = k as f64;
    4.0 * PI * PI * k * k
}

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("semigroup time must be nonnegative, got {0}")]
    NegativeTime(f64),
    #[error("grid size {n_g} too small: need at least {min} points for {m} modes")]
    UndersizedGrid { n_g: usize, min: usize, m: usize },
    #[error("coefficient arrays must have equal length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("non-finite coefficient at mode {0}")]
    NonFinite(usize),
    #[error("malformed field record: {0}")]
    Malformed(String),
}

/// Mean-zero real field x(xi) = sum_k sqrt(2) (a_k cos(2 pi k xi) + b_k sin(2 pi k xi)).
///
/// `a[k-1]` and `b[k-1]` hold the mode-k amplitudes; the basis is orthonormal
/// in H so `||x||_H^2 = sum_k (a_k^2 + b_k^2)`. Input paths (`new`,
/// `from_csv`, `from_binary`) validate finiteness.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralField {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl SpectralField {
    pub fn zeros(m: usize) -> Self {
        SpectralField {
            a: vec![0.0; m],
            b: vec![0.0; m],
        }
    }

    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self, SpectralError> {
        if a.len() != b.len() {
            return Err(SpectralError::LengthMismatch(a.len(), b.len()));
        }
        for (i, (&x, &y)) in a.iter().zip(&b).enumerate() {
            if !x.is_finite() || !y.is_finite() {
                return Err(SpectralError::NonFinite(i + 1));
            }
        }
        Ok(SpectralField { a, b })
    }

    /// Field with a single cosine mode: amplitude * sqrt(2) cos(2 pi k xi).
    pub fn cosine_mode(m: usize, k: usize, amplitude: f64) -> Self {
        assert!(k >= 1 && k <= m, "mode index out of range");
        let mut f = Self::zeros(m);
        f.a[k - 1] = amplitude;
        f
    }

    /// Field with a single sine mode.
    pub fn sine_mode(m: usize, k: usize, amplitude: f64) -> Self {
        assert!(k >= 1 && k <= m, "mode index out of range");
        let mut f = Self::zeros(m);
        f.b[k - 1] = amplitude;
        f
    }

    /// Mode cutoff m.
    pub fn modes(&self) -> usize {
        self.a.len()
    }

    pub fn cos_amp(&self, k: usize) -> f64 {
        self.a[k - 1]
    }

    pub fn sin_amp(&self, k: usize) -> f64 {
        self.b[k - 1]
    }

    pub fn cos_amps(&self) -> &[f64] {
        &self.a
    }

    pub fn sin_amps(&self) -> &[f64] {
        &self.b
    }

    pub(crate) fn cos_amps_mut(&mut self) -> &mut [f64] {
        &mut self.a
    }

    pub(crate) fn sin_amps_mut(&mut self) -> &mut [f64] {
        &mut self.b
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().chain(&self.b).all(|v| v.is_finite())
    }

    /// ||A^sigma x||_H = (sum_k gamma_k^{2 sigma} (a_k^2 + b_k^2))^{1/2}.
    ///
    /// sigma = 0 is the H norm, sigma = 1/2 the V norm. Negative sigma is
    /// allowed for diagnostics.
    pub fn sobolev_norm(&self, sigma: f64) -> f64 {
        let mut s = 0.0;
        for k in 1..=self.modes() {
            let w = if sigma == 0.0 {
                1.0
            } else {
                gamma(k).powf(2.0 * sigma)
            };
            s += w * (self.a[k - 1] * self.a[k - 1] + self.b[k - 1] * self.b[k - 1]);
        }
        s.sqrt()
    }

    pub fn norm_h(&self) -> f64 {
        self.sobolev_norm(0.0)
    }

    pub fn norm_v(&self) -> f64 {
        self.sobolev_norm(0.5)
    }

    /// A^sigma x: mode k scaled by gamma_k^sigma.
    pub fn apply_a_power(&self, sigma: f64) -> SpectralField {
        let mut out = self.clone();
        if sigma == 0.0 {
            return out;
        }
        for k in 1..=self.modes() {
            let w = gamma(k).powf(sigma);
            out.a[k - 1] *= w;
            out.b[k - 1] *= w;
        }
        out
    }

    /// e^{-At} x: mode k scaled by e^{-gamma_k t}. Rejects t < 0.
    pub fn apply_semigroup(&self, t: f64) -> Result<SpectralField, SpectralError> {
        if !(t >= 0.0) {
            return Err(SpectralError::NegativeTime(t));
        }
        let mut out = self.clone();
        for k in 1..=self.modes() {
            let w = (-gamma(k) * t).exp();
            out.a[k - 1] *= w;
            out.b[k - 1] *= w;
        }
        Ok(out)
    }

    /// H inner product (basis is orthonormal, so a plain coefficient dot).
    /// Fields of different cutoffs pair on the shared modes.
    pub fn inner_h(&self, other: &SpectralField) -> f64 {
        let m = self.modes().min(other.modes());
        let mut s = 0.0;
        for i in 0..m {
            s += self.a[i] * other.a[i] + self.b[i] * other.b[i];
        }
        s
    }

    pub fn scale(&self, c: f64) -> SpectralField {
        SpectralField {
            a: self.a.iter().map(|v| v * c).collect(),
            b: self.b.iter().map(|v| v * c).collect(),
        }
    }

    /// self + other, extending to the larger cutoff.
    pub fn add(&self, other: &SpectralField) -> SpectralField {
        let m = self.modes().max(other.modes());
        let mut out = SpectralField::zeros(m);
        for i in 0..self.modes() {
            out.a[i] += self.a[i];
            out.b[i] += self.b[i];
        }
        for i in 0..other.modes() {
            out.a[i] += other.a[i];
            out.b[i] += other.b[i];
        }
        out
    }

    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        self.add(&other.scale(-1.0))
    }

    /// ||self - other||_{A^sigma} across possibly different cutoffs: missing
    /// modes count as zero.
    pub fn distance(&self, other: &SpectralField, sigma: f64) -> f64 {
        let m = self.modes().max(other.modes());
        let mut s = 0.0;
        for k in 1..=m {
            let (sa, sb) = if k <= self.modes() {
                (self.a[k - 1], self.b[k - 1])
            } else {
                (0.0, 0.0)
            };
            let (oa, ob) = if k <= other.modes() {
                (other.a[k - 1], other.b[k - 1])
            } else {
                (0.0, 0.0)
            };
            let w = if sigma == 0.0 {
                1.0
            } else {
                gamma(k).powf(2.0 * sigma)
            };
            let da = sa - oa;
            let db = sb - ob;
            s += w * (da * da + db * db);
        }
        s.sqrt()
    }

    /// Evaluate on an equispaced grid xi_j = j / n_g. Requires n_g >= 2m+1
    /// for an exact round trip (3m when the grid values will be cubed).
    pub fn to_grid(&self, n_g: usize) -> Result<GridField, SpectralError> {
        let m = self.modes();
        if n_g < 2 * m + 1 {
            return Err(SpectralError::UndersizedGrid {
                n_g,
                min: 2 * m + 1,
                m,
            });
        }
        Ok(Transform::new(m, n_g).to_grid(self))
    }

    /// Serialize as CSV rows "k,a_k,b_k" (header included).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,a_k,b_k\n");
        for k in 1..=self.modes() {
            s.push_str(&format!("{},{:.17e},{:.17e}\n", k, self.a[k - 1], self.b[k - 1]));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, SpectralError> {
        let mut rows: Vec<(usize, f64, f64)> = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("k,") {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 3 {
                return Err(SpectralError::Malformed(format!(
                    "line {}: expected 3 fields",
                    ln + 1
                )));
            }
            let k: usize = parts[0]
                .trim()
                .parse()
                .map_err(|_| SpectralError::Malformed(format!("line {}: bad mode index", ln + 1)))?;
            let a: f64 = parts[1]
                .trim()
                .parse()
                .map_err(|_| SpectralError::Malformed(format!("line {}: bad a_k", ln + 1)))?;
            let b: f64 = parts[2]
                .trim()
                .parse()
                .map_err(|_| SpectralError::Malformed(format!("line {}: bad b_k", ln + 1)))?;
            rows.push((k, a, b));
        }
        let m = rows.iter().map(|r| r.0).max().unwrap_or(0);
        let mut f = SpectralField::zeros(m);
        for (k, a, b) in rows {
            if k == 0 {
                return Err(SpectralError::Malformed("mode index 0 not allowed".into()));
            }
            f.a[k - 1] = a;
            f.b[k - 1] = b;
        }
        SpectralField::new(f.a, f.b)
    }

    /// Binary record: little-endian f64 triples (k, a_k, b_k) per mode.
    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.modes() * 24);
        for k in 1..=self.modes() {
            out.extend_from_slice(&(k as f64).to_le_bytes());
            out.extend_from_slice(&self.a[k - 1].to_le_bytes());
            out.extend_from_slice(&self.b[k - 1].to_le_bytes());
        }
        out
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self, SpectralError> {
        if bytes.len() % 24 != 0 {
            return Err(SpectralError::Malformed(
                "binary record length not a multiple of 24".into(),
            ));
        }
        let n = bytes.len() / 24;
        let read = |off: usize| -> f64 {
            let mut buf = [0u8; 8];
            buf.copy_from_slice(&bytes[off..off + 8]);
            f64::from_le_bytes(buf)
        };
        let mut rows: Vec<(usize, f64, f64)> = Vec::with_capacity(n);
        for i in 0..n {
            let k = read(24 * i);
            if !(k >= 1.0) || k.fract() != 0.0 {
                return Err(SpectralError::Malformed(format!("bad mode index {k}")));
            }
            rows.push((k as usize, read(24 * i + 8), read(24 * i + 16)));
        }
        let m = rows.iter().map(|r| r.0).max().unwrap_or(0);
        let mut f = SpectralField::zeros(m);
        for (k, a, b) in rows {
            f.a[k - 1] = a;
            f.b[k - 1] = b;
        }
        SpectralField::new(f.a, f.b)
    }
}

/// Real values at the equispaced points xi_j = j / n_g.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub values: Vec<f64>,
}

impl GridField {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Project onto the first m modes. Requires n_g >= 2m+1.
    pub fn to_spectral(&self, m: usize) -> Result<SpectralField, SpectralError> {
        let n_g = self.values.len();
        if n_g < 2 * m + 1 {
            return Err(SpectralError::UndersizedGrid {
                n_g,
                min: 2 * m + 1,
                m,
            });
        }
        Ok(Transform::new(m, n_g).from_grid(self))
    }
}

/// Precomputed cos/sin tables for the grid <-> spectral pairing at fixed
/// (m, n_g). The discrete basis stays orthogonal for n_g >= 2m+1, so the
/// round trip is exact to rounding.
pub struct Transform {
    m: usize,
    n_g: usize,
    /// cos(2 pi k j / n_g), row k-1, column j.
    cos_tab: Vec<f64>,
    sin_tab: Vec<f64>,
}

impl Transform {
    pub fn new(m: usize, n_g: usize) -> Self {
        assert!(n_g >= 2 * m + 1, "grid too small for exact transform");
        let mut cos_tab = vec![0.0; m * n_g];
        let mut sin_tab = vec![0.0; m * n_g];
        for k in 1..=m {
            for j in 0..n_g {
                // Reduce k*j modulo n_g first so the table is exactly periodic.
                let r = (k * j) % n_g;
                let ang = 2.0 * PI * r as f64 / n_g as f64;
                cos_tab[(k - 1) * n_g + j] = ang.cos();
                sin_tab[(k - 1) * n_g + j] = ang.sin();
            }
        }
        Transform {
            m,
            n_g,
            cos_tab,
            sin_tab,
        }
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn grid_size(&self) -> usize {
        self.n_g
    }

    pub fn to_grid(&self, x: &SpectralField) -> GridField {
        assert!(x.modes() <= self.m);
        let mut v = vec![0.0; self.n_g];
        let sqrt2 = std::f64::consts::SQRT_2;
        for k in 1..=x.modes() {
            let (ca, cb) = (sqrt2 * x.a[k - 1], sqrt2 * x.b[k - 1]);
            if ca == 0.0 && cb == 0.0 {
                continue;
            }
            let row = (k - 1) * self.n_g;
            for j in 0..self.n_g {
                v[j] += ca * self.cos_tab[row + j] + cb * self.sin_tab[row + j];
            }
        }
        GridField { values: v }
    }

    pub fn from_grid(&self, g: &GridField) -> SpectralField {
        assert_eq!(g.values.len(), self.n_g);
        let mut out = SpectralField::zeros(self.m);
        let w = std::f64::consts::SQRT_2 / self.n_g as f64;
        for k in 1..=self.m {
            let row = (k - 1) * self.n_g;
            let mut sa = 0.0;
            let mut sb = 0.0;
            for j in 0..self.n_g {
                sa += g.values[j] * self.cos_tab[row + j];
                sb += g.values[j] * self.sin_tab[row + j];
            }
            out.a[k - 1] = w * sa;
            out.b[k - 1] = w * sb;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn unit_mode_norms() {
        let x = SpectralField::cosine_mode(4, 1, 1.0);
        assert_eq!(x.sobolev_norm(0.0), 1.0);
        // sigma = 1/2: gamma_1^{1/2} = 2 pi.
        assert!(close(x.sobolev_norm(0.5), 2.0 * PI, 1e-14));
    }

    #[test]
    fn sine_mode_weighted_norm() {
        // b_2 = 3, sigma = 1 -> 3 * gamma_2 = 48 pi^2.
        let x = SpectralField::sine_mode(4, 2, 3.0);
        assert!(close(x.sobolev_norm(1.0), 3.0 * gamma(2), 1e-14));
        assert!(close(3.0 * gamma(2), 473.7410112522892, 1e-10));
    }

    #[test]
    fn a_power_identity_and_eigenvalue() {
        let x = SpectralField::cosine_mode(3, 1, 1.0);
        assert_eq!(x.apply_a_power(0.0), x);
        let ax = x.apply_a_power(1.0);
        assert!(close(ax.cos_amp(1), 4.0 * PI * PI, 1e-14));
    }

    #[test]
    fn a_power_inverse_pair() {
        let x = SpectralField::new(vec![0.3, -1.2, 0.0, 2.5], vec![1.0, 0.1, -0.7, 0.0]).unwrap();
        let back = x.apply_a_power(0.7).apply_a_power(-0.7);
        for k in 1..=4 {
            assert!(close(back.cos_amp(k), x.cos_amp(k), 1e-12));
            assert!(close(back.sin_amp(k), x.sin_amp(k), 1e-12));
        }
    }

    #[test]
    fn semigroup_identity_decay_contraction() {
        let x = SpectralField::cosine_mode(2, 1, 1.0);
        assert_eq!(x.apply_semigroup(0.0).unwrap(), x);

        // t = 1/gamma_1 decays mode 1 by e^{-1}.
        let t = 1.0 / (4.0 * PI * PI);
        let y = x.apply_semigroup(t).unwrap();
        assert!(close(y.cos_amp(1), (-1.0f64).exp(), 1e-14));

        let r = SpectralField::new(vec![0.4, -0.2], vec![0.9, 0.3]).unwrap();
        for sigma in [0.0, 0.25, 0.5] {
            assert!(r.apply_semigroup(0.01).unwrap().sobolev_norm(sigma) <= r.sobolev_norm(sigma));
        }
        assert!(x.apply_semigroup(-0.1).is_err());
    }

    #[test]
    fn grid_roundtrip_single_mode() {
        let x = SpectralField::cosine_mode(1, 1, 1.0);
        let g = x.to_grid(8).unwrap();
        for (j, &v) in g.values.iter().enumerate() {
            let expect = std::f64::consts::SQRT_2 * (2.0 * PI * j as f64 / 8.0).cos();
            assert!((v - expect).abs() < 1e-14);
        }
        let back = g.to_spectral(1).unwrap();
        assert!(close(back.cos_amp(1), 1.0, 1e-14));
    }

    #[test]
    fn zero_field_zero_grid() {
        let g = SpectralField::zeros(4).to_grid(16).unwrap();
        assert!(g.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grid_mean_is_zero() {
        let x = SpectralField::new(vec![0.5, -0.3, 0.8], vec![-1.1, 0.2, 0.05]).unwrap();
        let g = x.to_grid(16).unwrap();
        let scale = g.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(g.mean().abs() <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn undersized_grid_rejected() {
        let x = SpectralField::zeros(8);
        assert!(matches!(
            x.to_grid(16),
            Err(SpectralError::UndersizedGrid { .. })
        ));
    }

    #[test]
    fn csv_and_binary_roundtrip() {
        let x = SpectralField::new(vec![0.25, -1.5], vec![3.0, 1e-9]).unwrap();
        assert_eq!(SpectralField::from_csv(&x.to_csv()).unwrap(), x);
        assert_eq!(SpectralField::from_binary(&x.to_binary()).unwrap(), x);
        assert!(SpectralField::from_binary(&[0u8; 23]).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(SpectralField::new(vec![f64::NAN], vec![0.0]).is_err());
        assert!(SpectralField::new(vec![0.0], vec![f64::INFINITY]).is_err());
    }
}
