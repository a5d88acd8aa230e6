//! Symmetric alpha-stable sampling and increments of the cylindrical noise
//! L_t = sum_k beta_k l_k(t) e_k with beta_k = c0 * gamma_k^{-beta}.
//!
//! The scalar sampler is the Chambers-Mallows-Stuck transform of a
//! (uniform, exponential) pair, which is exact in law for the target
//! characteristic function E e^{i lambda z} = e^{-|lambda|^alpha}. All
//! verification elsewhere in the crate is against that characteristic
//! function, never against the transform's own formula.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use thiserror::Error;

use crate::spectral::{gamma, SpectralField};

#[derive(Debug, Error, PartialEq)]
pub enum NoiseError {
    #[error("stability index must lie in (0, 2], got {0}")]
    BadAlpha(f64),
    #[error("spec requires alpha in (1, 2), got {0}")]
    AlphaOutsideSpec(f64),
    #[error("decay exponent beta = {beta} must exceed 1/2 + 1/(2 alpha) = {min}")]
    BadBeta { beta: f64, min: f64 },
    #[error("amplitude c0 must be nonnegative, got {0}")]
    BadAmplitude(f64),
    #[error("mode cutoff must be at least 1")]
    NoModes,
    #[error("negative scale {0}")]
    NegativeScale(f64),
    #[error("step size must be positive, got {0}")]
    BadStep(f64),
}

/// Deterministic counter-based random stream: a ChaCha12 generator keyed by
/// (seed, stream id). Identical (seed, id) pairs reproduce identical draws
/// and distinct ids are independent, so adding modes or trajectories never
/// perturbs the draws of existing ones.
pub struct RngStream {
    rng: ChaCha12Rng,
}

/// Stream-id layout: trajectory index in the high 32 bits, a purpose tag in
/// bits 24..32, the role-specific slot below. Mode k's two real components
/// use slots 2(k-1) and 2(k-1)+1.
pub const PURPOSE_NOISE: u64 = 0;
pub const PURPOSE_FIELD: u64 = 1;
pub const PURPOSE_SCALAR: u64 = 2;

pub fn stream_id(trajectory: u64, purpose: u64, slot: u64) -> u64 {
    debug_assert!(purpose < 256 && slot < (1 << 24));
    (trajectory << 32) | (purpose << 24) | slot
}

impl RngStream {
    pub fn new(seed: u64, id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(id);
        RngStream { rng }
    }

    /// Stream for mode k (1-based), real component `comp` (0 = cos, 1 = sin).
    pub fn for_mode(seed: u64, trajectory: u64, k: usize, comp: usize) -> Self {
        Self::new(
            seed,
            stream_id(trajectory, PURPOSE_NOISE, 2 * (k as u64 - 1) + comp as u64),
        )
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform draw in (0, 1): zero is resampled away.
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u = self.rng.random::<f64>();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn normal_pair(&mut self) -> (f64, f64) {
        // Box-Muller, used only by test-field generators.
        let u = self.uniform_open();
        let v = self.uniform();
        let r = (-2.0 * u.ln()).sqrt();
        let t = 2.0 * PI * v;
        (r * t.cos(), r * t.sin())
    }
}

/// One draw of a standard symmetric alpha-stable variable with
/// characteristic function e^{-|lambda|^alpha} (Gaussian with variance 2 at
/// alpha = 2), via the Chambers-Mallows-Stuck transform.
pub fn sample_standard_stable(alpha: f64, rng: &mut RngStream) -> Result<f64, NoiseError> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(NoiseError::BadAlpha(alpha));
    }
    let u = PI * (rng.uniform() - 0.5); // uniform on (-pi/2, pi/2)
    let w = -rng.uniform_open().ln(); // exponential(1)
    if alpha == 1.0 {
        return Ok(u.tan());
    }
    let s = (alpha * u).sin() / u.cos().powf(1.0 / alpha);
    let t = (((1.0 - alpha) * u).cos() / w).powf((1.0 - alpha) / alpha);
    Ok(s * t)
}

/// Increment of an alpha-stable process over a step of length h at the
/// given scale: law of scale * (l(t+h) - l(t)) = scale * h^{1/alpha} * xi.
pub fn stable_increment(
    alpha: f64,
    scale: f64,
    h: f64,
    rng: &mut RngStream,
) -> Result<f64, NoiseError> {
    if scale < 0.0 {
        return Err(NoiseError::NegativeScale(scale));
    }
    if !(h > 0.0) {
        return Err(NoiseError::BadStep(h));
    }
    let xi = sample_standard_stable(alpha, rng)?;
    Ok(scale * h.powf(1.0 / alpha) * xi)
}

/// Parameters of the cylindrical noise: stability index alpha in (1,2),
/// decay exponent beta of beta_k = c0 * gamma_k^{-beta}, amplitude c0 and
/// mode cutoff m. Construction validates the invariants, so there is no
/// Deserialize; build from raw values with [`NoiseSpec::new`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseSpec {
    alpha: f64,
    beta: f64,
    c0: f64,
    m: usize,
}

impl NoiseSpec {
    /// Validates alpha in (1,2), beta > 1/2 + 1/(2 alpha), c0 >= 0 and m >= 1,
    /// and checks numerically that sum_k beta_k^alpha gamma_k^{alpha/2} is
    /// finite (the tail condition that puts noise paths in V).
    pub fn new(alpha: f64, beta: f64, c0: f64, m: usize) -> Result<Self, NoiseError> {
        if !(alpha > 1.0 && alpha < 2.0) {
            return Err(NoiseError::AlphaOutsideSpec(alpha));
        }
        let beta_min = 0.5 + 1.0 / (2.0 * alpha);
        if !(beta > beta_min) {
            return Err(NoiseError::BadBeta {
                beta,
                min: beta_min,
            });
        }
        if !(c0 >= 0.0) {
            return Err(NoiseError::BadAmplitude(c0));
        }
        if m == 0 {
            return Err(NoiseError::NoModes);
        }
        let spec = NoiseSpec { alpha, beta, c0, m };
        debug_assert!(spec.v_tail_sum(10_000).is_finite());
        Ok(spec)
    }

    /// Default laboratory parameters: alpha 1.8, beta 0.85, c0 1, m 64.
    pub fn default_lab() -> Self {
        NoiseSpec::new(1.8, 0.85, 1.0, 64).expect("default parameters are valid")
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    /// Same spec truncated (or re-cut) to a different mode count.
    pub fn with_modes(&self, m: usize) -> Result<Self, NoiseError> {
        NoiseSpec::new(self.alpha, self.beta, self.c0, m)
    }

    pub fn with_amplitude(&self, c0: f64) -> Result<Self, NoiseError> {
        NoiseSpec::new(self.alpha, self.beta, c0, self.m)
    }

    /// Per-mode amplitude beta_k = c0 * gamma_k^{-beta}.
    pub fn beta_k(&self, k: usize) -> f64 {
        self.c0 * gamma(k).powf(-self.beta)
    }

    /// True iff (alpha, beta) sits in the uniqueness window
    /// alpha in (3/2, 2), 1/2 + 1/(2 alpha) < beta < 3/2 - 1/alpha.
    pub fn ergodic_window(&self) -> bool {
        self.alpha > 1.5
            && self.alpha < 2.0
            && self.beta > 0.5 + 1.0 / (2.0 * self.alpha)
            && self.beta < 1.5 - 1.0 / self.alpha
    }

    /// Partial sum (2 real modes per k) of beta_k^alpha gamma_k^{alpha/2};
    /// converges because beta > 1/2 + 1/(2 alpha).
    pub fn v_tail_sum(&self, k_max: usize) -> f64 {
        (1..=k_max)
            .map(|k| 2.0 * self.beta_k(k).powf(self.alpha) * gamma(k).powf(self.alpha / 2.0))
            .sum()
    }

    /// Increment of the cylindrical noise over a step h: independent stable
    /// increments per real mode, mode k scaled by beta_k. `streams` must
    /// hold one stream per real component, laid out [cos_1, sin_1, cos_2, ...].
    pub fn cylindrical_increment(
        &self,
        h: f64,
        streams: &mut [RngStream],
    ) -> Result<SpectralField, NoiseError> {
        if !(h > 0.0) {
            return Err(NoiseError::BadStep(h));
        }
        assert_eq!(streams.len(), 2 * self.m, "need one stream per real mode");
        let mut f = SpectralField::zeros(self.m);
        let root = h.powf(1.0 / self.alpha);
        for k in 1..=self.m {
            let scale = self.beta_k(k) * root;
            let da = scale * sample_standard_stable(self.alpha, &mut streams[2 * (k - 1)])?;
            let db = scale * sample_standard_stable(self.alpha, &mut streams[2 * (k - 1) + 1])?;
            f.cos_amps_mut()[k - 1] = da;
            f.sin_amps_mut()[k - 1] = db;
        }
        Ok(f)
    }

    /// Allocate the per-mode streams for one trajectory.
    pub fn mode_streams(&self, seed: u64, trajectory: u64) -> Vec<RngStream> {
        (1..=self.m)
            .flat_map(|k| {
                [
                    RngStream::for_mode(seed, trajectory, k, 0),
                    RngStream::for_mode(seed, trajectory, k, 1),
                ]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::empirical_cf;

    #[test]
    fn rejects_bad_parameters() {
        assert!(NoiseSpec::new(0.9, 0.85, 1.0, 4).is_err());
        assert!(NoiseSpec::new(2.0, 0.85, 1.0, 4).is_err());
        assert!(NoiseSpec::new(1.8, 0.70, 1.0, 4).is_err()); // below 0.7778
        assert!(NoiseSpec::new(1.8, 0.85, -1.0, 4).is_err());
        assert!(NoiseSpec::new(1.8, 0.85, 1.0, 0).is_err());
        let mut s = RngStream::new(0, 0);
        assert!(sample_standard_stable(0.0, &mut s).is_err());
        assert!(sample_standard_stable(2.1, &mut s).is_err());
        assert!(stable_increment(1.8, -1.0, 0.1, &mut s).is_err());
        assert!(stable_increment(1.8, 1.0, 0.0, &mut s).is_err());
    }

    #[test]
    fn ergodic_window_flag() {
        assert!(NoiseSpec::new(1.8, 0.85, 1.0, 4).unwrap().ergodic_window());
        // beta above 3/2 - 1/alpha = 0.9444 leaves the window but stays valid.
        assert!(!NoiseSpec::new(1.8, 1.2, 1.0, 4).unwrap().ergodic_window());
    }

    #[test]
    fn determinism_and_stream_independence() {
        let spec = NoiseSpec::new(1.8, 0.85, 1.0, 8).unwrap();
        let inc = |seed| {
            let mut st = spec.mode_streams(seed, 0);
            spec.cylindrical_increment(0.1, &mut st).unwrap()
        };
        assert_eq!(inc(42), inc(42));
        assert_ne!(inc(42), inc(43));
    }

    #[test]
    fn gaussian_limit_variance_two() {
        // alpha = 2 has CF e^{-lambda^2}, i.e. variance 2.
        let mut rng = RngStream::new(7, 1);
        let n = 200_000;
        let mut s2 = 0.0;
        for _ in 0..n {
            let z = sample_standard_stable(2.0, &mut rng).unwrap();
            s2 += z * z;
        }
        let var = s2 / n as f64;
        assert!((var - 2.0).abs() < 0.03 * 2.0, "var = {var}");
    }

    #[test]
    fn cf_matches_target_at_alpha_18() {
        let mut rng = RngStream::new(11, 2);
        let n = 400_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_standard_stable(1.8, &mut rng).unwrap())
            .collect();
        for lambda in [0.5, 1.0, 2.0] {
            let target = (-(lambda as f64).abs().powf(1.8)).exp();
            let got = empirical_cf(&draws, lambda);
            assert!(
                (got - target).abs() < 0.01,
                "lambda {lambda}: {got} vs {target}"
            );
        }
        // Symmetry: median near zero.
        let med = crate::stats::quantile(&draws, 0.5);
        assert!(med.abs() < 0.01, "median {med}");
    }

    #[test]
    fn increment_scaling_in_h() {
        // CF of an increment over h = 2 at lambda = 1 is e^{-2}.
        let mut rng = RngStream::new(3, 5);
        let n = 400_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| stable_increment(1.8, 1.0, 2.0, &mut rng).unwrap())
            .collect();
        let got = empirical_cf(&draws, 1.0);
        assert!((got - (-2.0f64).exp()).abs() < 0.01, "{got}");
    }

    #[test]
    fn increments_are_stable_under_convolution() {
        // Sum of 4 increments of h = 1/4 vs one increment of h = 1.
        let mut r1 = RngStream::new(9, 10);
        let mut r2 = RngStream::new(9, 11);
        let n = 300_000;
        let sums: Vec<f64> = (0..n)
            .map(|_| {
                (0..4)
                    .map(|_| stable_increment(1.8, 1.0, 0.25, &mut r1).unwrap())
                    .sum()
            })
            .collect();
        let ones: Vec<f64> = (0..n)
            .map(|_| stable_increment(1.8, 1.0, 1.0, &mut r2).unwrap())
            .collect();
        let d = (empirical_cf(&sums, 1.0) - empirical_cf(&ones, 1.0)).abs();
        assert!(d < 0.01, "CF gap {d}");
    }

    #[test]
    fn zero_amplitude_gives_zero_field() {
        let spec = NoiseSpec::new(1.8, 0.85, 0.0, 6).unwrap();
        let mut st = spec.mode_streams(1, 0);
        let f = spec.cylindrical_increment(0.5, &mut st).unwrap();
        assert_eq!(f.norm_h(), 0.0);
    }

    #[test]
    fn mode_marginal_cf() {
        // Mode 1 cosine amplitude of the increment has CF e^{-h |beta_1 lambda|^alpha}.
        let spec = NoiseSpec::new(1.8, 0.85, 1.0, 2).unwrap();
        let h = 0.7;
        let mut st = spec.mode_streams(21, 0);
        let n = 300_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| spec.cylindrical_increment(h, &mut st).unwrap().cos_amp(1))
            .collect();
        let lambda = 1.0 / spec.beta_k(1); // unit effective scale
        let target = (-h * (spec.beta_k(1) * lambda).abs().powf(1.8)).exp();
        let got = empirical_cf(&draws, lambda);
        assert!((got - target).abs() < 0.01, "{got} vs {target}");
    }

    #[test]
    fn nested_modes_bit_identical() {
        // Increasing m must not perturb the draws of lower modes.
        let small = NoiseSpec::new(1.8, 0.85, 1.0, 4).unwrap();
        let large = NoiseSpec::new(1.8, 0.85, 1.0, 16).unwrap();
        let mut st_s = small.mode_streams(5, 3);
        let mut st_l = large.mode_streams(5, 3);
        for _ in 0..10 {
            let fs = small.cylindrical_increment(0.01, &mut st_s).unwrap();
            let fl = large.cylindrical_increment(0.01, &mut st_l).unwrap();
            for k in 1..=4 {
                assert_eq!(fs.cos_amp(k), fl.cos_amp(k));
                assert_eq!(fs.sin_amp(k), fl.sin_amp(k));
            }
        }
    }
}
