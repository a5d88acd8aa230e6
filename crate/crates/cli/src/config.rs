//! Experiment configuration: one TOML file with [noise], [sim] and
//! [experiment] tables; command-line flags override file values. Unknown
//! keys are rejected so a config rerun is exactly what it says.

use glstable_core::{NoiseSpec, SimConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub output_dir: String,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub sim: SimTable,
    #[serde(default)]
    pub experiment: ExperimentTable,
}

fn default_seed() -> u64 {
    0
}

fn default_out() -> String {
    "out".into()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: default_seed(),
            output_dir: default_out(),
            noise: NoiseConfig::default(),
            sim: SimTable::default(),
            experiment: ExperimentTable::default(),
        }
    }
}

/// Raw noise parameters; validated into a `NoiseSpec` after flag overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub alpha: f64,
    pub beta: f64,
    pub c0: f64,
    pub m: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            alpha: 1.8,
            beta: 0.85,
            c0: 1.0,
            m: 64,
        }
    }
}

impl NoiseConfig {
    pub fn build(&self) -> Result<NoiseSpec, String> {
        NoiseSpec::new(self.alpha, self.beta, self.c0, self.m).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimTable {
    pub dt: f64,
    pub horizon: f64,
    pub n_g: usize,
    #[serde(default)]
    pub rho: Option<f64>,
    pub adapt_threshold: f64,
    pub max_halvings: u32,
}

impl Default for SimTable {
    fn default() -> Self {
        let d = SimConfig::default();
        SimTable {
            dt: d.dt,
            horizon: d.horizon,
            n_g: d.n_g,
            rho: d.rho,
            adapt_threshold: d.adapt_threshold,
            max_halvings: d.max_halvings,
        }
    }
}

impl SimTable {
    /// Assemble the solver config for a given mode cutoff. The grid is
    /// raised to 3m when the configured one is for a smaller cutoff.
    pub fn build(&self, m: usize, seed: u64) -> SimConfig {
        SimConfig {
            dt: self.dt,
            horizon: self.horizon,
            m,
            n_g: self.n_g.max(3 * m),
            rho: self.rho,
            adapt_threshold: self.adapt_threshold,
            max_halvings: self.max_halvings,
            seed,
            checkpoint_stride: 0,
        }
    }
}

/// Per-command knobs. Each command documents which entries it reads;
/// everything has a sensible default so a bare command line works.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentTable {
    /// Monte Carlo sample count (paths or draws, command dependent).
    pub n_mc: usize,
    /// Scalar draws for distribution-level checks.
    pub n_draws: usize,
    /// Probe levels for characteristic functions.
    pub lambda_list: Vec<f64>,
    /// Horizon list for scans ("conv-scan", "moments").
    pub t_list: Vec<f64>,
    /// Grid nodes per horizon in convolution scans.
    pub steps_per_horizon: usize,
    pub theta: f64,
    pub p: f64,
    pub eps: f64,
    pub delta: f64,
    pub burn_in: f64,
    pub m_list: Vec<usize>,
    pub m_ref: usize,
    pub n_seeds: usize,
    pub r_init: f64,
    pub delta_list: Vec<f64>,
    pub probe_times: Vec<f64>,
    pub observables: Vec<String>,
    /// Initial-condition H norms for the uniqueness probe.
    pub x1_norm: f64,
    pub x2_norm: f64,
    /// Picard iteration budget.
    pub n_iter: usize,
    /// Dump cylindrical increments as CSV (noise-check audit).
    pub dump_increments: usize,
}

impl Default for ExperimentTable {
    fn default() -> Self {
        ExperimentTable {
            n_mc: 2000,
            n_draws: 1_000_000,
            lambda_list: vec![0.5, 1.0, 2.0],
            t_list: vec![0.0625, 0.125, 0.25, 0.5, 1.0],
            steps_per_horizon: 64,
            theta: 0.0,
            p: 1.0,
            eps: 0.5,
            delta: 1.0,
            burn_in: 10.0,
            m_list: vec![8, 16, 32, 64],
            m_ref: 256,
            n_seeds: 100,
            r_init: 5.0,
            delta_list: vec![1e-2, 1e-3, 1e-4],
            probe_times: vec![0.01, 0.02, 0.05],
            observables: vec!["norm_H".into()],
            x1_norm: 0.0,
            x2_norm: 5.0,
            n_iter: 12,
            dump_increments: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &str) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {path}: {e}"))?;
        toml::from_str(&text).map_err(|e| format!("config parse error in {path}: {e}"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Parse "a..b" as a dyadic horizon ladder (a, 2a, 4a, ..., b) or a comma
/// list "a,b,c".
pub fn parse_t_list(text: &str) -> Result<Vec<f64>, String> {
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: f64 = lo.trim().parse().map_err(|_| format!("bad horizon {lo}"))?;
        let hi: f64 = hi.trim().parse().map_err(|_| format!("bad horizon {hi}"))?;
        if !(lo > 0.0 && hi >= lo) {
            return Err(format!("bad horizon range {text}"));
        }
        let mut out = Vec::new();
        let mut t = lo;
        while t < hi * (1.0 + 1e-12) {
            out.push(t);
            t *= 2.0;
        }
        Ok(out)
    } else {
        text.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("bad horizon {s}"))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let toml = r#"
seed = 1
[noise]
alpha = 1.8
beta = 0.85
c0 = 1.0
m = 8
bogus = 3
"#;
        let r: Result<ExperimentConfig, _> = toml::from_str(toml);
        assert!(r.is_err());
    }

    #[test]
    fn roundtrip_and_defaults() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.noise.m, 64);
        assert_eq!(back.experiment.m_ref, 256);
        assert!(back.noise.build().is_ok());
    }

    #[test]
    fn t_list_parsing() {
        assert_eq!(
            parse_t_list("0.0625..1").unwrap(),
            vec![0.0625, 0.125, 0.25, 0.5, 1.0]
        );
        assert_eq!(parse_t_list("1,2,4").unwrap(), vec![1.0, 2.0, 4.0]);
        assert!(parse_t_list("x..1").is_err());
    }
}
