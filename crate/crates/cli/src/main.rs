//! glstable: experiment runner for the stochastic Ginzburg-Landau
//! laboratory. One subcommand per probed claim; every run writes CSV data,
//! a JSON summary, the resolved config and a manifest into the output
//! directory, and exits 0 iff all contracted checks passed (1 on check
//! failure, 2 on configuration errors).

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};

use config::{parse_t_list, ExperimentConfig};
use output::OutputDir;

#[derive(Parser)]
#[command(
    name = "glstable",
    version,
    about = "Spectral laboratory for the stochastic real Ginzburg-Landau equation with alpha-stable noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML config file; flags override file values.
    #[arg(long, global = true)]
    config: Option<String>,

    /// Output directory for CSV/JSON/manifest artifacts.
    #[arg(long, global = true)]
    out: Option<String>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Stability index alpha in (1, 2).
    #[arg(long, global = true)]
    alpha: Option<f64>,

    /// Amplitude decay exponent beta (> 1/2 + 1/(2 alpha)).
    #[arg(long, global = true)]
    beta: Option<f64>,

    /// Noise amplitude multiplier.
    #[arg(long, global = true)]
    c0: Option<f64>,

    /// Mode cutoff.
    #[arg(long, global = true)]
    m: Option<usize>,

    #[arg(long, global = true)]
    dt: Option<f64>,

    /// Time horizon T.
    #[arg(long = "horizon", global = true)]
    horizon: Option<f64>,

    /// Sample count (draws for noise-check, paths elsewhere).
    #[arg(long = "n", global = true)]
    n: Option<usize>,

    /// Fractional power theta of A in scans and probes.
    #[arg(long, global = true)]
    theta: Option<f64>,

    /// Moment order p in (0, alpha).
    #[arg(long, global = true)]
    p: Option<f64>,

    /// Horizon list "a..b" (dyadic ladder) or "a,b,c".
    #[arg(long = "T", global = true)]
    t_list: Option<String>,

    /// Small-ball radius.
    #[arg(long, global = true)]
    eps: Option<f64>,

    /// Target ball radius (return probe).
    #[arg(long, global = true)]
    delta: Option<f64>,

    #[arg(long, global = true)]
    burn_in: Option<f64>,

    /// Initial-condition H norm (the primary initial state).
    #[arg(long, global = true)]
    x1_norm: Option<f64>,

    /// Second initial-condition H norm (ergodicity probe).
    #[arg(long, global = true)]
    x2_norm: Option<f64>,

    /// Initial radius R of the return probe.
    #[arg(long, global = true)]
    r_init: Option<f64>,

    /// Dump this many cylindrical-increment steps (noise-check audit).
    #[arg(long, global = true)]
    dump_increments: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Stable-sampler characteristic-function check.
    NoiseCheck,
    /// Sup-norm moment scan of the convolution and the noise.
    ConvScan,
    /// Small-ball probability of the convolution.
    Accessibility,
    /// One trajectory of the full dynamics.
    Simulate,
    /// Picard contraction and fixed-point agreement.
    PicardCheck,
    /// Nonlinearity estimate suite.
    Inequalities,
    /// Galerkin convergence ensemble.
    Galerkin,
    /// Sup-moment growth fit.
    Moments,
    /// Two-initial-condition KS merging probe.
    Ergodicity,
    /// Pathwise continuity in the initial condition.
    Continuity,
    /// Small-ball return experiment.
    ReturnProbe,
    /// Pathwise energy-estimate audit.
    EnergyCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::NoiseCheck => "noise-check",
            Command::ConvScan => "conv-scan",
            Command::Accessibility => "accessibility",
            Command::Simulate => "simulate",
            Command::PicardCheck => "picard-check",
            Command::Inequalities => "inequalities",
            Command::Galerkin => "galerkin",
            Command::Moments => "moments",
            Command::Ergodicity => "ergodicity",
            Command::Continuity => "continuity",
            Command::ReturnProbe => "return-probe",
            Command::EnergyCheck => "energy-check",
        }
    }
}

fn apply_overrides(cfg: &mut ExperimentConfig, cli: &Cli) -> Result<(), String> {
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(v) = cli.alpha {
        cfg.noise.alpha = v;
    }
    if let Some(v) = cli.beta {
        cfg.noise.beta = v;
    }
    if let Some(v) = cli.c0 {
        cfg.noise.c0 = v;
    }
    if let Some(v) = cli.m {
        cfg.noise.m = v;
    }
    if let Some(v) = cli.dt {
        cfg.sim.dt = v;
    }
    if let Some(v) = cli.horizon {
        cfg.sim.horizon = v;
    }
    if let Some(v) = cli.n {
        cfg.experiment.n_mc = v;
        cfg.experiment.n_draws = v;
    }
    if let Some(v) = cli.theta {
        cfg.experiment.theta = v;
    }
    if let Some(v) = cli.p {
        cfg.experiment.p = v;
    }
    if let Some(t) = &cli.t_list {
        cfg.experiment.t_list = parse_t_list(t)?;
    }
    if let Some(v) = cli.eps {
        cfg.experiment.eps = v;
    }
    if let Some(v) = cli.delta {
        cfg.experiment.delta = v;
    }
    if let Some(v) = cli.burn_in {
        cfg.experiment.burn_in = v;
    }
    if let Some(v) = cli.x1_norm {
        cfg.experiment.x1_norm = v;
    }
    if let Some(v) = cli.x2_norm {
        cfg.experiment.x2_norm = v;
    }
    if let Some(v) = cli.r_init {
        cfg.experiment.r_init = v;
    }
    if let Some(v) = cli.dump_increments {
        cfg.experiment.dump_increments = v;
    }
    Ok(())
}

fn run() -> Result<bool, (i32, String)> {
    let cli = Cli::parse();

    if let Ok(threads) = std::env::var("GLSTABLE_THREADS") {
        let n: usize = threads
            .parse()
            .map_err(|_| (2, format!("bad GLSTABLE_THREADS value {threads}")))?;
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }

    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path).map_err(|e| (2, e))?,
        None => ExperimentConfig::default(),
    };
    apply_overrides(&mut cfg, &cli).map_err(|e| (2, e))?;

    let out = OutputDir::create(&cfg.output_dir).map_err(|e| (2, e))?;
    let passed = match cli.command {
        Command::NoiseCheck => commands::noise_check(&cfg, &out),
        Command::ConvScan => commands::conv_scan(&cfg, &out),
        Command::Accessibility => commands::accessibility(&cfg, &out),
        Command::Simulate => commands::simulate(&cfg, &out),
        Command::PicardCheck => commands::picard_check(&cfg, &out),
        Command::Inequalities => commands::inequalities(&cfg, &out),
        Command::Galerkin => commands::galerkin(&cfg, &out),
        Command::Moments => commands::moments(&cfg, &out),
        Command::Ergodicity => commands::ergodicity(&cfg, &out),
        Command::Continuity => commands::continuity(&cfg, &out),
        Command::ReturnProbe => commands::return_probe(&cfg, &out),
        Command::EnergyCheck => commands::energy_check_cmd(&cfg, &out),
    }
    .map_err(|e| (2, e))?;
    eprintln!(
        "{}: {} (artifacts in {})",
        cli.command.name(),
        if passed { "all checks passed" } else { "CHECKS FAILED" },
        cfg.output_dir
    );
    Ok(passed)
}

fn main() {
    match run() {
        Ok(true) => std::process::exit(0),
        Ok(false) => std::process::exit(1),
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(code);
        }
    }
}
