//! One-off calibration pilot. Prints the measured ratio suprema for the
//! nonlinearity estimates (frozen x2 in `inequalities::calibration`), the
//! noise amplitude that puts E sup_{t<=1} ||Z||_V near 1 (used by the
//! accessibility experiment), and the small-ball acceptance rates.
//!
//! Run with: cargo run --release -p glstable-core --example calibrate

use glstable_core::inequalities::measure_ratio_sups;
use glstable_core::noise::NoiseSpec;
use glstable_core::ou::{simulate_z, uniform_grid};
use rayon::prelude::*;

fn e_sup_v(spec: &NoiseSpec, t_max: f64, steps: usize, n_mc: usize, seed: u64) -> f64 {
    let grid = uniform_grid(t_max, steps);
    let total: f64 = (0..n_mc)
        .into_par_iter()
        .map(|traj| {
            simulate_z(spec, &grid, seed, traj as u64)
                .expect("valid spec")
                .sup_norm(0.5)
        })
        .sum();
    total / n_mc as f64
}

fn p_sup_below(spec: &NoiseSpec, eps: f64, t_max: f64, steps: usize, n_mc: usize, seed: u64) -> f64 {
    let grid = uniform_grid(t_max, steps);
    let hits: usize = (0..n_mc)
        .into_par_iter()
        .map(|traj| {
            let sup = simulate_z(spec, &grid, seed, traj as u64)
                .expect("valid spec")
                .sup_norm(0.5);
            usize::from(sup <= eps)
        })
        .sum();
    hits as f64 / n_mc as f64
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let quick = args.iter().any(|a| a == "--quick");
    let n_ratio = if quick { 2_000 } else { 25_000 };
    let n_mc = if quick { 500 } else { 4_000 };

    println!("== nonlinearity ratio suprema (m = 64, {n_ratio} samples/family, sweep to 2^10) ==");
    let sups = measure_ratio_sups(n_ratio, 64, 7191, 20);
    println!("  nv          = {:.6}  -> freeze C_NV          = {:.4}", sups.nv, 2.0 * sups.nv);
    println!("  lip_quarter = {:.6}  -> freeze C_LIP_QUARTER = {:.4}", sups.lip_quarter, 2.0 * sups.lip_quarter);
    println!("  lip_sixth   = {:.6}  -> freeze C_LIP_SIXTH   = {:.4}", sups.lip_sixth, 2.0 * sups.lip_sixth);
    println!("  growth      = {:.6}  -> freeze C_GROWTH      = {:.4}", sups.growth, 2.0 * sups.growth);
    println!("  split       = {:.6}  -> freeze C_SPLIT       = {:.4}", sups.split, 2.0 * sups.split);

    println!("== stochastic convolution scale (alpha 1.8, beta 0.85, m 64) ==");
    let base = NoiseSpec::new(1.8, 0.85, 1.0, 64).unwrap();
    let e1 = e_sup_v(&base, 1.0, 128, n_mc, 11);
    println!("  E sup_(t<=1) ||Z||_V at c0 = 1: {e1:.4}");
    let c0_acc = 1.0 / e1;
    println!("  c0 with E sup ~ 1: {c0_acc:.4}");
    let spec_acc = base.with_amplitude(c0_acc).unwrap();
    let p = p_sup_below(&spec_acc, 0.5, 1.0, 128, n_mc, 12);
    println!("  P(sup_(t<=1) ||Z||_V <= 0.5) at that c0: {p:.4}");

    println!("== small-ball return acceptance (eps 0.5, T 5, solver grid dt 1e-3) ==");
    for c0 in [1.0, 1.2, 1.5, 1.8, 2.1] {
        let spec = base.with_amplitude(c0).unwrap();
        let p = p_sup_below(&spec, 0.5, 5.0, 5000, n_mc / 4, 13);
        println!("  c0 = {c0:.2}: acceptance {p:.4}");
    }

    println!("== energy-bound margins on default-spec paths (frozen C*) ==");
    let c_star = glstable_core::inequalities::calibration::ENERGY_C_STAR;
    let n_paths = if quick { 40 } else { 200 };
    for x0_norm in [0.0, 1.0, 5.0] {
        let worst: f64 = (0..n_paths)
            .into_par_iter()
            .map(|traj| {
                let cfg = glstable_core::SimConfig::default();
                let x0 = if x0_norm == 0.0 {
                    glstable_core::SpectralField::zeros(64)
                } else {
                    glstable_core::SpectralField::cosine_mode(64, 1, x0_norm)
                };
                let grid = uniform_grid(cfg.horizon, cfg.n_steps());
                let zp = simulate_z(&base, &grid, 31, traj as u64).expect("valid spec");
                let tr = glstable_core::solve_with_zpath(&x0, &zp, &cfg, traj as u64)
                    .expect("default paths stay finite");
                glstable_core::dynamics::energy_bound_check(&tr, &zp, c_star, 1e-6)
                    .expect("same grid")
                    .worst_margin_interior
            })
            .reduce(|| f64::INFINITY, f64::min);
        println!("  ||x0||_H = {x0_norm}: worst margin over {n_paths} paths = {worst:.3e}");
    }
}
