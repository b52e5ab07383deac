// Correctors `β` with `L0 β = α`, spectral and Monte Carlo, and the
// averaged matrix they give.

use fastslow::geometry::{exp_map, pauli};
use fastslow::poisson::{
    averaged_matrix, solve_poisson_mc, solve_poisson_spectral, ResolventConfig,
};
use fastslow::presets::{self, PoissonPlan};
use fastslow::Result;

pub fn run() -> Result<()> {
    let preset = presets::hopf()?;
    let fast = preset.system.fast();
    let alpha = &preset.alphas()[0];

    let spectral = solve_poisson_spectral(alpha, fast)?;
    let cfg = ResolventConfig {
        paths: 5_000,
        master_seed: 3,
        ..ResolventConfig::default()
    };
    let mc = solve_poisson_mc(alpha, fast, &cfg)?;
    println!("spectral residual {:.1e}", spectral.residual_sup);
    let x1 = pauli()[0];
    for k in 0..4 {
        let theta = std::f64::consts::PI * k as f64 / 8.0;
        let z = exp_map(&x1.scale(theta));
        println!(
            "theta {theta:.3}: spectral {:+.4}  monte carlo {:+.4}",
            spectral.beta.eval(&z),
            mc.beta.eval(&z)
        );
    }

    let betas: Vec<_> = preset
        .solve_poisson()?
        .into_iter()
        .map(|s| s.beta)
        .collect();
    let model = averaged_matrix(preset.alphas(), &betas, fast)?;
    println!("a_bar = {:.6}", model.a_bar);

    let so4 = presets::so4_hypoelliptic(1)?.with_poisson(PoissonPlan::MonteCarlo(cfg));
    println!(
        "so4_hypoelliptic a_bar = {:.4}",
        so4.averaged_model()?.a_bar
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
