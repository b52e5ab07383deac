// Exact empirical W1 between the ε-marginals and the limit law, next to
// the floor between two limit samples.

use fastslow::metrics::wasserstein_convergence;
use fastslow::presets;
use fastslow::Result;

pub fn run() -> Result<()> {
    let preset = presets::hopf()?;
    let sde = preset.effective_sde()?;
    let study = wasserstein_convergence(
        &preset.system,
        &sde,
        0.25,
        &[0.4, 0.2, 0.1],
        200,
        0.1,
        0.01,
        13,
    )?;
    let floor = &study.sampling_floor;
    println!(
        "floor {:.4} [{:.4}, {:.4}]",
        floor.w1, floor.ci.0, floor.ci.1
    );
    for row in &study.rows {
        let e = &row.estimate;
        println!(
            "eps {}: w1 {:.4} [{:.4}, {:.4}]",
            row.epsilon, e.w1, e.ci.0, e.ci.1
        );
    }
    match &study.fit {
        Ok(fit) => println!("exponent {:.2}", fit.exponent),
        Err(why) => println!("no fit: {why}"),
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
