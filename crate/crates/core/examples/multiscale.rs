// The coupled system: one recorded path, the Itô-reduction identity and
// the uniform moment probe.

use fastslow::geometry::GroupSpec;
use fastslow::multiscale::{
    distance_squared, ito_reduction_check, simulate_pair, uniform_moment_probe,
};
use fastslow::observable::Observable;
use fastslow::presets;
use fastslow::rng::RngStream;
use fastslow::Result;

pub fn run() -> Result<()> {
    let su2 = GroupSpec::su(2);
    let preset = presets::hopf()?.with_epsilon(0.1)?;
    let sys = &preset.system;

    let mut rng = RngStream::new(11, 0);
    let path = simulate_pair(sys, 1.0, 0.1, &mut rng, &[0.25, 0.5, 1.0])?;
    let f = Observable::re_trace(su2);
    for (t, y) in path.times.iter().zip(&path.states) {
        println!("t = {t:.2}  Re tr y = {:+.4}", f.eval(y));
    }

    let betas: Vec<_> = preset
        .solve_poisson()?
        .into_iter()
        .map(|s| s.beta)
        .collect();
    let ito = ito_reduction_check(sys, &f, &betas, 0.5, 1000, 0.1, 11)?;
    println!(
        "Itô identity: lhs {:.4}  rhs {:.4}  se {:.4}  pass {}",
        ito.lhs, ito.rhs, ito.pooled_se, ito.pass
    );

    let moments = uniform_moment_probe(
        sys,
        &distance_squared(su2),
        1.0,
        &[0.2, 0.1],
        1.0,
        300,
        0.1,
        11,
    )?;
    for row in &moments.rows {
        println!(
            "eps {}: E sup d^2 = {:.4} ± {:.4}",
            row.epsilon, row.moment, row.std_error
        );
    }
    println!("max/min ratio {:.3}", moments.ratio);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
