// The fast process on its own: a path on the Hopf circle, the invariant
// mean of an adjoint coefficient and the ergodic-average error.

use fastslow::fast::{lln_error, simulate_fast};
use fastslow::geometry::GroupElement;
use fastslow::presets;
use fastslow::rng::RngStream;
use fastslow::Result;

pub fn run() -> Result<()> {
    let preset = presets::hopf()?;
    let fast = preset.system.fast().with_epsilon(1.0)?;
    let alpha = &preset.alphas()[0];
    let z0 = GroupElement::identity(*fast.group());

    let mut rng = RngStream::new(7, 0);
    let z = simulate_fast(&z0, &fast, 2.0, 0.01, &mut rng)?;
    println!("z(2) on the circle: {}", fast.contains(&z));
    println!(
        "invariant mean of {}: {:.2e}",
        alpha.name(),
        fast.invariant_mean(alpha).mean
    );

    let report = lln_error(alpha, &fast, &z0, &[1.0, 2.0, 4.0, 8.0, 16.0], 400, 0.01, 7)?;
    for row in &report.rows {
        println!(
            "t = {:>4}  L2 error {:.4} ± {:.4}",
            row.t, row.l2_error, row.ci_half_width
        );
    }
    if let Some(s) = report.slope {
        println!("log-log slope {s:.3}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
