// Weak error of `Re tr` against the limit as ε shrinks, with a rate fit.

use fastslow::effective::semigroup_mc;
use fastslow::geometry::GroupSpec;
use fastslow::metrics::{rate_fit, weak_error_against};
use fastslow::observable::Observable;
use fastslow::presets;
use fastslow::Result;

pub fn run() -> Result<()> {
    let preset = presets::hopf()?.with_initial_coords(&[0.0, std::f64::consts::FRAC_PI_2, 0.0])?;
    let sys = &preset.system;
    let sde = preset.effective_sde()?;
    let f = Observable::re_trace(GroupSpec::su(2));
    let paths = 4000;

    let limit = semigroup_mc(&f, sys.y0(), &sde, 1.0, 0.01, paths, 9)?;
    println!("limit {:.4} ± {:.4}", limit.estimate, limit.std_error);
    let eps = [0.4, 0.2, 0.1];
    let mut errors = Vec::new();
    let mut ses = Vec::new();
    for e in eps {
        let w = weak_error_against(&f, &sys.with_epsilon(e)?, &limit, 1.0, paths, 0.1, 9)?;
        println!("eps {e}: error {:+.4} ± {:.4}", w.signed, w.pooled_se);
        errors.push(w.error);
        ses.push(w.pooled_se);
    }
    match rate_fit(&eps, &errors, &ses) {
        Ok(fit) => println!(
            "exponent {:.2} in [{:.2}, {:.2}]",
            fit.exponent, fit.exponent_ci.0, fit.exponent_ci.1
        ),
        Err(e) => println!("no fit: {e}"),
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
