// The effective equation for the Hopf system: closed-form trace semigroup
// against Monte Carlo, and the backward-equation check.

use fastslow::effective::{backward_check, semigroup_mc};
use fastslow::geometry::{GroupElement, GroupSpec};
use fastslow::observable::Observable;
use fastslow::presets;
use fastslow::Result;

pub fn run() -> Result<()> {
    let su2 = GroupSpec::su(2);
    let sde = presets::hopf()?.effective_sde()?;
    println!("{sde}");

    let f = Observable::re_trace(su2);
    let y0 = GroupElement::identity(su2);
    for t in [0.5, 1.0, 2.0] {
        let exact = sde.trace_semigroup(&f, &y0, t)?;
        let mc = semigroup_mc(&f, &y0, &sde, t, 0.01, 4000, 5)?;
        println!(
            "P_{t} Re tr (I): exact {exact:.4}  MC {:.4} ± {:.4}",
            mc.estimate, mc.std_error
        );
    }

    let r = backward_check(&f, &y0, &sde, 1.0, 0.01, 4000, 5)?;
    println!(
        "d/dT P_T f = {:.4}, P_T(Lf) = {:.4}, within {:.4}: {}",
        r.lhs_slope,
        r.rhs_value,
        3.0 * r.pooled_se + r.allowance,
        r.pass
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
