// Exponential and logarithm, geodesic distance, brackets and the
// Hörmander closure on SU(2) and SO(4).

use fastslow::fast::hormander_check;
use fastslow::geometry::{
    adjoint, bracket, distance, exp_map, log_map, pauli, GroupElement, GroupSpec,
};
use fastslow::Result;

pub fn run() -> Result<()> {
    let [x1, x2, x3] = pauli();
    let g = exp_map(&x2.scale(1.2));
    let back = log_map(&g)?;
    println!("log(exp(1.2 X2)) = {:?}", back.coords());
    println!(
        "d(I, exp(1.2 X2)) = {:.6}",
        distance(&GroupElement::identity(GroupSpec::su(2)), &g)
    );
    println!("[X1, X2] = {:?}", bracket(&x1, &x2)?.coords());
    println!(
        "Ad(exp(pi/4 X1)) X2 = {:?}",
        adjoint(&exp_map(&x1.scale(std::f64::consts::FRAC_PI_4)), &x2)?.coords()
    );

    let horizontal = hormander_check(&[x2, x3], None)?;
    println!(
        "su(2) from X2, X3: satisfied {} (dim {})",
        horizontal.satisfied, horizontal.generated_dim
    );

    let so4 = GroupSpec::so(4);
    let block = hormander_check(&[so4.so_generator(1, 2), so4.so_generator(1, 3)], None)?;
    println!(
        "so(4) from A12, A13: dim {} of {} (bracket depth {})",
        block.generated_dim, block.required_dim, block.depth
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
