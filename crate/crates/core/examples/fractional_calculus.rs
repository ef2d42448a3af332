// Riemann-Liouville integrals and derivatives on a uniform grid.

use fbm_mdp::fraccalc::{compose_di_check, frac_derivative, frac_integral, FracOrder, Side};
use fbm_mdp::operator::l2_inner;
use fbm_mdp::{Path, Result, TimeGrid};
use statrs::function::gamma::gamma;

pub fn run_example() -> Result<()> {
    let grid = TimeGrid::new(256)?;
    let alpha = 0.3;

    let one = Path::from_fn(grid, |_| 1.0)?;
    let i = frac_integral(FracOrder::integral(alpha, Side::Left)?, &one)?;
    println!("I^a 1 at t=1: {:.6} (exact {:.6})", i.at(256)[0], 1.0 / gamma(1.0 + alpha));

    let f = Path::from_fn(grid, f64::exp)?;
    for side in [Side::Left, Side::Right] {
        let back = compose_di_check(alpha, side, &f)?;
        let err = back.values().iter().zip(f.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("{side:?}: max |D^a I^a f - f| = {err:.2e}");
    }

    let d = frac_derivative(FracOrder::derivative(alpha, Side::Left)?, &f)?;
    println!("D^a exp is infinite at nodes {:?}", d.infinite);

    let g = Path::from_fn(grid, |t| (3.0 * t).cos())?;
    let lhs = l2_inner(&f, &frac_integral(FracOrder::integral(alpha, Side::Left)?, &g)?)?;
    let rhs = l2_inner(&frac_integral(FracOrder::integral(alpha, Side::Right)?, &f)?, &g)?;
    println!("<f, I_0+ g> = {lhs:.6}, <I_1- f, g> = {rhs:.6}");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
