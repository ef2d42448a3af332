// The operator K_dot_H, its adjoint and the Cameron-Martin shift.

use fbm_mdp::cameron_martin::{c_h, kdot_inverse_matrix, CMOperator};
use fbm_mdp::operator::l2_inner;
use fbm_mdp::{HurstParam, Path, Result, TimeGrid};
use statrs::function::beta::beta;

pub fn run_example() -> Result<()> {
    let grid = TimeGrid::new(256)?;
    let h = 0.75;
    let op = CMOperator::new(HurstParam::young(h)?, grid)?;
    println!("c_H = {:.6}", op.c_h().unwrap());

    let one = Path::from_fn(grid, |_| 1.0)?;
    let k1 = op.kdot_apply(&one)?;
    let exact = c_h(h)? * beta(h - 0.5, 1.5 - h);
    println!("K_dot 1 at t=1: {:.6} (closed form {exact:.6})", k1.at(256)[0]);

    let gram = op.gram();
    println!("<K_dot K_dot* 1, 1> = {:.4} (Var B_1 = 1)", l2_inner(&gram.apply(&one)?, &one)?);

    let u = Path::from_fn(grid, |t| (2.0 * t).sin())?;
    let shift = op.k_apply(&u)?;
    println!("Cameron-Martin shift at t=1: {:.6}", shift.at(256)[0]);

    let back = kdot_inverse_matrix(HurstParam::young(h)?, grid)?.apply(&op.kdot_apply(&u)?)?;
    println!("K_dot^-1 K_dot u at t=0.5: {:.6} vs {:.6}", back.at(128)[0], u.at(128)[0]);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
