// Solve Q u = psi directly and with the explicit fractional-derivative
// inverse available when the drift does not depend on the fast variable.

use fbm_mdp::mdp::{assemble_q, invert_q_direct, invert_q_explicit};
use fbm_mdp::models::{slow_drift_model, Polynomial};
use fbm_mdp::{HurstParam, Path, Result, TimeGrid};

pub fn run_example() -> Result<()> {
    let grid = TimeGrid::new(256)?;
    let hurst = HurstParam::explicit_inverse(0.6)?;
    let model = slow_drift_model(Polynomial::new(vec![0.2, -0.5]), 1.0)?;
    let q = assemble_q(&model, hurst, grid)?;

    let psi = Path::from_fn(grid, |t| t * (1.0 + (3.0 * t).sin()))?;
    let direct = invert_q_direct(&q, &psi)?;
    let explicit = invert_q_explicit(&model, hurst, &psi)?;
    println!("direct solve residual {:.1e}", direct.residual);
    for i in [32, 128, 224] {
        println!("t={:.3}: direct {:.5}, explicit {:.5}", grid.node(i), direct.u.at(i)[0], explicit.at(i)[0]);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
