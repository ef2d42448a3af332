// Assemble the operator Q^H, check its invertibility and compare the two
// assembly routes.

use fbm_mdp::mdp::{assemble_q, assemble_q_kernel, assemble_q_parts, check_invertibility, relative_frobenius, GramRoute};
use fbm_mdp::models::cir_model;
use fbm_mdp::{HurstParam, Result, TimeGrid};

pub fn run_example() -> Result<()> {
    let model = cir_model(1.0, 1.0, 1.0, 1.0)?;
    let grid = TimeGrid::new(128)?;
    for h in [0.6, 0.75] {
        let hurst = HurstParam::young(h)?;
        let parts = assemble_q_parts(&model, hurst, grid, GramRoute::Composition)?;
        let q = parts.total();
        let verdict = check_invertibility(&q, &model)?;
        let kernel = assemble_q_kernel(&model, hurst, grid)?;
        println!(
            "H={h}: Sigma_phi(0) = {:.3}, min eig {:.4}, cond {:.1}, routes differ by {:.2e}",
            parts.sigma_phi.matrix()[(0, 0)],
            verdict.min_eigenvalue,
            verdict.condition_number,
            relative_frobenius(&q, &kernel)?
        );
    }
    let q = assemble_q(&model, HurstParam::brownian(), grid)?;
    println!("H=1/2 symmetry defect {:.1e}", q.symmetry_defect());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
