// Fractional volatility model with a CIR fast variable: averaged
// coefficients, cell problem and companion checks.

use fbm_mdp::models::{cir_model, poisson_solve_1d, verify_companions};
use fbm_mdp::Result;

pub fn run_example() -> Result<()> {
    let (tau, beta, theta, v) = (1.0, 2.0, 1.5, 1.0);
    let model = cir_model(tau, beta, theta, v)?;
    let (mean, second) = model.mu.moments();
    println!("Gamma invariant law: mean {mean:.4}, second moment {second:.4}");
    println!("g_bar = {:?}", (model.g_bar)(&[0.0]));

    let sol = &poisson_solve_1d(&model, &[0.0])?[0];
    let slope = sol.dphi[sol.dphi.len() / 2];
    println!("cell problem slope phi' = {slope:.6} (-1/beta = {:.6})", -1.0 / beta);
    println!("Sigma_phi = {:.6}", model.poisson_covariance(&[0.0])[0]);

    let report = verify_companions(&model, &[vec![0.0], vec![1.0]])?;
    println!("{report:#?}");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
