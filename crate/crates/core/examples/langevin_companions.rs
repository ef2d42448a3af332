// Langevin fast dynamics on the torus: Gibbs measure, the cell problem in
// closed form and its numerical cross-check.

use fbm_mdp::models::{
    langevin_centering_constant, langevin_model, langevin_periodic_constant, poisson_solve_1d,
    verify_companions, GibbsMeasure, InvariantMeasure, Polynomial, Potential,
};
use fbm_mdp::Result;

pub fn run_example() -> Result<()> {
    let model = langevin_model(Potential::Cos, Polynomial::quadratic(), 1.0)?;
    let InvariantMeasure::Gibbs(gibbs) = &model.mu else { unreachable!() };
    println!("partition function Z = {:.10}", gibbs.partition());
    println!("M (periodic) = {:.6}", langevin_periodic_constant(gibbs));

    let sol = &poisson_solve_1d(&model, &[0.0])?[0];
    let s = 2f64.sqrt();
    let worst = sol
        .y
        .iter()
        .zip(&sol.dphi)
        .map(|(y, d)| (d * s - (model.phi_grad_y_sigma)(&[0.0], *y)[0]).abs())
        .fold(0.0, f64::max);
    println!("closed-form vs numerical phi' sigma: {worst:.2e}");

    let tilted = Potential::Fourier { cos: vec![1.0], sin: vec![0.0, 0.5] };
    let g = GibbsMeasure::new(tilted, 1.0)?;
    println!(
        "asymmetric potential: periodic M {:.6}, centering M {:.6}",
        langevin_periodic_constant(&g),
        langevin_centering_constant(&g)
    );
    println!("max companion deviation {:.2e}", verify_companions(&model, &[vec![0.3]])?.max_deviation());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
