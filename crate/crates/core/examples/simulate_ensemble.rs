// Euler scheme for the slow-fast system and a Monte Carlo ladder in epsilon.

use fbm_mdp::cli::resolved_steps;
use fbm_mdp::models::cir_model;
use fbm_mdp::simulate::{ensemble_ladder, euler_slow_fast, SimConfig, Statistic};
use fbm_mdp::table::Provenance;
use fbm_mdp::{HurstParam, Result, TimeGrid};

pub fn run_example() -> Result<()> {
    let model = cir_model(1.0, 1.0, 1.0, 1.0)?;
    let hurst = HurstParam::young(0.7)?;

    let cfg = SimConfig::new(model, 0.05, hurst, TimeGrid::new(resolved_steps(0.05))?, 1);
    let path = euler_slow_fast(&cfg)?;
    let n = cfg.grid.n_steps();
    println!("X_1 = {:.4}, X_bar_1 = {:.4}, eta_1 = {:.4}", path.x_path.at(n)[0], path.x_bar_path.at(n)[0], path.eta_path.at(n)[0]);

    let ladder: Vec<(f64, TimeGrid)> = [0.1, 0.05, 0.02]
        .iter()
        .map(|e| Ok((*e, TimeGrid::new(resolved_steps(*e))?)))
        .collect::<Result<_>>()?;
    let table = ensemble_ladder(&cfg, &ladder, 200, Statistic::SupDeviation, Provenance::new(b"example", Some(1)))?;
    table.write_csv(std::io::stdout())?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
