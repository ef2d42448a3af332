// Distance between Q^H and Q^{1/2} as H decreases to 1/2, for a model whose
// noise coefficient depends on the fast variable and for one where it does not.

use fbm_mdp::mdp::discontinuity_gap;
use fbm_mdp::models::{cir_model, cir_probe_model};
use fbm_mdp::table::Provenance;
use fbm_mdp::{Result, TimeGrid};

pub fn run_example() -> Result<()> {
    let grid = TimeGrid::new(128)?;
    let ladder = [0.6, 0.55, 0.52];
    for model in [cir_probe_model(1.0, 1.0, 1.0)?, cir_model(1.0, 1.0, 1.0, 1.0)?] {
        println!("# {}", model.name);
        let report = discontinuity_gap(&model, &ladder, grid)?;
        report.to_table(Provenance::new(model.name.as_bytes(), None))?.write_csv(std::io::stdout())?;
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
