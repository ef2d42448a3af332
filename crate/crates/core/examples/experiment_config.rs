// Drive a run from a JSON experiment config, as the command-line tool does.

use fbm_mdp::cli::{run, ExperimentConfig};
use fbm_mdp::Result;

pub fn run_example() -> Result<()> {
    let cfg = ExperimentConfig::from_json(
        r#"{
            "command": "action",
            "model": {"model": "cir", "tau": 1, "beta": 1, "theta": 1, "v": 1},
            "hurst": 0.7,
            "steps": 128,
            "phi": {"builtin": "sin-t"}
        }"#,
    )?;
    println!("config hash {}", cfg.hash()?);
    let out = run(&cfg)?;
    out.write_csv(std::io::stdout())?;
    println!("summary {}", out.summary);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
