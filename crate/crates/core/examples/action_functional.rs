// Evaluate the moderate-deviations action functional on a few paths.

use fbm_mdp::mdp::{action_functional, ActionInput};
use fbm_mdp::models::{cir_model, pure_noise_model};
use fbm_mdp::{rng, HurstParam, Path, Result, TimeGrid};
use rand_distr::{Distribution, StandardNormal};

pub fn run_example() -> Result<()> {
    let grid = TimeGrid::new(256)?;
    let hurst = HurstParam::young(0.7)?;
    let input = |phi: Path, model, half| ActionInput { phi, model, hurst, half_factor: half };

    let square = Path::from_fn(grid, |t| t * t)?;
    for model in [pure_noise_model(1.0)?, cir_model(1.0, 1.0, 1.0, 1.0)?] {
        let name = model.name.clone();
        let full = action_functional(&input(square.clone(), model.clone(), false))?;
        let half = action_functional(&input(square.clone(), model, true))?;
        println!("{name}: S(t^2) = {:.5}, with half factor {:.5}", full.value, half.value);
    }

    let mut r = rng::stream(0, rng::PROBE_STREAM, 1);
    let mut acc = 0.0;
    let rough: Vec<f64> = std::iter::once(0.0)
        .chain((0..256).map(|_| {
            let z: f64 = StandardNormal.sample(&mut r);
            acc += z * grid.step().sqrt();
            acc
        }))
        .collect();
    let s = action_functional(&input(Path::scalar(grid, rough)?, pure_noise_model(1.0)?, false))?;
    println!("Brownian-like path: S = {} (flagged {})", s.value, s.non_absolutely_continuous);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
