// Sample fractional Brownian motion with both samplers and compare the
// empirical variance at t = 1 with the exact value 1.

use fbm_mdp::fbm::{sample_fbm, FbmSampler};
use fbm_mdp::{rng, HurstParam, Result, SamplingMethod, TimeGrid};

pub fn run_example() -> Result<()> {
    let hurst = HurstParam::sampling(0.7)?;
    let grid = TimeGrid::new(64)?;

    let path = sample_fbm(hurst, grid, 2, 42, SamplingMethod::Circulant)?;
    println!("two-dimensional path, terminal value {:?}", path.at(grid.n_steps()));

    for method in [SamplingMethod::Circulant, SamplingMethod::Cholesky] {
        let sampler = FbmSampler::new(hurst, grid, method)?;
        let n = 4000;
        let var = (0..n)
            .map(|i| {
                let x = sampler.sample(&mut rng::stream(7, rng::FBM_STREAM, i));
                x[grid.n_steps()].powi(2)
            })
            .sum::<f64>()
            / n as f64;
        println!("{method:?}: Var B_1 ~ {var:.3} (exact 1)");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
