// Pathwise Young integrals of fBm against itself and Hölder estimates.

use fbm_mdp::fbm::sample_fbm;
use fbm_mdp::young::{holder_seminorm, holder_seminorm_dyadic, young_integrate, young_loeve_check};
use fbm_mdp::{HurstParam, Result, SamplingMethod, TimeGrid};

pub fn run_example() -> Result<()> {
    let grid = TimeGrid::new(1024)?;
    let b = sample_fbm(HurstParam::sampling(0.75)?, grid, 1, 3, SamplingMethod::Circulant)?;

    // for H > 1/2 the chain rule holds: ∫ B dB = B_1² / 2
    let int = young_integrate(&b, &b)?;
    let end = b.at(1024)[0];
    println!("∫ B dB = {:.6}, B_1²/2 = {:.6}", int.at(1024)[0], 0.5 * end * end);

    let exact = holder_seminorm(&b, 0.6)?;
    let dyadic = holder_seminorm_dyadic(&b, 0.6)?;
    println!("0.6-Hölder seminorm {:.4} (dyadic bound {:.4})", exact.seminorm, dyadic.seminorm);

    let report = young_loeve_check(&b, &b, 0.6, 0.6)?;
    println!("Young-Loève constant {:.4}", report.constant);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
