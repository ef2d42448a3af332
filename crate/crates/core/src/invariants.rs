//! Deterministic invariant checks used by the `verify` command.

use statrs::function::gamma::gamma;

use crate::cameron_martin::CMOperator;
use crate::error::Result;
use crate::fbm::{fbm_covariance, HurstParam};
use crate::fraccalc::{compose_di_check, frac_integral, FracOrder, Side};
use crate::grid::{Path, TimeGrid};
use crate::mdp::assemble_q;
use crate::models::{cir_model, langevin_model, verify_companions, Polynomial, Potential};
use crate::operator::l2_inner;
use crate::young::young_integrate;

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `(name, measured defect, tolerance)` for each property.
pub fn quick_checks() -> Result<Vec<(&'static str, f64, f64)>> {
    let mut out = Vec::new();
    let grid = TimeGrid::new(64)?;
    let h = HurstParam::operator(0.7)?;

    let var = (0..=10)
        .map(|i| {
            let t = i as f64 / 10.0;
            fbm_covariance(HurstParam::sampling(0.7).unwrap(), t, t).unwrap() - t.powf(1.4)
        })
        .fold(0.0, |m: f64, d| m.max(d.abs()));
    out.push(("fbm_variance", var, 1e-14));

    let one = Path::from_fn(grid, |_| 1.0)?;
    let a = 0.3;
    let i = frac_integral(FracOrder::integral(a, Side::Left)?, &one)?;
    let exact: Vec<f64> = grid.nodes().iter().map(|t| t.powf(a) / gamma(1.0 + a)).collect();
    out.push(("fractional_integral_of_one", max_abs_diff(i.values(), &exact), 1e-10));

    let f = Path::from_fn(grid, |t| t * t)?;
    let back = compose_di_check(a, Side::Left, &f)?;
    let tail = grid.len() / 4;
    out.push((
        "derivative_inverts_integral",
        max_abs_diff(&back.values()[tail..], &f.values()[tail..]),
        1e-3,
    ));

    let op = CMOperator::new(h, grid)?;
    let u = Path::from_fn(grid, |t| (3.0 * t).sin())?;
    let g = Path::from_fn(grid, |t| 1.0 + t * t)?;
    let lhs = l2_inner(&op.kdot_apply(&u)?, &g)?;
    let rhs = l2_inner(&u, &op.kdot_adjoint_apply(&g)?)?;
    out.push(("kdot_adjoint_identity", (lhs - rhs).abs() / lhs.abs(), 1e-10));

    let fine = TimeGrid::new(256)?;
    let op = CMOperator::new(h, fine)?;
    let ones = Path::from_fn(fine, |_| 1.0)?;
    let norm = l2_inner(&op.gram().apply(&ones)?, &ones)?;
    out.push(("gram_unit_variance", (norm - 1.0).abs(), 2e-2));

    let t = Path::from_fn(grid, |t| t)?;
    let y = young_integrate(&t, &t)?;
    out.push(("young_integral_t_dt", (y.at(grid.n_steps())[0] - 0.5).abs(), 1e-14));

    let cir = cir_model(1.0, 1.0, 1.0, 1.0)?;
    let rep = verify_companions(&cir, &[vec![0.0], vec![1.0]])?;
    out.push(("cir_companions", rep.max_deviation(), 1e-6));

    let lan = langevin_model(Potential::Cos, Polynomial::quadratic(), 1.0)?;
    let rep = verify_companions(&lan, &[vec![0.0], vec![0.5]])?;
    out.push(("langevin_companions", rep.max_deviation(), 1e-5));

    let q = assemble_q(&cir, h, TimeGrid::new(32)?)?;
    out.push(("q_symmetry", q.symmetry_defect(), 1e-10));

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_quick_checks_pass() {
        for (name, v, tol) in quick_checks().unwrap() {
            assert!(v <= tol, "{name}: {v:e} > {tol:e}");
        }
    }
}
