//! The covariance operator `Q^H`, its inversion and the action functional
//! `S^H`.
//!
//! `Q^H = f̄ K̇_H (f̄ K̇_H)^* + Σ_φ`, evaluated along the averaged path `X̄`,
//! where `Σ_φ` is the time-diagonal operator with blocks
//! `∫ (∇_yφ σ)(∇_yφ σ)ᵀ dμ`. At `H = 1/2` the first term becomes the
//! time-diagonal `∫ f fᵀ dμ`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::cameron_martin::{c_h, CMOperator};
use crate::error::{Error, Result};
use crate::fbm::{HurstParam, Regime};
use crate::fraccalc::{derivative_matrix, Side};
use crate::grid::{finite_diff_derivative, Path, TimeGrid};
use crate::models::ModelSpec;
use crate::operator::OperatorMatrix;
use crate::quad::{left_kernel_matrix, right_kernel_matrix};
use crate::simulate::solve_averaged;
use crate::table::{Provenance, ResultTable};

/// The two summands of `Q^H` and the path they were evaluated on.
#[derive(Debug, Clone)]
pub struct QParts {
    pub noise: OperatorMatrix,
    pub sigma_phi: OperatorMatrix,
    pub x_bar: Path,
}

impl QParts {
    pub fn total(&self) -> OperatorMatrix {
        self.noise.add(&self.sigma_phi).expect("same shape")
    }
}

/// Which discretization of `K̇K̇^*` the noise term uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramRoute {
    /// `K̇ W⁻¹ K̇ᵀ W` from the `K̇` matrix.
    Composition,
    /// Sequential product-integration of the double-integral kernel
    /// `c_H² t^α ∫_0^t (t-z)^{α-1} z^{-2α} ∫_z^1 (s-z)^{α-1} s^α h(s) ds dz`.
    Kernel,
}

fn check_hurst(hurst: HurstParam) -> Result<()> {
    let h = hurst.value();
    if hurst.is_brownian() || (h > 0.5 && h < 1.0) {
        Ok(())
    } else {
        Err(Error::Regime {
            h,
            regime: "young (1/2,1) or brownian",
        })
    }
}

/// Scalar `K̇K̇^*` on the grid.
pub fn gram_matrix(hurst: HurstParam, grid: TimeGrid, route: GramRoute) -> Result<OperatorMatrix> {
    check_hurst(hurst)?;
    if hurst.is_brownian() {
        return Ok(OperatorMatrix::identity(grid, 1));
    }
    match route {
        GramRoute::Composition => Ok(CMOperator::new(hurst, grid)?.gram()),
        GramRoute::Kernel => {
            let a = hurst.alpha();
            let c = c_h(hurst.value())?;
            let t = grid.nodes();
            let inner = right_kernel_matrix(grid, a, a);
            let outer = left_kernel_matrix(grid, a, -2.0 * a);
            let mut m = outer * inner;
            for i in 0..t.len() {
                let s = c * c * t[i].powf(a);
                m.row_mut(i).scale_mut(s);
            }
            OperatorMatrix::new(grid, 1, m)
        }
    }
}

fn node_blocks(x_bar: &Path, f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<Vec<f64>> {
    (0..x_bar.len()).map(|i| f(x_bar.at(i))).collect()
}

/// `F (G ⊗ I_p) Fᵀ` with `F` block-diagonal from the `n × p` blocks.
fn sandwich(gram: &OperatorMatrix, fbar: &[Vec<f64>], n: usize, p: usize) -> Result<OperatorMatrix> {
    let grid = gram.grid();
    let len = grid.len();
    let g = gram.matrix();
    let m = DMatrix::from_fn(len * n, len * n, |r, c| {
        let (i, a) = (r / n, r % n);
        let (j, b) = (c / n, c % n);
        let gij = g[(i, j)];
        if gij == 0.0 {
            return 0.0;
        }
        (0..p).map(|k| fbar[i][a * p + k] * fbar[j][b * p + k]).sum::<f64>() * gij
    });
    OperatorMatrix::new(grid, n, m)
}

pub fn assemble_q_parts(
    model: &ModelSpec,
    hurst: HurstParam,
    grid: TimeGrid,
    route: GramRoute,
) -> Result<QParts> {
    check_hurst(hurst)?;
    let n = model.n;
    let x_bar = solve_averaged(model, &model.x0, grid)?;
    let noise = if hurst.is_brownian() {
        OperatorMatrix::block_diagonal(grid, n, &node_blocks(&x_bar, |x| model.f_second_moment(x)))?
    } else {
        let fbar = node_blocks(&x_bar, |x| (model.f_bar)(x));
        if fbar.iter().any(|b| b.len() != n * model.p) {
            return Err(Error::Model("f_bar has the wrong shape".into()));
        }
        sandwich(&gram_matrix(hurst, grid, route)?, &fbar, n, model.p)?
    };
    let sigma_phi =
        OperatorMatrix::block_diagonal(grid, n, &node_blocks(&x_bar, |x| model.poisson_covariance(x)))?;
    Ok(QParts {
        noise,
        sigma_phi,
        x_bar,
    })
}

/// `Q^H` by matrix composition along `X̄`.
pub fn assemble_q(model: &ModelSpec, hurst: HurstParam, grid: TimeGrid) -> Result<OperatorMatrix> {
    Ok(assemble_q_parts(model, hurst, grid, GramRoute::Composition)?.total())
}

/// `Q^H` from the double-integral kernel.
pub fn assemble_q_kernel(model: &ModelSpec, hurst: HurstParam, grid: TimeGrid) -> Result<OperatorMatrix> {
    Ok(assemble_q_parts(model, hurst, grid, GramRoute::Kernel)?.total())
}

/// Relative weighted Frobenius distance `‖A - B‖ / ‖B‖`.
pub fn relative_frobenius(a: &OperatorMatrix, b: &OperatorMatrix) -> Result<f64> {
    Ok(a.sub(b)?.weighted_frobenius() / b.weighted_frobenius())
}

/// Unknowns that carry information: node-0 unknowns whose row and column
/// both vanish are dropped.
fn active_unknowns(q: &OperatorMatrix) -> Vec<usize> {
    let m = q.matrix();
    let n = q.block();
    (0..q.size())
        .filter(|&k| {
            k >= n || m.row(k).iter().any(|v| *v != 0.0) || m.column(k).iter().any(|v| *v != 0.0)
        })
        .collect()
}

fn reduced_symmetric(q: &OperatorMatrix, keep: &[usize]) -> DMatrix<f64> {
    let s = q.symmetrized();
    let r = DMatrix::from_fn(keep.len(), keep.len(), |a, b| s[(keep[a], keep[b])]);
    (&r + r.transpose()) * 0.5
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvertibilityVerdict {
    /// Smallest eigenvalue over the `Σ_φ` blocks along `X̄`.
    pub sufficient_min_eigenvalue: f64,
    pub sufficient_condition: bool,
    /// Extreme eigenvalues of `Q` on the active unknowns.
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub condition_number: f64,
    pub invertible: bool,
    /// Node-0 unknowns outside the range of `Q`.
    pub dropped: usize,
}

const INVERTIBLE_RTOL: f64 = 1e-10;

pub fn check_invertibility(q: &OperatorMatrix, model: &ModelSpec) -> Result<InvertibilityVerdict> {
    let x_bar = solve_averaged(model, &model.x0, q.grid())?;
    let n = model.n;
    let mut suff = f64::INFINITY;
    for i in 0..x_bar.len() {
        let block = DMatrix::from_row_slice(n, n, &model.poisson_covariance(x_bar.at(i)));
        let ev = SymmetricEigen::new(block).eigenvalues.min();
        suff = suff.min(ev);
    }
    let keep = active_unknowns(q);
    let (lo, hi) = if keep.is_empty() {
        (0.0, 0.0)
    } else {
        let ev = SymmetricEigen::new(reduced_symmetric(q, &keep)).eigenvalues;
        (ev.min(), ev.max())
    };
    let invertible = lo > INVERTIBLE_RTOL * hi.abs().max(1.0);
    Ok(InvertibilityVerdict {
        sufficient_min_eigenvalue: suff,
        sufficient_condition: suff > 0.0,
        min_eigenvalue: lo,
        max_eigenvalue: hi,
        condition_number: if lo > 0.0 { hi / lo } else { f64::INFINITY },
        invertible,
        dropped: q.size() - keep.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectSolution {
    pub u: Path,
    /// `‖Qu - ψ‖ / ‖ψ‖` over the active unknowns.
    pub residual: f64,
}

/// Solves `Q u = ψ` by Cholesky on the symmetrized matrix restricted to the
/// active unknowns. Dropped unknowns get `u = 0`.
pub fn invert_q_direct(q: &OperatorMatrix, psi: &Path) -> Result<DirectSolution> {
    q.check_path(psi)?;
    let keep = active_unknowns(q);
    let w = q.weights();
    let smallest = |m: &DMatrix<f64>| {
        if m.is_empty() {
            0.0
        } else {
            SymmetricEigen::new(m.clone()).eigenvalues.min()
        }
    };
    let s = reduced_symmetric(q, &keep);
    let chol = match s.clone().cholesky() {
        Some(c) if !keep.is_empty() => c,
        _ => {
            return Err(Error::Inversion {
                smallest_eigenvalue: smallest(&s),
            })
        }
    };
    let rhs = DVector::from_iterator(keep.len(), keep.iter().map(|&k| w[k].sqrt() * psi.values()[k]));
    let v = chol.solve(&rhs);
    let mut u = vec![0.0; q.size()];
    for (a, &k) in keep.iter().enumerate() {
        u[k] = v[a] / w[k].sqrt();
    }
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::Inversion {
            smallest_eigenvalue: smallest(&s),
        });
    }
    let qu = q.apply_vec(&u);
    let (mut num, mut den) = (0.0, 0.0);
    for &k in &keep {
        num += w[k] * (qu[k] - psi.values()[k]).powi(2);
        den += w[k] * psi.values()[k].powi(2);
    }
    let residual = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
    Ok(DirectSolution {
        u: Path::new(q.grid(), q.block(), u)?,
        residual,
    })
}

/// Scalar operator `c_H⁻² Γ(α)⁻² t^{-α} D^α_{1-} t^{2α} D^α_{0+} t^{-α}`, `α = H - 1/2`.
pub fn explicit_inverse_matrix(hurst: HurstParam, grid: TimeGrid) -> Result<OperatorMatrix> {
    let h = hurst.value();
    if !(h > 0.5 && h < 0.75) {
        return Err(Error::Regime {
            h,
            regime: Regime::ExplicitInverse.label(),
        });
    }
    let a = hurst.alpha();
    let t = grid.nodes();
    let tm: Vec<f64> = t
        .iter()
        .enumerate()
        .map(|(i, x)| if i == 0 { 0.0 } else { x.powf(-a) })
        .collect();
    let dl = derivative_matrix(grid, a, Side::Left).into_matrix();
    let dr = derivative_matrix(grid, a, Side::Right).into_matrix();
    let s = 1.0 / (c_h(h)? * gamma(a)).powi(2);
    let len = t.len();
    let mut inner = dl;
    for j in 0..len {
        inner.column_mut(j).scale_mut(tm[j]);
    }
    for i in 0..len {
        inner.row_mut(i).scale_mut(t[i].powf(2.0 * a));
    }
    let mut m = dr * inner;
    for i in 0..len {
        m.row_mut(i).scale_mut(s * tm[i]);
    }
    OperatorMatrix::new(grid, 1, m)
}

fn require_explicit_setting(model: &ModelSpec) -> Result<()> {
    if !model.slow_drift_only {
        return Err(Error::Model("explicit inverse needs a drift independent of the fast variable".into()));
    }
    if model.n != model.p {
        return Err(Error::Model(format!(
            "explicit inverse needs a square f_bar, got {}x{}",
            model.n, model.p
        )));
    }
    Ok(())
}

/// `Lᵀ [explicit scalar inverse] L ψ` with `L = f̄(X̄)⁻¹`.
pub fn invert_q_explicit(model: &ModelSpec, hurst: HurstParam, psi: &Path) -> Result<Path> {
    let grid = psi.grid();
    let scalar = explicit_inverse_matrix(hurst, grid)?;
    require_explicit_setting(model)?;
    let n = model.n;
    if psi.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: psi.dim(),
        });
    }
    let x_bar = solve_averaged(model, &model.x0, grid)?;
    let ls: Vec<DMatrix<f64>> = (0..grid.len())
        .map(|i| {
            DMatrix::from_row_slice(n, n, &(model.f_bar)(x_bar.at(i)))
                .try_inverse()
                .ok_or_else(|| Error::Model(format!("f_bar is singular at node {i}")))
        })
        .collect::<Result<_>>()?;
    let lpsi: Vec<f64> = (0..grid.len())
        .flat_map(|i| (&ls[i] * DVector::from_column_slice(psi.at(i))).as_slice().to_vec())
        .collect();
    let mid = scalar.apply_each(&Path::new(grid, n, lpsi)?)?;
    let out: Vec<f64> = (0..grid.len())
        .flat_map(|i| (ls[i].transpose() * DVector::from_column_slice(mid.at(i))).as_slice().to_vec())
        .collect();
    Path::new(grid, n, out)
}

#[derive(Debug, Clone)]
pub struct ActionInput {
    pub phi: Path,
    pub model: ModelSpec,
    pub hurst: HurstParam,
    /// Multiply the quadratic form by `1/2`.
    pub half_factor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionValue {
    /// `+∞` when `Φ` is flagged as not absolutely continuous.
    pub value: f64,
    pub non_absolutely_continuous: bool,
    pub solve_residual: f64,
}

/// Growth of the largest difference quotient when the grid is halved. Smooth
/// paths give about 1, Hölder-`γ` paths about `2^{1-γ}`, jumps about 2.
pub fn difference_quotient_growth(phi: &Path) -> Option<f64> {
    let n = phi.grid().n_steps();
    if n < 4 || !n.is_multiple_of(2) {
        return None;
    }
    let h = phi.grid().step();
    let d = phi.dim();
    let quot = |stride: usize| -> f64 {
        (0..n / stride)
            .map(|k| {
                let (i, j) = (k * stride, (k + 1) * stride);
                (0..d)
                    .map(|c| (phi.at(j)[c] - phi.at(i)[c]).abs())
                    .fold(0.0, f64::max)
                    / (stride as f64 * h)
            })
            .fold(0.0, f64::max)
    };
    let coarse = quot(2);
    if coarse == 0.0 {
        return Some(1.0);
    }
    Some(quot(1) / coarse)
}

pub const NON_AC_GROWTH: f64 = 1.3;

/// `S^H(Φ) = ∫ rᵀ (Q^H)⁻¹ r`, `r = Φ̇ - ∇ḡ(X̄) Φ`.
pub fn action_functional(inp: &ActionInput) -> Result<ActionValue> {
    let q = assemble_q(&inp.model, inp.hurst, inp.phi.grid())?;
    action_with_q(inp, &q)
}

/// As [`action_functional`] with a pre-assembled `Q`.
pub fn action_with_q(inp: &ActionInput, q: &OperatorMatrix) -> Result<ActionValue> {
    let phi = &inp.phi;
    let model = &inp.model;
    let n = model.n;
    q.check_path(phi)?;
    if phi.at(0).iter().any(|v| v.abs() > 1e-12) {
        return Err(Error::Domain("action needs phi(0) = 0".into()));
    }
    if difference_quotient_growth(phi).is_some_and(|g| g >= NON_AC_GROWTH) {
        return Ok(ActionValue {
            value: f64::INFINITY,
            non_absolutely_continuous: true,
            solve_residual: 0.0,
        });
    }
    let grid = phi.grid();
    let x_bar = solve_averaged(model, &model.x0, grid)?;
    let dphi = finite_diff_derivative(phi)?;
    let mut r = Vec::with_capacity(phi.values().len());
    for i in 0..grid.len() {
        let jac = (model.grad_g_bar)(x_bar.at(i));
        for a in 0..n {
            let drift: f64 = (0..n).map(|b| jac[a * n + b] * phi.at(i)[b]).sum();
            r.push(dphi.at(i)[a] - drift);
        }
    }
    let r = Path::new(grid, n, r)?;
    if r.values().iter().all(|v| *v == 0.0) {
        return Ok(ActionValue {
            value: 0.0,
            non_absolutely_continuous: false,
            solve_residual: 0.0,
        });
    }
    let sol = match invert_q_direct(q, &r) {
        Ok(s) => s,
        Err(Error::Inversion { smallest_eigenvalue }) => {
            return Err(Error::RateUndefined(format!(
                "Q is not invertible (smallest eigenvalue {smallest_eigenvalue:e})"
            )))
        }
        Err(e) => return Err(e),
    };
    let w = q.weights();
    let mut value: f64 = r
        .values()
        .iter()
        .zip(sol.u.values())
        .enumerate()
        .map(|(k, (a, b))| w[k] * a * b)
        .sum();
    if inp.half_factor {
        value *= 0.5;
    }
    Ok(ActionValue {
        value,
        non_absolutely_continuous: false,
        solve_residual: sol.residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRow {
    pub hurst: f64,
    /// `‖Q^H - Q^{1/2}‖` in the weighted Frobenius norm.
    pub gap: f64,
    /// `gap / analytic_norm`
    pub ratio: f64,
    /// Log-log slope against `H - 1/2` from the previous ladder point.
    pub empirical_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscontinuityReport {
    /// Norm of the limit `diag(∫ (f - f̄)(f - f̄)ᵀ dμ)` along `X̄`.
    pub analytic_norm: f64,
    pub rows: Vec<GapRow>,
}

pub const GAP_COLUMNS: [&str; 5] = ["hurst", "gap", "analytic_norm", "ratio", "empirical_rate"];

impl DiscontinuityReport {
    pub fn to_table(&self, provenance: Provenance) -> Result<ResultTable> {
        let mut t = ResultTable::new(&GAP_COLUMNS, 1, provenance);
        for r in &self.rows {
            t.push(vec![
                r.hurst.into(),
                r.gap.into(),
                self.analytic_norm.into(),
                r.ratio.into(),
                r.empirical_rate.unwrap_or(f64::NAN).into(),
            ])?;
        }
        Ok(t)
    }
}

/// `‖Q^H - Q^{1/2}‖` along a ladder of `H ↓ 1/2`, next to the Jensen-gap limit.
pub fn discontinuity_gap(model: &ModelSpec, h_ladder: &[f64], grid: TimeGrid) -> Result<DiscontinuityReport> {
    let hursts: Vec<HurstParam> = h_ladder.iter().map(|h| HurstParam::young(*h)).collect::<Result<_>>()?;
    let base = assemble_q(model, HurstParam::brownian(), grid)?;
    let x_bar = solve_averaged(model, &model.x0, grid)?;
    let n = model.n;
    let limit = node_blocks(&x_bar, |x| model.f_covariance(x));
    let analytic_norm = OperatorMatrix::block_diagonal(grid, n, &limit)?.weighted_frobenius();
    let gaps: Vec<f64> = hursts
        .par_iter()
        .map(|h| Ok(assemble_q(model, *h, grid)?.sub(&base)?.weighted_frobenius()))
        .collect::<Result<_>>()?;
    let mut rows: Vec<GapRow> = Vec::with_capacity(gaps.len());
    for (k, (h, gap)) in h_ladder.iter().zip(&gaps).enumerate() {
        let empirical_rate = (k > 0).then(|| {
            let (h0, g0) = (h_ladder[k - 1], gaps[k - 1]);
            ((gap / g0).ln()) / (((h - 0.5) / (h0 - 0.5)).ln())
        });
        rows.push(GapRow {
            hurst: *h,
            gap: *gap,
            ratio: if analytic_norm > 0.0 { gap / analytic_norm } else { f64::INFINITY },
            empirical_rate,
        });
    }
    Ok(DiscontinuityReport { analytic_norm, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cameron_martin::kdot_inverse_matrix;
    use crate::fraccalc::{derivative_via_integral, FracOrder};
    use crate::models::{cir_model, cir_probe_model, langevin_model, pure_noise_model, slow_drift_model, Polynomial, Potential};
    use crate::operator::{l2_inner, l2_norm};
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    fn rel_l2(a: &Path, b: &Path, from: usize) -> f64 {
        let w = a.grid().trapezoid_weights();
        let (mut num, mut den) = (0.0, 0.0);
        for i in from..a.len() {
            num += w[i] * (a.values()[i] - b.values()[i]).powi(2);
            den += w[i] * b.values()[i].powi(2);
        }
        (num / den).sqrt()
    }

    #[test]
    fn cir_q_structure() {
        let g = TimeGrid::new(64).unwrap();
        let m = cir_model(1.0, 1.0, 1.0, 1.0).unwrap();
        let parts = assemble_q_parts(&m, HurstParam::young(0.75).unwrap(), g, GramRoute::Composition).unwrap();
        let diag = parts.sigma_phi.matrix();
        for i in 0..65 {
            // (v/β)²θ with the cell solution φ' = -1/β
            assert!((diag[(i, i)] - 1.0).abs() < 1e-8);
        }
        let gram = CMOperator::new(HurstParam::young(0.75).unwrap(), g).unwrap().gram();
        assert!((parts.noise.matrix() - gram.matrix()).amax() < 1e-14);
        let q = parts.total();
        assert!(q.symmetry_defect() < 1e-10);
        assert!(q.weighted_eigenvalues()[0] >= -1e-8);
        let verdict = check_invertibility(&q, &m).unwrap();
        assert!(verdict.sufficient_condition && verdict.invertible);
        assert!(verdict.min_eigenvalue >= verdict.sufficient_min_eigenvalue - 1e-8);
    }

    #[test]
    fn slow_drift_has_no_poisson_term() {
        let g = TimeGrid::new(32).unwrap();
        let m = slow_drift_model(Polynomial::new(vec![1.0, -0.5]), 1.0).unwrap();
        let parts = assemble_q_parts(&m, HurstParam::young(0.6).unwrap(), g, GramRoute::Composition).unwrap();
        assert!(parts.sigma_phi.matrix().iter().all(|v| *v == 0.0));
        let q = parts.total();
        let v = check_invertibility(&q, &m).unwrap();
        assert!(v.invertible && !v.sufficient_condition && v.dropped == 1);

        let zero = slow_drift_model(Polynomial::new(vec![1.0]), 0.0).unwrap();
        let q0 = assemble_q(&zero, HurstParam::young(0.6).unwrap(), g).unwrap();
        assert!(q0.matrix().iter().all(|v| *v == 0.0));
        assert!(!check_invertibility(&q0, &zero).unwrap().invertible);
        let psi = Path::from_fn(g, |t| t).unwrap();
        assert!(matches!(invert_q_direct(&q0, &psi), Err(Error::Inversion { .. })));
    }

    #[test]
    fn brownian_constant_f_gives_scaled_identity() {
        let g = TimeGrid::new(16).unwrap();
        let m = pure_noise_model(1.5).unwrap();
        let q = assemble_q(&m, HurstParam::brownian(), g).unwrap();
        assert!((q.matrix() - DMatrix::identity(17, 17) * 2.25).amax() < 1e-14);
        let psi = Path::from_fn(g, |t| (3.0 * t).cos()).unwrap();
        let sol = invert_q_direct(&q, &psi).unwrap();
        for (u, p) in sol.u.values().iter().zip(psi.values()) {
            assert!((u - p / 2.25).abs() < 1e-14);
        }
    }

    #[test]
    fn direct_solve_roundtrip() {
        let g = TimeGrid::new(128).unwrap();
        let m = cir_model(1.0, 1.0, 1.0, 1.0).unwrap();
        let q = assemble_q(&m, HurstParam::young(0.7).unwrap(), g).unwrap();
        let mut r = rng::stream(2, 7, 0);
        let u0: Vec<f64> = (0..129).map(|_| StandardNormal.sample(&mut r)).collect();
        let psi = Path::scalar(g, q.apply_vec(&u0)).unwrap();
        let sol = invert_q_direct(&q, &psi).unwrap();
        let u0 = Path::scalar(g, u0).unwrap();
        assert!(rel_l2(&sol.u, &u0, 0) < 1e-8);
        assert!(sol.residual < 1e-8);
    }

    #[test]
    fn direct_solve_refines() {
        let m = cir_model(1.0, 1.0, 1.0, 1.0).unwrap();
        let h = HurstParam::young(0.6).unwrap();
        let solve = |n| {
            let g = TimeGrid::new(n).unwrap();
            let q = assemble_q(&m, h, g).unwrap();
            invert_q_direct(&q, &Path::from_fn(g, |_| 1.0).unwrap()).unwrap().u
        };
        let (coarse, fine) = (solve(256), solve(512));
        let sub = Path::scalar(coarse.grid(), fine.values().iter().step_by(2).copied().collect()).unwrap();
        assert!(rel_l2(&coarse, &sub, 1) < 1e-2);
    }

    #[test]
    fn explicit_inverse_routes() {
        let g = TimeGrid::new(256).unwrap();
        let h = HurstParam::explicit_inverse(0.6).unwrap();
        let m = slow_drift_model(Polynomial::new(vec![0.3]), 1.0).unwrap();
        let q = assemble_q(&m, h, g).unwrap();
        let psi = Path::from_fn(g, |t| (PI_T * t).sin() + t).unwrap();
        let back = invert_q_explicit(&m, h, &Path::scalar(g, q.apply_vec(psi.values())).unwrap()).unwrap();
        assert!(rel_l2(&back, &psi, 1) < 5e-2);
        let zero = invert_q_explicit(&m, h, &Path::zeros(g, 1)).unwrap();
        assert!(zero.values().iter().all(|v| *v == 0.0));
        let lin = Path::from_fn(g, |t| t).unwrap();
        let direct = invert_q_direct(&q, &lin).unwrap().u;
        let explicit = invert_q_explicit(&m, h, &lin).unwrap();
        assert!(rel_l2(&direct, &explicit, 1) < 5e-2);

        // the derivatives written as d/dt of fractional integrals; the right
        // derivative carries a minus sign
        let a = h.alpha();
        let t = g.nodes();
        let tm: Vec<f64> = t.iter().map(|x| if *x == 0.0 { 0.0 } else { x.powf(-a) }).collect();
        let step1 = Path::scalar(g, lin.values().iter().zip(&tm).map(|(v, w)| v * w).collect()).unwrap();
        let d1 = derivative_via_integral(FracOrder::derivative(a, Side::Left).unwrap(), &step1).unwrap();
        let step2 = Path::scalar(g, d1.values().iter().zip(&t).map(|(v, x)| v * x.powf(2.0 * a)).collect()).unwrap();
        let d2 = derivative_via_integral(FracOrder::derivative(a, Side::Right).unwrap(), &step2).unwrap();
        let s = 1.0 / (c_h(0.6).unwrap() * gamma(a)).powi(2);
        let oracle = Path::scalar(g, d2.values().iter().zip(&tm).map(|(v, w)| s * v * w).collect()).unwrap();
        let w = g.trapezoid_weights();
        let (mut num, mut den) = (0.0, 0.0);
        for i in 2..g.len() - 2 {
            num += w[i] * (explicit.values()[i] - oracle.values()[i]).powi(2);
            den += w[i] * oracle.values()[i].powi(2);
        }
        assert!((num / den).sqrt() < 5e-2, "{}", (num / den).sqrt());

        assert!(matches!(
            explicit_inverse_matrix(HurstParam::young(0.8).unwrap(), g),
            Err(Error::Regime { .. })
        ));
        let cir = cir_model(1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(invert_q_explicit(&cir, h, &lin), Err(Error::Model(_))));
    }

    const PI_T: f64 = std::f64::consts::PI;

    #[test]
    fn action_properties() {
        let g = TimeGrid::new(128).unwrap();
        let h = HurstParam::young(0.7).unwrap();
        let m = cir_model(1.0, 1.0, 1.0, 1.0).unwrap();
        let q = assemble_q(&m, h, g).unwrap();
        let phi = Path::from_fn(g, |t| t * t - 0.5 * t).unwrap();
        let inp = |p: Path, half| ActionInput {
            phi: p,
            model: m.clone(),
            hurst: h,
            half_factor: half,
        };
        let s1 = action_with_q(&inp(phi.clone(), false), &q).unwrap();
        assert!(s1.value > 0.0 && !s1.non_absolutely_continuous);
        let scaled = Path::scalar(g, phi.values().iter().map(|v| 3.0 * v).collect()).unwrap();
        let s3 = action_with_q(&inp(scaled, false), &q).unwrap();
        assert!((s3.value - 9.0 * s1.value).abs() < 1e-8 * s3.value);
        let half = action_with_q(&inp(phi.clone(), true), &q).unwrap();
        assert_eq!(half.value, 0.5 * s1.value);
        assert_eq!(action_with_q(&inp(Path::zeros(g, 1), false), &q).unwrap().value, 0.0);
        let shifted = Path::from_fn(g, |t| 1.0 + t).unwrap();
        assert!(action_with_q(&inp(shifted, false), &q).is_err());

        let mut r = rng::stream(1, 8, 0);
        let mut acc = 0.0;
        let rough: Vec<f64> = std::iter::once(0.0)
            .chain((0..128).map(|_| {
                let z: f64 = StandardNormal.sample(&mut r);
                acc += z * g.step().sqrt();
                acc
            }))
            .collect();
        let s = action_with_q(&inp(Path::scalar(g, rough).unwrap(), false), &q).unwrap();
        assert!(s.non_absolutely_continuous && s.value.is_infinite());
    }

    #[test]
    fn langevin_action_reduces_without_curvature() {
        let g = TimeGrid::new(64).unwrap();
        let h = HurstParam::young(0.7).unwrap();
        let flat = langevin_model(Potential::Cos, Polynomial::new(vec![0.0, 0.4]), 1.0).unwrap();
        let q = assemble_q(&flat, h, g).unwrap();
        let phi = Path::from_fn(g, |t| (2.0 * t).sin()).unwrap();
        let s = action_with_q(
            &ActionInput {
                phi: phi.clone(),
                model: flat.clone(),
                hurst: h,
                half_factor: false,
            },
            &q,
        )
        .unwrap()
        .value;
        let dphi = finite_diff_derivative(&phi).unwrap();
        let u = invert_q_direct(&q, &dphi).unwrap().u;
        let plain = l2_inner(&dphi, &u).unwrap();
        assert!((s - plain).abs() < 1e-10 * plain);
    }

    #[test]
    fn pure_noise_action_matches_cameron_martin_norm() {
        let g = TimeGrid::new(256).unwrap();
        let h = HurstParam::young(0.6).unwrap();
        let tau = 1.3;
        let m = pure_noise_model(tau).unwrap();
        let phi = Path::from_fn(g, |t| t * t).unwrap();
        let s = action_functional(&ActionInput {
            phi: phi.clone(),
            model: m,
            hurst: h,
            half_factor: false,
        })
        .unwrap();
        let uh = kdot_inverse_matrix(h, g).unwrap().apply(&finite_diff_derivative(&phi).unwrap()).unwrap();
        let cm = l2_norm(&uh).powi(2) / (tau * tau);
        assert!((s.value - cm).abs() < 5e-2 * cm, "{} vs {cm}", s.value);
    }

    #[test]
    fn kernel_route_is_close_but_not_equal() {
        let g = TimeGrid::new(64).unwrap();
        for hv in [0.6, 0.75] {
            let h = HurstParam::young(hv).unwrap();
            let a = gram_matrix(h, g, GramRoute::Composition).unwrap();
            let b = gram_matrix(h, g, GramRoute::Kernel).unwrap();
            let rel = relative_frobenius(&b, &a).unwrap();
            assert!(rel < 0.15, "H={hv}: {rel}");
        }
    }

    #[test]
    fn discontinuity_examples() {
        let g = TimeGrid::new(64).unwrap();
        let ladder = [0.6, 0.55, 0.52];
        let probe = cir_probe_model(1.0, 1.0, 1.0).unwrap();
        let rep = discontinuity_gap(&probe, &ladder, g).unwrap();
        // Var of Gamma(2, 2) is 1/2 on every node
        assert!((rep.analytic_norm - 0.5 * (g.len() as f64).sqrt()).abs() < 1e-6);
        assert!(rep.rows.iter().all(|r| r.ratio >= 0.9), "{rep:?}");
        let control = cir_model(1.0, 1.0, 1.0, 1.0).unwrap();
        let rep = discontinuity_gap(&control, &ladder, g).unwrap();
        assert_eq!(rep.analytic_norm, 0.0);
        assert!(rep.rows.windows(2).all(|w| w[1].gap < w[0].gap), "{rep:?}");
    }
}
