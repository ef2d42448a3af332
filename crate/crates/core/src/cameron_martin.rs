//! The Volterra operator `K̇_H` that maps `L²` controls to derivatives of
//! Cameron–Martin shifts of fBm, and its `L²` adjoint.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::beta::beta;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::fbm::{HurstParam, Regime};
use crate::fraccalc::{derivative_matrix, Side, WeightedFracOp};
use crate::grid::{Path, TimeGrid};
use crate::operator::{l2_norm, OperatorMatrix};
use crate::quad::left_kernel_matrix;
use crate::rng::{self, PROBE_STREAM};

/// `(H(2H-1) / B(2-2H, H-1/2))^{1/2}` for `H ∈ (1/2, 1)`.
pub fn c_h(h: f64) -> Result<f64> {
    if !(h > 0.5 && h < 1.0) {
        return Err(Error::Domain(format!("c_H needs H in (1/2, 1), got {h}")));
    }
    Ok((h * (2.0 * h - 1.0) / beta(2.0 - 2.0 * h, h - 0.5)).sqrt())
}

#[derive(Debug, Clone)]
pub struct CMOperator {
    hurst: HurstParam,
    grid: TimeGrid,
    matrix: Arc<OperatorMatrix>,
    c_h: Option<f64>,
}

type CacheKey = (u64, usize);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<OperatorMatrix>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<OperatorMatrix>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl CMOperator {
    /// Assembles (or fetches from the process-wide cache) the matrix of `K̇_H`.
    pub fn new(hurst: HurstParam, grid: TimeGrid) -> Result<Self> {
        let h = hurst.value();
        if !(hurst.is_brownian() || (h > 0.5 && h < 1.0)) {
            return Err(Error::Regime {
                h,
                regime: "young (1/2,1) or brownian",
            });
        }
        let c = if hurst.is_brownian() { None } else { Some(c_h(h)?) };
        let key = (h.to_bits(), grid.n_steps());
        let mut guard = cache().lock().expect("operator cache poisoned");
        let matrix = match guard.get(&key) {
            Some(m) => Arc::clone(m),
            None => {
                let m = Arc::new(assemble(hurst, grid, c)?);
                guard.insert(key, Arc::clone(&m));
                m
            }
        };
        drop(guard);
        Ok(Self {
            hurst,
            grid,
            matrix,
            c_h: c,
        })
    }

    pub fn hurst(&self) -> HurstParam {
        self.hurst
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    /// `None` at `H = 1/2`.
    pub fn c_h(&self) -> Option<f64> {
        self.c_h
    }

    pub fn matrix(&self) -> &OperatorMatrix {
        &self.matrix
    }

    pub fn adjoint_matrix(&self) -> OperatorMatrix {
        self.matrix.weighted_adjoint()
    }

    /// `K̇_H K̇_H^*`.
    pub fn gram(&self) -> OperatorMatrix {
        self.matrix
            .compose(&self.adjoint_matrix())
            .expect("same grid")
    }

    pub fn kdot_apply(&self, u_hat: &Path) -> Result<Path> {
        self.matrix.apply_each(u_hat)
    }

    pub fn kdot_adjoint_apply(&self, h: &Path) -> Result<Path> {
        self.adjoint_matrix().apply_each(h)
    }

    /// `t ↦ ∫_0^t (K̇_H û)(s) ds`, the shift itself.
    pub fn k_apply(&self, u_hat: &Path) -> Result<Path> {
        let d = self.kdot_apply(u_hat)?;
        let dim = d.dim();
        let half = 0.5 * self.grid.step();
        let mut out = vec![0.0; d.values().len()];
        for i in 1..self.grid.len() {
            for k in 0..dim {
                out[i * dim + k] =
                    out[(i - 1) * dim + k] + half * (d.at(i - 1)[k] + d.at(i)[k]);
            }
        }
        Path::new(self.grid, dim, out)
    }
}

fn assemble(hurst: HurstParam, grid: TimeGrid, c: Option<f64>) -> Result<OperatorMatrix> {
    let Some(c) = c else {
        return Ok(OperatorMatrix::identity(grid, 1));
    };
    let a = hurst.alpha();
    let t = grid.nodes();
    let kernel = left_kernel_matrix(grid, a, -a);
    let m = DMatrix::from_fn(kernel.nrows(), kernel.ncols(), |i, j| {
        c * t[i].powf(a) * kernel[(i, j)]
    });
    OperatorMatrix::new(grid, 1, m)
}

/// `K̇_H` rebuilt as `c_H Γ(H-1/2) · t^{H-1/2} I^{H-1/2}_{0+} t^{1/2-H}` from
/// the weighted fractional integral.
pub fn kdot_via_fraccalc(hurst: HurstParam, grid: TimeGrid) -> Result<OperatorMatrix> {
    if hurst.regime() == Regime::Brownian {
        return Ok(OperatorMatrix::identity(grid, 1));
    }
    let a = hurst.alpha();
    let op = WeightedFracOp {
        beta: a,
        alpha: a,
        gamma: -a,
        side: Side::Left,
    };
    Ok(op.matrix(grid)?.scale(c_h(hurst.value())? * gamma(a)))
}

/// `K̇_H⁻¹ = (c_H Γ(H-1/2))⁻¹ t^{H-1/2} D^{H-1/2}_{0+} t^{1/2-H}`.
///
/// The weight `t^{1/2-H}` is set to zero at the origin, where `K̇_H` has a
/// zero row.
pub fn kdot_inverse_matrix(hurst: HurstParam, grid: TimeGrid) -> Result<OperatorMatrix> {
    if hurst.is_brownian() {
        return Ok(OperatorMatrix::identity(grid, 1));
    }
    let h = hurst.value();
    if !(h > 0.5 && h < 1.0) {
        return Err(Error::Regime {
            h,
            regime: "young (1/2,1) or brownian",
        });
    }
    let a = hurst.alpha();
    let t = grid.nodes();
    let d = derivative_matrix(grid, a, Side::Left);
    let s = 1.0 / (c_h(h)? * gamma(a));
    let m = DMatrix::from_fn(t.len(), t.len(), |i, j| {
        let right = if j == 0 { 0.0 } else { t[j].powf(-a) };
        s * t[i].powf(a) * d.matrix()[(i, j)] * right
    });
    OperatorMatrix::new(grid, 1, m)
}

/// Largest `‖K̇_H u‖` over random smooth unit-norm inputs `u`.
pub fn l2_boundedness_probe(op: &CMOperator, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Domain("probe needs at least one trial".into()));
    }
    let mut rng = rng::stream(seed, PROBE_STREAM, 0);
    let mut best: f64 = 0.0;
    for _ in 0..trials {
        let modes: Vec<(f64, f64)> = (0..8)
            .map(|k| {
                let amp: f64 = rng.sample::<f64, _>(StandardNormal) / (1.0 + k as f64);
                let phase = 2.0 * PI * rng.random::<f64>();
                (amp, phase)
            })
            .collect();
        let u = Path::from_fn(op.grid, |t| {
            modes
                .iter()
                .enumerate()
                .map(|(k, (a, p))| a * (k as f64 * PI * t + p).cos())
                .sum()
        })?;
        let norm = l2_norm(&u);
        if norm == 0.0 {
            continue;
        }
        let u = Path::scalar(op.grid, u.values().iter().map(|v| v / norm).collect())?;
        best = best.max(l2_norm(&op.kdot_apply(&u)?));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::l2_inner;
    use approx::assert_relative_eq;

    #[test]
    fn constant_values() {
        // B(1/2, 1/4), independent reference value
        let b = gamma(0.5) * gamma(0.25) / gamma(0.75);
        assert_relative_eq!(b, 5.244_115_108_584_24, max_relative = 1e-12);
        assert_relative_eq!(c_h(0.75).unwrap(), (0.375 / b).sqrt(), max_relative = 1e-12);
        assert!((c_h(0.75).unwrap() - 0.26742).abs() < 1e-5);
        let ladder: Vec<f64> = [0.6, 0.55, 0.51].iter().map(|h| c_h(*h).unwrap()).collect();
        assert!(ladder[0] > ladder[1] && ladder[1] > ladder[2] && ladder[2] > 0.0);
        assert!(matches!(c_h(0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn brownian_operator_is_identity() {
        let g = TimeGrid::new(32).unwrap();
        let op = CMOperator::new(HurstParam::brownian(), g).unwrap();
        let u = Path::from_fn(g, |t| (7.0 * t).sin() - t).unwrap();
        assert_eq!(op.kdot_apply(&u).unwrap(), u);
        assert_eq!(op.kdot_adjoint_apply(&u).unwrap(), u);
        assert_relative_eq!(l2_boundedness_probe(&op, 5, 1).unwrap(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn kdot_of_one_matches_beta_integral() {
        let g = TimeGrid::new(512).unwrap();
        let h = HurstParam::young(0.75).unwrap();
        let op = CMOperator::new(h, g).unwrap();
        let one = Path::from_fn(g, |_| 1.0).unwrap();
        let out = op.kdot_apply(&one).unwrap();
        let k = c_h(0.75).unwrap() * beta(0.25, 0.75);
        assert!((k - 1.1880).abs() < 1e-4);
        for (i, t) in g.nodes().iter().enumerate() {
            assert!((out.values()[i] - k * t.powf(0.25)).abs() < 1e-2);
        }
    }

    #[test]
    fn causality_and_fraccalc_consistency() {
        let g = TimeGrid::new(64).unwrap();
        let h = HurstParam::young(0.65).unwrap();
        let op = CMOperator::new(h, g).unwrap();
        let m = op.matrix().matrix();
        for i in 0..65 {
            for j in i + 1..65 {
                assert_eq!(m[(i, j)], 0.0);
            }
        }
        let alt = kdot_via_fraccalc(h, g).unwrap();
        assert!((m - alt.matrix()).amax() < 1e-8);
        let adj = op.adjoint_matrix();
        let w = g.trapezoid_weights();
        for i in 0..65 {
            for j in 0..65 {
                assert!((w[i] * adj.matrix()[(i, j)] - w[j] * m[(j, i)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adjoint_identity_on_random_pairs() {
        let g = TimeGrid::new(128).unwrap();
        let op = CMOperator::new(HurstParam::young(0.7).unwrap(), g).unwrap();
        let mut r = rng::stream(3, 9, 0);
        for _ in 0..100 {
            let u = Path::scalar(g, (0..129).map(|_| r.sample(StandardNormal)).collect()).unwrap();
            let h = Path::scalar(g, (0..129).map(|_| r.sample(StandardNormal)).collect()).unwrap();
            let lhs = l2_inner(&op.kdot_apply(&u).unwrap(), &h).unwrap();
            let rhs = l2_inner(&u, &op.kdot_adjoint_apply(&h).unwrap()).unwrap();
            assert!((lhs - rhs).abs() < 1e-8);
        }
    }

    #[test]
    fn gram_reproduces_unit_variance() {
        // ⟨1, K̇K̇*1⟩ = Var W_1 = 1. For H near 1 the adjoint output blows up
        // like r^{1/2-H} at the origin and trapezoid weights lose accuracy.
        let g = TimeGrid::new(256).unwrap();
        for h in [0.6, 0.7, 0.75] {
            let op = CMOperator::new(HurstParam::young(h).unwrap(), g).unwrap();
            let one = Path::from_fn(g, |_| 1.0).unwrap();
            let v = l2_norm(&op.kdot_adjoint_apply(&one).unwrap()).powi(2);
            assert!((v - 1.0).abs() < 2e-2, "H={h}: {v}");
        }
    }

    #[test]
    fn inverse_undoes_kdot_away_from_origin() {
        let g = TimeGrid::new(256).unwrap();
        let h = HurstParam::young(0.6).unwrap();
        let op = CMOperator::new(h, g).unwrap();
        let inv = kdot_inverse_matrix(h, g).unwrap();
        let u = Path::from_fn(g, |t| 1.0 + (2.0 * t).sin()).unwrap();
        let back = inv.apply(&op.kdot_apply(&u).unwrap()).unwrap();
        // node 0 lies outside the range of K̇
        let w = g.trapezoid_weights();
        let err: f64 = (1..g.len())
            .map(|i| w[i] * (back.values()[i] - u.values()[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err / l2_norm(&u) < 5e-3, "{err}");
    }

    #[test]
    fn probe_is_stable_under_refinement() {
        let h = HurstParam::young(0.75).unwrap();
        let p = |n| {
            let op = CMOperator::new(h, TimeGrid::new(n).unwrap()).unwrap();
            l2_boundedness_probe(&op, 20, 5).unwrap()
        };
        let ratio = p(256) / p(128);
        assert!((0.8..=1.25).contains(&ratio));
        let op = CMOperator::new(HurstParam::young(0.6).unwrap(), TimeGrid::new(128).unwrap()).unwrap();
        let v = l2_boundedness_probe(&op, 20, 5).unwrap();
        assert!(v.is_finite() && v < 10.0);
    }
}
