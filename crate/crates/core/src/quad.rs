//! Gauss–Jacobi product integration for weakly singular kernels.
//!
//! Every singular operator in the crate is discretized the same way: the
//! input is interpolated piecewise-linearly between grid nodes and the
//! kernel is integrated exactly (to Gauss–Jacobi precision) against each
//! hat function, cell by cell. Endpoint singularities of the form
//! `(b - y)^A (y - a)^B` are absorbed into the Jacobi weight of the cell
//! that touches them.

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::ln_gamma;

use crate::grid::TimeGrid;

/// Nodes per cell.
pub const NODES_PER_CELL: usize = 12;

/// Gauss–Jacobi rule for the weight `(1 - u)^a (1 + u)^b` on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct JacobiRule {
    a: f64,
    b: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl JacobiRule {
    /// Golub–Welsch construction. Requires `a, b > -1`.
    pub fn new(a: f64, b: f64) -> Self {
        assert!(a > -1.0 && b > -1.0, "Jacobi exponents must exceed -1");
        let n = NODES_PER_CELL;
        let ab = a + b;
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let fi = i as f64;
            let den = (2.0 * fi + ab) * (2.0 * fi + ab + 2.0);
            jac[(i, i)] = if den.abs() > 1e-300 {
                (b * b - a * a) / den
            } else {
                (b - a) / (ab + 2.0)
            };
        }
        for i in 1..n {
            let fi = i as f64;
            let off = if i == 1 {
                (4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab).powi(2) * (3.0 + ab))).sqrt()
            } else {
                let num = 4.0 * fi * (fi + a) * (fi + b) * (fi + ab);
                let den = (2.0 * fi + ab).powi(2) * (2.0 * fi + ab + 1.0) * (2.0 * fi + ab - 1.0);
                (num / den).sqrt()
            };
            jac[(i, i - 1)] = off;
            jac[(i - 1, i)] = off;
        }
        let mu0 = ((ab + 1.0) * std::f64::consts::LN_2 + ln_gamma(a + 1.0) + ln_gamma(b + 1.0)
            - ln_gamma(ab + 2.0))
        .exp();
        let eig = SymmetricEigen::new(jac);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|k| (eig.eigenvalues[k], mu0 * eig.eigenvectors[(0, k)].powi(2)))
            .collect();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        Self {
            a,
            b,
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    pub fn legendre() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn exponents(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// `∫_lo^hi (hi - y)^a (y - lo)^b F(y) dy`.
    pub fn integrate(&self, lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        let half = 0.5 * (hi - lo);
        let scale = half.powf(self.a + self.b + 1.0);
        let s: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(u, w)| w * f(lo + half * (u + 1.0)))
            .sum();
        scale * s
    }

    /// Physical nodes and weights on `[lo, hi]`, weight function included.
    pub fn scaled_nodes(&self, lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (hi - lo);
        let scale = half.powf(self.a + self.b + 1.0);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(u, w)| (lo + half * (u + 1.0), scale * w))
    }

    /// Moments of the weighted integrand against the two hat functions
    /// supported on `[lo, hi]`: `(falling hat, rising hat)`.
    pub fn hat_moments(&self, lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
        let half = 0.5 * (hi - lo);
        let scale = half.powf(self.a + self.b + 1.0);
        let (mut left, mut right) = (0.0, 0.0);
        for (u, w) in self.nodes.iter().zip(&self.weights) {
            let r = 0.5 * (u + 1.0);
            let v = w * f(lo + half * (u + 1.0));
            left += v * (1.0 - r);
            right += v * r;
        }
        (scale * left, scale * right)
    }
}

/// Rows `x_i ↦ ∫_0^{x_i} (x_i - y)^{α-1} y^γ f(y) dy` for piecewise-linear `f`.
///
/// No `1/Γ(α)` normalization. Row 0 is zero.
pub fn left_kernel_matrix(grid: TimeGrid, alpha: f64, gamma: f64) -> DMatrix<f64> {
    let n = grid.n_steps();
    let t = grid.nodes();
    let plain = JacobiRule::legendre();
    let near = JacobiRule::new(alpha - 1.0, 0.0);
    let origin = JacobiRule::new(0.0, gamma);
    let both = JacobiRule::new(alpha - 1.0, gamma);
    let mut m = DMatrix::zeros(n + 1, n + 1);
    for i in 1..=n {
        let x = t[i];
        for k in 0..i {
            let (lo, hi) = (t[k], t[k + 1]);
            let touches_x = k + 1 == i;
            let touches_origin = k == 0 && gamma != 0.0;
            let (l, r) = match (touches_x, touches_origin) {
                (true, true) => both.hat_moments(lo, hi, |_| 1.0),
                (true, false) => near.hat_moments(lo, hi, |y| y.powf(gamma)),
                (false, true) => origin.hat_moments(lo, hi, |y| (x - y).powf(alpha - 1.0)),
                (false, false) => {
                    plain.hat_moments(lo, hi, |y| (x - y).powf(alpha - 1.0) * y.powf(gamma))
                }
            };
            m[(i, k)] += l;
            m[(i, k + 1)] += r;
        }
    }
    m
}

/// Rows `x_i ↦ ∫_{x_i}^1 (y - x_i)^{α-1} y^γ f(y) dy` for piecewise-linear `f`.
///
/// No `1/Γ(α)` normalization. Row N is zero.
pub fn right_kernel_matrix(grid: TimeGrid, alpha: f64, gamma: f64) -> DMatrix<f64> {
    let n = grid.n_steps();
    let t = grid.nodes();
    let plain = JacobiRule::legendre();
    let near = JacobiRule::new(0.0, alpha - 1.0);
    let origin = JacobiRule::new(0.0, gamma);
    let both = JacobiRule::new(0.0, alpha - 1.0 + gamma);
    let mut m = DMatrix::zeros(n + 1, n + 1);
    for i in 0..n {
        let x = t[i];
        for k in i..n {
            let (lo, hi) = (t[k], t[k + 1]);
            let touches_x = k == i;
            let touches_origin = k == 0 && gamma != 0.0;
            let (l, r) = match (touches_x, touches_origin) {
                (true, true) => both.hat_moments(lo, hi, |_| 1.0),
                (true, false) => near.hat_moments(lo, hi, |y| y.powf(gamma)),
                (false, true) => origin.hat_moments(lo, hi, |y| (y - x).powf(alpha - 1.0)),
                (false, false) => {
                    plain.hat_moments(lo, hi, |y| (y - x).powf(alpha - 1.0) * y.powf(gamma))
                }
            };
            m[(i, k)] += l;
            m[(i, k + 1)] += r;
        }
    }
    m
}

/// Reversal permutation `J` applied on both sides: `J M J`.
pub fn mirror(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(n, n, |i, j| m[(n - 1 - i, n - 1 - j)])
}
