//! Riemann–Liouville fractional integrals and derivatives on `[0, 1]`.
//!
//! Integrals use product integration against piecewise-linear interpolants.
//! Derivatives use the Weyl (boundary term plus difference quotient) form,
//! with the last cell before the evaluation point integrated in closed form.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grid::{finite_diff_derivative, Path, TimeGrid};
use crate::operator::OperatorMatrix;
use crate::quad::{left_kernel_matrix, mirror, right_kernel_matrix, JacobiRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// Base point 0.
    Left,
    /// Base point 1.
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FracKind {
    Integral,
    Derivative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FracOrder {
    alpha: f64,
    side: Side,
    kind: FracKind,
}

impl FracOrder {
    pub fn new(alpha: f64, side: Side, kind: FracKind) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!("fractional order {alpha} outside (0, 1)")));
        }
        Ok(Self { alpha, side, kind })
    }

    pub fn integral(alpha: f64, side: Side) -> Result<Self> {
        Self::new(alpha, side, FracKind::Integral)
    }

    pub fn derivative(alpha: f64, side: Side) -> Result<Self> {
        Self::new(alpha, side, FracKind::Derivative)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn kind(&self) -> FracKind {
        self.kind
    }

    /// Dense matrix of this operator on `grid`.
    pub fn matrix(&self, grid: TimeGrid) -> OperatorMatrix {
        match self.kind {
            FracKind::Integral => integral_matrix(grid, self.alpha, self.side),
            FracKind::Derivative => derivative_matrix(grid, self.alpha, self.side),
        }
    }
}

/// A path together with the nodes at which the exact value is infinite.
///
/// Flagged nodes hold a finite placeholder.
#[derive(Debug, Clone, PartialEq)]
pub struct FlaggedPath {
    pub path: Path,
    pub infinite: Vec<usize>,
}

impl FlaggedPath {
    pub fn is_flagged(&self, node: usize) -> bool {
        self.infinite.contains(&node)
    }
}

pub fn integral_matrix(grid: TimeGrid, alpha: f64, side: Side) -> OperatorMatrix {
    let norm = 1.0 / gamma(alpha);
    let m = match side {
        Side::Left => left_kernel_matrix(grid, alpha, 0.0) * norm,
        Side::Right => mirror(&left_kernel_matrix(grid, alpha, 0.0)) * norm,
    };
    OperatorMatrix::new(grid, 1, m).expect("square")
}

pub fn derivative_matrix(grid: TimeGrid, alpha: f64, side: Side) -> OperatorMatrix {
    derivative_matrix_with_modes(grid, alpha, side, &[0.0, 1.0, alpha, 1.0 + alpha])
}

/// Weyl derivative whose first columns are corrected so the rule is exact on
/// the powers `x^e` (distance from the base point) for each `e` in `exponents`.
pub fn derivative_matrix_with_modes(grid: TimeGrid, alpha: f64, side: Side, exponents: &[f64]) -> OperatorMatrix {
    let m = match side {
        Side::Left => weyl_left(grid, alpha, exponents),
        Side::Right => mirror(&weyl_left(grid, alpha, exponents)),
    };
    OperatorMatrix::new(grid, 1, m).expect("square")
}

fn weyl_left(grid: TimeGrid, alpha: f64, exponents: &[f64]) -> DMatrix<f64> {
    let n = grid.n_steps();
    let t = grid.nodes();
    let h = grid.step();
    let rule = JacobiRule::legendre();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    let last_cell = alpha * h.powf(-alpha) / (1.0 - alpha);
    for i in 1..=n {
        let x = t[i];
        m[(i, i)] += x.powf(-alpha);
        for k in 0..i - 1 {
            let (l, r) = rule.hat_moments(t[k], t[k + 1], |y| (x - y).powf(-alpha - 1.0));
            m[(i, i)] += alpha * (l + r);
            m[(i, k)] -= alpha * l;
            m[(i, k + 1)] -= alpha * r;
        }
        m[(i, i)] += last_cell;
        m[(i, i - 1)] -= last_cell;
    }
    let mut m = m / gamma(1.0 - alpha);
    if !exponents.is_empty() && exponents.len() < n {
        starting_weights(&mut m, &t, alpha, exponents);
    }
    // The boundary term diverges at the base point; extrapolate linearly.
    for j in 0..=n {
        m[(0, j)] = 2.0 * m[(1, j)] - m[(2, j)];
    }
    m
}

/// Exact Riemann-Liouville derivative of `x^e` is `Γ(e+1)/Γ(e+1-α) x^{e-α}`.
fn starting_weights(m: &mut DMatrix<f64>, t: &[f64], alpha: f64, exponents: &[f64]) {
    let k = exponents.len();
    let coef: Vec<f64> = exponents
        .iter()
        .map(|e| gamma(e + 1.0) / gamma(e + 1.0 - alpha))
        .collect();
    let mode = |x: f64, e: f64| if e == 0.0 { 1.0 } else { x.powf(e) };
    let a = DMatrix::from_fn(k, k, |r, c| mode(t[r], exponents[c]));
    let a_inv = a.try_inverse().expect("distinct exponents");
    let len = t.len();
    let phi = DMatrix::from_fn(len, k, |i, c| mode(t[i], exponents[c]));
    let applied = &*m * &phi;
    let resid = DMatrix::from_fn(len, k, |i, c| {
        if i == 0 {
            0.0
        } else {
            coef[c] * t[i].powf(exponents[c] - alpha) - applied[(i, c)]
        }
    });
    let corr = resid * a_inv;
    for i in 0..len {
        for c in 0..k {
            m[(i, c)] += corr[(i, c)];
        }
    }
}

fn require_scalar(f: &Path) -> Result<()> {
    if f.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: f.dim(),
        });
    }
    Ok(())
}

pub fn frac_integral(order: FracOrder, f: &Path) -> Result<Path> {
    require_scalar(f)?;
    if order.kind != FracKind::Integral {
        return Err(Error::Domain("expected an integral order".into()));
    }
    integral_matrix(f.grid(), order.alpha, order.side).apply(f)
}

/// Weyl-form derivative. The base-point node is flagged infinite unless `f`
/// vanishes there.
pub fn frac_derivative(order: FracOrder, f: &Path) -> Result<FlaggedPath> {
    require_scalar(f)?;
    if order.kind != FracKind::Derivative {
        return Err(Error::Domain("expected a derivative order".into()));
    }
    let path = derivative_matrix(f.grid(), order.alpha, order.side).apply(f)?;
    let base = match order.side {
        Side::Left => 0,
        Side::Right => f.len() - 1,
    };
    let scale = f.values().iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let infinite = if f.values()[base].abs() > 1e-12 * scale {
        vec![base]
    } else {
        Vec::new()
    };
    Ok(FlaggedPath { path, infinite })
}

/// `D^α I^α f` on the given side; should reproduce `f`.
pub fn compose_di_check(alpha: f64, side: Side, f: &Path) -> Result<Path> {
    let i = frac_integral(FracOrder::integral(alpha, side)?, f)?;
    Ok(frac_derivative(FracOrder::derivative(alpha, side)?, &i)?.path)
}

/// Derivative computed as `±d/dx I^{1-α}` with finite differences; an
/// independent cross-check of the Weyl form.
pub fn derivative_via_integral(order: FracOrder, f: &Path) -> Result<Path> {
    let complement = FracOrder::integral(1.0 - order.alpha, order.side)?;
    let d = finite_diff_derivative(&frac_integral(complement, f)?)?;
    match order.side {
        Side::Left => Ok(d),
        Side::Right => Path::scalar(d.grid(), d.values().iter().map(|v| -v).collect()),
    }
}

/// `t^β · I^α_side (t^γ · f)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedFracOp {
    pub beta: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedOutput {
    pub path: Path,
    /// Set when the exponents fall outside the range where the operator is
    /// known to be bounded on `L²`.
    pub warning: Option<String>,
}

impl WeightedFracOp {
    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::Domain(format!("order {} must be positive", self.alpha)));
        }
        let origin_exponent = match self.side {
            Side::Left => self.gamma,
            Side::Right => self.alpha - 1.0 + self.gamma,
        };
        if origin_exponent <= -1.0 {
            return Err(Error::Domain(format!(
                "inner weight exponent {} is not integrable at 0",
                self.gamma
            )));
        }
        Ok(())
    }

    /// Violations of the `L²` boundedness conditions, if any.
    pub fn constraint_warning(&self) -> Option<String> {
        let p = 2.0;
        let mut issues = Vec::new();
        match self.side {
            Side::Left if (self.gamma + 1.0) * p <= 1.0 => {
                issues.push(format!("(gamma+1)p = {} <= 1", (self.gamma + 1.0) * p))
            }
            Side::Right if (self.alpha + self.gamma) * p >= 1.0 => {
                issues.push(format!("(alpha+gamma)p = {} >= 1", (self.alpha + self.gamma) * p))
            }
            _ => {}
        }
        let sum = self.alpha + self.beta + self.gamma;
        if sum.abs() > 1e-12 {
            issues.push(format!("alpha+beta+gamma = {sum} != 0"));
        }
        (!issues.is_empty()).then(|| issues.join("; "))
    }

    pub fn matrix(&self, grid: TimeGrid) -> Result<OperatorMatrix> {
        self.validate()?;
        let t = grid.nodes();
        let kernel = match self.side {
            Side::Left => left_kernel_matrix(grid, self.alpha, self.gamma),
            Side::Right => right_kernel_matrix(grid, self.alpha, self.gamma),
        };
        let norm = 1.0 / gamma(self.alpha);
        let mut m = DMatrix::from_fn(kernel.nrows(), kernel.ncols(), |i, j| {
            let outer = if i == 0 && self.beta < 0.0 { 0.0 } else { t[i].powf(self.beta) };
            outer * kernel[(i, j)] * norm
        });
        if self.beta < 0.0 {
            for j in 0..m.ncols() {
                m[(0, j)] = 2.0 * m[(1, j)] - m[(2, j)];
            }
        }
        OperatorMatrix::new(grid, 1, m)
    }
}

pub fn weighted_frac_apply(op: WeightedFracOp, f: &Path) -> Result<WeightedOutput> {
    require_scalar(f)?;
    let path = op.matrix(f.grid())?.apply(f)?;
    Ok(WeightedOutput {
        path,
        warning: op.constraint_warning(),
    })
}
