//! Slow-fast model specifications and their analytic companions.
//!
//! A [`ModelSpec`] bundles the coefficients `g, f, c, σ` of
//!
//! ```text
//! dX = g(X, Y) dt + √ε f(X, Y) dW^H
//! dY = ε⁻¹ c(Y) dt + ε^{-1/2} σ(Y) dB
//! ```
//!
//! with closed-form companions: the invariant measure `μ` of the fast
//! process, the averaged drift `ḡ` and its Jacobian, the averaged diffusion
//! `f̄`, and `∇_yφ σ` where `φ` solves the cell problem `Lφ = g - ḡ`.
//! [`verify_companions`] recomputes each of them numerically.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::quad::JacobiRule;

pub type SlowFn = Arc<dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync>;
pub type AveragedFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type FastFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Truncation level for real-line measures: mass beyond the upper quantile.
pub const TAIL_MASS: f64 = 1e-12;
const GAMMA_PANELS: usize = 240;
const TORUS_NODES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum YDomain {
    RealLine,
    UnitTorus,
}

/// Built-in periodic potentials on the unit torus.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    Zero,
    /// `cos 2πy`
    Cos,
    /// `cos 4πy`, two wells per period
    DoubleWell,
    /// `Σ_k a_k cos 2πky + b_k sin 2πky`, `k ≥ 1`
    Fourier { cos: Vec<f64>, sin: Vec<f64> },
}

impl Potential {
    fn modes(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Potential::Zero => (vec![], vec![]),
            Potential::Cos => (vec![1.0], vec![]),
            Potential::DoubleWell => (vec![0.0, 1.0], vec![]),
            Potential::Fourier { cos, sin } => (cos.clone(), sin.clone()),
        }
    }

    /// `order`-th derivative at `y`.
    pub fn derivative(&self, order: u32, y: f64) -> f64 {
        let (a, b) = self.modes();
        let mut acc = 0.0;
        for (k, ak) in a.iter().enumerate() {
            let w = 2.0 * PI * (k + 1) as f64;
            acc += ak * w.powi(order as i32) * (w * y + order as f64 * PI / 2.0).cos();
        }
        for (k, bk) in b.iter().enumerate() {
            let w = 2.0 * PI * (k + 1) as f64;
            acc += bk * w.powi(order as i32) * (w * y + order as f64 * PI / 2.0).sin();
        }
        acc
    }

    pub fn value(&self, y: f64) -> f64 {
        self.derivative(0, y)
    }
}

/// `V(x) = Σ_k c_k x^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    /// `x²/2`
    pub fn quadratic() -> Self {
        Self::new(vec![0.0, 0.0, 0.5])
    }

    pub fn derivative(&self, order: usize, x: f64) -> f64 {
        let mut acc = 0.0;
        for (k, c) in self.coeffs.iter().enumerate().skip(order) {
            let falling: f64 = ((k - order + 1)..=k).map(|j| j as f64).product();
            acc += c * falling * x.powi((k - order) as i32);
        }
        acc
    }
}

/// Gibbs measure `e^{-Q/D}/Z` on the unit torus.
#[derive(Debug, Clone)]
pub struct GibbsMeasure {
    potential: Potential,
    diffusion: f64,
    z: f64,
    cdf: Arc<Vec<f64>>,
}

impl GibbsMeasure {
    pub fn new(potential: Potential, diffusion: f64) -> Result<Self> {
        if !(diffusion > 0.0) {
            return Err(Error::Model(format!("diffusion constant {diffusion} must be positive")));
        }
        let m = TORUS_NODES;
        let raw: Vec<f64> = (0..=m)
            .map(|j| (-potential.value(j as f64 / m as f64) / diffusion).exp())
            .collect();
        // periodic trapezoid
        let z = raw[..m].iter().sum::<f64>() / m as f64;
        let mut cdf = Vec::with_capacity(m + 1);
        let mut acc = 0.0;
        cdf.push(0.0);
        for j in 0..m {
            acc += 0.5 * (raw[j] + raw[j + 1]) / m as f64;
            cdf.push(acc);
        }
        let total = acc;
        cdf.iter_mut().for_each(|c| *c /= total);
        Ok(Self {
            potential,
            diffusion,
            z,
            cdf: Arc::new(cdf),
        })
    }

    pub fn partition(&self) -> f64 {
        self.z
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn diffusion(&self) -> f64 {
        self.diffusion
    }
}

#[derive(Debug, Clone)]
pub enum InvariantMeasure {
    /// Shape-rate parametrization on `(0, ∞)`.
    Gamma { shape: f64, rate: f64 },
    Gibbs(GibbsMeasure),
    /// No fast dynamics: the fast variable sits at a point.
    Dirac(f64),
}

impl InvariantMeasure {
    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        if !(shape >= 1.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
            return Err(Error::Model(format!(
                "Gamma(shape {shape}, rate {rate}) needs shape >= 1 and rate > 0"
            )));
        }
        Ok(Self::Gamma { shape, rate })
    }

    pub fn density(&self, y: f64) -> f64 {
        match self {
            Self::Gamma { shape, rate } => {
                if y <= 0.0 {
                    return if *shape == 1.0 && y == 0.0 { *rate } else { 0.0 };
                }
                (shape * rate.ln() - ln_gamma(*shape) + (shape - 1.0) * y.ln() - rate * y).exp()
            }
            Self::Gibbs(g) => {
                let y = y.rem_euclid(1.0);
                (-g.potential.value(y) / g.diffusion).exp() / g.z
            }
            Self::Dirac(_) => 0.0,
        }
    }

    pub fn is_dirac(&self) -> bool {
        matches!(self, Self::Dirac(_))
    }

    /// Interval carrying the quadrature, `[0, q_{1-ε}]` for Gamma.
    pub fn truncation(&self) -> Option<(f64, f64)> {
        match self {
            Self::Gamma { shape, rate } => Some((0.0, gamma_quantile(*shape, *rate, 1.0 - TAIL_MASS))),
            _ => None,
        }
    }

    /// Quadrature nodes and weights (weights include the density).
    pub fn quadrature_nodes(&self) -> Vec<(f64, f64)> {
        match self {
            Self::Gamma { shape, rate } => {
                let hi = gamma_quantile(*shape, *rate, 1.0 - TAIL_MASS);
                gamma_panels(*shape, *rate, 0.0, hi, GAMMA_PANELS)
            }
            Self::Gibbs(_) => {
                let m = TORUS_NODES;
                (0..m)
                    .map(|j| {
                        let y = j as f64 / m as f64;
                        (y, self.density(y) / m as f64)
                    })
                    .collect()
            }
            Self::Dirac(y) => vec![(*y, 1.0)],
        }
    }

    pub fn expectation(&self, h: impl Fn(f64) -> f64) -> f64 {
        self.quadrature_nodes().iter().map(|(y, w)| w * h(*y)).sum()
    }

    pub fn normalization(&self) -> f64 {
        self.expectation(|_| 1.0)
    }

    /// `(∫y dμ, ∫y² dμ)`; closed form for Gamma and Dirac.
    pub fn moments(&self) -> (f64, f64) {
        match self {
            Self::Gamma { shape, rate } => (shape / rate, shape * (shape + 1.0) / (rate * rate)),
            Self::Dirac(y) => (*y, y * y),
            Self::Gibbs(_) => (self.expectation(|y| y), self.expectation(|y| y * y)),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Gamma { shape, rate } => rand_distr::Gamma::new(*shape, 1.0 / rate)
                .expect("validated parameters")
                .sample(rng),
            Self::Gibbs(g) => {
                let u: f64 = rng.random();
                let cdf = &g.cdf;
                let j = cdf.partition_point(|c| *c < u).clamp(1, cdf.len() - 1);
                let (c0, c1) = (cdf[j - 1], cdf[j]);
                let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
                ((j - 1) as f64 + frac) / (cdf.len() - 1) as f64
            }
            Self::Dirac(y) => *y,
        }
    }
}

fn gamma_quantile(shape: f64, rate: f64, p: f64) -> f64 {
    // bisection on the regularized incomplete gamma; the upper tail is used
    // directly so that p close to 1 keeps its precision
    let tail = 1.0 - p;
    let mut hi = (shape + 1.0) / rate;
    while gamma_ur(shape, rate * hi) > tail.min(0.5) && hi < 1e12 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let below = if tail < 0.5 {
            gamma_ur(shape, rate * mid) > tail
        } else {
            gamma_lr(shape, rate * mid) < p
        };
        if below {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Panel quadrature of the Gamma density on `[lo, hi]`. The panel touching
/// zero absorbs `y^{shape-1}` into a Jacobi weight.
fn gamma_panels(shape: f64, rate: f64, lo: f64, hi: f64, panels: usize) -> Vec<(f64, f64)> {
    let legendre = JacobiRule::legendre();
    let origin = JacobiRule::new(0.0, shape - 1.0);
    let log_norm = shape * rate.ln() - ln_gamma(shape);
    let width = (hi - lo) / panels as f64;
    let mut out = Vec::with_capacity(panels * crate::quad::NODES_PER_CELL);
    for k in 0..panels {
        let (a, b) = (lo + k as f64 * width, lo + (k + 1) as f64 * width);
        if a == 0.0 && shape != 1.0 {
            collect_nodes(&origin, a, b, &mut out, |y| (log_norm - rate * y).exp());
        } else {
            collect_nodes(&legendre, a, b, &mut out, |y| {
                (log_norm + (shape - 1.0) * y.ln() - rate * y).exp()
            });
        }
    }
    out
}

fn collect_nodes(
    rule: &JacobiRule,
    a: f64,
    b: f64,
    out: &mut Vec<(f64, f64)>,
    weight: impl Fn(f64) -> f64,
) {
    out.extend(rule.scaled_nodes(a, b).map(|(y, w)| (y, w * weight(y))));
}

/// Slow-fast model with analytic companions. `d = m = 1` for every built-in.
#[derive(Clone)]
pub struct ModelSpec {
    pub name: String,
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub p: usize,
    /// Slow drift, `n` entries.
    pub g: SlowFn,
    /// Slow diffusion against `W^H`, `n × p` row-major.
    pub f: SlowFn,
    pub c: FastFn,
    pub sigma: FastFn,
    pub mu: InvariantMeasure,
    pub g_bar: AveragedFn,
    /// `n × n` row-major.
    pub grad_g_bar: AveragedFn,
    /// `n × p` row-major.
    pub f_bar: AveragedFn,
    /// `∇_yφ σ`, `n × m` row-major.
    pub phi_grad_y_sigma: SlowFn,
    pub y_domain: YDomain,
    /// `g` does not depend on the fast variable.
    pub slow_drift_only: bool,
    /// Fast variable is kept nonnegative by the simulator.
    pub nonnegative_fast: bool,
    pub x0: Vec<f64>,
    pub y0: f64,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("p", &self.p)
            .field("mu", &self.mu)
            .field("y_domain", &self.y_domain)
            .field("x0", &self.x0)
            .field("y0", &self.y0)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    pub fn with_x0(mut self, x0: Vec<f64>) -> Result<Self> {
        if x0.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x0.len(),
            });
        }
        self.x0 = x0;
        Ok(self)
    }

    pub fn with_y0(mut self, y0: f64) -> Self {
        self.y0 = y0;
        self
    }

    pub fn has_fast_process(&self) -> bool {
        !self.mu.is_dirac()
    }

    /// Generator of the fast process applied to `ψ` given `ψ'` and `ψ''`.
    pub fn generator(&self, y: f64, d1: f64, d2: f64) -> f64 {
        let s = (self.sigma)(y);
        (self.c)(y) * d1 + 0.5 * s * s * d2
    }

    /// `∫ f fᵀ dμ`, `n × n` row-major.
    pub fn f_second_moment(&self, x: &[f64]) -> Vec<f64> {
        let (n, p) = (self.n, self.p);
        let mut out = vec![0.0; n * n];
        for (y, w) in self.mu.quadrature_nodes() {
            let f = (self.f)(x, y);
            for a in 0..n {
                for b in 0..n {
                    out[a * n + b] += w * (0..p).map(|c| f[a * p + c] * f[b * p + c]).sum::<f64>();
                }
            }
        }
        out
    }

    /// `∫ (f - f̄)(f - f̄)ᵀ dμ`, `n × n` row-major.
    pub fn f_covariance(&self, x: &[f64]) -> Vec<f64> {
        let (n, p) = (self.n, self.p);
        let fbar = (self.f_bar)(x);
        let mut out = vec![0.0; n * n];
        for (y, w) in self.mu.quadrature_nodes() {
            let f: Vec<f64> = (self.f)(x, y).iter().zip(&fbar).map(|(a, b)| a - b).collect();
            for a in 0..n {
                for b in 0..n {
                    out[a * n + b] += w * (0..p).map(|c| f[a * p + c] * f[b * p + c]).sum::<f64>();
                }
            }
        }
        out
    }

    /// `∫ (∇_yφσ)(∇_yφσ)ᵀ dμ`, `n × n` row-major.
    pub fn poisson_covariance(&self, x: &[f64]) -> Vec<f64> {
        let (n, m) = (self.n, self.m);
        let mut out = vec![0.0; n * n];
        if !self.has_fast_process() {
            return out;
        }
        for (y, w) in self.mu.quadrature_nodes() {
            let v = (self.phi_grad_y_sigma)(x, y);
            for a in 0..n {
                for b in 0..n {
                    out[a * n + b] += w * (0..m).map(|c| v[a * m + c] * v[b * m + c]).sum::<f64>();
                }
            }
        }
        out
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Model(format!("{name} = {v} must be positive")));
    }
    Ok(())
}

fn cir_fast(beta: f64, theta: f64, v: f64) -> Result<(FastFn, FastFn, InvariantMeasure)> {
    check_positive("beta", beta)?;
    check_positive("theta", theta)?;
    check_positive("v", v)?;
    if 2.0 * beta * theta < v * v {
        return Err(Error::Model(format!(
            "2*beta*theta = {} is below v^2 = {}",
            2.0 * beta * theta,
            v * v
        )));
    }
    let mu = InvariantMeasure::gamma(2.0 * beta * theta / (v * v), 2.0 * beta / (v * v))?;
    Ok((
        Arc::new(move |y| beta * (theta - y)),
        Arc::new(move |y| v * y.max(0.0).sqrt()),
        mu,
    ))
}

/// Fractional CIR volatility model: `g = y`, `f = τ`, CIR fast variable.
///
/// The cell problem `β(θ-y)φ' + ½v²yφ'' = y - θ` is solved by `φ' = -1/β`.
pub fn cir_model(tau: f64, beta: f64, theta: f64, v: f64) -> Result<ModelSpec> {
    check_positive("tau", tau)?;
    let (c, sigma, mu) = cir_fast(beta, theta, v)?;
    Ok(ModelSpec {
        name: "cir".into(),
        n: 1,
        d: 1,
        m: 1,
        p: 1,
        g: Arc::new(|_, y| vec![y]),
        f: Arc::new(move |_, _| vec![tau]),
        c,
        sigma,
        mu,
        g_bar: Arc::new(move |_| vec![theta]),
        grad_g_bar: Arc::new(|_| vec![0.0]),
        f_bar: Arc::new(move |_| vec![tau]),
        phi_grad_y_sigma: Arc::new(move |_, y| vec![-v * y.max(0.0).sqrt() / beta]),
        y_domain: YDomain::RealLine,
        slow_drift_only: false,
        nonnegative_fast: true,
        x0: vec![0.0],
        y0: theta,
    })
}

/// CIR fast dynamics with the fast variable itself as the diffusion
/// coefficient, `f(x, y) = y`.
pub fn cir_probe_model(beta: f64, theta: f64, v: f64) -> Result<ModelSpec> {
    let mut m = cir_model(1.0, beta, theta, v)?;
    m.name = "cir-probe".into();
    m.f = Arc::new(|_, y| vec![y]);
    m.f_bar = Arc::new(move |_| vec![theta]);
    Ok(m)
}

/// Langevin dynamics on the torus with potential `Q` and slow confinement `V`.
pub fn langevin_model(q: Potential, v: Polynomial, diffusion: f64) -> Result<ModelSpec> {
    let gibbs = GibbsMeasure::new(q.clone(), diffusion)?;
    let s = (2.0 * diffusion).sqrt();
    let m_const = langevin_periodic_constant(&gibbs);
    let q1 = q.clone();
    let q2 = q.clone();
    let q3 = q.clone();
    let (v1, v2) = (v.clone(), v.clone());
    let v3 = v.clone();
    Ok(ModelSpec {
        name: "langevin".into(),
        n: 1,
        d: 1,
        m: 1,
        p: 1,
        g: Arc::new(move |x, y| vec![-q1.derivative(1, y) - v1.derivative(1, x[0])]),
        f: Arc::new(move |_, _| vec![s]),
        c: Arc::new(move |y| -q2.derivative(1, y)),
        sigma: Arc::new(move |_| s),
        mu: InvariantMeasure::Gibbs(gibbs),
        g_bar: Arc::new(move |x| vec![-v2.derivative(1, x[0])]),
        grad_g_bar: Arc::new(move |x| vec![-v3.derivative(2, x[0])]),
        f_bar: Arc::new(move |_| vec![s]),
        phi_grad_y_sigma: Arc::new(move |_, y| {
            vec![s * (1.0 + m_const * (q3.value(y) / diffusion).exp())]
        }),
        y_domain: YDomain::UnitTorus,
        slow_drift_only: false,
        nonnegative_fast: false,
        x0: vec![0.0],
        y0: 0.0,
    })
}

/// `M = -1/∫_0^1 e^{Q/D}`: makes `φ' = 1 + M e^{Q/D}` integrate to zero
/// over one period.
pub fn langevin_periodic_constant(gibbs: &GibbsMeasure) -> f64 {
    let m = TORUS_NODES;
    let s: f64 = (0..m)
        .map(|j| (gibbs.potential.value(j as f64 / m as f64) / gibbs.diffusion).exp())
        .sum::<f64>()
        / m as f64;
    -1.0 / s
}

/// The constant obtained by centering `φ(y) = y + M∫_0^y e^{Q/D}` under the
/// Gibbs measure instead of imposing periodicity. Coincides with
/// [`langevin_periodic_constant`] when `Q` is symmetric about `1/2`.
pub fn langevin_centering_constant(gibbs: &GibbsMeasure) -> f64 {
    let m = TORUS_NODES;
    let (q, d) = (&gibbs.potential, gibbs.diffusion);
    let h = 1.0 / m as f64;
    let mut inner = 0.0;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut prev = (q.value(0.0) / d).exp();
    for j in 0..m {
        let y = j as f64 * h;
        let wy = (-q.value(y) / d).exp();
        num += wy * y * h;
        den += wy * inner * h;
        let next = (q.value(y + h) / d).exp();
        inner += 0.5 * (prev + next) * h;
        prev = next;
    }
    -num / den
}

/// No fast variable: `dX = √ε τ dW^H`.
pub fn pure_noise_model(tau: f64) -> Result<ModelSpec> {
    check_positive("tau", tau)?;
    Ok(ModelSpec {
        name: "pure-noise".into(),
        n: 1,
        d: 1,
        m: 1,
        p: 1,
        g: Arc::new(|_, _| vec![0.0]),
        f: Arc::new(move |_, _| vec![tau]),
        c: Arc::new(|_| 0.0),
        sigma: Arc::new(|_| 0.0),
        mu: InvariantMeasure::Dirac(0.0),
        g_bar: Arc::new(|_| vec![0.0]),
        grad_g_bar: Arc::new(|_| vec![0.0]),
        f_bar: Arc::new(move |_| vec![tau]),
        phi_grad_y_sigma: Arc::new(|_, _| vec![0.0]),
        y_domain: YDomain::RealLine,
        slow_drift_only: true,
        nonnegative_fast: false,
        x0: vec![0.0],
        y0: 0.0,
    })
}

/// Slow drift `g(x) = Σ c_k x^k` independent of the fast variable, constant
/// `f = τ` (zero allowed), unit CIR fast dynamics.
pub fn slow_drift_model(drift: Polynomial, tau: f64) -> Result<ModelSpec> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::Model(format!("tau = {tau} must be nonnegative")));
    }
    let (c, sigma, mu) = cir_fast(1.0, 1.0, 1.0)?;
    let (d1, d2, d3) = (drift.clone(), drift.clone(), drift);
    Ok(ModelSpec {
        name: "slow-drift".into(),
        n: 1,
        d: 1,
        m: 1,
        p: 1,
        g: Arc::new(move |x, _| vec![d1.derivative(0, x[0])]),
        f: Arc::new(move |_, _| vec![tau]),
        c,
        sigma,
        mu,
        g_bar: Arc::new(move |x| vec![d2.derivative(0, x[0])]),
        grad_g_bar: Arc::new(move |x| vec![d3.derivative(1, x[0])]),
        f_bar: Arc::new(move |_| vec![tau]),
        phi_grad_y_sigma: Arc::new(|_, _| vec![0.0]),
        y_domain: YDomain::RealLine,
        slow_drift_only: true,
        nonnegative_fast: true,
        x0: vec![0.0],
        y0: 1.0,
    })
}

/// Numerical solution of one scalar cell problem on a dense `y` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSolution {
    pub y: Vec<f64>,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    /// `∫ φ dμ` after centering.
    pub mean: f64,
}

pub const POISSON_TORUS_NODES: usize = 2048;

/// Solves `Lφ = g(x, ·) - ḡ(x)` for every slow component, `∫φ dμ = 0`.
pub fn poisson_solve_1d(model: &ModelSpec, x_probe: &[f64]) -> Result<Vec<PoissonSolution>> {
    poisson_solve_1d_with(model, x_probe, POISSON_TORUS_NODES)
}

pub fn poisson_solve_1d_with(
    model: &ModelSpec,
    x_probe: &[f64],
    torus_nodes: usize,
) -> Result<Vec<PoissonSolution>> {
    if model.d != 1 {
        return Err(Error::UnsupportedDimension(model.d));
    }
    if x_probe.len() != model.n {
        return Err(Error::DimensionMismatch {
            expected: model.n,
            got: x_probe.len(),
        });
    }
    if !model.has_fast_process() {
        return Err(Error::Model("model has no fast process".into()));
    }
    let gbar = (model.g_bar)(x_probe);
    (0..model.n)
        .map(|k| {
            let rhs = |y: f64| (model.g)(x_probe, y)[k] - gbar[k];
            let residual = model.mu.expectation(rhs);
            let scale = model.mu.expectation(|y| rhs(y).abs()).max(1.0);
            if residual.abs() > 1e-6 * scale {
                return Err(Error::Centering { residual });
            }
            match model.y_domain {
                YDomain::UnitTorus => Ok(solve_torus(model, &rhs, torus_nodes)),
                YDomain::RealLine => solve_real_line(model, &rhs),
            }
        })
        .collect()
}

fn solve_torus(model: &ModelSpec, rhs: &dyn Fn(f64) -> f64, m: usize) -> PoissonSolution {
    let h = 1.0 / m as f64;
    let y: Vec<f64> = (0..m).map(|j| j as f64 * h).collect();
    // row j: lower * φ_{j-1} + diag * φ_j + upper * φ_{j+1}
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    for j in 0..m {
        let c = (model.c)(y[j]);
        let s = (model.sigma)(y[j]);
        let diff = 0.5 * s * s / (h * h);
        lower[j] = diff - c / (2.0 * h);
        upper[j] = diff + c / (2.0 * h);
        diag[j] = -2.0 * diff;
    }
    let b: Vec<f64> = y.iter().map(|v| rhs(*v)).collect();

    // Left null vector π with π_0 = 1. Column j of L touches rows j-1, j, j+1.
    let (mut sub, mut mid, mut sup, mut r) =
        (vec![0.0; m - 1], vec![0.0; m - 1], vec![0.0; m - 1], vec![0.0; m - 1]);
    for j in 1..m {
        let row = j - 1;
        let prev = j - 1;
        let next = (j + 1) % m;
        mid[row] = diag[j];
        if prev == 0 {
            r[row] -= upper[0];
        } else {
            sub[row] = upper[prev];
        }
        if next == 0 {
            r[row] -= lower[0];
        } else {
            sup[row] = lower[next];
        }
    }
    let mut pi = vec![1.0];
    pi.extend(thomas(&sub, &mid, &sup, &r));
    let pi_total: f64 = pi.iter().sum();
    let lambda = pi.iter().zip(&b).map(|(p, v)| p * v).sum::<f64>() / pi_total;

    // φ_0 = 0, drop row 0.
    let (mut sub, mut mid, mut sup, mut r) =
        (vec![0.0; m - 1], vec![0.0; m - 1], vec![0.0; m - 1], vec![0.0; m - 1]);
    for j in 1..m {
        let row = j - 1;
        mid[row] = diag[j];
        if j > 1 {
            sub[row] = lower[j];
        }
        if j + 1 < m {
            sup[row] = upper[j];
        }
        r[row] = b[j] - lambda;
    }
    let mut phi = vec![0.0];
    phi.extend(thomas(&sub, &mid, &sup, &r));

    let weights: Vec<f64> = y.iter().map(|v| model.mu.density(*v) * h).collect();
    let mass: f64 = weights.iter().sum();
    let shift = phi.iter().zip(&weights).map(|(p, w)| p * w).sum::<f64>() / mass;
    phi.iter_mut().for_each(|p| *p -= shift);
    let dphi = (0..m)
        .map(|j| (phi[(j + 1) % m] - phi[(j + m - 1) % m]) / (2.0 * h))
        .collect();
    let mean = phi.iter().zip(&weights).map(|(p, w)| p * w).sum::<f64>() / mass;
    PoissonSolution { y, phi, dphi, mean }
}

fn solve_real_line(model: &ModelSpec, rhs: &dyn Fn(f64) -> f64) -> Result<PoissonSolution> {
    let InvariantMeasure::Gamma { shape, rate } = model.mu else {
        return Err(Error::Model("real-line cell problems need a Gamma invariant measure".into()));
    };
    let lo = gamma_quantile(shape, rate, 1e-6);
    let hi = gamma_quantile(shape, rate, 1.0 - 1e-4);
    let top = gamma_quantile(shape, rate, 1.0 - TAIL_MASS);
    let median = gamma_quantile(shape, rate, 0.5);
    let panels = 400;
    let width = hi / panels as f64;
    // cumulative ∫_0^{b_k} p·rhs at panel boundaries b_k = k·width
    let mut cumulative = vec![0.0; panels + 1];
    for k in 0..panels {
        let nodes = gamma_panels(shape, rate, k as f64 * width, (k + 1) as f64 * width, 1);
        cumulative[k + 1] = cumulative[k] + nodes.iter().map(|(y, w)| w * rhs(*y)).sum::<f64>();
    }
    let upper_tail = gamma_panels(shape, rate, hi, top, GAMMA_PANELS)
        .iter()
        .map(|(y, w)| w * rhs(*y))
        .sum::<f64>();
    let mut ys = Vec::new();
    let mut dphi = Vec::new();
    for k in 1..panels {
        let y = k as f64 * width;
        if y < lo {
            continue;
        }
        let flux = if y < median {
            cumulative[k]
        } else {
            -((cumulative[panels] - cumulative[k]) + upper_tail)
        };
        let s = (model.sigma)(y);
        ys.push(y);
        dphi.push(2.0 * flux / (s * s * model.mu.density(y)));
    }
    // φ up to a constant by trapezoid, then centered under μ restricted to
    // the reported window
    let mut phi = vec![0.0; ys.len()];
    for i in 1..ys.len() {
        phi[i] = phi[i - 1] + 0.5 * (dphi[i] + dphi[i - 1]) * (ys[i] - ys[i - 1]);
    }
    let weights: Vec<f64> = ys.iter().map(|y| model.mu.density(*y) * width).collect();
    let mass: f64 = weights.iter().sum();
    let shift = phi.iter().zip(&weights).map(|(p, w)| p * w).sum::<f64>() / mass;
    phi.iter_mut().for_each(|p| *p -= shift);
    let mean = phi.iter().zip(&weights).map(|(p, w)| p * w).sum::<f64>() / mass;
    Ok(PoissonSolution {
        y: ys,
        phi,
        dphi,
        mean,
    })
}

/// Tridiagonal solve; `sub[0]` and `sup[n-1]` are ignored.
fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let den = diag[i] - sub[i] * c[i - 1];
        c[i] = if i + 1 < n { sup[i] / den } else { 0.0 };
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / den;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Deviations between each stored companion and its numerical recomputation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompanionReport {
    pub normalization: f64,
    pub centering: f64,
    pub g_bar: f64,
    pub f_bar: f64,
    pub grad_g_bar: f64,
    pub phi_grad_y_sigma: f64,
    pub stationarity: f64,
}

impl CompanionReport {
    pub fn max_deviation(&self) -> f64 {
        [
            self.normalization,
            self.centering,
            self.g_bar,
            self.f_bar,
            self.grad_g_bar,
            self.phi_grad_y_sigma,
            self.stationarity,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Test functions `(ψ, ψ', ψ'')` for the stationarity identity `∫Lψ dμ = 0`.
/// Test function with its first two derivatives.
type Probe = Box<dyn Fn(f64) -> (f64, f64, f64)>;

fn stationarity_basket(domain: YDomain) -> Vec<Probe> {
    match domain {
        YDomain::UnitTorus => (1..=3)
            .flat_map(|k| {
                let w = 2.0 * PI * k as f64;
                let s: Box<dyn Fn(f64) -> (f64, f64, f64)> =
                    Box::new(move |y| ((w * y).sin(), w * (w * y).cos(), -w * w * (w * y).sin()));
                let c: Box<dyn Fn(f64) -> (f64, f64, f64)> =
                    Box::new(move |y| ((w * y).cos(), -w * (w * y).sin(), -w * w * (w * y).cos()));
                [s, c]
            })
            .collect(),
        YDomain::RealLine => [0.5, 1.0, 2.0]
            .into_iter()
            .map(|centre| {
                let b: Box<dyn Fn(f64) -> (f64, f64, f64)> = Box::new(move |y| {
                    let u = y - centre;
                    let e = (-u * u).exp();
                    (e, -2.0 * u * e, (4.0 * u * u - 2.0) * e)
                });
                b
            })
            .collect(),
    }
}

/// Recomputes every companion at the probe points.
pub fn verify_companions(model: &ModelSpec, probes: &[Vec<f64>]) -> Result<CompanionReport> {
    let mu = &model.mu;
    let mut report = CompanionReport {
        normalization: (mu.normalization() - 1.0).abs(),
        centering: 0.0,
        g_bar: 0.0,
        f_bar: 0.0,
        grad_g_bar: 0.0,
        phi_grad_y_sigma: 0.0,
        stationarity: 0.0,
    };
    let (n, p) = (model.n, model.p);
    for x in probes {
        let gbar = (model.g_bar)(x);
        for k in 0..n {
            let avg = mu.expectation(|y| (model.g)(x, y)[k]);
            report.g_bar = report.g_bar.max((avg - gbar[k]).abs());
            report.centering = report
                .centering
                .max(mu.expectation(|y| (model.g)(x, y)[k] - gbar[k]).abs());
        }
        let fbar = (model.f_bar)(x);
        for k in 0..n * p {
            let avg = mu.expectation(|y| (model.f)(x, y)[k]);
            report.f_bar = report.f_bar.max((avg - fbar[k]).abs());
        }
        let jac = (model.grad_g_bar)(x);
        let eps = 1e-5;
        for b in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[b] += eps;
            xm[b] -= eps;
            let (gp, gm) = ((model.g_bar)(&xp), (model.g_bar)(&xm));
            for a in 0..n {
                let fd = (gp[a] - gm[a]) / (2.0 * eps);
                report.grad_g_bar = report.grad_g_bar.max((fd - jac[a * n + b]).abs());
            }
        }
        if model.has_fast_process() {
            let sols = poisson_solve_1d(model, x)?;
            for (k, sol) in sols.iter().enumerate() {
                for (y, d) in sol.y.iter().zip(&sol.dphi) {
                    let numeric = d * (model.sigma)(*y);
                    let stored = (model.phi_grad_y_sigma)(x, *y)[k];
                    report.phi_grad_y_sigma = report.phi_grad_y_sigma.max((numeric - stored).abs());
                }
            }
        }
    }
    if model.has_fast_process() {
        for psi in stationarity_basket(model.y_domain) {
            let v = mu.expectation(|y| {
                let (_, d1, d2) = psi(y);
                model.generator(y, d1, d2)
            });
            report.stationarity = report.stationarity.max(v.abs());
        }
    }
    Ok(report)
}

/// Built-in potential names accepted in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialName {
    Zero,
    Cos,
    DoubleWell,
    Fourier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfinementName {
    Quadratic,
    Polynomial,
}

/// JSON model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Cir {
        tau: f64,
        beta: f64,
        theta: f64,
        v: f64,
        #[serde(default)]
        x0: Option<f64>,
    },
    CirProbe {
        beta: f64,
        theta: f64,
        v: f64,
        #[serde(default)]
        x0: Option<f64>,
    },
    Langevin {
        #[serde(rename = "D")]
        diffusion: f64,
        #[serde(rename = "Q")]
        potential: PotentialName,
        #[serde(rename = "V")]
        confinement: ConfinementName,
        #[serde(rename = "Q_cos", default)]
        q_cos: Vec<f64>,
        #[serde(rename = "Q_sin", default)]
        q_sin: Vec<f64>,
        #[serde(rename = "V_coeffs", default)]
        v_coeffs: Vec<f64>,
        #[serde(default)]
        x0: Option<f64>,
    },
    PureNoise {
        tau: f64,
    },
    SlowDrift {
        drift: Vec<f64>,
        tau: f64,
        #[serde(default)]
        x0: Option<f64>,
    },
}

impl ModelConfig {
    pub fn build(&self) -> Result<ModelSpec> {
        let (model, x0) = match self {
            ModelConfig::Cir {
                tau,
                beta,
                theta,
                v,
                x0,
            } => (cir_model(*tau, *beta, *theta, *v)?, *x0),
            ModelConfig::CirProbe { beta, theta, v, x0 } => {
                (cir_probe_model(*beta, *theta, *v)?, *x0)
            }
            ModelConfig::Langevin {
                diffusion,
                potential,
                confinement,
                q_cos,
                q_sin,
                v_coeffs,
                x0,
            } => {
                let q = match potential {
                    PotentialName::Zero => Potential::Zero,
                    PotentialName::Cos => Potential::Cos,
                    PotentialName::DoubleWell => Potential::DoubleWell,
                    PotentialName::Fourier => Potential::Fourier {
                        cos: q_cos.clone(),
                        sin: q_sin.clone(),
                    },
                };
                if *potential != PotentialName::Fourier && !(q_cos.is_empty() && q_sin.is_empty()) {
                    return Err(Error::Config("Q_cos/Q_sin need Q = \"fourier\"".into()));
                }
                let v = match confinement {
                    ConfinementName::Quadratic if v_coeffs.is_empty() => Polynomial::quadratic(),
                    ConfinementName::Quadratic => {
                        return Err(Error::Config("V_coeffs need V = \"polynomial\"".into()))
                    }
                    ConfinementName::Polynomial => Polynomial::new(v_coeffs.clone()),
                };
                (langevin_model(q, v, *diffusion)?, *x0)
            }
            ModelConfig::PureNoise { tau } => (pure_noise_model(*tau)?, None),
            ModelConfig::SlowDrift { drift, tau, x0 } => {
                (slow_drift_model(Polynomial::new(drift.clone()), *tau)?, *x0)
            }
        };
        match x0 {
            Some(x) => model.with_x0(vec![x]),
            None => Ok(model),
        }
    }
}
