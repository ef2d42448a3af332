//! Euler simulation of the slow-fast system, the averaged ODE, the
//! moderate-deviation process `η^ε` and a Monte Carlo harness.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::{HurstParam, NoiseBundle, NoiseSampler};
use crate::grid::{Path, TimeGrid};
use crate::models::ModelSpec;
use crate::table::{Cell, Provenance, ResultTable};

/// The speed `h(ε)` of the moderate-deviation scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HScaling {
    /// `ε^{-r}`, `0 < r < 1/2`
    Power { r: f64 },
    /// `log(1/ε)^{1/2}`
    SqrtLog,
    Constant,
}

impl Default for HScaling {
    fn default() -> Self {
        HScaling::Power { r: 0.25 }
    }
}

impl HScaling {
    pub fn validate(&self) -> Result<()> {
        if let HScaling::Power { r } = self {
            if !(*r > 0.0 && *r < 0.5) {
                return Err(Error::Domain(format!("scaling exponent {r} outside (0, 1/2)")));
            }
        }
        Ok(())
    }

    pub fn value(&self, eps: f64) -> f64 {
        match self {
            HScaling::Power { r } => eps.powf(-r),
            HScaling::SqrtLog => (1.0 / eps).ln().sqrt(),
            HScaling::Constant => 1.0,
        }
    }
}

/// Warnings for a ladder on which `h(ε)` fails to grow or `√ε h(ε)` fails to shrink.
pub fn check_scaling_ladder(scaling: HScaling, ladder: &[f64]) -> Vec<String> {
    let mut sorted = ladder.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut out = Vec::new();
    for w in sorted.windows(2) {
        let (big, small) = (w[0], w[1]);
        if scaling.value(small) <= scaling.value(big) {
            out.push(format!("h(eps) does not increase from eps={big} to eps={small}"));
        }
        if small.sqrt() * scaling.value(small) >= big.sqrt() * scaling.value(big) {
            out.push(format!("sqrt(eps)*h(eps) does not decrease from eps={big} to eps={small}"));
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub model: ModelSpec,
    pub epsilon: f64,
    pub hurst: HurstParam,
    pub grid: TimeGrid,
    pub x0: Vec<f64>,
    pub y0: f64,
    pub seed: u64,
    pub h_scaling: HScaling,
}

impl SimConfig {
    /// Starts from the model's own initial state with the default scaling.
    pub fn new(model: ModelSpec, epsilon: f64, hurst: HurstParam, grid: TimeGrid, seed: u64) -> Self {
        let (x0, y0) = (model.x0.clone(), model.y0);
        Self {
            model,
            epsilon,
            hurst,
            grid,
            x0,
            y0,
            seed,
            h_scaling: HScaling::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Domain(format!("epsilon {} must be positive", self.epsilon)));
        }
        if self.x0.len() != self.model.n {
            return Err(Error::DimensionMismatch {
                expected: self.model.n,
                got: self.x0.len(),
            });
        }
        self.h_scaling.validate()
    }

    /// `√ε h(ε)`
    pub fn deviation_scale(&self) -> f64 {
        self.epsilon.sqrt() * self.h_scaling.value(self.epsilon)
    }

    /// True when the fast step resolves the fast time scale.
    pub fn is_resolved(&self) -> bool {
        !self.model.has_fast_process() || self.grid.step() <= self.epsilon / 10.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub x_path: Path,
    pub y_path: Path,
    pub eta_path: Path,
    pub x_bar_path: Path,
    pub seed: u64,
    pub epsilon: f64,
    pub hurst: HurstParam,
    pub warnings: Vec<String>,
}

/// Classical fourth-order Runge–Kutta for `dX̄ = ḡ(X̄) dt`.
pub fn solve_averaged(model: &ModelSpec, x0: &[f64], grid: TimeGrid) -> Result<Path> {
    if x0.len() != model.n {
        return Err(Error::DimensionMismatch {
            expected: model.n,
            got: x0.len(),
        });
    }
    let n = model.n;
    let h = grid.step();
    let mut out = Vec::with_capacity(grid.len() * n);
    let mut x = x0.to_vec();
    out.extend_from_slice(&x);
    let axpy = |x: &[f64], k: &[f64], s: f64| -> Vec<f64> {
        x.iter().zip(k).map(|(a, b)| a + s * b).collect()
    };
    for _ in 0..grid.n_steps() {
        let k1 = (model.g_bar)(&x);
        let k2 = (model.g_bar)(&axpy(&x, &k1, 0.5 * h));
        let k3 = (model.g_bar)(&axpy(&x, &k2, 0.5 * h));
        let k4 = (model.g_bar)(&axpy(&x, &k3, h));
        for a in 0..n {
            x[a] += h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
        }
        out.extend_from_slice(&x);
    }
    Path::new(grid, n, out)
}

/// Left-point Euler scheme on a fresh noise bundle drawn from `cfg.seed`.
pub fn euler_slow_fast(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let sampler = NoiseSampler::new(cfg.hurst, cfg.grid, cfg.model.p, cfg.model.m)?;
    let x_bar = solve_averaged(&cfg.model, &cfg.x0, cfg.grid)?;
    euler_with(cfg, &sampler.bundle(cfg.seed)?, &x_bar)
}

/// Euler scheme driven by a given noise bundle.
pub fn euler_with(cfg: &SimConfig, noise: &NoiseBundle, x_bar: &Path) -> Result<SimResult> {
    cfg.validate()?;
    let model = &cfg.model;
    let (n, p) = (model.n, model.p);
    if noise.w_h.dim() != p || noise.b.dim() != model.m {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: noise.w_h.dim(),
        });
    }
    noise.w_h.ensure_same_grid(x_bar)?;
    if noise.w_h.grid() != cfg.grid {
        return Err(Error::GridMismatch {
            left: cfg.grid.n_steps(),
            right: noise.w_h.grid().n_steps(),
        });
    }
    let mut warnings = Vec::new();
    if !cfg.is_resolved() {
        warnings.push(format!(
            "stiff fast dynamics: step {} exceeds epsilon/10 = {}",
            cfg.grid.step(),
            cfg.epsilon / 10.0
        ));
    }
    let dt = cfg.grid.step();
    let eps = cfg.epsilon;
    let (se, ise) = (eps.sqrt(), 1.0 / eps.sqrt());
    let steps = cfg.grid.n_steps();
    let mut xs = Vec::with_capacity((steps + 1) * n);
    let mut ys = Vec::with_capacity(steps + 1);
    let mut x = cfg.x0.clone();
    let mut y = cfg.y0;
    xs.extend_from_slice(&x);
    ys.push(y);
    for k in 0..steps {
        let g = (model.g)(&x, y);
        let f = (model.f)(&x, y);
        let dw: Vec<f64> = (0..p)
            .map(|j| noise.w_h.at(k + 1)[j] - noise.w_h.at(k)[j])
            .collect();
        for a in 0..n {
            let stoch: f64 = (0..p).map(|j| f[a * p + j] * dw[j]).sum();
            x[a] += g[a] * dt + se * stoch;
        }
        // d = m = 1 for the fast variable
        let db = noise.b.at(k + 1)[0] - noise.b.at(k)[0];
        let yc = if model.nonnegative_fast { y.max(0.0) } else { y };
        y = yc + (model.c)(yc) * dt / eps + ise * (model.sigma)(yc) * db;
        if model.nonnegative_fast {
            y = y.max(0.0);
        }
        if !(y.is_finite() && x.iter().all(|v| v.is_finite())) {
            return Err(Error::Divergence { step: k + 1 });
        }
        xs.extend_from_slice(&x);
        ys.push(y);
    }
    let x_path = Path::new(cfg.grid, n, xs)?;
    let scale = cfg.deviation_scale();
    let eta: Vec<f64> = x_path
        .values()
        .iter()
        .zip(x_bar.values())
        .map(|(a, b)| (a - b) / scale)
        .collect();
    Ok(SimResult {
        eta_path: Path::new(cfg.grid, n, eta)?,
        y_path: Path::scalar(cfg.grid, ys)?,
        x_path,
        x_bar_path: x_bar.clone(),
        seed: noise.seed,
        epsilon: eps,
        hurst: cfg.hurst,
        warnings,
    })
}

/// Per-path scalar reducers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Statistic {
    /// `sup_t |X^ε_t - X̄_t|`
    SupDeviation,
    /// First component of `η^ε_1`.
    TerminalEta,
    /// Indicator of `sup_t |η^ε_t| > level`.
    Exceedance { level: f64 },
}

impl Statistic {
    pub fn name(&self) -> String {
        match self {
            Statistic::SupDeviation => "sup-deviation".into(),
            Statistic::TerminalEta => "terminal-eta".into(),
            Statistic::Exceedance { level } => format!("exceedance({level})"),
        }
    }

    pub fn reduce(&self, r: &SimResult) -> f64 {
        let sup_norm = |p: &Path| -> f64 {
            (0..p.len())
                .map(|i| p.at(i).iter().map(|v| v * v).sum::<f64>().sqrt())
                .fold(0.0, f64::max)
        };
        match self {
            Statistic::SupDeviation => {
                let dev: Vec<f64> = r
                    .x_path
                    .values()
                    .iter()
                    .zip(r.x_bar_path.values())
                    .map(|(a, b)| a - b)
                    .collect();
                sup_norm(&Path::new(r.x_path.grid(), r.x_path.dim(), dev).expect("same shape"))
            }
            Statistic::TerminalEta => r.eta_path.at(r.eta_path.len() - 1)[0],
            Statistic::Exceedance { level } => {
                if sup_norm(&r.eta_path) > *level {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub epsilon: f64,
    pub n_paths: usize,
    pub statistic: String,
    pub mean: f64,
    /// Unbiased sample variance; NaN for a single path.
    pub variance: f64,
    /// 95% normal-approximation half-width; infinite for a single path.
    pub ci_halfwidth: f64,
    pub divergent: usize,
    pub warnings: Vec<String>,
}

pub const ENSEMBLE_COLUMNS: [&str; 7] = [
    "epsilon",
    "n_paths",
    "statistic",
    "mean",
    "variance",
    "ci_halfwidth",
    "divergent",
];

impl EnsembleSummary {
    pub fn row(&self) -> Vec<Cell> {
        vec![
            self.epsilon.into(),
            self.n_paths.into(),
            self.statistic.clone().into(),
            self.mean.into(),
            self.variance.into(),
            self.ci_halfwidth.into(),
            self.divergent.into(),
        ]
    }
}

/// Runs paths with seeds `seed, seed + 1, …` and reduces each one.
pub fn mc_ensemble(cfg: &SimConfig, n_paths: usize, statistic: Statistic) -> Result<EnsembleSummary> {
    if n_paths == 0 {
        return Err(Error::Domain("ensemble needs at least one path".into()));
    }
    cfg.validate()?;
    let sampler = NoiseSampler::new(cfg.hurst, cfg.grid, cfg.model.p, cfg.model.m)?;
    let x_bar = solve_averaged(&cfg.model, &cfg.x0, cfg.grid)?;
    let outcomes: Vec<Result<Option<f64>>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let noise = sampler.bundle(cfg.seed.wrapping_add(i))?;
            match euler_with(cfg, &noise, &x_bar) {
                Ok(r) => Ok(Some(statistic.reduce(&r))),
                Err(Error::Divergence { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut values = Vec::with_capacity(n_paths);
    let mut divergent = 0;
    for o in outcomes {
        match o? {
            Some(v) => values.push(v),
            None => divergent += 1,
        }
    }
    if divergent * 100 > n_paths {
        return Err(Error::EnsembleDivergence {
            divergent,
            total: n_paths,
        });
    }
    let k = values.len();
    let mean = values.iter().sum::<f64>() / k as f64;
    let (variance, ci_halfwidth) = if k > 1 {
        let v = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1) as f64;
        (v, 1.96 * (v / k as f64).sqrt())
    } else {
        (f64::NAN, f64::INFINITY)
    };
    let mut warnings = Vec::new();
    if !cfg.is_resolved() {
        warnings.push(format!(
            "stiff fast dynamics: step {} exceeds epsilon/10 = {}",
            cfg.grid.step(),
            cfg.epsilon / 10.0
        ));
    }
    Ok(EnsembleSummary {
        epsilon: cfg.epsilon,
        n_paths,
        statistic: statistic.name(),
        mean,
        variance,
        ci_halfwidth,
        divergent,
        warnings,
    })
}

/// One ensemble per `ε` on the ladder, collected into a table.
pub fn ensemble_ladder(
    base: &SimConfig,
    ladder: &[(f64, TimeGrid)],
    n_paths: usize,
    statistic: Statistic,
    provenance: Provenance,
) -> Result<ResultTable> {
    let mut table = ResultTable::new(&ENSEMBLE_COLUMNS, 1, provenance);
    for (eps, grid) in ladder {
        let cfg = SimConfig {
            epsilon: *eps,
            grid: *grid,
            ..base.clone()
        };
        table.push(mc_ensemble(&cfg, n_paths, statistic)?.row())?;
    }
    Ok(table)
}
