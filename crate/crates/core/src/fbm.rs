//! Fractional Brownian motion: covariance, exact samplers, and the joint
//! `(W^H, B)` noise used by the slow-fast simulator.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Path, TimeGrid};
use crate::rng::{self, fill_normal, BM_STREAM, FBM_STREAM};

/// Which open interval a Hurst exponent is validated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `(0, 1)`
    Sampling,
    /// `(1/2, 1)`
    Young,
    /// `(1/2, 3/4)`
    ExplicitInverse,
    /// exactly `1/2`
    Brownian,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::Sampling => "sampling (0,1)",
            Regime::Young => "young (1/2,1)",
            Regime::ExplicitInverse => "explicit-inverse (1/2,3/4)",
            Regime::Brownian => "brownian (=1/2)",
        }
    }

    fn admits(self, h: f64) -> bool {
        match self {
            Regime::Sampling => h > 0.0 && h < 1.0,
            Regime::Young => h > 0.5 && h < 1.0,
            Regime::ExplicitInverse => h > 0.5 && h < 0.75,
            Regime::Brownian => h == 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurstParam {
    h: f64,
    regime: Regime,
}

impl HurstParam {
    pub fn new(h: f64, regime: Regime) -> Result<Self> {
        if !h.is_finite() || !regime.admits(h) {
            return Err(Error::Regime {
                h,
                regime: regime.label(),
            });
        }
        Ok(Self { h, regime })
    }

    pub fn sampling(h: f64) -> Result<Self> {
        Self::new(h, Regime::Sampling)
    }

    pub fn young(h: f64) -> Result<Self> {
        Self::new(h, Regime::Young)
    }

    pub fn explicit_inverse(h: f64) -> Result<Self> {
        Self::new(h, Regime::ExplicitInverse)
    }

    pub fn brownian() -> Self {
        Self {
            h: 0.5,
            regime: Regime::Brownian,
        }
    }

    /// `H = 1/2` or `H ∈ (1/2, 1)`, the range the covariance operator is defined on.
    pub fn operator(h: f64) -> Result<Self> {
        if h == 0.5 {
            Ok(Self::brownian())
        } else {
            Self::young(h)
        }
    }

    pub fn value(&self) -> f64 {
        self.h
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// `H - 1/2`.
    pub fn alpha(&self) -> f64 {
        self.h - 0.5
    }

    pub fn is_brownian(&self) -> bool {
        self.h == 0.5
    }
}

impl fmt::Display for HurstParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "H={}", self.h)
    }
}

/// `E[W_t W_s] = ½(s^{2H} + t^{2H} - |t - s|^{2H})`.
pub fn fbm_covariance(h: HurstParam, t: f64, s: f64) -> Result<f64> {
    for v in [t, s] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!("time {v} outside [0, 1]")));
        }
    }
    Ok(covariance_unchecked(h.value(), t, s))
}

fn covariance_unchecked(h: f64, t: f64, s: f64) -> f64 {
    let e = 2.0 * h;
    0.5 * (s.powf(e) + t.powf(e) - (t - s).abs().powf(e))
}

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
fn fgn_autocov(h: f64, k: usize) -> f64 {
    let e = 2.0 * h;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(e) - 2.0 * k.powf(e) + (k - 1.0).abs().powf(e))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMethod {
    Cholesky,
    #[default]
    Circulant,
}

impl FromStr for SamplingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cholesky" => Ok(Self::Cholesky),
            "circulant" => Ok(Self::Circulant),
            other => Err(Error::Config(format!("unknown sampling method `{other}`"))),
        }
    }
}

enum Factor {
    Cholesky(DMatrix<f64>),
    Circulant {
        sqrt_eig: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
        scale: f64,
    },
}

/// Precomputed exact sampler for scalar fBm on a fixed grid.
pub struct FbmSampler {
    hurst: HurstParam,
    grid: TimeGrid,
    factor: Factor,
}

impl fmt::Debug for FbmSampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FbmSampler")
            .field("hurst", &self.hurst)
            .field("grid", &self.grid)
            .field("method", &self.method())
            .finish()
    }
}

impl FbmSampler {
    pub fn new(hurst: HurstParam, grid: TimeGrid, method: SamplingMethod) -> Result<Self> {
        let factor = match method {
            SamplingMethod::Cholesky => Factor::Cholesky(cholesky_factor(hurst, grid)?),
            SamplingMethod::Circulant => circulant_factor(hurst, grid)?,
        };
        Ok(Self {
            hurst,
            grid,
            factor,
        })
    }

    pub fn method(&self) -> SamplingMethod {
        match self.factor {
            Factor::Cholesky(_) => SamplingMethod::Cholesky,
            Factor::Circulant { .. } => SamplingMethod::Circulant,
        }
    }

    pub fn hurst(&self) -> HurstParam {
        self.hurst
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    /// One path, `W(t_0) = 0` included.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.grid.n_steps();
        let mut out = vec![0.0; n + 1];
        match &self.factor {
            Factor::Cholesky(l) => {
                let mut z = vec![0.0; n];
                fill_normal(rng, &mut z);
                let w = l * DVector::from_vec(z);
                out[1..].copy_from_slice(w.as_slice());
            }
            Factor::Circulant {
                sqrt_eig,
                fft,
                scale,
            } => {
                let mut z = vec![0.0; 2 * sqrt_eig.len()];
                fill_normal(rng, &mut z);
                let mut buf: Vec<Complex<f64>> = sqrt_eig
                    .iter()
                    .zip(z.chunks_exact(2))
                    .map(|(s, ab)| Complex::new(s * ab[0], s * ab[1]))
                    .collect();
                fft.process(&mut buf);
                let mut acc = 0.0;
                for k in 0..n {
                    acc += scale * buf[k].re;
                    out[k + 1] = acc;
                }
            }
        }
        out
    }
}

fn cholesky_factor(hurst: HurstParam, grid: TimeGrid) -> Result<DMatrix<f64>> {
    let n = grid.n_steps();
    let t = grid.nodes();
    let h = hurst.value();
    let cov = DMatrix::from_fn(n, n, |i, j| covariance_unchecked(h, t[i + 1], t[j + 1]));
    if let Some(c) = Cholesky::new(cov.clone()) {
        return Ok(c.l());
    }
    let jitter = 1e-12 * cov.diagonal().max();
    let shifted = cov + DMatrix::identity(n, n) * jitter;
    Cholesky::new(shifted)
        .map(|c| c.l())
        .ok_or_else(|| Error::Decomposition(format!("fBm covariance for {hurst} on {n} steps")))
}

fn circulant_factor(hurst: HurstParam, grid: TimeGrid) -> Result<Factor> {
    let n = grid.n_steps();
    let m = 2 * n;
    let h = hurst.value();
    let mut row: Vec<Complex<f64>> = (0..m)
        .map(|k| {
            let lag = if k <= n { k } else { m - k };
            Complex::new(fgn_autocov(h, lag), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut row);
    let max = row.iter().map(|c| c.re).fold(f64::MIN, f64::max);
    let min = row.iter().map(|c| c.re).fold(f64::MAX, f64::min);
    if min < -1e-10 * max {
        return Err(Error::EmbeddingNotPsd {
            min_eigenvalue: min,
        });
    }
    let sqrt_eig = row
        .iter()
        .map(|c| (c.re.max(0.0) / m as f64).sqrt())
        .collect();
    Ok(Factor::Circulant {
        sqrt_eig,
        fft,
        scale: grid.step().powf(h),
    })
}

/// `dim` independent fBm coordinates; coordinate `k` uses its own stream.
pub fn sample_fbm(
    hurst: HurstParam,
    grid: TimeGrid,
    dim: usize,
    seed: u64,
    method: SamplingMethod,
) -> Result<Path> {
    let sampler = FbmSampler::new(hurst, grid, method)?;
    sample_with(&sampler, dim, seed)
}

fn sample_with(sampler: &FbmSampler, dim: usize, seed: u64) -> Result<Path> {
    if dim == 0 {
        return Err(Error::Domain("fBm dimension must be positive".into()));
    }
    let comps: Vec<Vec<f64>> = (0..dim)
        .map(|k| sampler.sample(&mut rng::stream(seed, FBM_STREAM, k as u64)))
        .collect();
    Path::from_components(sampler.grid(), &comps)
}

fn sample_bm(grid: TimeGrid, dim: usize, seed: u64) -> Result<Path> {
    let sd = grid.step().sqrt();
    let comps: Vec<Vec<f64>> = (0..dim)
        .map(|k| {
            let mut rng = rng::stream(seed, BM_STREAM, k as u64);
            let mut z = vec![0.0; grid.n_steps()];
            fill_normal(&mut rng, &mut z);
            let mut acc = 0.0;
            std::iter::once(0.0)
                .chain(z.iter().map(|x| {
                    acc += sd * x;
                    acc
                }))
                .collect()
        })
        .collect();
    Path::from_components(grid, &comps)
}

/// Fractional noise `W^H` (dimension `p`) and an independent Brownian motion `B` (dimension `m`).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBundle {
    pub w_h: Path,
    pub b: Path,
    pub seed: u64,
    pub hurst: HurstParam,
}

/// Reusable generator of [`NoiseBundle`]s on one grid.
#[derive(Debug)]
pub struct NoiseSampler {
    fbm: FbmSampler,
    p: usize,
    m: usize,
}

impl NoiseSampler {
    pub fn new(hurst: HurstParam, grid: TimeGrid, p: usize, m: usize) -> Result<Self> {
        if p == 0 || m == 0 {
            return Err(Error::Domain("noise dimensions must be positive".into()));
        }
        Ok(Self {
            fbm: FbmSampler::new(hurst, grid, SamplingMethod::Circulant)?,
            p,
            m,
        })
    }

    pub fn bundle(&self, seed: u64) -> Result<NoiseBundle> {
        Ok(NoiseBundle {
            w_h: sample_with(&self.fbm, self.p, seed)?,
            b: sample_bm(self.fbm.grid(), self.m, seed)?,
            seed,
            hurst: self.fbm.hurst(),
        })
    }
}

pub fn sample_noise_bundle(
    hurst: HurstParam,
    grid: TimeGrid,
    p: usize,
    m: usize,
    seed: u64,
) -> Result<NoiseBundle> {
    NoiseSampler::new(hurst, grid, p, m)?.bundle(seed)
}
