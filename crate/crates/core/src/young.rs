//! Pathwise Riemann–Stieltjes integration of Hölder paths.

use crate::error::{Error, Result};
use crate::grid::Path;

/// Discrete Hölder seminorm of a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderEstimate {
    pub exponent: f64,
    pub seminorm: f64,
    /// True for the dyadic upper bound, false for the exact pairwise maximum.
    pub approximate: bool,
}

fn same_shape(f: &Path, g: &Path) -> Result<()> {
    f.ensure_same_grid(g)?;
    if f.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: g.dim(),
        });
    }
    Ok(())
}

/// `t_k ↦ ∫_0^{t_k} f dg`, componentwise, with trapezoid-in-`f` sums.
pub fn young_integrate(f: &Path, g: &Path) -> Result<Path> {
    same_shape(f, g)?;
    let d = f.dim();
    let mut out = vec![0.0; f.values().len()];
    for i in 0..f.grid().n_steps() {
        for k in 0..d {
            let fi = 0.5 * (f.at(i)[k] + f.at(i + 1)[k]);
            let dg = g.at(i + 1)[k] - g.at(i)[k];
            out[(i + 1) * d + k] = out[i * d + k] + fi * dg;
        }
    }
    Path::new(f.grid(), d, out)
}

fn distance(p: &Path, i: usize, j: usize) -> f64 {
    p.at(i)
        .iter()
        .zip(p.at(j))
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn check_exponent(exponent: f64) -> Result<()> {
    if !(exponent > 0.0 && exponent <= 1.0) {
        return Err(Error::Domain(format!("Hölder exponent {exponent} outside (0, 1]")));
    }
    Ok(())
}

/// Exact maximum of `|p(t) - p(s)| / |t - s|^γ` over all node pairs.
pub fn holder_seminorm(p: &Path, exponent: f64) -> Result<HolderEstimate> {
    check_exponent(exponent)?;
    let t = p.grid().nodes();
    let n = p.len();
    let mut best: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            best = best.max(distance(p, i, j) / (t[j] - t[i]).powf(exponent));
        }
    }
    Ok(HolderEstimate {
        exponent,
        seminorm: best,
        approximate: false,
    })
}

/// Upper bound on the seminorm from maximal increments at dyadic lags.
///
/// A lag of `m` steps splits into at most one increment per binary digit of
/// `m`, so the pair's ratio is bounded by the sum of the per-lag maxima up to
/// `⌊log₂ m⌋` divided by `(2^{⌊log₂ m⌋} Δ)^γ`.
pub fn holder_seminorm_dyadic(p: &Path, exponent: f64) -> Result<HolderEstimate> {
    check_exponent(exponent)?;
    let n = p.grid().n_steps();
    let h = p.grid().step();
    let mut acc = 0.0;
    let mut best: f64 = 0.0;
    let mut lag = 1;
    while lag <= n {
        let omega = (0..=n - lag)
            .map(|i| distance(p, i, i + lag))
            .fold(0.0, f64::max);
        acc += omega;
        best = best.max(acc / (lag as f64 * h).powf(exponent));
        lag *= 2;
    }
    Ok(HolderEstimate {
        exponent,
        seminorm: best,
        approximate: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YoungLoeveReport {
    /// Smallest `C` satisfying the bound on every node pair.
    pub constant: f64,
    pub f_seminorm: f64,
    pub g_seminorm: f64,
}

/// Fits the constant in
/// `|∫_r^t f dg - f(r)(g(t) - g(r))| ≤ C |f|_α |g|_β |t - r|^{α+β}`.
pub fn young_loeve_check(f: &Path, g: &Path, alpha: f64, beta: f64) -> Result<YoungLoeveReport> {
    if alpha + beta <= 1.0 {
        return Err(Error::InadmissibleExponents { alpha, beta });
    }
    same_shape(f, g)?;
    if f.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: f.dim(),
        });
    }
    let fs = holder_seminorm(f, alpha)?.seminorm;
    let gs = holder_seminorm(g, beta)?.seminorm;
    let mut constant: f64 = 0.0;
    if fs > 0.0 && gs > 0.0 {
        let integral = young_integrate(f, g)?;
        let iv = integral.values();
        let (fv, gv) = (f.values(), g.values());
        let t = f.grid().nodes();
        for r in 0..f.len() {
            for k in r + 1..f.len() {
                let rem = (iv[k] - iv[r] - fv[r] * (gv[k] - gv[r])).abs();
                constant = constant.max(rem / (fs * gs * (t[k] - t[r]).powf(alpha + beta)));
            }
        }
    }
    Ok(YoungLoeveReport {
        constant,
        f_seminorm: fs,
        g_seminorm: gs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{sample_fbm, HurstParam, SamplingMethod};
    use crate::grid::TimeGrid;
    use proptest::prelude::*;

    #[test]
    fn integrate_examples() {
        let g = TimeGrid::new(512).unwrap();
        let one = Path::from_fn(g, |_| 1.0).unwrap();
        let sq = Path::from_fn(g, |t| t * t).unwrap();
        let out = young_integrate(&one, &sq).unwrap();
        for i in 0..g.len() {
            assert_eq!(out.values()[i], {
                let mut acc = 0.0;
                for k in 0..i {
                    acc += sq.values()[k + 1] - sq.values()[k];
                }
                acc
            });
        }
        let lin = Path::from_fn(g, |t| t).unwrap();
        let v = young_integrate(&lin, &sq).unwrap().values()[512];
        assert!((v - 2.0 / 3.0).abs() < 1e-4);

        let w = sample_fbm(HurstParam::young(0.75).unwrap(), g, 1, 4, SamplingMethod::Circulant)
            .unwrap();
        let v = young_integrate(&w, &w).unwrap().values()[512];
        let end = w.values()[512];
        assert!((v - 0.5 * end * end).abs() < 5e-2 * (1.0 + end * end));

        let other = TimeGrid::new(8).unwrap();
        let short = Path::from_fn(other, |t| t).unwrap();
        assert!(matches!(young_integrate(&lin, &short), Err(Error::GridMismatch { .. })));
    }

    #[test]
    fn seminorm_examples() {
        let g = TimeGrid::new(256).unwrap();
        let lin = Path::from_fn(g, |t| t).unwrap();
        assert!((holder_seminorm(&lin, 1.0).unwrap().seminorm - 1.0).abs() < 1e-12);
        let c = Path::from_fn(g, |_| 2.5).unwrap();
        assert_eq!(holder_seminorm(&c, 0.3).unwrap().seminorm, 0.0);
        let root = Path::from_fn(g, f64::sqrt).unwrap();
        assert!((holder_seminorm(&root, 0.5).unwrap().seminorm - 1.0).abs() < 2e-2);
        assert!(holder_seminorm(&root, 0.0).is_err());
    }

    #[test]
    fn dyadic_bound_dominates_exact_value() {
        let g = TimeGrid::new(200).unwrap();
        let w = sample_fbm(HurstParam::young(0.7).unwrap(), g, 1, 9, SamplingMethod::Cholesky)
            .unwrap();
        for gamma in [0.3, 0.5, 0.65] {
            let exact = holder_seminorm(&w, gamma).unwrap();
            let bound = holder_seminorm_dyadic(&w, gamma).unwrap();
            assert!(bound.approximate && !exact.approximate);
            assert!(bound.seminorm >= exact.seminorm);
        }
    }

    #[test]
    fn young_loeve_examples() {
        let g = TimeGrid::new(64).unwrap();
        let lin = Path::from_fn(g, |t| t).unwrap();
        let c = Path::from_fn(g, |_| 1.0).unwrap();
        assert_eq!(young_loeve_check(&c, &lin, 1.0, 1.0).unwrap().constant, 0.0);
        let r = young_loeve_check(&lin, &lin, 1.0, 1.0).unwrap();
        assert!(r.constant <= 1.0 && (r.constant - 0.5).abs() < 1e-9);
        assert!(matches!(
            young_loeve_check(&lin, &lin, 0.5, 0.5),
            Err(Error::InadmissibleExponents { .. })
        ));
    }

    #[test]
    fn young_loeve_constant_is_stable_under_refinement() {
        let h = HurstParam::young(0.8).unwrap();
        let fit = |n| {
            let g = TimeGrid::new(n).unwrap();
            let f = sample_fbm(h, g, 1, 21, SamplingMethod::Circulant).unwrap();
            let w = sample_fbm(h, g, 1, 22, SamplingMethod::Circulant).unwrap();
            young_loeve_check(&f, &w, 0.7, 0.7).unwrap().constant
        };
        let ratio = fit(256) / fit(128);
        assert!((0.5..=2.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn chain_rule_for_smooth_driver() {
        // F(x) = sin x along h(t) = t² + cos 3t
        let err = |n| {
            let g = TimeGrid::new(n).unwrap();
            let h = Path::from_fn(g, |t| t * t + (3.0 * t).cos()).unwrap();
            let df = Path::scalar(g, h.values().iter().map(|x| x.cos()).collect()).unwrap();
            let integral = young_integrate(&df, &h).unwrap().values()[n];
            (h.values()[n].sin() - h.values()[0].sin() - integral).abs()
        };
        let (e1, e2) = (err(64), err(128));
        assert!(e2 < e1 && e2 < 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn bilinear_and_additive(a in -2.0f64..2.0, b in -2.0f64..2.0, split in 1usize..63) {
            let g = TimeGrid::new(64).unwrap();
            let f1 = Path::from_fn(g, |t| (4.0 * t).sin()).unwrap();
            let f2 = Path::from_fn(g, |t| t.exp()).unwrap();
            let dr = Path::from_fn(g, |t| t * t * t - t).unwrap();
            let mix = Path::scalar(g, f1.values().iter().zip(f2.values()).map(|(x, y)| a * x + b * y).collect()).unwrap();
            let lhs = young_integrate(&mix, &dr).unwrap();
            let i1 = young_integrate(&f1, &dr).unwrap();
            let i2 = young_integrate(&f2, &dr).unwrap();
            for k in 0..65 {
                prop_assert!((lhs.values()[k] - a * i1.values()[k] - b * i2.values()[k]).abs() < 1e-12);
            }
            // the tail is summed independently of the cumulative head
            let tail: f64 = (split..64)
                .map(|i| 0.5 * (f1.values()[i] + f1.values()[i + 1]) * (dr.values()[i + 1] - dr.values()[i]))
                .sum();
            prop_assert!((i1.values()[split] + tail - i1.values()[64]).abs() < 1e-14);
        }
    }
}
