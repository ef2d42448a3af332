//! Uniform time grids on `[0, 1]`, sampled paths, finite differences and
//! node-based quadrature.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform partition of `[0, 1]` into `n_steps` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeGrid {
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(n_steps: usize) -> Result<Self> {
        if n_steps < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 steps, got {n_steps}"
            )));
        }
        Ok(Self { n_steps })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of nodes, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        1.0 / self.n_steps as f64
    }

    /// Node `i`; the last node is exactly 1.
    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i <= self.n_steps);
        if i == self.n_steps {
            1.0
        } else {
            i as f64 / self.n_steps as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    pub fn refine(&self) -> TimeGrid {
        TimeGrid {
            n_steps: 2 * self.n_steps,
        }
    }

    pub fn weights(&self, rule: QuadratureRule) -> Result<Vec<f64>> {
        let n = self.n_steps;
        let h = self.step();
        match rule {
            QuadratureRule::Trapezoid => {
                let mut w = vec![h; n + 1];
                w[0] = 0.5 * h;
                w[n] = 0.5 * h;
                Ok(w)
            }
            QuadratureRule::Midpoint => {
                if !n.is_multiple_of(2) {
                    return Err(Error::InvalidGrid(format!(
                        "midpoint rule needs an even number of steps, got {n}"
                    )));
                }
                Ok((0..=n)
                    .map(|i| if i % 2 == 1 { 2.0 * h } else { 0.0 })
                    .collect())
            }
        }
    }

    /// Trapezoid weights; these define the discrete L² inner product.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        self.weights(QuadratureRule::Trapezoid)
            .expect("trapezoid weights exist for every grid")
    }
}

/// Node-based quadrature rules on a [`TimeGrid`].
///
/// `Midpoint` is the composite midpoint rule on pairs of cells: odd nodes are
/// the midpoints and carry weight `2Δ`, even nodes (including both endpoints)
/// carry zero weight.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuadratureRule {
    #[default]
    Trapezoid,
    Midpoint,
}

/// Vector-valued samples on every node of a grid, stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl Path {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("path dimension must be positive".into()));
        }
        if values.len() != grid.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: grid.len() * dim,
                got: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { node: pos / dim });
        }
        Ok(Self { grid, dim, values })
    }

    pub fn scalar(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, 1, values)
    }

    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        Self {
            grid,
            dim,
            values: vec![0.0; grid.len() * dim],
        }
    }

    /// Samples a scalar function at the grid nodes.
    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::scalar(grid, grid.nodes().into_iter().map(f).collect())
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat node-major storage.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, node: usize) -> &[f64] {
        &self.values[node * self.dim..(node + 1) * self.dim]
    }

    pub fn component(&self, k: usize) -> Vec<f64> {
        assert!(k < self.dim, "component {k} out of range");
        self.values.iter().skip(k).step_by(self.dim).copied().collect()
    }

    /// Builds a path from per-component node vectors.
    pub fn from_components(grid: TimeGrid, components: &[Vec<f64>]) -> Result<Self> {
        let dim = components.len();
        let mut values = vec![0.0; grid.len() * dim.max(1)];
        for (k, c) in components.iter().enumerate() {
            if c.len() != grid.len() {
                return Err(Error::DimensionMismatch {
                    expected: grid.len(),
                    got: c.len(),
                });
            }
            for (i, v) in c.iter().enumerate() {
                values[i * dim + k] = *v;
            }
        }
        Self::new(grid, dim, values)
    }

    /// Increments `p(t_{i+1}) - p(t_i)`, node-major, `n_steps * dim` entries.
    pub fn increments(&self) -> Vec<f64> {
        let d = self.dim;
        (0..self.grid.n_steps())
            .flat_map(|i| (0..d).map(move |k| (i, k)))
            .map(|(i, k)| self.values[(i + 1) * d + k] - self.values[i * d + k])
            .collect()
    }

    pub fn ensure_same_grid(&self, other: &Path) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch {
                left: self.grid.n_steps(),
                right: other.grid.n_steps(),
            });
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.dim).map(|k| format!("v{k}")));
        wtr.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![format_float(self.grid.node(i))];
            row.extend(self.at(i).iter().map(|v| format_float(*v)));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads the `t,v0,...` format; the `t` column must be a uniform grid on
    /// `[0, 1]`. Lines starting with `#` are skipped.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let header = rdr.headers()?.clone();
        if header.is_empty() || &header[0] != "t" {
            return Err(Error::Config("path CSV must start with a `t` column".into()));
        }
        for (k, name) in header.iter().skip(1).enumerate() {
            if name != format!("v{k}") {
                return Err(Error::Config(format!("unexpected path column `{name}`")));
            }
        }
        let dim = header.len() - 1;
        if dim == 0 {
            return Err(Error::Config("path CSV has no value columns".into()));
        }
        let mut ts = Vec::new();
        let mut values = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad number `{s}`: {e}")))
            };
            ts.push(parse(&record[0])?);
            for k in 0..dim {
                values.push(parse(&record[k + 1])?);
            }
        }
        if ts.len() < 3 {
            return Err(Error::InvalidGrid(format!("{} rows in path CSV", ts.len())));
        }
        let grid = TimeGrid::new(ts.len() - 1)?;
        for (i, t) in ts.iter().enumerate() {
            if (t - grid.node(i)).abs() > 1e-9 {
                return Err(Error::InvalidGrid(format!(
                    "row {i} has t = {t}, expected {}",
                    grid.node(i)
                )));
            }
        }
        Path::new(grid, dim, values)
    }
}

/// Shortest round-trip decimal representation.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

/// Second-order finite-difference derivative: central differences inside,
/// one-sided three-point stencils at both ends.
pub fn finite_diff_derivative(p: &Path) -> Result<Path> {
    let n = p.len();
    if n < 3 {
        return Err(Error::InvalidGrid(format!("{n} nodes, need at least 3")));
    }
    let h = p.grid().step();
    let d = p.dim();
    let v = p.values();
    let mut out = vec![0.0; v.len()];
    for k in 0..d {
        let f = |i: usize| v[i * d + k];
        out[k] = (-3.0 * f(0) + 4.0 * f(1) - f(2)) / (2.0 * h);
        for i in 1..n - 1 {
            out[i * d + k] = (f(i + 1) - f(i - 1)) / (2.0 * h);
        }
        let m = n - 1;
        out[m * d + k] = (3.0 * f(m) - 4.0 * f(m - 1) + f(m - 2)) / (2.0 * h);
    }
    Path::new(p.grid(), d, out)
}

/// Approximates `∫_0^1 f(s) ds` for a scalar path.
pub fn quadrature(f: &Path, rule: QuadratureRule) -> Result<f64> {
    if f.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: f.dim(),
        });
    }
    let w = f.grid().weights(rule)?;
    Ok(dot(&w, f.values()))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn make_grid_nodes() {
        assert_eq!(TimeGrid::new(2).unwrap().nodes(), vec![0.0, 0.5, 1.0]);
        assert_eq!(
            TimeGrid::new(4).unwrap().nodes(),
            vec![0.0, 0.25, 0.5, 0.75, 1.0]
        );
        assert!(matches!(TimeGrid::new(1), Err(Error::InvalidGrid(_))));
        assert!(matches!(TimeGrid::new(0), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn grid_is_uniform_and_ends_exactly() {
        for n in [2, 3, 7, 100, 1023] {
            let g = TimeGrid::new(n).unwrap();
            let t = g.nodes();
            assert_eq!(t[0], 0.0);
            assert_eq!(*t.last().unwrap(), 1.0);
            for w in t.windows(2) {
                assert!(w[1] > w[0]);
                assert_abs_diff_eq!(w[1] - w[0], g.step(), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn refinement_halves_spacing() {
        let g = TimeGrid::new(37).unwrap();
        assert_eq!(g.refine().step(), g.step() / 2.0);
    }

    #[test]
    fn derivative_of_affine_and_constant() {
        let g = TimeGrid::new(4).unwrap();
        let d = finite_diff_derivative(&Path::from_fn(g, |t| t).unwrap()).unwrap();
        for v in d.values() {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-12);
        }
        let d = finite_diff_derivative(&Path::from_fn(g, |_| 3.5).unwrap()).unwrap();
        assert!(d.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn derivative_of_square() {
        let g = TimeGrid::new(100).unwrap();
        let d = finite_diff_derivative(&Path::from_fn(g, |t| t * t).unwrap()).unwrap();
        for i in 1..100 {
            assert!((d.at(i)[0] - 2.0 * g.node(i)).abs() < 1e-3);
        }
    }

    #[test]
    fn quadrature_examples() {
        let g = TimeGrid::new(10).unwrap();
        let one = Path::from_fn(g, |_| 1.0).unwrap();
        assert_abs_diff_eq!(
            quadrature(&one, QuadratureRule::Trapezoid).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            quadrature(&one, QuadratureRule::Midpoint).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        for n in [2, 3, 17, 64] {
            let g = TimeGrid::new(n).unwrap();
            let lin = Path::from_fn(g, |t| t).unwrap();
            assert_abs_diff_eq!(
                quadrature(&lin, QuadratureRule::Trapezoid).unwrap(),
                0.5,
                epsilon = 1e-15
            );
        }
        let g = TimeGrid::new(100).unwrap();
        let sq = Path::from_fn(g, |t| t * t).unwrap();
        assert!((quadrature(&sq, QuadratureRule::Trapezoid).unwrap() - 1.0 / 3.0).abs() < 1e-4);
        assert!((quadrature(&sq, QuadratureRule::Midpoint).unwrap() - 1.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn midpoint_needs_even_steps() {
        assert!(TimeGrid::new(5).unwrap().weights(QuadratureRule::Midpoint).is_err());
    }

    #[test]
    fn path_rejects_non_finite() {
        let g = TimeGrid::new(2).unwrap();
        assert!(matches!(
            Path::scalar(g, vec![0.0, f64::NAN, 1.0]),
            Err(Error::NonFinite { node: 1 })
        ));
        assert!(Path::scalar(g, vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let g = TimeGrid::new(6).unwrap();
        let p = Path::from_components(
            g,
            &[
                g.nodes().iter().map(|t| (3.0 * t).sin() / 7.0).collect(),
                g.nodes().iter().map(|t| t.exp() * 1e-9).collect(),
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,v0,v1\n"));
        assert_eq!(Path::read_csv(buf.as_slice()).unwrap(), p);
    }
}
