//! Dense discretizations of linear operators on `L²([0,1]; ℝⁿ)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::{format_float, Path, TimeGrid};

/// A dense matrix acting on node values of `block`-dimensional paths.
///
/// Unknowns are ordered node-major: index `i * block + a` is component `a`
/// at node `i`. The trapezoid weights define the inner product, so the
/// adjoint of `M` is `W⁻¹ Mᵀ W`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    grid: TimeGrid,
    block: usize,
    weights: Vec<f64>,
    matrix: DMatrix<f64>,
}

impl OperatorMatrix {
    pub fn new(grid: TimeGrid, block: usize, matrix: DMatrix<f64>) -> Result<Self> {
        let size = grid.len() * block;
        if matrix.nrows() != size || matrix.ncols() != size {
            return Err(Error::DimensionMismatch {
                expected: size,
                got: matrix.nrows().max(matrix.ncols()),
            });
        }
        let node_w = grid.trapezoid_weights();
        let weights = node_w
            .iter()
            .flat_map(|w| std::iter::repeat_n(*w, block))
            .collect();
        Ok(Self {
            grid,
            block,
            weights,
            matrix,
        })
    }

    pub fn identity(grid: TimeGrid, block: usize) -> Self {
        let size = grid.len() * block;
        Self::new(grid, block, DMatrix::identity(size, size)).expect("square by construction")
    }

    pub fn zeros(grid: TimeGrid, block: usize) -> Self {
        let size = grid.len() * block;
        Self::new(grid, block, DMatrix::zeros(size, size)).expect("square by construction")
    }

    /// Block-diagonal operator from per-node `block × block` matrices (row-major).
    pub fn block_diagonal(grid: TimeGrid, block: usize, blocks: &[Vec<f64>]) -> Result<Self> {
        if blocks.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: blocks.len(),
            });
        }
        let size = grid.len() * block;
        let mut m = DMatrix::zeros(size, size);
        for (i, b) in blocks.iter().enumerate() {
            if b.len() != block * block {
                return Err(Error::DimensionMismatch {
                    expected: block * block,
                    got: b.len(),
                });
            }
            for a in 0..block {
                for c in 0..block {
                    m[(i * block + a, i * block + c)] = b[a * block + c];
                }
            }
        }
        Self::new(grid, block, m)
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    /// Weight of each unknown (node weight repeated per component).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply_vec(&self, v: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(v);
        (&self.matrix * x).as_slice().to_vec()
    }

    pub fn apply(&self, p: &Path) -> Result<Path> {
        self.check_path(p)?;
        Path::new(self.grid, self.block, self.apply_vec(p.values()))
    }

    /// Applies a scalar (`block == 1`) operator to every component of `p`.
    pub fn apply_each(&self, p: &Path) -> Result<Path> {
        if self.block != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: self.block,
            });
        }
        if p.grid() != self.grid {
            return Err(Error::GridMismatch {
                left: self.grid.n_steps(),
                right: p.grid().n_steps(),
            });
        }
        let comps: Vec<Vec<f64>> = (0..p.dim())
            .map(|k| self.apply_vec(&p.component(k)))
            .collect();
        Path::from_components(self.grid, &comps)
    }

    pub(crate) fn check_path(&self, p: &Path) -> Result<()> {
        if p.grid() != self.grid {
            return Err(Error::GridMismatch {
                left: self.grid.n_steps(),
                right: p.grid().n_steps(),
            });
        }
        if p.dim() != self.block {
            return Err(Error::DimensionMismatch {
                expected: self.block,
                got: p.dim(),
            });
        }
        Ok(())
    }

    fn check_compatible(&self, other: &OperatorMatrix) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch {
                left: self.grid.n_steps(),
                right: other.grid.n_steps(),
            });
        }
        if self.block != other.block {
            return Err(Error::DimensionMismatch {
                expected: self.block,
                got: other.block,
            });
        }
        Ok(())
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.check_compatible(other)?;
        OperatorMatrix::new(self.grid, self.block, &self.matrix * &other.matrix)
    }

    pub fn add(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.check_compatible(other)?;
        OperatorMatrix::new(self.grid, self.block, &self.matrix + &other.matrix)
    }

    pub fn sub(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.check_compatible(other)?;
        OperatorMatrix::new(self.grid, self.block, &self.matrix - &other.matrix)
    }

    pub fn scale(&self, s: f64) -> OperatorMatrix {
        OperatorMatrix {
            matrix: &self.matrix * s,
            ..self.clone()
        }
    }

    /// `W⁻¹ Mᵀ W`, the adjoint in the weighted inner product.
    pub fn weighted_adjoint(&self) -> OperatorMatrix {
        let w = &self.weights;
        let n = self.size();
        let m = DMatrix::from_fn(n, n, |i, j| self.matrix[(j, i)] * w[j] / w[i]);
        OperatorMatrix {
            matrix: m,
            ..self.clone()
        }
    }

    /// `W^{1/2} M W^{-1/2}`: similar to `M`, symmetric iff `M` is self-adjoint.
    pub fn symmetrized(&self) -> DMatrix<f64> {
        let sw: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        let n = self.size();
        DMatrix::from_fn(n, n, |i, j| sw[i] * self.matrix[(i, j)] / sw[j])
    }

    /// Largest entry of `M - M*` relative to the largest entry of `M`.
    pub fn symmetry_defect(&self) -> f64 {
        let s = self.symmetrized();
        let scale = s.amax().max(f64::MIN_POSITIVE);
        (&s - s.transpose()).amax() / scale
    }

    /// Eigenvalues of the symmetric part of `W^{1/2} M W^{-1/2}`, ascending.
    pub fn weighted_eigenvalues(&self) -> Vec<f64> {
        let s = self.symmetrized();
        let sym = (&s + s.transpose()) * 0.5;
        let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Hilbert–Schmidt norm in the weighted inner product.
    pub fn weighted_frobenius(&self) -> f64 {
        self.symmetrized().norm()
    }

    /// Dense matrix, one row per CSV line.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for i in 0..self.size() {
            let row: Vec<String> = (0..self.size())
                .map(|j| format_float(self.matrix[(i, j)]))
                .collect();
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Discrete `L²` inner product of two paths on the same grid.
pub fn l2_inner(a: &Path, b: &Path) -> Result<f64> {
    a.ensure_same_grid(b)?;
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let w = a.grid().trapezoid_weights();
    let d = a.dim();
    Ok(a
        .values()
        .iter()
        .zip(b.values())
        .enumerate()
        .map(|(k, (x, y))| w[k / d] * x * y)
        .sum())
}

pub fn l2_norm(a: &Path) -> f64 {
    l2_inner(a, a).expect("same path").sqrt()
}
