use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float as _;

use super::matrix::{dot, DenseMatrix};
use crate::{Error, Result};

const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = M`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    lower: DenseMatrix,
}

impl CholeskyFactor {
    /// Factor a symmetric positive-definite matrix.
    pub fn new(m: &DenseMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NonSquare { rows: m.rows(), cols: m.cols() });
        }
        if !m.is_symmetric(SYMMETRY_TOLERANCE) {
            return Err(Error::InvalidArgument("cholesky input is not symmetric".into()));
        }
        let n = m.rows();
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let lj = &l.row(j)[..j];
            let d = m[(j, j)] - dot(lj, lj);
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..n {
                let s = m[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j]);
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    pub fn lower(&self) -> &DenseMatrix {
        &self.lower
    }

    /// `2 Σ log L_ii`
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.lower[(i, i)].ln()).sum::<f64>()
    }

    /// Solve `L y = b` in place.
    pub fn forward_substitute(&self, b: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let row = self.lower.row(i);
            let s = dot(&row[..i], &b[..i]);
            b[i] = (b[i] - s) / row[i];
        }
    }

    /// Solve `Lᵀ x = y` in place.
    pub fn back_substitute(&self, y: &mut [f64]) {
        let n = self.dim();
        for i in (0..n).rev() {
            let yi = y[i] / self.lower[(i, i)];
            y[i] = yi;
            // column i of Lᵀ above the diagonal is row i of L left of it
            let row = self.lower.row(i);
            for (yk, &lik) in y[..i].iter_mut().zip(&row[..i]) {
                *yk -= lik * yi;
            }
        }
    }

    /// Solve `M x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: b.len() });
        }
        let mut x = b.to_vec();
        self.forward_substitute(&mut x);
        self.back_substitute(&mut x);
        Ok(x)
    }

    /// `bᵀ M⁻¹ b = ‖L⁻¹ b‖²`
    pub fn quadratic_form(&self, b: &[f64]) -> Result<f64> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: b.len() });
        }
        let mut y = b.to_vec();
        self.forward_substitute(&mut y);
        Ok(dot(&y, &y))
    }

    /// `tr(M⁻¹ D)` via one solve per column of `D`.
    pub fn trace_solve(&self, d: &DenseMatrix) -> Result<f64> {
        let n = self.dim();
        if d.rows() != n || d.cols() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: d.rows() });
        }
        let mut col = vec![0.0; n];
        let mut trace = 0.0;
        for j in 0..n {
            for (i, c) in col.iter_mut().enumerate() {
                *c = d[(i, j)];
            }
            self.forward_substitute(&mut col);
            self.back_substitute(&mut col);
            trace += col[j];
        }
        Ok(trace)
    }

    /// Explicit `M⁻¹`. Only used where one inverse is amortized over many
    /// quadratic forms.
    pub fn inverse(&self) -> DenseMatrix {
        let n = self.dim();
        let mut inv = DenseMatrix::zeros(n, n);
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|c| *c = 0.0);
            col[j] = 1.0;
            self.forward_substitute(&mut col);
            self.back_substitute(&mut col);
            for (i, &c) in col.iter().enumerate() {
                inv[(i, j)] = c;
            }
        }
        // symmetrize rounding
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                inv[(i, j)] = v;
                inv[(j, i)] = v;
            }
        }
        inv
    }

    /// `L u`, used to colour white noise.
    pub fn lower_mul(&self, u: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|i| dot(&self.lower.row(i)[..=i], &u[..=i])).collect()
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.lower.matmul(&self.lower.transpose())
    }
}
