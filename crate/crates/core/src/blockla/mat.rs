use nalgebra::{DMatrix, DVector, LU};

use super::banded::{Banded, BandedLu};
use crate::error::{Error, Result};

/// One block of a [`BlockOp`](super::BlockOp).
///
/// Diagonal and banded storage are kept structurally through sums and
/// products so that Schur complements of banded systems stay banded.
#[derive(Clone, Debug, PartialEq)]
pub enum Mat {
    Zero { rows: usize, cols: usize },
    Diagonal(DVector<f64>),
    Banded(Banded),
    Dense(DMatrix<f64>),
}

impl Mat {
    pub fn zero(rows: usize, cols: usize) -> Self {
        Mat::Zero { rows, cols }
    }

    pub fn identity(n: usize) -> Self {
        Mat::Diagonal(DVector::from_element(n, 1.0))
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        Mat::Diagonal(DVector::from_element(n, s))
    }

    pub fn rows(&self) -> usize {
        match self {
            Mat::Zero { rows, .. } => *rows,
            Mat::Diagonal(d) => d.len(),
            Mat::Banded(b) => b.n(),
            Mat::Dense(m) => m.nrows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Mat::Zero { cols, .. } => *cols,
            Mat::Diagonal(d) => d.len(),
            Mat::Banded(b) => b.n(),
            Mat::Dense(m) => m.ncols(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Mat::Zero { .. })
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        assert_eq!(self.cols(), v.len(), "operand length mismatch");
        match self {
            Mat::Zero { rows, .. } => DVector::zeros(*rows),
            Mat::Diagonal(d) => d.component_mul(v),
            Mat::Banded(b) => b.apply(v),
            Mat::Dense(m) => m * v,
        }
    }

    pub fn apply_transpose(&self, v: &DVector<f64>) -> DVector<f64> {
        assert_eq!(self.rows(), v.len(), "operand length mismatch");
        match self {
            Mat::Zero { cols, .. } => DVector::zeros(*cols),
            Mat::Diagonal(d) => d.component_mul(v),
            Mat::Banded(b) => b.apply_transpose(v),
            Mat::Dense(m) => m.tr_mul(v),
        }
    }

    pub fn transpose(&self) -> Self {
        match self {
            Mat::Zero { rows, cols } => Mat::Zero { rows: *cols, cols: *rows },
            Mat::Diagonal(d) => Mat::Diagonal(d.clone()),
            Mat::Banded(b) => Mat::Banded(b.transpose()),
            Mat::Dense(m) => Mat::Dense(m.transpose()),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Mat::Zero { rows, cols } => DMatrix::zeros(*rows, *cols),
            Mat::Diagonal(d) => DMatrix::from_diagonal(d),
            Mat::Banded(b) => b.to_dense(),
            Mat::Dense(m) => m.clone(),
        }
    }

    pub fn densified(&self) -> Self {
        match self {
            Mat::Zero { .. } => self.clone(),
            _ => Mat::Dense(self.to_dense()),
        }
    }

    fn as_banded(&self) -> Option<Banded> {
        match self {
            Mat::Diagonal(d) => Some(Banded::from_diagonal(d)),
            Mat::Banded(b) => Some(b.clone()),
            _ => None,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        match self {
            Mat::Zero { .. } => self.clone(),
            Mat::Diagonal(d) => Mat::Diagonal(d * s),
            Mat::Banded(b) => Mat::Banded(Banded::lincomb(s, b, 0.0, b)),
            Mat::Dense(m) => Mat::Dense(m * s),
        }
    }

    /// `a * p + b * q`, keeping the sparsest representation that holds both.
    pub fn lincomb(a: f64, p: &Mat, b: f64, q: &Mat) -> Mat {
        assert_eq!((p.rows(), p.cols()), (q.rows(), q.cols()), "block shape mismatch");
        match (p, q) {
            (Mat::Zero { .. }, _) => q.scaled(b),
            (_, Mat::Zero { .. }) => p.scaled(a),
            (Mat::Diagonal(x), Mat::Diagonal(y)) => Mat::Diagonal(x * a + y * b),
            (Mat::Dense(_), _) | (_, Mat::Dense(_)) => Mat::Dense(p.to_dense() * a + q.to_dense() * b),
            _ => {
                let (x, y) = (p.as_banded().unwrap(), q.as_banded().unwrap());
                Mat::Banded(Banded::lincomb(a, &x, b, &y))
            }
        }
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols(), other.rows(), "inner dimension mismatch");
        match (self, other) {
            (Mat::Zero { .. }, _) | (_, Mat::Zero { .. }) => Mat::zero(self.rows(), other.cols()),
            (Mat::Diagonal(x), Mat::Diagonal(y)) => Mat::Diagonal(x.component_mul(y)),
            (Mat::Diagonal(d), Mat::Banded(b)) => Mat::Banded(b.scale_rows(d)),
            (Mat::Banded(b), Mat::Diagonal(d)) => Mat::Banded(b.scale_cols(d)),
            (Mat::Banded(x), Mat::Banded(y)) => Mat::Banded(x.matmul(y)),
            (Mat::Diagonal(d), Mat::Dense(m)) => {
                let mut out = m.clone();
                for (i, mut row) in out.row_iter_mut().enumerate() {
                    row *= d[i];
                }
                Mat::Dense(out)
            }
            _ => Mat::Dense(self.to_dense() * other.to_dense()),
        }
    }
}

/// Reusable factorization of a square [`Mat`], solving with the matrix or
/// its transpose.
#[derive(Clone, Debug)]
pub enum Factor {
    Empty,
    Diagonal(DVector<f64>),
    Banded(BandedLu),
    Dense { lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>, lu_t: LU<f64, nalgebra::Dyn, nalgebra::Dyn> },
}

impl Factor {
    pub fn new(m: &Mat) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::Shape(format!("cannot factor a {}x{} block", m.rows(), m.cols())));
        }
        if m.rows() == 0 {
            return Ok(Factor::Empty);
        }
        match m {
            Mat::Zero { .. } => Err(Error::Singular { pivot: 0 }),
            Mat::Diagonal(d) => {
                if let Some(k) = d.iter().position(|v| *v == 0.0 || !v.is_finite()) {
                    return Err(Error::Singular { pivot: k });
                }
                Ok(Factor::Diagonal(d.map(|v| 1.0 / v)))
            }
            Mat::Banded(b) => Ok(Factor::Banded(BandedLu::factor(b)?)),
            Mat::Dense(a) => {
                if a.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Singular { pivot: 0 });
                }
                let lu = a.clone().lu();
                if !lu.is_invertible() {
                    return Err(Error::Singular { pivot: 0 });
                }
                let lu_t = a.transpose().lu();
                Ok(Factor::Dense { lu, lu_t })
            }
        }
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            Factor::Empty => b.clone(),
            Factor::Diagonal(inv) => inv.component_mul(b),
            Factor::Banded(lu) => lu.solve(b),
            Factor::Dense { lu, .. } => lu.solve(b).expect("invertibility checked at factorization"),
        }
    }

    pub fn solve_transpose(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            Factor::Empty => b.clone(),
            Factor::Diagonal(inv) => inv.component_mul(b),
            Factor::Banded(lu) => lu.solve_transpose(b),
            Factor::Dense { lu_t, .. } => lu_t.solve(b).expect("invertibility checked at factorization"),
        }
    }

    /// `A^{-1} m`, preserving structure when `A` is diagonal.
    pub fn solve_mat(&self, m: &Mat) -> Mat {
        match (self, m) {
            (_, Mat::Zero { .. }) => m.clone(),
            (Factor::Diagonal(inv), _) => Mat::Diagonal(inv.clone()).matmul(m),
            (Factor::Empty, _) => m.clone(),
            _ => {
                let dense = m.to_dense();
                let mut out = DMatrix::zeros(dense.nrows(), dense.ncols());
                for j in 0..dense.ncols() {
                    let col = self.solve(&dense.column(j).into_owned());
                    out.set_column(j, &col);
                }
                Mat::Dense(out)
            }
        }
    }
}
