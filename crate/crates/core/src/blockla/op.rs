use nalgebra::DMatrix;

use super::mat::Mat;
use super::vec::{BlockShape, BlockVec};
use crate::error::{Error, Result};

/// Linear operator on [`BlockVec`]s stored as four blocks
/// `[[xx, xy], [yx, yy]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockOp {
    pub xx: Mat,
    pub xy: Mat,
    pub yx: Mat,
    pub yy: Mat,
}

impl BlockOp {
    pub fn new(xx: Mat, xy: Mat, yx: Mat, yy: Mat) -> Result<Self> {
        let nx = xx.rows();
        let ny = yy.rows();
        let ok = xx.cols() == nx
            && yy.cols() == ny
            && (xy.rows(), xy.cols()) == (nx, ny)
            && (yx.rows(), yx.cols()) == (ny, nx);
        if !ok {
            return Err(Error::Shape(format!(
                "inconsistent blocks: xx {}x{}, xy {}x{}, yx {}x{}, yy {}x{}",
                xx.rows(),
                xx.cols(),
                xy.rows(),
                xy.cols(),
                yx.rows(),
                yx.cols(),
                yy.rows(),
                yy.cols()
            )));
        }
        Ok(Self { xx, xy, yx, yy })
    }

    pub fn block_diagonal(xx: Mat, yy: Mat) -> Result<Self> {
        let (nx, ny) = (xx.rows(), yy.rows());
        Self::new(xx, Mat::zero(nx, ny), Mat::zero(ny, nx), yy)
    }

    pub fn identity(shape: BlockShape) -> Self {
        Self::block_diagonal(Mat::identity(shape.nx), Mat::identity(shape.ny)).unwrap()
    }

    pub fn zeros(shape: BlockShape) -> Self {
        let (nx, ny) = (shape.nx, shape.ny);
        Self::new(Mat::zero(nx, nx), Mat::zero(nx, ny), Mat::zero(ny, nx), Mat::zero(ny, ny)).unwrap()
    }

    /// Splits a dense square matrix acting on the stacked vector.
    pub fn from_dense(shape: BlockShape, m: &DMatrix<f64>) -> Result<Self> {
        let n = shape.len();
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::Shape(format!("{}x{} matrix for shape {:?}", m.nrows(), m.ncols(), shape)));
        }
        let (nx, ny) = (shape.nx, shape.ny);
        Self::new(
            Mat::Dense(m.view((0, 0), (nx, nx)).into_owned()),
            Mat::Dense(m.view((0, nx), (nx, ny)).into_owned()),
            Mat::Dense(m.view((nx, 0), (ny, nx)).into_owned()),
            Mat::Dense(m.view((nx, nx), (ny, ny)).into_owned()),
        )
    }

    pub fn shape(&self) -> BlockShape {
        BlockShape::new(self.xx.rows(), self.yy.rows())
    }

    pub fn apply(&self, v: &BlockVec) -> BlockVec {
        BlockVec::new(
            self.xx.apply(&v.x) + self.xy.apply(&v.y),
            self.yx.apply(&v.x) + self.yy.apply(&v.y),
        )
    }

    pub fn apply_transpose(&self, v: &BlockVec) -> BlockVec {
        BlockVec::new(
            self.xx.apply_transpose(&v.x) + self.yx.apply_transpose(&v.y),
            self.xy.apply_transpose(&v.x) + self.yy.apply_transpose(&v.y),
        )
    }

    pub fn transpose(&self) -> Self {
        Self {
            xx: self.xx.transpose(),
            xy: self.yx.transpose(),
            yx: self.xy.transpose(),
            yy: self.yy.transpose(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let s = self.shape();
        let mut m = DMatrix::zeros(s.len(), s.len());
        m.view_mut((0, 0), (s.nx, s.nx)).copy_from(&self.xx.to_dense());
        m.view_mut((0, s.nx), (s.nx, s.ny)).copy_from(&self.xy.to_dense());
        m.view_mut((s.nx, 0), (s.ny, s.nx)).copy_from(&self.yx.to_dense());
        m.view_mut((s.nx, s.nx), (s.ny, s.ny)).copy_from(&self.yy.to_dense());
        m
    }

    /// Same operator with every nonzero block stored densely.
    pub fn densified(&self) -> Self {
        Self {
            xx: self.xx.densified(),
            xy: self.xy.densified(),
            yx: self.yx.densified(),
            yy: self.yy.densified(),
        }
    }

    /// `a * p + b * q`
    pub fn lincomb(a: f64, p: &BlockOp, b: f64, q: &BlockOp) -> BlockOp {
        BlockOp {
            xx: Mat::lincomb(a, &p.xx, b, &q.xx),
            xy: Mat::lincomb(a, &p.xy, b, &q.xy),
            yx: Mat::lincomb(a, &p.yx, b, &q.yx),
            yy: Mat::lincomb(a, &p.yy, b, &q.yy),
        }
    }

    /// Builds the dense operator column by column from a linear action.
    pub fn from_action(shape: BlockShape, mut f: impl FnMut(&BlockVec) -> Result<BlockVec>) -> Result<Self> {
        let n = shape.len();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            let col = f(&BlockVec::unit(shape, j))?.flatten();
            m.set_column(j, &col);
        }
        Self::from_dense(shape, &m)
    }
}
