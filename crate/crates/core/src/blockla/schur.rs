use super::mat::{Factor, Mat};
use super::op::BlockOp;
use super::vec::BlockVec;
use crate::error::{Error, Result, SchurBlock};

/// Factorizations of `N_yy` and of the Schur complement
/// `S = N_xx - N_xy N_yy^{-1} N_yx`, shared by solves with `N` and `N^T`.
#[derive(Clone, Debug)]
pub struct SchurFactors {
    yy: Factor,
    schur: Factor,
    xy: Mat,
    yx: Mat,
}

impl SchurFactors {
    pub fn new(n: &BlockOp) -> Result<Self> {
        let yy = Factor::new(&n.yy).map_err(|e| singular(e, SchurBlock::Yy))?;
        let yy_inv_yx = yy.solve_mat(&n.yx);
        let s = Mat::lincomb(1.0, &n.xx, -1.0, &n.xy.matmul(&yy_inv_yx));
        let schur = Factor::new(&s).map_err(|e| singular(e, SchurBlock::Complement))?;
        Ok(Self { yy, schur, xy: n.xy.clone(), yx: n.yx.clone() })
    }

    /// Solves `N z = r`.
    pub fn solve(&self, r: &BlockVec) -> BlockVec {
        let w = self.yy.solve(&r.y);
        let zx = self.schur.solve(&(&r.x - self.xy.apply(&w)));
        let zy = self.yy.solve(&(&r.y - self.yx.apply(&zx)));
        BlockVec::new(zx, zy)
    }

    /// Solves `N^T z = r` using the same factors.
    pub fn solve_transpose(&self, r: &BlockVec) -> BlockVec {
        let w = self.yy.solve_transpose(&r.y);
        let zx = self.schur.solve_transpose(&(&r.x - self.yx.apply_transpose(&w)));
        let zy = self.yy.solve_transpose(&(&r.y - self.xy.apply_transpose(&zx)));
        BlockVec::new(zx, zy)
    }
}

fn singular(e: Error, block: SchurBlock) -> Error {
    match e {
        Error::Singular { pivot } => Error::SingularBlock { block, pivot },
        other => other,
    }
}

pub fn schur_solve(n: &BlockOp, rhs: &BlockVec) -> Result<BlockVec> {
    check_rhs(n, rhs)?;
    Ok(SchurFactors::new(n)?.solve(rhs))
}

pub fn schur_solve_transpose(n: &BlockOp, rhs: &BlockVec) -> Result<BlockVec> {
    check_rhs(n, rhs)?;
    Ok(SchurFactors::new(n)?.solve_transpose(rhs))
}

fn check_rhs(n: &BlockOp, rhs: &BlockVec) -> Result<()> {
    if n.shape() != rhs.shape() {
        return Err(Error::Shape(format!("operator {:?} vs right-hand side {:?}", n.shape(), rhs.shape())));
    }
    Ok(())
}
