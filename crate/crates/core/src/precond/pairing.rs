use crate::blockla::{BlockOp, BlockShape, BlockVec, Mat, SchurFactors};
use crate::error::{Error, Result};

/// Invertible linear map `P` defining the pairing `<p, δu>_P = <p, P δu>`.
#[derive(Clone, Debug)]
pub struct PairingMap {
    op: BlockOp,
    factors: SchurFactors,
}

impl PairingMap {
    pub fn new(op: BlockOp) -> Result<Self> {
        let factors = SchurFactors::new(&op)?;
        Ok(Self { op, factors })
    }

    pub fn identity(shape: BlockShape) -> Self {
        Self::new(BlockOp::identity(shape)).expect("identity is invertible")
    }

    pub fn op(&self) -> &BlockOp {
        &self.op
    }

    pub fn shape(&self) -> BlockShape {
        self.op.shape()
    }

    pub fn apply(&self, v: &BlockVec) -> BlockVec {
        self.op.apply(v)
    }

    pub fn apply_transpose(&self, v: &BlockVec) -> BlockVec {
        self.op.apply_transpose(v)
    }

    pub fn solve(&self, v: &BlockVec) -> BlockVec {
        self.factors.solve(v)
    }

    pub fn solve_transpose(&self, v: &BlockVec) -> BlockVec {
        self.factors.solve_transpose(v)
    }

    pub fn pair(&self, p: &BlockVec, du: &BlockVec) -> f64 {
        p.dot(&self.apply(du))
    }
}

/// `diag(scale_x I, scale_y I)`.
pub fn build_scale_preconditioner(shape: BlockShape, scale_x: f64, scale_y: f64) -> Result<PairingMap> {
    for (name, s) in [("scale_x", scale_x), ("scale_y", scale_y)] {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {s}")));
        }
    }
    PairingMap::new(BlockOp::block_diagonal(
        Mat::scaled_identity(shape.nx, scale_x),
        Mat::scaled_identity(shape.ny, scale_y),
    )?)
}
