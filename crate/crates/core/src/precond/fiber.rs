use nalgebra::DVector;

use crate::blockla::{BlockOp, BlockShape, BlockVec, Mat};
use crate::error::{Error, Result};

use super::PairingMap;

/// State-dependent pairing `u -> P(u)`.
pub trait FiberPairing: Sync {
    fn shape(&self) -> BlockShape;

    fn p_at(&self, u: &BlockVec) -> Result<PairingMap>;

    /// `[DP(u) v] w`
    fn dp_action(&self, u: &BlockVec, v: &BlockVec, w: &BlockVec) -> BlockVec;

    /// `[DP(u) v]^T q`
    fn dp_action_transpose(&self, u: &BlockVec, v: &BlockVec, q: &BlockVec) -> BlockVec;
}

/// A state-independent pairing viewed as a fiberwise one.
pub struct ConstantFiber(pub PairingMap);

impl FiberPairing for ConstantFiber {
    fn shape(&self) -> BlockShape {
        self.0.shape()
    }
    fn p_at(&self, _: &BlockVec) -> Result<PairingMap> {
        Ok(self.0.clone())
    }
    fn dp_action(&self, _: &BlockVec, _: &BlockVec, _: &BlockVec) -> BlockVec {
        BlockVec::zeros(self.shape())
    }
    fn dp_action_transpose(&self, _: &BlockVec, _: &BlockVec, _: &BlockVec) -> BlockVec {
        BlockVec::zeros(self.shape())
    }
}

type EntryFn = Box<dyn Fn(usize, f64) -> f64 + Send + Sync>;

/// `P(u) = diag(p_0(u_0), p_1(u_1), ...)`, each entry depending only on its
/// own coordinate.
pub struct DiagonalFiber {
    shape: BlockShape,
    entry: EntryFn,
    derivative: EntryFn,
}

impl DiagonalFiber {
    pub fn new(
        shape: BlockShape,
        entry: impl Fn(usize, f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(usize, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { shape, entry: Box::new(entry), derivative: Box::new(derivative) }
    }

    /// `P(u) = diag(exp(u_i))`
    pub fn exponential(shape: BlockShape) -> Self {
        Self::new(shape, |_, u| u.exp(), |_, u| u.exp())
    }

    /// `p_i(u) = sum_k coeffs[i][k] u^k`
    pub fn polynomial(shape: BlockShape, coeffs: Vec<Vec<f64>>) -> Self {
        assert_eq!(coeffs.len(), shape.len(), "one polynomial per coordinate");
        let c1 = coeffs.clone();
        Self::new(
            shape,
            move |i, u| c1[i].iter().rev().fold(0.0, |acc, c| acc * u + c),
            move |i, u| {
                coeffs[i].iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, c)| acc * u + k as f64 * c)
            },
        )
    }

    fn diag(&self, u: &BlockVec, f: &EntryFn) -> BlockVec {
        let mut out = BlockVec::zeros(self.shape);
        for i in 0..self.shape.len() {
            out.set(i, f(i, u.get(i)));
        }
        out
    }
}

impl FiberPairing for DiagonalFiber {
    fn shape(&self) -> BlockShape {
        self.shape
    }

    fn p_at(&self, u: &BlockVec) -> Result<PairingMap> {
        let d = self.diag(u, &self.entry);
        if let Some(i) = (0..d.shape().len()).find(|&i| d.get(i) == 0.0 || !d.get(i).is_finite()) {
            return Err(Error::InvalidParameter(format!("P(u) entry {i} is {}", d.get(i))));
        }
        PairingMap::new(BlockOp::block_diagonal(Mat::Diagonal(d.x), Mat::Diagonal(d.y))?)
    }

    fn dp_action(&self, u: &BlockVec, v: &BlockVec, w: &BlockVec) -> BlockVec {
        let d = self.diag(u, &self.derivative);
        BlockVec::new(
            d.x.component_mul(&v.x).component_mul(&w.x),
            d.y.component_mul(&v.y).component_mul(&w.y),
        )
    }

    fn dp_action_transpose(&self, u: &BlockVec, v: &BlockVec, q: &BlockVec) -> BlockVec {
        self.dp_action(u, v, q)
    }
}

/// Dense table `Γ[β][ν][γ] = (∂_γ P · P^{-1})_{βν}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Christoffel {
    n: usize,
    data: Vec<f64>,
}

pub const CHRISTOFFEL_DENSE_LIMIT: usize = 16;

impl Christoffel {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, beta: usize, nu: usize, gamma: usize) -> f64 {
        self.data[(beta * self.n + nu) * self.n + gamma]
    }

    /// `(Γ f ξ)_ν = Σ_{β,γ} Γ[β][ν][γ] f^γ ξ_β`
    pub fn contract(&self, f: &DVector<f64>, xi: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        DVector::from_fn(n, |nu, _| {
            let mut s = 0.0;
            for beta in 0..n {
                for gamma in 0..n {
                    s += self.get(beta, nu, gamma) * f[gamma] * xi[beta];
                }
            }
            s
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

pub fn christoffel(fiber: &impl FiberPairing, u: &BlockVec) -> Result<Christoffel> {
    let shape = fiber.shape();
    let n = shape.len();
    if n > CHRISTOFFEL_DENSE_LIMIT {
        return Err(Error::DimensionTooLarge { dim: n, limit: CHRISTOFFEL_DENSE_LIMIT });
    }
    let p = fiber.p_at(u)?;
    let p_inv_cols: Vec<BlockVec> = (0..n).map(|nu| p.solve(&BlockVec::unit(shape, nu))).collect();
    let mut data = vec![0.0; n * n * n];
    for gamma in 0..n {
        let e_gamma = BlockVec::unit(shape, gamma);
        for (nu, col) in p_inv_cols.iter().enumerate() {
            let c = fiber.dp_action(u, &e_gamma, col);
            for beta in 0..n {
                data[(beta * n + nu) * n + gamma] = c.get(beta);
            }
        }
    }
    Ok(Christoffel { n, data })
}
