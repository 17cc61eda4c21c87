#![allow(dead_code)]

use adjprec::adjoint::{FieldArgs, PartitionedField};
use adjprec::blockla::{BlockShape, BlockVec};
use adjprec::Result;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn random_vec(rng: &mut impl Rng, shape: BlockShape, lo: f64, hi: f64) -> BlockVec {
    let x: Vec<f64> = (0..shape.nx).map(|_| rng.gen_range(lo..hi)).collect();
    let y: Vec<f64> = (0..shape.ny).map(|_| rng.gen_range(lo..hi)).collect();
    BlockVec::from_slices(&x, &y)
}

pub fn random_matrix(rng: &mut impl Rng, n: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| scale * rng.gen_range(-1.0..1.0))
}

/// `F_i = (A1 u1)_i + (A2 u2)_i + c_i sin(u1_i) u2_i`, derivatives by hand.
pub struct Coupled {
    pub shape: BlockShape,
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl Coupled {
    pub fn random(rng: &mut impl Rng, shape: BlockShape) -> Self {
        let n = shape.len();
        Self {
            shape,
            a1: random_matrix(rng, n, 0.5),
            a2: random_matrix(rng, n, 0.5),
            c: DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)),
        }
    }

    fn split(&self, v: DVector<f64>) -> BlockVec {
        BlockVec::from_flat(self.shape, &v)
    }
}

impl PartitionedField for Coupled {
    fn shape(&self) -> BlockShape {
        self.shape
    }
    fn value(&self, a: FieldArgs) -> Result<BlockVec> {
        let (u1, u2) = (a.u1.flatten(), a.u2.flatten());
        let nl = DVector::from_fn(u1.len(), |i, _| self.c[i] * u1[i].sin() * u2[i]);
        Ok(self.split(&self.a1 * &u1 + &self.a2 * &u2 + nl))
    }
    fn jvp_slot1(&self, a: FieldArgs, du: &BlockVec) -> Result<BlockVec> {
        let (u1, u2, d) = (a.u1.flatten(), a.u2.flatten(), du.flatten());
        let nl = DVector::from_fn(d.len(), |i, _| self.c[i] * u1[i].cos() * u2[i] * d[i]);
        Ok(self.split(&self.a1 * &d + nl))
    }
    fn jvp_slot2(&self, a: FieldArgs, du: &BlockVec) -> Result<BlockVec> {
        let (u1, d) = (a.u1.flatten(), du.flatten());
        let nl = DVector::from_fn(d.len(), |i, _| self.c[i] * u1[i].sin() * d[i]);
        Ok(self.split(&self.a2 * &d + nl))
    }
    fn vjp_slot1(&self, a: FieldArgs, w: &BlockVec) -> Result<BlockVec> {
        let (u1, u2, w) = (a.u1.flatten(), a.u2.flatten(), w.flatten());
        let nl = DVector::from_fn(w.len(), |i, _| self.c[i] * u1[i].cos() * u2[i] * w[i]);
        Ok(self.split(self.a1.tr_mul(&w) + nl))
    }
    fn vjp_slot2(&self, a: FieldArgs, w: &BlockVec) -> Result<BlockVec> {
        let (u1, w) = (a.u1.flatten(), w.flatten());
        let nl = DVector::from_fn(w.len(), |i, _| self.c[i] * u1[i].sin() * w[i]);
        Ok(self.split(self.a2.tr_mul(&w) + nl))
    }
}

/// Dense Jacobian of `u -> g(u)` by central differences, column by column.
pub fn fd_jacobian(shape: BlockShape, u: &BlockVec, h: f64, g: impl Fn(&BlockVec) -> BlockVec) -> DMatrix<f64> {
    let n = shape.len();
    let mut j = DMatrix::zeros(n, n);
    for c in 0..n {
        let (mut p, mut m) = (u.clone(), u.clone());
        p.set(c, u.get(c) + h);
        m.set(c, u.get(c) - h);
        j.set_column(c, &((g(&p) - g(&m)).flatten() / (2.0 * h)));
    }
    j
}
