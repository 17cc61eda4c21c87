use nalgebra::{DMatrix, DVector};

use crate::adjoint::{rate, rate_vjp, FieldArgs, PartitionedField};
use crate::blockla::{BlockShape, BlockVec};
use crate::error::{Error, Result};

/// Invertible change of state variables `ũ = L(u)`.
pub trait StateTransform: Sync {
    fn shape(&self) -> BlockShape;

    fn forward(&self, u: &BlockVec) -> BlockVec;

    /// `DL(u) v`
    fn d_forward(&self, u: &BlockVec, v: &BlockVec) -> BlockVec;

    /// `DL(u)^T w`
    fn d_forward_transpose(&self, u: &BlockVec, w: &BlockVec) -> BlockVec;

    /// `(D²L(u) v) w`, symmetric in `v` and `w`.
    fn d2_forward(&self, u: &BlockVec, v: &BlockVec, w: &BlockVec) -> BlockVec;

    /// `(D²L(u) v)^T q`
    fn d2_forward_transpose(&self, u: &BlockVec, v: &BlockVec, q: &BlockVec) -> BlockVec;

    /// `DL(u)^{-1} v`. The default factors a dense copy of `DL(u)`.
    fn d_forward_solve(&self, u: &BlockVec, v: &BlockVec) -> Result<BlockVec> {
        let j = dense_jacobian(self, u);
        let x = j.lu().solve(&v.flatten()).ok_or(Error::Singular { pivot: 0 })?;
        Ok(BlockVec::from_flat(self.shape(), &x))
    }

    /// `DL(u)^{-T} w`
    fn d_forward_solve_transpose(&self, u: &BlockVec, w: &BlockVec) -> Result<BlockVec> {
        let j = dense_jacobian(self, u);
        let x = j.transpose().lu().solve(&w.flatten()).ok_or(Error::Singular { pivot: 0 })?;
        Ok(BlockVec::from_flat(self.shape(), &x))
    }

    /// `L^{-1}(ũ)`. The default runs Newton's method from `ũ`.
    fn inverse(&self, ut: &BlockVec) -> Result<BlockVec> {
        let mut u = ut.clone();
        for _ in 0..60 {
            let r = &self.forward(&u) - ut;
            let scale = 1.0 + ut.norm_inf();
            if r.norm_inf() <= 1e-15 * scale {
                return Ok(u);
            }
            let step = self.d_forward_solve(&u, &r)?;
            u.axpy(-1.0, &step);
            if !u.is_finite() {
                break;
            }
            if step.norm_inf() <= 1e-16 * (1.0 + u.norm_inf()) {
                return Ok(u);
            }
        }
        Err(Error::TransformInverse { state: Box::new(ut.clone()) })
    }
}

fn dense_jacobian<L: StateTransform + ?Sized>(l: &L, u: &BlockVec) -> DMatrix<f64> {
    let shape = l.shape();
    let n = shape.len();
    let mut j = DMatrix::zeros(n, n);
    for c in 0..n {
        j.set_column(c, &l.d_forward(u, &BlockVec::unit(shape, c)).flatten());
    }
    j
}

/// `L(u) = A u`
#[derive(Clone, Debug)]
pub struct LinearTransform {
    shape: BlockShape,
    a: DMatrix<f64>,
}

impl LinearTransform {
    pub fn new(shape: BlockShape, a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != shape.len() || a.ncols() != shape.len() {
            return Err(Error::Shape(format!("{}x{} matrix for shape {:?}", a.nrows(), a.ncols(), shape)));
        }
        Ok(Self { shape, a })
    }

    pub fn diagonal(shape: BlockShape, d: &[f64]) -> Result<Self> {
        Self::new(shape, DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }
}

impl StateTransform for LinearTransform {
    fn shape(&self) -> BlockShape {
        self.shape
    }
    fn forward(&self, u: &BlockVec) -> BlockVec {
        BlockVec::from_flat(self.shape, &(&self.a * u.flatten()))
    }
    fn d_forward(&self, _: &BlockVec, v: &BlockVec) -> BlockVec {
        self.forward(v)
    }
    fn d_forward_transpose(&self, _: &BlockVec, w: &BlockVec) -> BlockVec {
        BlockVec::from_flat(self.shape, &self.a.tr_mul(&w.flatten()))
    }
    fn d2_forward(&self, _: &BlockVec, _: &BlockVec, _: &BlockVec) -> BlockVec {
        BlockVec::zeros(self.shape)
    }
    fn d2_forward_transpose(&self, _: &BlockVec, _: &BlockVec, _: &BlockVec) -> BlockVec {
        BlockVec::zeros(self.shape)
    }
    fn inverse(&self, ut: &BlockVec) -> Result<BlockVec> {
        self.d_forward_solve(ut, ut)
    }
}

/// `L_i(u) = (A u)_i + ½ uᵀ Q_i u`
#[derive(Clone, Debug)]
pub struct QuadraticTransform {
    shape: BlockShape,
    a: DMatrix<f64>,
    q: Vec<DMatrix<f64>>,
}

impl QuadraticTransform {
    /// The quadratic forms are symmetrized.
    pub fn new(shape: BlockShape, a: DMatrix<f64>, q: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = shape.len();
        if a.shape() != (n, n) || q.len() != n || q.iter().any(|m| m.shape() != (n, n)) {
            return Err(Error::Shape(format!("quadratic transform data does not match {shape:?}")));
        }
        let q = q.into_iter().map(|m| (&m + m.transpose()) * 0.5).collect();
        Ok(Self { shape, a, q })
    }
}

impl StateTransform for QuadraticTransform {
    fn shape(&self) -> BlockShape {
        self.shape
    }
    fn forward(&self, u: &BlockVec) -> BlockVec {
        let uf = u.flatten();
        let lin = &self.a * &uf;
        let out = DVector::from_fn(uf.len(), |i, _| lin[i] + 0.5 * uf.dot(&(&self.q[i] * &uf)));
        BlockVec::from_flat(self.shape, &out)
    }
    fn d_forward(&self, u: &BlockVec, v: &BlockVec) -> BlockVec {
        let (uf, vf) = (u.flatten(), v.flatten());
        let lin = &self.a * &vf;
        let out = DVector::from_fn(uf.len(), |i, _| lin[i] + uf.dot(&(&self.q[i] * &vf)));
        BlockVec::from_flat(self.shape, &out)
    }
    fn d_forward_transpose(&self, u: &BlockVec, w: &BlockVec) -> BlockVec {
        let (uf, wf) = (u.flatten(), w.flatten());
        let mut out = self.a.tr_mul(&wf);
        for (i, qi) in self.q.iter().enumerate() {
            out.axpy(wf[i], &(qi * &uf), 1.0);
        }
        BlockVec::from_flat(self.shape, &out)
    }
    fn d2_forward(&self, _: &BlockVec, v: &BlockVec, w: &BlockVec) -> BlockVec {
        let (vf, wf) = (v.flatten(), w.flatten());
        let out = DVector::from_fn(vf.len(), |i, _| vf.dot(&(&self.q[i] * &wf)));
        BlockVec::from_flat(self.shape, &out)
    }
    fn d2_forward_transpose(&self, _: &BlockVec, v: &BlockVec, q: &BlockVec) -> BlockVec {
        let (vf, qf) = (v.flatten(), q.flatten());
        let mut out = DVector::zeros(vf.len());
        for (i, qi) in self.q.iter().enumerate() {
            out.axpy(qf[i], &(qi * &vf), 1.0);
        }
        BlockVec::from_flat(self.shape, &out)
    }
}

type ScalarFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// `L(u)_i = g(u_i)` for a scalar bijection `g`.
pub struct ComponentwiseTransform {
    shape: BlockShape,
    g: ScalarFn,
    dg: ScalarFn,
    d2g: ScalarFn,
    g_inv: ScalarFn,
}

impl ComponentwiseTransform {
    pub fn new(
        shape: BlockShape,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dg: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        g_inv: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { shape, g: Box::new(g), dg: Box::new(dg), d2g: Box::new(d2g), g_inv: Box::new(g_inv) }
    }

    /// `L(u) = u³`
    pub fn cube(shape: BlockShape) -> Self {
        Self::new(shape, |u| u * u * u, |u| 3.0 * u * u, |u| 6.0 * u, f64::cbrt)
    }

    fn map(&self, u: &BlockVec, f: impl Fn(usize, f64) -> f64) -> BlockVec {
        let mut out = BlockVec::zeros(self.shape);
        for i in 0..self.shape.len() {
            out.set(i, f(i, u.get(i)));
        }
        out
    }
}

impl StateTransform for ComponentwiseTransform {
    fn shape(&self) -> BlockShape {
        self.shape
    }
    fn forward(&self, u: &BlockVec) -> BlockVec {
        self.map(u, |_, x| (self.g)(x))
    }
    fn d_forward(&self, u: &BlockVec, v: &BlockVec) -> BlockVec {
        self.map(u, |i, x| (self.dg)(x) * v.get(i))
    }
    fn d_forward_transpose(&self, u: &BlockVec, w: &BlockVec) -> BlockVec {
        self.d_forward(u, w)
    }
    fn d2_forward(&self, u: &BlockVec, v: &BlockVec, w: &BlockVec) -> BlockVec {
        self.map(u, |i, x| (self.d2g)(x) * v.get(i) * w.get(i))
    }
    fn d2_forward_transpose(&self, u: &BlockVec, v: &BlockVec, q: &BlockVec) -> BlockVec {
        self.d2_forward(u, v, q)
    }
    fn d_forward_solve(&self, u: &BlockVec, v: &BlockVec) -> Result<BlockVec> {
        let out = self.map(u, |i, x| v.get(i) / (self.dg)(x));
        if out.is_finite() {
            Ok(out)
        } else {
            Err(Error::Singular { pivot: 0 })
        }
    }
    fn d_forward_solve_transpose(&self, u: &BlockVec, w: &BlockVec) -> Result<BlockVec> {
        self.d_forward_solve(u, w)
    }
    fn inverse(&self, ut: &BlockVec) -> Result<BlockVec> {
        let u = self.map(ut, |_, x| (self.g_inv)(x));
        if u.is_finite() {
            Ok(u)
        } else {
            Err(Error::TransformInverse { state: Box::new(ut.clone()) })
        }
    }
}

/// Dynamics of `ũ = L(u)`: `F̃(ũ1; ũ2) = DL(u2) f(u1; u2)` with `u_k = L^{-1}(ũ_k)`.
pub struct TransformedField<'a, L: StateTransform, F: PartitionedField> {
    transform: &'a L,
    field: &'a F,
}

pub fn transform_state_dynamics<'a, L: StateTransform, F: PartitionedField>(
    transform: &'a L,
    field: &'a F,
) -> Result<TransformedField<'a, L, F>> {
    if transform.shape() != field.shape() {
        return Err(Error::Shape(format!("transform {:?} vs field {:?}", transform.shape(), field.shape())));
    }
    Ok(TransformedField { transform, field })
}

impl<L: StateTransform, F: PartitionedField> TransformedField<'_, L, F> {
    fn originals(&self, a: FieldArgs) -> Result<(BlockVec, BlockVec)> {
        Ok((self.transform.inverse(a.u1)?, self.transform.inverse(a.u2)?))
    }

    fn inner_value(&self, a: FieldArgs, u1: &BlockVec, u2: &BlockVec) -> Result<BlockVec> {
        let v = self.field.value(FieldArgs::new(a.t1, u1, a.t2, u2))?;
        Ok(match self.field.mass() {
            Some(m) => m.solve(&v),
            None => v,
        })
    }

    fn mass_solve(&self, v: BlockVec) -> BlockVec {
        match self.field.mass() {
            Some(m) => m.solve(&v),
            None => v,
        }
    }

    fn mass_solve_t(&self, v: &BlockVec) -> BlockVec {
        match self.field.mass() {
            Some(m) => m.solve_transpose(v),
            None => v.clone(),
        }
    }
}

impl<L: StateTransform, F: PartitionedField> PartitionedField for TransformedField<'_, L, F> {
    fn shape(&self) -> BlockShape {
        self.field.shape()
    }

    fn value(&self, a: FieldArgs) -> Result<BlockVec> {
        let (u1, u2) = self.originals(a)?;
        let f = self.inner_value(a, &u1, &u2)?;
        Ok(self.transform.d_forward(&u2, &f))
    }

    fn jvp_slot1(&self, a: FieldArgs, du: &BlockVec) -> Result<BlockVec> {
        let (u1, u2) = self.originals(a)?;
        let w = self.transform.d_forward_solve(&u1, du)?;
        let inner = self.mass_solve(self.field.jvp_slot1(FieldArgs::new(a.t1, &u1, a.t2, &u2), &w)?);
        Ok(self.transform.d_forward(&u2, &inner))
    }

    fn jvp_slot2(&self, a: FieldArgs, du: &BlockVec) -> Result<BlockVec> {
        let (u1, u2) = self.originals(a)?;
        let w = self.transform.d_forward_solve(&u2, du)?;
        let inner = self.mass_solve(self.field.jvp_slot2(FieldArgs::new(a.t1, &u1, a.t2, &u2), &w)?);
        let f = self.inner_value(a, &u1, &u2)?;
        Ok(self.transform.d_forward(&u2, &inner) + self.transform.d2_forward(&u2, &f, &w))
    }

    fn vjp_slot1(&self, a: FieldArgs, q: &BlockVec) -> Result<BlockVec> {
        let (u1, u2) = self.originals(a)?;
        let r = self.mass_solve_t(&self.transform.d_forward_transpose(&u2, q));
        let s = self.field.vjp_slot1(FieldArgs::new(a.t1, &u1, a.t2, &u2), &r)?;
        self.transform.d_forward_solve_transpose(&u1, &s)
    }

    fn vjp_slot2(&self, a: FieldArgs, q: &BlockVec) -> Result<BlockVec> {
        let (u1, u2) = self.originals(a)?;
        let r = self.mass_solve_t(&self.transform.d_forward_transpose(&u2, q));
        let s = self.field.vjp_slot2(FieldArgs::new(a.t1, &u1, a.t2, &u2), &r)?;
        let f = self.inner_value(a, &u1, &u2)?;
        let c = self.transform.d2_forward_transpose(&u2, &f, q);
        self.transform.d_forward_solve_transpose(&u2, &(s + c))
    }

    fn block_names(&self) -> (&str, &str) {
        self.field.block_names()
    }
}

/// Adjoint right-hand side for the transformed state `ũ = L(u)`:
/// `-(DL^{-1})^T [Df]^T (DL)^T p̃ - (DL^{-1})^T (D²L(u) f)^T p̃`.
pub fn state_transform_adjoint_rhs(
    transform: &impl StateTransform,
    field: &impl PartitionedField,
    t: f64,
    ut: &BlockVec,
    pt: &BlockVec,
) -> Result<BlockVec> {
    let u = transform.inverse(ut)?;
    let f = rate(field, t, &u)?;
    let a = rate_vjp(field, t, &u, &transform.d_forward_transpose(&u, pt))?;
    let b = transform.d2_forward_transpose(&u, &f, pt);
    Ok(-transform.d_forward_solve_transpose(&u, &(a + b))?)
}
