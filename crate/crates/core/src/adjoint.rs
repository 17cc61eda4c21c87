//! Partitioned vector fields `F(t1, u1; t2, u2)` and the continuous adjoint
//! relations built on them.
//!
//! Slot 1 holds the arguments treated explicitly by the semi-implicit
//! integrator and slot 2 those treated implicitly. The field reduces to the
//! ordinary vector field on the diagonal `u1 = u2`. A field may carry a mass
//! operator `M`, in which case the dynamics read `M du/dt = F`.

use crate::blockla::{BlockOp, BlockShape, BlockVec};
use crate::error::Result;
use crate::precond::PairingMap;

/// Arguments of a partitioned field evaluation.
#[derive(Clone, Copy, Debug)]
pub struct FieldArgs<'a> {
    pub t1: f64,
    pub u1: &'a BlockVec,
    pub t2: f64,
    pub u2: &'a BlockVec,
}

impl<'a> FieldArgs<'a> {
    pub fn new(t1: f64, u1: &'a BlockVec, t2: f64, u2: &'a BlockVec) -> Self {
        Self { t1, u1, t2, u2 }
    }

    pub fn diagonal(t: f64, u: &'a BlockVec) -> Self {
        Self::new(t, u, t, u)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Explicit,
    Implicit,
}

pub trait PartitionedField: Sync {
    fn shape(&self) -> BlockShape;

    fn value(&self, a: FieldArgs) -> Result<BlockVec>;

    /// `D_{u1} F · du`
    fn jvp_slot1(&self, a: FieldArgs, du: &BlockVec) -> Result<BlockVec>;

    /// `D_{u2} F · du`
    fn jvp_slot2(&self, a: FieldArgs, du: &BlockVec) -> Result<BlockVec>;

    /// `(D_{u1} F)^T · w`
    fn vjp_slot1(&self, a: FieldArgs, w: &BlockVec) -> Result<BlockVec>;

    /// `(D_{u2} F)^T · w`
    fn vjp_slot2(&self, a: FieldArgs, w: &BlockVec) -> Result<BlockVec>;

    /// Assembled `D_{u1} F`. The default builds it densely from `jvp_slot1`.
    fn jacobian_slot1(&self, a: FieldArgs) -> Result<BlockOp> {
        BlockOp::from_action(self.shape(), |e| self.jvp_slot1(a, e))
    }

    /// Assembled `D_{u2} F`, used for the Newton operator.
    fn jacobian_slot2(&self, a: FieldArgs) -> Result<BlockOp> {
        BlockOp::from_action(self.shape(), |e| self.jvp_slot2(a, e))
    }

    fn mass(&self) -> Option<&PairingMap> {
        None
    }

    fn block_names(&self) -> (&str, &str) {
        ("x", "y")
    }
}

impl<F: PartitionedField + ?Sized> PartitionedField for &F {
    fn shape(&self) -> BlockShape {
        (**self).shape()
    }
    fn value(&self, a: FieldArgs) -> Result<BlockVec> {
        (**self).value(a)
    }
    fn jvp_slot1(&self, a: FieldArgs, du: &BlockVec) -> Result<BlockVec> {
        (**self).jvp_slot1(a, du)
    }
    fn jvp_slot2(&self, a: FieldArgs, du: &BlockVec) -> Result<BlockVec> {
        (**self).jvp_slot2(a, du)
    }
    fn vjp_slot1(&self, a: FieldArgs, w: &BlockVec) -> Result<BlockVec> {
        (**self).vjp_slot1(a, w)
    }
    fn vjp_slot2(&self, a: FieldArgs, w: &BlockVec) -> Result<BlockVec> {
        (**self).vjp_slot2(a, w)
    }
    fn jacobian_slot1(&self, a: FieldArgs) -> Result<BlockOp> {
        (**self).jacobian_slot1(a)
    }
    fn jacobian_slot2(&self, a: FieldArgs) -> Result<BlockOp> {
        (**self).jacobian_slot2(a)
    }
    fn mass(&self) -> Option<&PairingMap> {
        (**self).mass()
    }
    fn block_names(&self) -> (&str, &str) {
        (**self).block_names()
    }
}

/// `F(t1, u1; t2, u2) = A1 u1 + A2 u2`.
#[derive(Clone, Debug)]
pub struct LinearField {
    pub a1: BlockOp,
    pub a2: BlockOp,
}

impl LinearField {
    pub fn new(a1: BlockOp, a2: BlockOp) -> Self {
        assert_eq!(a1.shape(), a2.shape());
        Self { a1, a2 }
    }

    /// `du/dt = A u` with every term taken implicitly.
    pub fn implicit(a: BlockOp) -> Self {
        let z = BlockOp::zeros(a.shape());
        Self::new(z, a)
    }

    pub fn explicit(a: BlockOp) -> Self {
        let z = BlockOp::zeros(a.shape());
        Self::new(a, z)
    }
}

impl PartitionedField for LinearField {
    fn shape(&self) -> BlockShape {
        self.a1.shape()
    }
    fn value(&self, a: FieldArgs) -> Result<BlockVec> {
        Ok(self.a1.apply(a.u1) + self.a2.apply(a.u2))
    }
    fn jvp_slot1(&self, _: FieldArgs, du: &BlockVec) -> Result<BlockVec> {
        Ok(self.a1.apply(du))
    }
    fn jvp_slot2(&self, _: FieldArgs, du: &BlockVec) -> Result<BlockVec> {
        Ok(self.a2.apply(du))
    }
    fn vjp_slot1(&self, _: FieldArgs, w: &BlockVec) -> Result<BlockVec> {
        Ok(self.a1.apply_transpose(w))
    }
    fn vjp_slot2(&self, _: FieldArgs, w: &BlockVec) -> Result<BlockVec> {
        Ok(self.a2.apply_transpose(w))
    }
    fn jacobian_slot1(&self, _: FieldArgs) -> Result<BlockOp> {
        Ok(self.a1.clone())
    }
    fn jacobian_slot2(&self, _: FieldArgs) -> Result<BlockOp> {
        Ok(self.a2.clone())
    }
}

/// `du/dt = f(t, u)`, i.e. `M^{-1} F` on the diagonal.
pub fn rate(field: &impl PartitionedField, t: f64, u: &BlockVec) -> Result<BlockVec> {
    let v = field.value(FieldArgs::diagonal(t, u))?;
    match field.mass() {
        Some(m) => Ok(m.solve(&v)),
        None => Ok(v),
    }
}

/// `Df · du` on the diagonal (both slots).
pub fn rate_jvp(field: &impl PartitionedField, t: f64, u: &BlockVec, du: &BlockVec) -> Result<BlockVec> {
    let a = FieldArgs::diagonal(t, u);
    let v = field.jvp_slot1(a, du)? + field.jvp_slot2(a, du)?;
    match field.mass() {
        Some(m) => Ok(m.solve(&v)),
        None => Ok(v),
    }
}

/// `(Df)^T · w` on the diagonal (both slots).
pub fn rate_vjp(field: &impl PartitionedField, t: f64, u: &BlockVec, w: &BlockVec) -> Result<BlockVec> {
    let a = FieldArgs::diagonal(t, u);
    let q = match field.mass() {
        Some(m) => m.solve_transpose(w),
        None => w.clone(),
    };
    Ok(field.vjp_slot1(a, &q)? + field.vjp_slot2(a, &q)?)
}

/// Right-hand side of the canonical adjoint equation `dp/dt = -(Df)^T p`.
pub fn canonical_adjoint_rhs(field: &impl PartitionedField, t: f64, u: &BlockVec, p: &BlockVec) -> Result<BlockVec> {
    Ok(-rate_vjp(field, t, u, p)?)
}

/// Right-hand side of the variational equation `d(δu)/dt = Df δu`.
pub fn variational_rhs(field: &impl PartitionedField, t: f64, u: &BlockVec, du: &BlockVec) -> Result<BlockVec> {
    rate_jvp(field, t, u, du)
}

/// `<p_n, δu_n>_P - <p_0, δu_0>_P` for each index of paired series.
pub fn pairing_drift(p: &[BlockVec], du: &[BlockVec], pairing: Option<&PairingMap>) -> Vec<f64> {
    assert_eq!(p.len(), du.len(), "series lengths differ");
    let pair = |p: &BlockVec, d: &BlockVec| match pairing {
        Some(m) => p.dot(&m.apply(d)),
        None => p.dot(d),
    };
    let Some(first) = p.first().map(|p0| pair(p0, &du[0])) else {
        return Vec::new();
    };
    p.iter().zip(du).map(|(p, d)| pair(p, d) - first).collect()
}

/// Finite-difference checks of a field's derivative methods.
pub mod check {
    use super::*;

    /// Central-difference step `eps * (1 + |u|_inf) / |du|_inf`.
    pub fn fd_step(eps: f64, u: &BlockVec, du: &BlockVec) -> f64 {
        let d = du.norm_inf();
        if d == 0.0 {
            eps
        } else {
            eps * (1.0 + u.norm_inf()) / d
        }
    }

    /// Central difference of the field along `du` in one slot.
    pub fn fd_jvp(field: &impl PartitionedField, a: FieldArgs, slot: Slot, du: &BlockVec, eps: f64) -> Result<BlockVec> {
        let base = match slot {
            Slot::Explicit => a.u1,
            Slot::Implicit => a.u2,
        };
        let h = fd_step(eps, base, du);
        let plus = base + &du.scaled(h);
        let minus = base - &du.scaled(h);
        let eval = |v: &BlockVec| match slot {
            Slot::Explicit => field.value(FieldArgs::new(a.t1, v, a.t2, a.u2)),
            Slot::Implicit => field.value(FieldArgs::new(a.t1, a.u1, a.t2, v)),
        };
        Ok((eval(&plus)? - eval(&minus)?).scaled(0.5 / h))
    }

    /// Relative mismatch `|<w, J du> - <J^T w, du>| / (|<w, J du>| + floor)`.
    pub fn adjoint_consistency(field: &impl PartitionedField, a: FieldArgs, slot: Slot, du: &BlockVec, w: &BlockVec) -> Result<f64> {
        let (jv, vj) = match slot {
            Slot::Explicit => (field.jvp_slot1(a, du)?, field.vjp_slot1(a, w)?),
            Slot::Implicit => (field.jvp_slot2(a, du)?, field.vjp_slot2(a, w)?),
        };
        let lhs = w.dot(&jv);
        let rhs = vj.dot(du);
        let scale = w.x.abs().dot(&jv.x.abs()) + w.y.abs().dot(&jv.y.abs());
        Ok((lhs - rhs).abs() / scale.max(1e-300))
    }
}
