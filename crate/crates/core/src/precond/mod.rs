//! Preconditioned adjoint systems.
//!
//! A pairing `P` replaces the Euclidean duality `<p, δu>` by `<ξ, P δu>`.
//! The adjoint variable in the new pairing is `ξ = P^{-T} p`, which for a
//! constant `P` satisfies
//!
//! ```text
//! dξ/dt = -P^{-T} [Df]^T P^T ξ
//! ```
//!
//! and for a state-dependent `P(u)` picks up the extra term
//! `-P^{-T} [DP(u) f]^T ξ`, which is the Christoffel contraction of the
//! induced covariant derivative. The same machinery covers changes of state
//! variables `ũ = L(u)` and mass-matrix systems `M du/dt = F`.

mod fiber;
mod pairing;
mod transform;

pub use fiber::{christoffel, Christoffel, ConstantFiber, DiagonalFiber, FiberPairing, CHRISTOFFEL_DENSE_LIMIT};
pub use pairing::{build_scale_preconditioner, PairingMap};
pub use transform::{
    state_transform_adjoint_rhs, transform_state_dynamics, ComponentwiseTransform, LinearTransform, QuadraticTransform,
    StateTransform, TransformedField,
};

use crate::adjoint::{rate, rate_vjp, FieldArgs, PartitionedField};
use crate::blockla::{BlockOp, BlockShape, BlockVec};
use crate::error::{Error, Result};

/// `dξ/dt = -P^{-T} [Df]^T P^T ξ`
pub fn pairing_precondition_adjoint_rhs(
    p: &PairingMap,
    field: &impl PartitionedField,
    t: f64,
    u: &BlockVec,
    xi: &BlockVec,
) -> Result<BlockVec> {
    let r = rate_vjp(field, t, u, &p.apply_transpose(xi))?;
    Ok(-p.solve_transpose(&r))
}

/// `dξ/dt = -P(u)^{-T} [Df]^T P(u)^T ξ - P(u)^{-T} [DP(u) f]^T ξ`
pub fn fiberwise_precondition_adjoint_rhs(
    fiber: &impl FiberPairing,
    field: &impl PartitionedField,
    t: f64,
    u: &BlockVec,
    xi: &BlockVec,
) -> Result<BlockVec> {
    let p = fiber.p_at(u)?;
    let f = rate(field, t, u)?;
    let a = rate_vjp(field, t, u, &p.apply_transpose(xi))?;
    let b = fiber.dp_action_transpose(u, &f, xi);
    Ok(-p.solve_transpose(&(a + b)))
}

/// `Dξ/Dt + [Df]^{*P} ξ` with `(Dξ/Dt)_ν = dξ_ν/dt + Γ^β_{νγ} f^γ ξ_β`.
///
/// Vanishes along solutions of the fiberwise preconditioned adjoint equation.
pub fn covariant_adjoint_residual(
    fiber: &impl FiberPairing,
    field: &impl PartitionedField,
    t: f64,
    u: &BlockVec,
    xi: &BlockVec,
    dxi_dt: &BlockVec,
) -> Result<BlockVec> {
    let p = fiber.p_at(u)?;
    let f = rate(field, t, u)?;
    let connection = match christoffel(fiber, u) {
        Ok(gamma) => BlockVec::from_flat(u.shape(), &gamma.contract(&f.flatten(), &xi.flatten())),
        Err(Error::DimensionTooLarge { .. }) => p.solve_transpose(&fiber.dp_action_transpose(u, &f, xi)),
        Err(e) => return Err(e),
    };
    let pullback = p.solve_transpose(&rate_vjp(field, t, u, &p.apply_transpose(xi))?);
    Ok(dxi_dt + &connection + pullback)
}

/// `ξ(T) = P^{-T} DC(u(T))`
pub fn preconditioned_terminal(p: &PairingMap, dc: &BlockVec) -> BlockVec {
    p.solve_transpose(dc)
}

/// `ξ(T) = P(u(T))^{-T} DC(u(T))`
pub fn fiberwise_terminal(fiber: &impl FiberPairing, u_final: &BlockVec, dc: &BlockVec) -> Result<BlockVec> {
    Ok(fiber.p_at(u_final)?.solve_transpose(dc))
}

/// `M du/dt = F(u)` together with its adjoint `M^T dp̃/dt = -[DF]^T p̃`.
///
/// As a [`PartitionedField`] it exposes `F` with mass `M`, so it can be
/// handed directly to the time integrator.
pub struct MassMatrixSystem<F: PartitionedField> {
    mass: PairingMap,
    field: F,
}

pub fn mass_matrix_adjoint_system<F: PartitionedField>(mass: PairingMap, field: F) -> Result<MassMatrixSystem<F>> {
    if mass.shape() != field.shape() {
        return Err(Error::Shape(format!("mass {:?} vs field {:?}", mass.shape(), field.shape())));
    }
    Ok(MassMatrixSystem { mass, field })
}

impl<F: PartitionedField> MassMatrixSystem<F> {
    pub fn mass_map(&self) -> &PairingMap {
        &self.mass
    }

    pub fn inner(&self) -> &F {
        &self.field
    }

    /// `du/dt = M^{-1} F(u)`
    pub fn state_rate(&self, t: f64, u: &BlockVec) -> Result<BlockVec> {
        Ok(self.mass.solve(&self.field.value(FieldArgs::diagonal(t, u))?))
    }

    /// `dp̃/dt = -M^{-T} [DF]^T p̃`
    pub fn adjoint_rate(&self, t: f64, u: &BlockVec, pt: &BlockVec) -> Result<BlockVec> {
        let a = FieldArgs::diagonal(t, u);
        let r = self.field.vjp_slot1(a, pt)? + self.field.vjp_slot2(a, pt)?;
        Ok(-self.mass.solve_transpose(&r))
    }
}

impl<F: PartitionedField> PartitionedField for MassMatrixSystem<F> {
    fn shape(&self) -> BlockShape {
        self.field.shape()
    }
    fn value(&self, a: FieldArgs) -> Result<BlockVec> {
        self.field.value(a)
    }
    fn jvp_slot1(&self, a: FieldArgs, du: &BlockVec) -> Result<BlockVec> {
        self.field.jvp_slot1(a, du)
    }
    fn jvp_slot2(&self, a: FieldArgs, du: &BlockVec) -> Result<BlockVec> {
        self.field.jvp_slot2(a, du)
    }
    fn vjp_slot1(&self, a: FieldArgs, w: &BlockVec) -> Result<BlockVec> {
        self.field.vjp_slot1(a, w)
    }
    fn vjp_slot2(&self, a: FieldArgs, w: &BlockVec) -> Result<BlockVec> {
        self.field.vjp_slot2(a, w)
    }
    fn jacobian_slot1(&self, a: FieldArgs) -> Result<BlockOp> {
        self.field.jacobian_slot1(a)
    }
    fn jacobian_slot2(&self, a: FieldArgs) -> Result<BlockOp> {
        self.field.jacobian_slot2(a)
    }
    fn mass(&self) -> Option<&PairingMap> {
        Some(&self.mass)
    }
    fn block_names(&self) -> (&str, &str) {
        self.field.block_names()
    }
}
