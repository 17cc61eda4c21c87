//! Adjoint gradients, descent steps and the projected inverse-problem loop.

mod inverse;
mod projection;

pub use inverse::{run_inverse_problem, run_scale_sweep, DescentConfig, ScaleSweep, SweepEntry, InverseOutcome, InverseProblem, InverseResult, IterateRecord};
pub use projection::{constraint, project, project_e_coordinate, project_orthogonal, Projected, Projection};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::adjoint::PartitionedField;
use crate::blockla::BlockVec;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::precond::PairingMap;
use crate::timeint::{integrate_adjoint, integrate_forward, AdjointScheme, StepConfig, Trajectory};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostParts {
    pub x: f64,
    pub y: f64,
}

impl CostParts {
    pub fn total(&self) -> f64 {
        self.x + self.y
    }
}

pub trait TerminalCost: Sync {
    fn evaluate(&self, u: &BlockVec) -> CostParts;

    /// Gradient `DC(u)` with respect to the state coordinates.
    fn derivative(&self, u: &BlockVec) -> BlockVec;

    /// `C(a) - C(b)`. Costs with a large offset should override this to
    /// avoid cancellation between two nearly equal totals.
    fn difference(&self, a: &BlockVec, b: &BlockVec) -> f64 {
        self.evaluate(a).total() - self.evaluate(b).total()
    }
}

/// `C = ½ (x - x*)ᵀ W_x (x - x*) + ½ (y - y*)ᵀ W_y (y - y*)` with diagonal weights.
#[derive(Clone, Debug)]
pub struct WeightedL2Cost {
    pub target: BlockVec,
    pub wx: DVector<f64>,
    pub wy: DVector<f64>,
}

impl WeightedL2Cost {
    pub fn new(target: BlockVec, wx: DVector<f64>, wy: DVector<f64>) -> Result<Self> {
        if wx.len() != target.x.len() || wy.len() != target.y.len() {
            return Err(Error::Shape("cost weights do not match the target".into()));
        }
        Ok(Self { target, wx, wy })
    }

    pub fn unweighted(target: BlockVec) -> Self {
        let s = target.shape();
        Self { target, wx: DVector::from_element(s.nx, 1.0), wy: DVector::from_element(s.ny, 1.0) }
    }
}

impl TerminalCost for WeightedL2Cost {
    fn evaluate(&self, u: &BlockVec) -> CostParts {
        let d = u - &self.target;
        CostParts { x: 0.5 * d.x.component_mul(&d.x).dot(&self.wx), y: 0.5 * d.y.component_mul(&d.y).dot(&self.wy) }
    }

    fn derivative(&self, u: &BlockVec) -> BlockVec {
        let d = u - &self.target;
        BlockVec::new(d.x.component_mul(&self.wx), d.y.component_mul(&self.wy))
    }

    // ½ Σ w (a - b)(a + b - 2 t), which never forms either total
    fn difference(&self, a: &BlockVec, b: &BlockVec) -> f64 {
        let half = |a: &DVector<f64>, b: &DVector<f64>, t: &DVector<f64>, w: &DVector<f64>| {
            (0..a.len()).map(|i| 0.5 * w[i] * (a[i] - b[i]) * ((a[i] - t[i]) + (b[i] - t[i]))).sum::<f64>()
        };
        half(&a.x, &b.x, &self.target.x, &self.wx) + half(&a.y, &b.y, &self.target.y, &self.wy)
    }
}

/// Terminal cost of the radiation model: the `E` misfit weighted by the
/// radiation mass `Δx I` and the `T` misfit by the unit-coefficient mass `Δx I`.
pub fn radiation_terminal_cost(config: &crate::radiff::RadDiffConfig, target: BlockVec) -> Result<WeightedL2Cost> {
    let w = DVector::from_element(config.n, config.dx());
    WeightedL2Cost::new(target, w.clone(), w)
}

#[derive(Clone, Debug)]
pub struct Gradient {
    /// `ξ(0)`, or `p(0)` without a pairing.
    pub xi: BlockVec,
    pub cost: CostParts,
    pub trajectory: Trajectory,
}

/// Forward solve, terminal cost, and induced backward sweep from `ξ(T) = P^{-T} DC`.
pub fn adjoint_gradient(
    field: &impl PartitionedField,
    cost: &dyn TerminalCost,
    u0: &BlockVec,
    t_final: f64,
    cfg: &StepConfig,
    precond: Option<&PairingMap>,
) -> Result<Gradient> {
    let trajectory = integrate_forward(field, u0, t_final, cfg)?;
    gradient_from_trajectory(field, cost, trajectory, cfg, precond)
}

pub fn gradient_from_trajectory(
    field: &impl PartitionedField,
    cost: &dyn TerminalCost,
    trajectory: Trajectory,
    cfg: &StepConfig,
    precond: Option<&PairingMap>,
) -> Result<Gradient> {
    let uk = trajectory.final_state();
    let value = cost.evaluate(uk);
    let dc = cost.derivative(uk);
    let costates = integrate_adjoint(field, &trajectory, &dc, cfg, AdjointScheme::Induced, precond)?;
    let xi = costates.into_iter().next().expect("at least the terminal costate");
    Ok(Gradient { xi, cost: value, trajectory })
}

/// `u - γ g`
pub fn gd_step(u: &BlockVec, g: &BlockVec, gamma: f64) -> BlockVec {
    let mut out = u.clone();
    out.axpy(-gamma, g);
    out
}

/// Mirror map `F` with inverse, for steps `F^{-1}(F(u) - γ g)`.
pub trait MirrorMap {
    fn forward(&self, u: &BlockVec) -> BlockVec;
    fn inverse(&self, v: &BlockVec) -> BlockVec;
}

/// `F(u) = ln u` componentwise.
pub struct LogMirror;

impl MirrorMap for LogMirror {
    fn forward(&self, u: &BlockVec) -> BlockVec {
        BlockVec::new(u.x.map(f64::ln), u.y.map(f64::ln))
    }
    fn inverse(&self, v: &BlockVec) -> BlockVec {
        BlockVec::new(v.x.map(f64::exp), v.y.map(f64::exp))
    }
}

pub fn mirror_descent_step(map: &impl MirrorMap, u: &BlockVec, g: &BlockVec, gamma: f64) -> BlockVec {
    map.inverse(&gd_step(&map.forward(u), g, gamma))
}

/// Central finite-difference derivative of `u0 -> C(u_K(u0))` along the
/// global coordinate `index`, with step `h`.
pub fn fd_coordinate_derivative(
    field: &impl PartitionedField,
    cost: &dyn TerminalCost,
    u0: &BlockVec,
    t_final: f64,
    cfg: &StepConfig,
    index: usize,
    h: f64,
) -> Result<f64> {
    let run = |delta: f64| -> Result<BlockVec> {
        let mut u = u0.clone();
        u.set(index, u.get(index) + delta);
        Ok(integrate_forward(field, &u, t_final, cfg)?.final_state().clone())
    };
    Ok(cost.difference(&run(h)?, &run(-h)?) / (2.0 * h))
}

/// One coordinate of a gradient check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionCheck {
    pub index: usize,
    pub adjoint: f64,
    pub fd: f64,
    /// `|adjoint - fd| / ‖∇C‖∞`
    pub rel_err: f64,
    /// `|adjoint - fd| / max(|adjoint|, |fd|)`
    pub rel_err_component: f64,
}

/// Compares the adjoint gradient against central differences along the
/// given coordinates. The step for coordinate `i` is `rel_step * |u0_i|`
/// (or `rel_step` for a zero entry).
///
/// The error is measured against the largest gradient entry. On stiff
/// problems whose states span many orders of magnitude some coordinates
/// move `u_K` by less than one ulp of the entries they touch, so their
/// central difference is blind to part of an exact derivative and a
/// componentwise ratio says nothing about the adjoint.
pub fn gradient_check(
    field: &impl PartitionedField,
    cost: &dyn TerminalCost,
    u0: &BlockVec,
    t_final: f64,
    cfg: &StepConfig,
    indices: &[usize],
    rel_step: f64,
    exec: Exec,
) -> Result<Vec<DirectionCheck>> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= u0.shape().len()) {
        return Err(Error::Shape(format!("coordinate {bad} outside a state of length {}", u0.shape().len())));
    }
    let g = adjoint_gradient(field, cost, u0, t_final, cfg, None)?;
    let scale = g.xi.norm_inf();
    let checks = exec.map(indices, |&index| -> Result<DirectionCheck> {
        let v = u0.get(index);
        let h = if v == 0.0 { rel_step } else { rel_step * v.abs() };
        let fd = fd_coordinate_derivative(field, cost, u0, t_final, cfg, index, h)?;
        let adjoint = g.xi.get(index);
        let ratio = |d: f64| if d == 0.0 { 0.0 } else { (adjoint - fd).abs() / d };
        Ok(DirectionCheck {
            index,
            adjoint,
            fd,
            rel_err: ratio(scale.max(fd.abs())),
            rel_err_component: ratio(adjoint.abs().max(fd.abs())),
        })
    });
    checks.into_iter().collect()
}
