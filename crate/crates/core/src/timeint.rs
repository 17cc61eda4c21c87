//! First-order semi-implicit Euler integration of partitioned fields and the
//! discrete adjoint it induces.
//!
//! One forward step solves
//!
//! ```text
//! M (u_{n+1} - u_n) = Δt F(t_n, u_n; t_{n+1}, u_{n+1})
//! ```
//!
//! by Newton's method with Jacobian `N = M - Δt D_{u2}F`. Linearizing the step
//! at the converged pair gives `N δu_{n+1} = (M + Δt D_{u1}F) δu_n`, and the
//! induced adjoint step is its exact transpose,
//!
//! ```text
//! N^T q = p_{n+1},    p_n = (M + Δt D_{u1}F)^T q,
//! ```
//!
//! so `<p_n, δu_n>` is constant in `n` up to round-off. The naive scheme
//! applies the semi-implicit step to the continuous adjoint equation instead
//! and only conserves the pairing to first order.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adjoint::{FieldArgs, PartitionedField};
use crate::blockla::{BlockOp, BlockVec, SchurFactors};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::precond::PairingMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LinearSolver {
    #[default]
    Banded,
    Dense,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepConfig {
    pub dt: f64,
    /// Scaled residual at which Newton stops. Zero iterates until the
    /// update stalls at round-off, which makes the step map as smooth as
    /// the arithmetic allows (useful for finite-difference checks).
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub solver: LinearSolver,
}

impl StepConfig {
    pub fn new(dt: f64) -> Self {
        Self { dt, newton_tol: 1e-10, newton_max_iter: 25, solver: LinearSolver::Banded }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.newton_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.newton_tol >= 0.0) || self.newton_max_iter == 0 {
            return Err(Error::InvalidParameter("Newton tolerance must be nonnegative and the iteration limit positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdjointScheme {
    Induced,
    Naive,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: BlockVec,
    pub iterations: usize,
    pub residual: f64,
}

fn mass_op(field: &impl PartitionedField) -> BlockOp {
    match field.mass() {
        Some(m) => m.op().clone(),
        None => BlockOp::identity(field.shape()),
    }
}

fn apply_mass(field: &impl PartitionedField, v: &BlockVec) -> BlockVec {
    match field.mass() {
        Some(m) => m.apply(v),
        None => v.clone(),
    }
}

/// `N = M - Δt D_{u2}F` at the given arguments.
pub fn newton_operator(field: &impl PartitionedField, a: FieldArgs, cfg: &StepConfig) -> Result<BlockOp> {
    let n = BlockOp::lincomb(1.0, &mass_op(field), -cfg.dt, &field.jacobian_slot2(a)?);
    Ok(match cfg.solver {
        LinearSolver::Banded => n,
        LinearSolver::Dense => n.densified(),
    })
}

fn factor_at(field: &impl PartitionedField, a: FieldArgs, cfg: &StepConfig) -> Result<SchurFactors> {
    let n = newton_operator(field, a, cfg)?;
    SchurFactors::new(&n).map_err(|e| Error::SolveAt { t: a.t2, state: Box::new(a.u2.clone()), source: Box::new(e) })
}

/// Blockwise scaled residual `max_b |G_b|_inf / (1 + |(M u_n)_b|_inf)`.
fn scaled_residual(g: &BlockVec, mu: &BlockVec) -> f64 {
    let rx = g.x.amax() / (1.0 + mu.x.amax());
    let ry = g.y.amax() / (1.0 + mu.y.amax());
    rx.max(ry)
}

/// One semi-implicit Euler step from `(t_n, u_n)`.
///
/// Newton starts from `u_n` and stops once the blockwise scaled residual is
/// below `newton_tol`, or once the update has stalled at round-off level.
pub fn semi_implicit_step(field: &impl PartitionedField, t_n: f64, u_n: &BlockVec, cfg: &StepConfig) -> Result<StepOutcome> {
    cfg.validate()?;
    let t_np1 = t_n + cfg.dt;
    let mu_n = apply_mass(field, u_n);
    let mut v = u_n.clone();
    let mut history = Vec::new();
    let mut stalled = false;
    for iter in 0..=cfg.newton_max_iter {
        let a = FieldArgs::new(t_n, u_n, t_np1, &v);
        let f = field.value(a)?;
        let g = &(&apply_mass(field, &v) - &mu_n) - &f.scaled(cfg.dt);
        let r = scaled_residual(&g, &mu_n);
        history.push(r);
        if !r.is_finite() {
            break;
        }
        if r <= cfg.newton_tol || stalled {
            return Ok(StepOutcome { state: v, iterations: iter, residual: r });
        }
        if iter == cfg.newton_max_iter {
            break;
        }
        let delta = factor_at(field, a, cfg)?.solve(&(-g));
        stalled = stalled_update(&delta, &v);
        v.axpy(1.0, &delta);
    }
    Err(Error::NewtonDiverged { t: t_np1, iterations: cfg.newton_max_iter, history, state: Box::new(u_n.clone()) })
}

fn stalled_update(delta: &BlockVec, v: &BlockVec) -> bool {
    let tiny = |d: &nalgebra::DVector<f64>, x: &nalgebra::DVector<f64>| d.amax() <= 8.0 * f64::EPSILON * x.amax();
    tiny(&delta.x, &v.x) && tiny(&delta.y, &v.y)
}

/// Forward trajectory with per-step Newton statistics.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<BlockVec>,
    pub newton_iterations: Vec<usize>,
    pub newton_residuals: Vec<f64>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn final_state(&self) -> &BlockVec {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn max_newton_iterations(&self) -> usize {
        self.newton_iterations.iter().copied().max().unwrap_or(0)
    }

    pub fn mean_newton_iterations(&self) -> f64 {
        if self.newton_iterations.is_empty() {
            0.0
        } else {
            self.newton_iterations.iter().sum::<usize>() as f64 / self.newton_iterations.len() as f64
        }
    }

    pub fn max_newton_residual(&self) -> f64 {
        self.newton_residuals.iter().fold(0.0f64, |m, r| m.max(*r))
    }

    /// Writes `t_s,<x>_0,...,<y>_0,...` with one row per stored state.
    pub fn write_csv(&self, path: &Path, names: (&str, &str)) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let Some(first) = self.states.first() else {
            return Ok(());
        };
        let shape = first.shape();
        let mut header = vec!["t_s".to_string()];
        header.extend((0..shape.nx).map(|i| format!("{}_{i}", names.0)));
        header.extend((0..shape.ny).map(|i| format!("{}_{i}", names.1)));
        w.write_record(&header)?;
        for (t, u) in self.times.iter().zip(&self.states) {
            let mut row = vec![crate::io::fmt_f64(*t)];
            row.extend(u.x.iter().chain(u.y.iter()).map(|v| crate::io::fmt_f64(*v)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Number of steps `K = t_final / dt`, rejecting incommensurate intervals.
pub fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidParameter(format!("final time must be nonnegative, got {t_final}")));
    }
    let k = (t_final / dt).round();
    if (k * dt - t_final).abs() > 1e-9 * t_final.abs().max(dt) {
        return Err(Error::IncommensurateTime { t_final, dt });
    }
    Ok(k as usize)
}

pub fn integrate_forward(field: &impl PartitionedField, u0: &BlockVec, t_final: f64, cfg: &StepConfig) -> Result<Trajectory> {
    integrate_forward_observed(field, u0, t_final, cfg, |_, _, _| ())
}

/// Like [`integrate_forward`] but calls `observe(n, t_n, u_n)` after each
/// accepted step (and once for the initial state).
pub fn integrate_forward_observed(
    field: &impl PartitionedField,
    u0: &BlockVec,
    t_final: f64,
    cfg: &StepConfig,
    mut observe: impl FnMut(usize, f64, &BlockVec),
) -> Result<Trajectory> {
    cfg.validate()?;
    if u0.shape() != field.shape() {
        return Err(Error::Shape(format!("initial state {:?} vs field {:?}", u0.shape(), field.shape())));
    }
    let k = step_count(t_final, cfg.dt)?;
    let mut times = Vec::with_capacity(k + 1);
    let mut states = Vec::with_capacity(k + 1);
    let mut newton_iterations = Vec::with_capacity(k);
    let mut newton_residuals = Vec::with_capacity(k);
    times.push(0.0);
    states.push(u0.clone());
    observe(0, 0.0, u0);
    for n in 0..k {
        let t_n = n as f64 * cfg.dt;
        let out = semi_implicit_step(field, t_n, &states[n], cfg)?;
        if !out.state.is_finite() {
            return Err(Error::NonFinite(format!("state after step {} (t = {:e})", n + 1, t_n + cfg.dt)));
        }
        let t = (n + 1) as f64 * cfg.dt;
        observe(n + 1, t, &out.state);
        times.push(t);
        states.push(out.state);
        newton_iterations.push(out.iterations);
        newton_residuals.push(out.residual);
    }
    Ok(Trajectory { times, states, newton_iterations, newton_residuals })
}

/// `N^T q = p_{n+1}`, `p_n = (M + Δt D_{u1}F)^T q`, with all derivatives
/// taken at the converged pair `(u_n, u_{n+1})`.
pub fn induced_adjoint_step(
    field: &impl PartitionedField,
    t_n: f64,
    u_n: &BlockVec,
    u_np1: &BlockVec,
    p_np1: &BlockVec,
    cfg: &StepConfig,
) -> Result<BlockVec> {
    let a = FieldArgs::new(t_n, u_n, t_n + cfg.dt, u_np1);
    let q = factor_at(field, a, cfg)?.solve_transpose(p_np1);
    let mq = match field.mass() {
        Some(m) => m.apply_transpose(&q),
        None => q.clone(),
    };
    Ok(mq + field.vjp_slot1(a, &q)?.scaled(cfg.dt))
}

/// Semi-implicit Euler applied to the continuous adjoint equation:
/// `p_n = (I - Δt D_{u2}f)^{-T} (I + Δt D_{u1}f)^T p_{n+1}` with `f = M^{-1}F`.
pub fn naive_adjoint_step(
    field: &impl PartitionedField,
    t_n: f64,
    u_n: &BlockVec,
    u_np1: &BlockVec,
    p_np1: &BlockVec,
    cfg: &StepConfig,
) -> Result<BlockVec> {
    let a = FieldArgs::new(t_n, u_n, t_n + cfg.dt, u_np1);
    let explicit = match field.mass() {
        Some(m) => p_np1 + &field.vjp_slot1(a, &m.solve_transpose(p_np1))?.scaled(cfg.dt),
        None => p_np1 + &field.vjp_slot1(a, p_np1)?.scaled(cfg.dt),
    };
    let q = factor_at(field, a, cfg)?.solve_transpose(&explicit);
    Ok(match field.mass() {
        Some(m) => m.apply_transpose(&q),
        None => q,
    })
}

/// Discrete variational step `δu_{n+1} = N^{-1} (M + Δt D_{u1}F) δu_n`.
pub fn variational_step(
    field: &impl PartitionedField,
    t_n: f64,
    u_n: &BlockVec,
    u_np1: &BlockVec,
    du_n: &BlockVec,
    cfg: &StepConfig,
) -> Result<BlockVec> {
    let a = FieldArgs::new(t_n, u_n, t_n + cfg.dt, u_np1);
    let rhs = apply_mass(field, du_n) + field.jvp_slot1(a, du_n)?.scaled(cfg.dt);
    Ok(factor_at(field, a, cfg)?.solve(&rhs))
}

fn check_trajectory(field: &impl PartitionedField, traj: &Trajectory) -> Result<()> {
    if traj.states.is_empty() || traj.times.len() != traj.states.len() {
        return Err(Error::Trajectory { states: traj.states.len(), expected: traj.times.len().max(1) });
    }
    if traj.states[0].shape() != field.shape() {
        return Err(Error::Shape(format!("trajectory {:?} vs field {:?}", traj.states[0].shape(), field.shape())));
    }
    Ok(())
}

/// Backward sweep from the terminal costate `p_T = DC(u_K)`.
///
/// Returns the costates `p_0, ..., p_K`. When a pairing `P` is given the
/// sweep propagates `ξ_n = P^{-T} p_n` instead, starting from
/// `ξ_K = P^{-T} p_T` and stepping `ξ_n = P^{-T} step(P^T ξ_{n+1})`.
pub fn integrate_adjoint(
    field: &impl PartitionedField,
    traj: &Trajectory,
    p_terminal: &BlockVec,
    cfg: &StepConfig,
    scheme: AdjointScheme,
    precond: Option<&PairingMap>,
) -> Result<Vec<BlockVec>> {
    cfg.validate()?;
    check_trajectory(field, traj)?;
    if p_terminal.shape() != field.shape() {
        return Err(Error::Shape(format!("terminal costate {:?} vs field {:?}", p_terminal.shape(), field.shape())));
    }
    let k = traj.steps();
    let mut out = vec![BlockVec::zeros(field.shape()); k + 1];
    out[k] = match precond {
        Some(p) => p.solve_transpose(p_terminal),
        None => p_terminal.clone(),
    };
    for n in (0..k).rev() {
        let p_np1 = match precond {
            Some(p) => p.apply_transpose(&out[n + 1]),
            None => out[n + 1].clone(),
        };
        let t_n = traj.times[n];
        let step = match scheme {
            AdjointScheme::Induced => induced_adjoint_step(field, t_n, &traj.states[n], &traj.states[n + 1], &p_np1, cfg)?,
            AdjointScheme::Naive => naive_adjoint_step(field, t_n, &traj.states[n], &traj.states[n + 1], &p_np1, cfg)?,
        };
        out[n] = match precond {
            Some(p) => p.solve_transpose(&step),
            None => step,
        };
    }
    Ok(out)
}

/// Propagates `δu_0` through the linearized steps of a stored trajectory.
pub fn integrate_variational(field: &impl PartitionedField, traj: &Trajectory, du0: &BlockVec, cfg: &StepConfig) -> Result<Vec<BlockVec>> {
    check_trajectory(field, traj)?;
    let mut out = Vec::with_capacity(traj.states.len());
    out.push(du0.clone());
    for n in 0..traj.steps() {
        let next = variational_step(field, traj.times[n], &traj.states[n], &traj.states[n + 1], &out[n], cfg)?;
        out.push(next);
    }
    Ok(out)
}

/// Relative drift `|<p_n, δu_n> - <p_K, δu_K>| / |<p_K, δu_K>|` at every
/// step for one pair of terminal costate and initial variation.
pub fn conservation_drift(
    field: &impl PartitionedField,
    traj: &Trajectory,
    p_terminal: &BlockVec,
    du0: &BlockVec,
    cfg: &StepConfig,
    scheme: AdjointScheme,
) -> Result<Vec<f64>> {
    let du = integrate_variational(field, traj, du0, cfg)?;
    let p = integrate_adjoint(field, traj, p_terminal, cfg, scheme, None)?;
    let k = traj.steps();
    let reference = p[k].dot(&du[k]);
    let scale = reference.abs().max(1e-300);
    Ok(p.iter().zip(&du).map(|(p, d)| (p.dot(d) - reference).abs() / scale).collect())
}

/// [`conservation_drift`] for many `(p_K, δu_0)` pairs on one trajectory.
pub fn conservation_drifts(
    field: &impl PartitionedField,
    traj: &Trajectory,
    pairs: &[(BlockVec, BlockVec)],
    cfg: &StepConfig,
    scheme: AdjointScheme,
    exec: Exec,
) -> Result<Vec<Vec<f64>>> {
    exec.map(pairs, |(p, du)| conservation_drift(field, traj, p, du, cfg, scheme)).into_iter().collect()
}

/// Writes a compact Newton log (`step,iterations,residual`).
pub fn write_newton_log(traj: &Trajectory, mut w: impl Write) -> Result<()> {
    writeln!(w, "step,iterations,residual")?;
    for (i, (it, r)) in traj.newton_iterations.iter().zip(&traj.newton_residuals).enumerate() {
        writeln!(w, "{},{},{}", i + 1, it, crate::io::fmt_f64(*r))?;
    }
    Ok(())
}
