use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::projection::{project, Projection};
use super::{gd_step, gradient_from_trajectory, radiation_terminal_cost, CostParts, TerminalCost};
use crate::blockla::BlockVec;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::precond::build_scale_preconditioner;
use crate::radiff::RadiationDiffusion;
use crate::timeint::{integrate_forward, StepConfig};

/// Relative slack of [`InverseResult::monotone`].
pub const MONOTONE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DescentConfig {
    pub gamma: f64,
    pub max_iters: usize,
    /// Scale-preconditioner entry for the `E` block.
    pub scale_x: f64,
    /// Scale-preconditioner entry for the `T` block.
    pub scale_y: f64,
    pub projection: Projection,
    /// Stop when the relative cost decrease stays below this value ...
    pub stop_tol: f64,
    /// ... for this many consecutive iterations.
    pub stop_window: usize,
    /// Growth factor of the cost in one iteration that counts as divergence.
    pub divergence_factor: f64,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            max_iters: 30,
            scale_x: 1.0,
            scale_y: 1.0,
            projection: Projection::Orthogonal,
            stop_tol: 1e-3,
            stop_window: 3,
            divergence_factor: 10.0,
        }
    }
}

impl DescentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.divergence_factor > 1.0) || self.stop_window == 0 {
            return Err(Error::InvalidParameter("divergence factor must exceed 1 and the stop window be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub iter: usize,
    pub c_e: f64,
    pub c_t: f64,
    /// Norms of the preconditioned gradient at this iterate (NaN if not computed).
    pub grad_norm_e: f64,
    pub grad_norm_t: f64,
    pub multiplier_max: f64,
    pub multiplier_mean: f64,
    pub wall_s: f64,
}

impl IterateRecord {
    pub fn cost(&self) -> f64 {
        self.c_e + self.c_t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum InverseOutcome {
    Converged { iterations: usize },
    MaxIterations,
    Diverged { iteration: usize, reason: String },
}

#[derive(Clone, Debug)]
pub struct InverseResult {
    pub records: Vec<IterateRecord>,
    pub outcome: InverseOutcome,
    /// Iterate with the lowest recorded cost.
    pub best_initial: BlockVec,
    pub best_final: BlockVec,
    pub best_iteration: usize,
}

impl InverseResult {
    pub fn diverged(&self) -> bool {
        matches!(self.outcome, InverseOutcome::Diverged { .. })
    }

    /// `C(iterate 0) / C(best iterate)`
    pub fn reduction(&self) -> f64 {
        let first = self.records.first().map(|r| r.cost()).unwrap_or(f64::NAN);
        first / self.records[self.best_iteration].cost()
    }

    /// True if neither cost component increases between iterates by more
    /// than `MONOTONE_FLOOR` times its starting value. The floor absorbs the
    /// jitter of the Newton tolerance once the cost has flattened.
    pub fn monotone(&self) -> bool {
        let Some(first) = self.records.first() else { return true };
        let (fe, ft) = (MONOTONE_FLOOR * first.c_e, MONOTONE_FLOOR * first.c_t);
        self.records.windows(2).all(|w| w[1].c_e <= w[0].c_e + fe && w[1].c_t <= w[0].c_t + ft)
    }
}

/// Recover the initial state of the radiation model from an observation of
/// its final state.
#[derive(Clone, Debug)]
pub struct InverseProblem<'a> {
    pub field: &'a RadiationDiffusion,
    pub target: BlockVec,
    pub initial_guess: BlockVec,
    pub t_final: f64,
    pub step: StepConfig,
}

/// Projected, scale-preconditioned gradient descent.
///
/// Each iteration runs the backward sweep for `ξ(0) = P^{-T} p(0)` with
/// `P = diag(scale_x I, scale_y I)`, takes `u - γ ξ(0)`, projects onto
/// `E = a c T⁴`, and evaluates the new cost. A cost that grows by more than
/// `divergence_factor` in one iteration, or any solver failure, marks the run
/// as diverged.
pub fn run_inverse_problem(problem: &InverseProblem, descent: &DescentConfig) -> Result<InverseResult> {
    descent.validate()?;
    let cfg = problem.field.config();
    let shape = cfg.shape();
    let scale = build_scale_preconditioner(shape, descent.scale_x, descent.scale_y)?;
    let cost = radiation_terminal_cost(cfg, problem.target.clone())?;
    let start = Instant::now();

    let mut u = problem.initial_guess.clone();
    let mut traj = integrate_forward(problem.field, &u, problem.t_final, &problem.step)?;
    let c0 = cost.evaluate(traj.final_state());
    let mut records = vec![record(0, c0, start.elapsed().as_secs_f64())];
    let mut best = (0, u.clone(), traj.final_state().clone(), c0.total());
    let mut slow = 0;
    let mut prev = c0.total();

    let outcome = 'outer: {
        for iter in 1..=descent.max_iters {
            let g = match gradient_from_trajectory(problem.field, &cost, traj, &problem.step, Some(&scale)) {
                Ok(g) => g,
                Err(e) => break 'outer diverged(iter, e),
            };
            let last = records.last_mut().unwrap();
            last.grad_norm_e = g.xi.x.norm();
            last.grad_norm_t = g.xi.y.norm();
            if g.xi.norm_inf() == 0.0 {
                break 'outer InverseOutcome::Converged { iterations: iter - 1 };
            }
            let projected = match project(descent.projection, cfg.ac(), &gd_step(&u, &g.xi, descent.gamma)) {
                Ok(p) => p,
                Err(e) => break 'outer diverged(iter, e),
            };
            u = projected.state;
            traj = match integrate_forward(problem.field, &u, problem.t_final, &problem.step) {
                Ok(t) => t,
                Err(e) => break 'outer diverged(iter, e),
            };
            let c = cost.evaluate(traj.final_state());
            let mut rec = record(iter, c, start.elapsed().as_secs_f64());
            let (max, mean) = multiplier_stats(&projected.multipliers);
            rec.multiplier_max = max;
            rec.multiplier_mean = mean;
            records.push(rec);
            let total = c.total();
            if !total.is_finite() || total > descent.divergence_factor * prev {
                break 'outer InverseOutcome::Diverged {
                    iteration: iter,
                    reason: format!("cost grew from {prev:e} to {total:e}"),
                };
            }
            if total < best.3 {
                best = (iter, u.clone(), traj.final_state().clone(), total);
            }
            // an increase is not stagnation
            if ((prev - total) / prev).abs() < descent.stop_tol {
                slow += 1;
                if slow >= descent.stop_window {
                    break 'outer InverseOutcome::Converged { iterations: iter };
                }
            } else {
                slow = 0;
            }
            prev = total;
        }
        InverseOutcome::MaxIterations
    };
    Ok(InverseResult { records, outcome, best_initial: best.1, best_final: best.2, best_iteration: best.0 })
}

fn diverged(iteration: usize, e: Error) -> InverseOutcome {
    InverseOutcome::Diverged { iteration, reason: e.to_string() }
}

fn record(iter: usize, c: CostParts, wall_s: f64) -> IterateRecord {
    IterateRecord {
        iter,
        c_e: c.x,
        c_t: c.y,
        grad_norm_e: f64::NAN,
        grad_norm_t: f64::NAN,
        multiplier_max: 0.0,
        multiplier_mean: 0.0,
        wall_s,
    }
}

fn multiplier_stats(m: &DVector<f64>) -> (f64, f64) {
    if m.is_empty() {
        return (0.0, 0.0);
    }
    (m.amax(), m.iter().map(|v| v.abs()).sum::<f64>() / m.len() as f64)
}

/// Scale values swept by [`run_scale_sweep`].
///
/// Value `s` selects `P = diag(e_ratio * s * I, s * I)`. The `E` block
/// needs a far smaller scale than `T` because the two carry
/// incommensurate units; `e_ratio` fixes that offset so the sweep is
/// one-dimensional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScaleSweep {
    pub scales: Vec<f64>,
    pub e_ratio: f64,
}

impl Default for ScaleSweep {
    fn default() -> Self {
        Self { scales: vec![1.0, 1e35, 1e38, 1e41, 1e44], e_ratio: 1e-21 }
    }
}

impl ScaleSweep {
    /// `(scale_x, scale_y)` for the sweep value `s`.
    pub fn pair(&self, s: f64) -> (f64, f64) {
        (self.e_ratio * s, s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::InvalidParameter("scale sweep is empty".into()));
        }
        if let Some(bad) = self.scales.iter().chain([&self.e_ratio]).find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!("scale values must be positive and finite, got {bad}")));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct SweepEntry {
    pub scale: f64,
    pub descent: DescentConfig,
    pub result: Result<InverseResult>,
}

/// One inverse run per sweep value, each with its own trajectory storage.
pub fn run_scale_sweep(problem: &InverseProblem, base: &DescentConfig, sweep: &ScaleSweep, exec: Exec) -> Result<Vec<SweepEntry>> {
    sweep.validate()?;
    base.validate()?;
    Ok(exec.map(&sweep.scales, |&scale| {
        let (scale_x, scale_y) = sweep.pair(scale);
        let descent = DescentConfig { scale_x, scale_y, ..base.clone() };
        let result = run_inverse_problem(problem, &descent);
        SweepEntry { scale, descent, result }
    }))
}
