use std::path::Path;

use adjprec::blockla::BlockVec;
use adjprec::exec::Exec;
use adjprec::io::{fmt_f64, write_table};
use adjprec::optim::{gradient_check, radiation_terminal_cost, run_inverse_problem, run_scale_sweep, InverseProblem};
use adjprec::radiff::{marshak_problem, perturbed_initial_state, wavefront_position, write_snapshot, MarshakProblem};
use adjprec::timeint::{conservation_drifts, integrate_forward, integrate_forward_observed, step_count, write_newton_log, AdjointScheme, StepConfig};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{write_inversion, write_rows, write_summary, InversionSummary};

/// Shared state of one invocation.
pub struct Ctx {
    pub cfg: RunConfig,
    pub exec: Exec,
    pub strict: bool,
}

impl Ctx {
    fn out_dir(&self) -> CliResult<&Path> {
        let dir = self.cfg.output.dir.as_path();
        std::fs::create_dir_all(dir).map_err(|e| CliError::Run(format!("{}: {e}", dir.display())))?;
        Ok(dir)
    }

    fn problem(&self) -> CliResult<MarshakProblem> {
        Ok(marshak_problem(self.cfg.model.clone())?)
    }

    fn truth_initial(&self) -> BlockVec {
        perturbed_initial_state(&self.cfg.model, &self.cfg.optimization.perturbation)
    }

    /// Final state of the perturbed run, used as the observation.
    fn observation(&self, prob: &MarshakProblem, step: &StepConfig) -> CliResult<BlockVec> {
        let t_final = self.cfg.integration.t_final;
        Ok(integrate_forward(&prob.field, &self.truth_initial(), t_final, step)?.final_state().clone())
    }
}

#[derive(Serialize)]
struct SnapshotInfo {
    time_s: f64,
    file: String,
    wavefront_cm: f64,
}

#[derive(Serialize)]
struct ForwardSummary {
    perturbed: bool,
    steps: usize,
    newton_max_iterations: usize,
    newton_mean_iterations: f64,
    newton_max_residual: f64,
    floor_activated: bool,
    /// Temperature at which the wavefront is located, eV.
    wavefront_threshold_ev: f64,
    final_wavefront_cm: f64,
    snapshots: Vec<SnapshotInfo>,
}

/// Integrates the Marshak problem and writes the requested snapshots.
pub fn forward(ctx: &Ctx, perturbed: bool) -> CliResult<()> {
    let cfg = &ctx.cfg;
    let dir = ctx.out_dir()?;
    let prob = ctx.problem()?;
    let step = cfg.integration.step();
    let u0 = if perturbed { ctx.truth_initial() } else { prob.initial.clone() };
    let mut wanted = Vec::with_capacity(cfg.output.snapshot_times.len());
    for (i, &t) in cfg.output.snapshot_times.iter().enumerate() {
        wanted.push((step_count(t, step.dt)?, i, t));
    }
    let threshold = 0.5 * cfg.model.t_drive;
    let mut snapshots = Vec::new();
    let mut write_err = None;
    let traj = integrate_forward_observed(&prob.field, &u0, cfg.integration.t_final, &step, |n, _, u| {
        for &(_, i, t) in wanted.iter().filter(|w| w.0 == n) {
            let file = format!("snapshot_{i:03}.csv");
            if let Err(e) = write_snapshot(&dir.join(&file), &cfg.model, u) {
                write_err.get_or_insert(e);
            }
            snapshots.push(SnapshotInfo { time_s: t, file, wavefront_cm: wavefront_position(&cfg.model, u, threshold) });
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    snapshots.sort_by_key(|s| s.file.clone());
    let mut log = std::io::BufWriter::new(std::fs::File::create(dir.join("newton.csv"))?);
    write_newton_log(&traj, &mut log)?;
    let summary = ForwardSummary {
        perturbed,
        steps: traj.steps(),
        newton_max_iterations: traj.max_newton_iterations(),
        newton_mean_iterations: traj.mean_newton_iterations(),
        newton_max_residual: traj.max_newton_residual(),
        floor_activated: prob.field.floor_activated(),
        wavefront_threshold_ev: threshold,
        final_wavefront_cm: wavefront_position(&cfg.model, traj.final_state(), threshold),
        snapshots,
    };
    log::info!("forward: {} steps, final wavefront {} cm", summary.steps, summary.final_wavefront_cm);
    write_summary(dir, "forward", cfg, summary)?;
    Ok(())
}

#[derive(Serialize)]
struct GradCheckSummary {
    directions: usize,
    pairs: usize,
    max_rel_err: f64,
    max_rel_err_component: f64,
    max_induced_drift: f64,
    max_naive_drift: f64,
    passed: bool,
}

/// Adjoint gradient against central differences, plus the pairing drift of
/// the induced and naive adjoints on the same trajectory.
pub fn grad_check(ctx: &Ctx) -> CliResult<()> {
    let cfg = &ctx.cfg;
    let gc = &cfg.grad_check;
    let dir = ctx.out_dir()?;
    let prob = ctx.problem()?;
    let step = StepConfig { newton_tol: gc.newton_tol, ..cfg.integration.step() };
    let t_final = cfg.integration.t_final;
    let shape = cfg.model.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut indices = sample(&mut rng, shape.len(), gc.directions).into_vec();
    indices.sort_unstable();
    let random = |rng: &mut ChaCha8Rng| {
        let x: Vec<f64> = (0..shape.nx).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..shape.ny).map(|_| rng.gen_range(-1.0..1.0)).collect();
        BlockVec::from_slices(&x, &y)
    };
    let pairs: Vec<(BlockVec, BlockVec)> = (0..gc.pairs).map(|_| (random(&mut rng), random(&mut rng))).collect();

    let cost = radiation_terminal_cost(&cfg.model, ctx.observation(&prob, &step)?)?;
    let checks = gradient_check(&prob.field, &cost, &prob.initial, t_final, &step, &indices, gc.rel_step, ctx.exec)?;
    let grid = cfg.model.grid();
    let n = cfg.model.n;
    write_rows(
        &dir.join("grad_check.csv"),
        &["index", "block", "x_cm", "adjoint", "fd", "rel_err", "rel_err_component"],
        checks.iter().map(|c| {
            let (block, cell) = if c.index < n { ("E", c.index) } else { ("T", c.index - n) };
            vec![
                c.index.to_string(),
                block.into(),
                fmt_f64(grid[cell]),
                fmt_f64(c.adjoint),
                fmt_f64(c.fd),
                fmt_f64(c.rel_err),
                fmt_f64(c.rel_err_component),
            ]
        }),
    )?;

    let traj = integrate_forward(&prob.field, &prob.initial, t_final, &step)?;
    let per_step = |scheme| -> CliResult<Vec<f64>> {
        let drifts = conservation_drifts(&prob.field, &traj, &pairs, &step, scheme, ctx.exec)?;
        Ok((0..=traj.steps()).map(|k| drifts.iter().fold(0.0f64, |m, d| m.max(d[k]))).collect())
    };
    let induced = per_step(AdjointScheme::Induced)?;
    let naive = per_step(AdjointScheme::Naive)?;
    write_table(
        &dir.join("drift.csv"),
        &["step", "t_s", "induced_max_rel_drift", "naive_max_rel_drift"],
        (0..induced.len()).map(|k| vec![k as f64, traj.times[k], induced[k], naive[k]]),
    )?;

    let max = |v: &mut dyn Iterator<Item = f64>| v.fold(0.0f64, f64::max);
    let max_rel_err = max(&mut checks.iter().map(|c| c.rel_err));
    let max_induced_drift = max(&mut induced.iter().copied());
    let passed = max_rel_err <= gc.max_mismatch && max_induced_drift <= gc.max_drift;
    let summary = GradCheckSummary {
        directions: checks.len(),
        pairs: pairs.len(),
        max_rel_err,
        max_rel_err_component: max(&mut checks.iter().map(|c| c.rel_err_component)),
        max_induced_drift,
        max_naive_drift: max(&mut naive.iter().copied()),
        passed,
    };
    log::info!("grad-check: mismatch {max_rel_err:e}, induced drift {max_induced_drift:e}");
    write_summary(dir, "grad-check", cfg, summary)?;
    if !passed {
        return Err(CliError::Check(format!(
            "gradient mismatch {max_rel_err:e} (limit {:e}), induced drift {max_induced_drift:e} (limit {:e})",
            gc.max_mismatch, gc.max_drift
        )));
    }
    Ok(())
}

/// Inputs common to `invert` and `sweep`.
struct Inversion {
    prob: MarshakProblem,
    truth: BlockVec,
    observed: BlockVec,
    unperturbed_final: BlockVec,
}

impl Inversion {
    fn new(ctx: &Ctx) -> CliResult<Self> {
        let prob = ctx.problem()?;
        let step = ctx.cfg.integration.step();
        let observed = ctx.observation(&prob, &step)?;
        let unperturbed_final = integrate_forward(&prob.field, &prob.initial, ctx.cfg.integration.t_final, &step)?.final_state().clone();
        Ok(Self { truth: ctx.truth_initial(), prob, observed, unperturbed_final })
    }

    fn problem(&self, ctx: &Ctx) -> InverseProblem<'_> {
        InverseProblem {
            field: &self.prob.field,
            target: self.observed.clone(),
            initial_guess: self.prob.initial.clone(),
            t_final: ctx.cfg.integration.t_final,
            step: ctx.cfg.integration.step(),
        }
    }
}

pub fn invert(ctx: &Ctx) -> CliResult<()> {
    let cfg = &ctx.cfg;
    let dir = ctx.out_dir()?;
    let inv = Inversion::new(ctx)?;
    let descent = cfg.optimization.descent();
    let result = run_inverse_problem(&inv.problem(ctx), &descent)?;
    write_inversion(dir, &cfg.model, &result, &inv.truth, &inv.unperturbed_final, &inv.observed)?;
    let summary = InversionSummary::new(descent.scale_x, descent.scale_y, &result);
    log::info!("invert: {} after {} iterations, reduction {:e}", summary.status(), summary.iterations, summary.reduction);
    write_summary(dir, "invert", cfg, &summary)?;
    if ctx.strict && result.diverged() {
        return Err(CliError::Diverged(format!("{:?}", result.outcome)));
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    scale: f64,
    dir: String,
    #[serde(flatten)]
    inversion: Option<InversionSummary>,
    error: Option<String>,
}

/// Directory name of one sweep entry, e.g. `scale_1e41`.
pub fn scale_dir(s: f64) -> String {
    format!("scale_{}", fmt_f64(s))
}

pub fn sweep(ctx: &Ctx) -> CliResult<()> {
    let cfg = &ctx.cfg;
    let dir = ctx.out_dir()?;
    let inv = Inversion::new(ctx)?;
    let entries = run_scale_sweep(&inv.problem(ctx), &cfg.optimization.descent(), &cfg.optimization.sweep, ctx.exec)?;
    let mut rows = Vec::with_capacity(entries.len());
    for e in &entries {
        let name = scale_dir(e.scale);
        let sub = dir.join(&name);
        std::fs::create_dir_all(&sub)?;
        let row = match &e.result {
            Ok(r) => {
                write_inversion(&sub, &cfg.model, r, &inv.truth, &inv.unperturbed_final, &inv.observed)?;
                SweepRow { scale: e.scale, dir: name, inversion: Some(InversionSummary::new(e.descent.scale_x, e.descent.scale_y, r)), error: None }
            }
            Err(err) => SweepRow { scale: e.scale, dir: name, inversion: None, error: Some(err.to_string()) },
        };
        rows.push(row);
    }
    write_rows(
        &dir.join("sweep.csv"),
        &["scale", "scale_x", "scale_y", "status", "iterations", "best_iteration", "initial_cost", "best_cost", "reduction", "monotone"],
        rows.iter().map(|r| match &r.inversion {
            Some(s) => vec![
                fmt_f64(r.scale),
                fmt_f64(s.scale_x),
                fmt_f64(s.scale_y),
                s.status().into(),
                s.iterations.to_string(),
                s.best_iteration.to_string(),
                fmt_f64(s.initial_cost),
                fmt_f64(s.best_cost),
                fmt_f64(s.reduction),
                s.monotone.to_string(),
            ],
            None => {
                let (sx, sy) = cfg.optimization.sweep.pair(r.scale);
                let mut v = vec![fmt_f64(r.scale), fmt_f64(sx), fmt_f64(sy), "error".into()];
                v.extend(std::iter::repeat(String::new()).take(6));
                v
            }
        }),
    )?;
    let succeeded = rows.iter().filter(|r| r.inversion.as_ref().is_some_and(|s| s.status() != "diverged")).count();
    log::info!("sweep: {succeeded} of {} scales did not diverge", rows.len());
    write_summary(dir, "sweep", cfg, &rows)?;
    if ctx.strict && succeeded == 0 {
        return Err(CliError::Diverged("no sweep entry succeeded".into()));
    }
    Ok(())
}
