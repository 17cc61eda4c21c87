//! Run configuration read from TOML. Every section is optional and defaults
//! to the Marshak-wave setup; unknown keys are rejected.

use std::path::{Path, PathBuf};

use adjprec::optim::{DescentConfig, Projection, ScaleSweep};
use adjprec::radiff::{GaussianBump, RadDiffConfig};
use adjprec::timeint::{step_count, LinearSolver, StepConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seed for every random choice (grad-check directions and pairs).
    pub seed: u64,
    pub model: RadDiffConfig,
    pub integration: IntegrationConfig,
    pub optimization: OptimizationConfig,
    pub grad_check: GradCheckConfig,
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegrationConfig {
    /// Time step, s.
    pub dt: f64,
    /// Final time, s. Must be a multiple of `dt`.
    pub t_final: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub solver: LinearSolver,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self { dt: 5e-13, t_final: 1e-8, newton_tol: 1e-10, newton_max_iter: 25, solver: LinearSolver::Banded }
    }
}

impl IntegrationConfig {
    pub fn step(&self) -> StepConfig {
        StepConfig { dt: self.dt, newton_tol: self.newton_tol, newton_max_iter: self.newton_max_iter, solver: self.solver }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizationConfig {
    pub gamma: f64,
    pub max_iters: usize,
    /// Pairing scale of the `E` block.
    pub scale_x: f64,
    /// Pairing scale of the `T` block.
    pub scale_y: f64,
    pub projection: Projection,
    pub stop_tol: f64,
    pub stop_window: usize,
    pub divergence_factor: f64,
    /// Temperature bump (cm, cm, eV) used to manufacture the observation.
    pub perturbation: GaussianBump,
    pub sweep: ScaleSweep,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        let d = DescentConfig::default();
        Self {
            gamma: d.gamma,
            max_iters: d.max_iters,
            scale_x: d.scale_x,
            scale_y: d.scale_y,
            projection: d.projection,
            stop_tol: d.stop_tol,
            stop_window: d.stop_window,
            divergence_factor: d.divergence_factor,
            perturbation: GaussianBump::default(),
            sweep: ScaleSweep::default(),
        }
    }
}

impl OptimizationConfig {
    pub fn descent(&self) -> DescentConfig {
        DescentConfig {
            gamma: self.gamma,
            max_iters: self.max_iters,
            scale_x: self.scale_x,
            scale_y: self.scale_y,
            projection: self.projection,
            stop_tol: self.stop_tol,
            stop_window: self.stop_window,
            divergence_factor: self.divergence_factor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradCheckConfig {
    /// Number of random state coordinates compared against central differences.
    pub directions: usize,
    /// Finite-difference step relative to the coordinate's magnitude.
    pub rel_step: f64,
    /// Number of random `(p_K, δu_0)` pairs for the conservation drift.
    pub pairs: usize,
    /// Newton tolerance used for the check (0 iterates to round-off).
    pub newton_tol: f64,
    /// Largest accepted normwise gradient mismatch.
    pub max_mismatch: f64,
    /// Largest accepted induced-scheme drift.
    pub max_drift: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { directions: 20, rel_step: 1e-7, pairs: 10, newton_tol: 0.0, max_mismatch: 1e-4, max_drift: 1e-10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Snapshot times of `forward`, s. Each must be a multiple of `dt`.
    pub snapshot_times: Vec<f64>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), snapshot_times: Vec::new() }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> CliResult<()> {
        self.model.validate()?;
        let step = self.integration.step();
        step.validate()?;
        let k = step_count(self.integration.t_final, step.dt)?;
        self.optimization.descent().validate()?;
        self.optimization.sweep.validate()?;
        for &t in &self.output.snapshot_times {
            if !(0.0..=self.integration.t_final).contains(&t) {
                return Err(CliError::Config(format!("snapshot time {t:e} outside [0, {:e}]", self.integration.t_final)));
            }
            step_count(t, step.dt)?;
        }
        let g = &self.grad_check;
        if g.directions == 0 || g.directions > self.model.shape().len() {
            return Err(CliError::Config(format!("grad_check.directions must be in 1..={}", self.model.shape().len())));
        }
        if !(g.rel_step > 0.0) || !(g.newton_tol >= 0.0) || !(g.max_mismatch > 0.0) || !(g.max_drift > 0.0) {
            return Err(CliError::Config("grad_check step, tolerance and thresholds must be positive".into()));
        }
        log::debug!("configuration valid: N = {}, K = {k}", self.model.n);
        Ok(())
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub scale: Option<f64>,
    pub projection: Option<Projection>,
    pub seed: Option<u64>,
}

impl Overrides {
    /// `--scale s` sets the pairing to `(e_ratio * s, s)` and reduces a
    /// sweep to that single value.
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        if let Some(s) = self.scale {
            let (sx, sy) = cfg.optimization.sweep.pair(s);
            cfg.optimization.scale_x = sx;
            cfg.optimization.scale_y = sy;
            cfg.optimization.sweep.scales = vec![s];
        }
        if let Some(p) = self.projection {
            cfg.optimization.projection = p;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.integration.dt, 5e-13);
        cfg.validate().unwrap();
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.model.n = 17;
        cfg.optimization.projection = Projection::ECoordinate;
        cfg.output.snapshot_times = vec![0.0, 1e-9];
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_located() {
        let e = RunConfig::parse("[model]\nn = 10\ncells = 4\n").unwrap_err().to_string();
        assert!(e.contains("cells") && e.contains("line 3"), "{e}");
    }

    #[test]
    fn scale_override_sets_both_blocks() {
        let mut cfg = RunConfig::default();
        Overrides { scale: Some(1e41), ..Default::default() }.apply(&mut cfg);
        assert_eq!(cfg.optimization.scale_y, 1e41);
        assert_eq!(cfg.optimization.sweep.scales, vec![1e41]);
        assert!((cfg.optimization.scale_x / 1e20 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bad_values_are_config_errors() {
        let cases = [
            "[integration]\nt_final = 1.1e-12\n",
            "[integration]\ndt = -1.0\n",
            "[output]\nsnapshot_times = [2e-8]\n",
            "[optimization.sweep]\nscales = []\n",
            "[grad_check]\ndirections = 0\n",
            "[model]\nn = 1\n",
        ];
        for text in cases {
            let err = RunConfig::parse(text).unwrap().validate().unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }
}
