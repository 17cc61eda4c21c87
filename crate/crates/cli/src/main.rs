//! `adjprec`: forward runs, gradient checks, inversions and scale sweeps for
//! the 1D radiation-diffusion model.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use adjprec::exec::Exec;
use adjprec::optim::Projection;
use clap::{Args, Parser, Subcommand};

use crate::commands::Ctx;
use crate::config::{Overrides, RunConfig};
use crate::error::CliResult;

#[derive(Parser)]
#[command(name = "adjprec", version, about = "Preconditioned discrete adjoints for 1D radiation diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the Marshak problem and write snapshots.
    Forward {
        #[command(flatten)]
        common: Common,
        /// Start from the perturbed initial state instead of equilibrium.
        #[arg(long)]
        perturbed: bool,
    },
    /// Compare the adjoint gradient with finite differences and measure conservation drift.
    GradCheck(Common),
    /// Recover the initial state from the observed final state.
    Invert(Common),
    /// Run the inversion for every value of the scale sweep.
    Sweep(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration (defaults are used when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Pairing scale s: P = diag(e_ratio * s, s). For `sweep`, runs only this value.
    #[arg(long)]
    scale: Option<f64>,
    /// Projection onto E = a c T^4.
    #[arg(long)]
    projection: Option<Projection>,
    /// Exit with status 5 when the inversion diverges.
    #[arg(long)]
    strict: bool,
    /// Worker threads for independent runs (0 = all cores, 1 = serial).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Seed for sampled directions and random pairs, overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn context(&self) -> CliResult<Ctx> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        Overrides { out: self.out.clone(), scale: self.scale, projection: self.projection, seed: self.seed }.apply(&mut cfg);
        cfg.validate()?;
        let exec = if self.workers == 1 { Exec::Serial } else { Exec::Parallel };
        Ok(Ctx { cfg, exec, strict: self.strict })
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let (common, f): (Common, Box<dyn FnOnce(&Ctx) -> CliResult<()> + Send>) = match cli.command {
        Command::Forward { common, perturbed } => (common, Box::new(move |c| commands::forward(c, perturbed))),
        Command::GradCheck(common) => (common, Box::new(commands::grad_check)),
        Command::Invert(common) => (common, Box::new(commands::invert)),
        Command::Sweep(common) => (common, Box::new(commands::sweep)),
    };
    let ctx = common.context()?;
    ctx.exec.with_workers(common.workers, || f(&ctx))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("adjprec: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
