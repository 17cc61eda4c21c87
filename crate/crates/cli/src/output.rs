//! File writers for the command outputs. Column names carry their units.

use std::path::{Path, PathBuf};

use adjprec::blockla::BlockVec;
use adjprec::io::write_table;
use adjprec::optim::{InverseOutcome, InverseResult};
use adjprec::radiff::RadDiffConfig;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliResult;

/// Version of every `summary.json` written by this tool.
pub const SCHEMA_VERSION: u32 = 1;

pub const HISTORY_HEADER: [&str; 7] =
    ["iter", "C_E_erg2_cm5", "C_T_eV2_cm", "grad_inf_E", "grad_inf_T", "multiplier_max", "multiplier_mean"];
pub const INITIAL_HEADER: [&str; 5] = ["x_cm", "E_true_erg_cm3", "T_true_eV", "E_reconstructed_erg_cm3", "T_reconstructed_eV"];
pub const FINAL_HEADER: [&str; 7] = [
    "x_cm",
    "E_unperturbed_erg_cm3",
    "T_unperturbed_eV",
    "E_observed_erg_cm3",
    "T_observed_eV",
    "E_reconstructed_erg_cm3",
    "T_reconstructed_eV",
];

#[derive(Serialize)]
pub struct Summary<'a, R: Serialize> {
    pub schema_version: u32,
    pub command: &'static str,
    pub config: &'a RunConfig,
    pub result: R,
}

pub fn write_summary<R: Serialize>(dir: &Path, command: &'static str, config: &RunConfig, result: R) -> CliResult<PathBuf> {
    let path = dir.join("summary.json");
    let summary = Summary { schema_version: SCHEMA_VERSION, command, config, result };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    std::fs::write(&path, text)?;
    Ok(path)
}

/// Table with string cells, for rows that mix labels and numbers.
pub fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Summary of one inversion. Infinite or NaN ratios serialize as null.
#[derive(Clone, Debug, Serialize)]
pub struct InversionSummary {
    pub scale_x: f64,
    pub scale_y: f64,
    pub outcome: InverseOutcome,
    pub iterations: usize,
    pub best_iteration: usize,
    pub initial_cost: f64,
    pub best_cost: f64,
    pub reduction: f64,
    pub monotone: bool,
}

impl InversionSummary {
    pub fn new(scale_x: f64, scale_y: f64, r: &InverseResult) -> Self {
        Self {
            scale_x,
            scale_y,
            outcome: r.outcome.clone(),
            iterations: r.records.len().saturating_sub(1),
            best_iteration: r.best_iteration,
            initial_cost: r.records.first().map_or(f64::NAN, |x| x.cost()),
            best_cost: r.records[r.best_iteration].cost(),
            reduction: r.reduction(),
            monotone: r.monotone(),
        }
    }

    pub fn status(&self) -> &'static str {
        match self.outcome {
            InverseOutcome::Converged { .. } => "converged",
            InverseOutcome::MaxIterations => "max-iterations",
            InverseOutcome::Diverged { .. } => "diverged",
        }
    }
}

/// Writes `history.csv`, `reconstructed_initial.csv` and `final_compare.csv`.
/// Wall-clock times are left out so repeated runs give identical files.
pub fn write_inversion(
    dir: &Path,
    model: &RadDiffConfig,
    result: &InverseResult,
    truth_initial: &BlockVec,
    unperturbed_final: &BlockVec,
    observed: &BlockVec,
) -> CliResult<()> {
    write_table(
        &dir.join("history.csv"),
        &HISTORY_HEADER,
        result.records.iter().map(|r| {
            vec![r.iter as f64, r.c_e, r.c_t, r.grad_norm_e, r.grad_norm_t, r.multiplier_max, r.multiplier_mean]
        }),
    )?;
    let grid = model.grid();
    let rec = &result.best_initial;
    write_table(
        &dir.join("reconstructed_initial.csv"),
        &INITIAL_HEADER,
        (0..model.n).map(|i| vec![grid[i], truth_initial.x[i], truth_initial.y[i], rec.x[i], rec.y[i]]),
    )?;
    let fin = &result.best_final;
    write_table(
        &dir.join("final_compare.csv"),
        &FINAL_HEADER,
        (0..model.n).map(|i| {
            vec![grid[i], unperturbed_final.x[i], unperturbed_final.y[i], observed.x[i], observed.y[i], fin.x[i], fin.y[i]]
        }),
    )?;
    Ok(())
}
