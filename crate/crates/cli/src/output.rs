//! CSV rows and the JSON-lines mirror.
//!
//! Column order is fixed per row type; `Option` columns are left empty when absent.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use cavity_gate::analysis::BudgetEntry;
use cavity_gate::FidelityReport;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// One gate run (scenarios `gate` and `thermal-sweep`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateRow {
    pub scenario: String,
    pub model: String,
    pub nbar: f64,
    pub cutoff: usize,
    pub omega_ratio: f64,
    pub k: u32,
    pub omega_t_over_pi: f64,
    pub fidelity: f64,
    pub f_pp: f64,
    pub f_pm: f64,
    pub f_mp: f64,
    pub f_mm: f64,
    pub f_gg: f64,
    pub phase_pp: f64,
    pub phase_pm: f64,
    pub phase_mp: f64,
    pub phase_mm: f64,
    pub truncation_leakage: f64,
    pub self_convergence: Option<f64>,
    pub drift: Option<f64>,
}

fn param(r: &FidelityReport, key: &str) -> f64 {
    r.parameters.get(key).copied().unwrap_or(f64::NAN)
}

fn input(r: &FidelityReport, label: &str) -> f64 {
    r.per_input.iter().find(|p| p.input == label).map_or(f64::NAN, |p| p.fidelity)
}

impl From<&FidelityReport> for GateRow {
    fn from(r: &FidelityReport) -> Self {
        let phase = |i: usize| r.phases_over_pi.get(i).copied().unwrap_or(f64::NAN);
        Self {
            scenario: r.scenario.clone(),
            model: r.model.clone(),
            nbar: r.parameters.get("nbar").copied().unwrap_or(0.0),
            cutoff: param(r, "cutoff") as usize,
            omega_ratio: param(r, "omega_ratio"),
            k: param(r, "k") as u32,
            omega_t_over_pi: param(r, "omega_rabi") * param(r, "t") / std::f64::consts::PI,
            fidelity: r.fidelity,
            f_pp: input(r, "++"),
            f_pm: input(r, "+-"),
            f_mp: input(r, "-+"),
            f_mm: input(r, "--"),
            f_gg: input(r, "gg"),
            phase_pp: phase(0),
            phase_pm: phase(1),
            phase_mp: phase(2),
            phase_mm: phase(3),
            truncation_leakage: r.truncation_leakage,
            self_convergence: r.self_convergence,
            drift: r.diagnostics.get("drift").copied(),
        }
    }
}

/// One GHZ run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhzRow {
    pub scenario: String,
    pub model: String,
    pub n_atoms: usize,
    pub nbar: f64,
    pub cutoff: usize,
    pub omega_ratio: f64,
    pub family_index: Option<u32>,
    pub omega_t_over_pi: f64,
    pub fidelity: f64,
    pub truncation_leakage: f64,
    pub self_convergence: Option<f64>,
    pub resummation_deviation: Option<f64>,
}

impl From<&FidelityReport> for GhzRow {
    fn from(r: &FidelityReport) -> Self {
        Self {
            scenario: r.scenario.clone(),
            model: r.model.clone(),
            n_atoms: param(r, "n_atoms") as usize,
            nbar: r.parameters.get("nbar").copied().unwrap_or(0.0),
            cutoff: param(r, "cutoff") as usize,
            omega_ratio: param(r, "omega_ratio"),
            family_index: r.parameters.get("family_index").map(|&n| n as u32),
            omega_t_over_pi: param(r, "omega_rabi") * param(r, "t") / std::f64::consts::PI,
            fidelity: r.fidelity,
            truncation_leakage: r.truncation_leakage,
            self_convergence: r.self_convergence,
            resummation_deviation: r.diagnostics.get("resummation_deviation").copied(),
        }
    }
}

/// One error-budget line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub quantity: String,
    pub omega_ratio: f64,
    pub omega_t_over_pi: f64,
    pub formula: Option<f64>,
    pub simulated: Option<f64>,
}

impl From<&BudgetEntry<f64>> for BudgetRow {
    fn from(e: &BudgetEntry<f64>) -> Self {
        Self {
            quantity: e.quantity.clone(),
            omega_ratio: e.omega_ratio,
            omega_t_over_pi: e.omega_t_over_pi,
            formula: e.formula,
            simulated: e.simulated,
        }
    }
}

/// One random propagator comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub sample: usize,
    pub delta: f64,
    pub t: f64,
    pub max_deviation: f64,
}

/// `prefix.csv` and `prefix.jsonl`; a trailing `.csv` on the prefix is dropped.
pub fn output_paths(prefix: &str) -> (PathBuf, PathBuf) {
    let base = prefix.strip_suffix(".csv").unwrap_or(prefix);
    (PathBuf::from(format!("{base}.csv")), PathBuf::from(format!("{base}.jsonl")))
}

/// Writes rows under a `#` metadata line; the header comes from the row fields.
pub fn write_csv<R: Serialize>(path: &Path, metadata: &str, rows: &[R]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let body = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
    let mut f = fs::File::create(path)?;
    writeln!(f, "# {metadata}")?;
    f.write_all(&body)?;
    Ok(())
}

pub fn write_jsonl<R: Serialize>(path: &Path, records: &[R]) -> Result<(), CliError> {
    let mut f = fs::File::create(path)?;
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        writeln!(f)?;
    }
    Ok(())
}

/// Reads rows back, skipping the metadata line.
pub fn read_csv<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>, CliError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<R>, _>>()?)
}

pub fn read_jsonl<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>, CliError> {
    let text = fs::read_to_string(path)?;
    text.lines().map(|l| Ok(serde_json::from_str(l)?)).collect()
}
