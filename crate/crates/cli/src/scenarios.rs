use std::io::Write;
use std::time::Instant;

use cavity_gate::analysis::{self, BudgetEntry};
use cavity_gate::gates;
use cavity_gate::propagator::{self, CavityDamping};
use cavity_gate::{operators, FidelityReport, GateParameters, GhzParameters, HilbertSpec, IntegratorConfig, Model, QuantumState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{ModelKind, RunConfig, Scenario};
use crate::output::{self, BudgetRow, GateRow, GhzRow, ValidationRow};
use crate::CliError;

/// Worst-case fidelity the exact effective model must reach.
const EFFECTIVE_FLOOR: f64 = 1.0 - 1e-8;
/// Largest accepted closed-form vs integrated propagator deviation.
const PROPAGATOR_LIMIT: f64 = 1e-6;
/// Largest accepted disagreement between the two GHZ constructions.
const RESUMMATION_LIMIT: f64 = 1e-12;

/// Runs the scenario of `cfg`, writes its CSV and JSON-lines files and prints
/// a summary. Output files are written before any invariant failure is returned.
pub fn run_scenario<W: Write>(cfg: &RunConfig, out: &mut W) -> Result<(), CliError> {
    let scenario = cfg.scenario();
    let prefix = cfg.output.clone().unwrap_or_else(|| scenario.name().to_string());
    let (csv_path, jsonl_path) = output::output_paths(&prefix);
    let meta = metadata(cfg)?;
    let verdict = match scenario {
        Scenario::Gate => {
            let r = gate(cfg)?;
            output::write_csv(&csv_path, &meta, &[GateRow::from(&r)])?;
            output::write_jsonl(&jsonl_path, std::slice::from_ref(&r))?;
            summarize_gate(out, &r, cfg)?;
            effective_floor(&[&r])
        }
        Scenario::ThermalSweep => {
            let reports = thermal_sweep(cfg)?;
            let rows: Vec<GateRow> = reports.iter().map(GateRow::from).collect();
            output::write_csv(&csv_path, &meta, &rows)?;
            output::write_jsonl(&jsonl_path, &reports)?;
            writeln!(out, "thermal sweep ({} model), Ω/g = {}", reports[0].model, rows[0].omega_ratio)?;
            writeln!(out, "{:>8} {:>7} {:>14} {:>12} {:>11}", "nbar", "cutoff", "fidelity", "drift", "leakage")?;
            for r in &rows {
                writeln!(
                    out,
                    "{:>8} {:>7} {:>14.10} {:>12.3e} {:>11.2e}",
                    r.nbar,
                    r.cutoff,
                    r.fidelity,
                    r.drift.unwrap_or(0.0),
                    r.truncation_leakage
                )?;
            }
            effective_floor(&reports.iter().collect::<Vec<_>>())
        }
        Scenario::Ghz => {
            let r = ghz(cfg)?;
            let row = GhzRow::from(&r);
            output::write_csv(&csv_path, &meta, std::slice::from_ref(&row))?;
            output::write_jsonl(&jsonl_path, std::slice::from_ref(&r))?;
            writeln!(
                out,
                "GHZ, N = {} ({} model), Ω/g = {} (Ωt = {}π), n̄ = {}, cutoff {}",
                row.n_atoms, row.model, row.omega_ratio, row.omega_t_over_pi, row.nbar, row.cutoff
            )?;
            writeln!(out, "fidelity {:.12}", row.fidelity)?;
            if let Some(d) = row.resummation_deviation {
                writeln!(out, "propagator vs phase-resummation deviation {d:.3e}")?;
            }
            writeln!(out, "truncation leakage {:.3e}", row.truncation_leakage)?;
            effective_floor(&[&r]).and_then(|()| match row.resummation_deviation {
                Some(d) if d > RESUMMATION_LIMIT => {
                    Err(CliError::Invariant(format!("GHZ construction paths differ by {d:e}")))
                }
                _ => Ok(()),
            })
        }
        Scenario::ErrorBudget => {
            let (rows, kappa_t) = error_budget(cfg)?;
            output::write_csv(&csv_path, &meta, &rows)?;
            output::write_jsonl(&jsonl_path, &rows)?;
            writeln!(out, "error budget, ε = {}", cfg.epsilon.unwrap_or_default())?;
            writeln!(out, "{:<14} {:>8} {:>9} {:>12} {:>12}", "quantity", "Ω/g", "Ωt/π", "formula", "simulated")?;
            let cell = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4e}"));
            for r in &rows {
                writeln!(
                    out,
                    "{:<14} {:>8} {:>9} {:>12} {:>12}",
                    r.quantity,
                    r.omega_ratio,
                    r.omega_t_over_pi,
                    cell(r.formula),
                    cell(r.simulated)
                )?;
            }
            if let Some(kt) = kappa_t {
                writeln!(out, "κt = {kt:.3e}")?;
            }
            Ok(())
        }
        Scenario::ValidatePropagator => {
            let start = Instant::now();
            let rows = validate_propagator(cfg)?;
            output::write_csv(&csv_path, &meta, &rows)?;
            output::write_jsonl(&jsonl_path, &rows)?;
            let worst = rows.iter().fold(0.0f64, |m, r| m.max(r.max_deviation));
            writeln!(out, "closed-form propagator vs time-ordered integration, {} samples", rows.len())?;
            for r in &rows {
                writeln!(out, "  δ/g = {:.6}  gt = {:.6}  deviation {:.3e}", r.delta, r.t, r.max_deviation)?;
            }
            writeln!(out, "max deviation {worst:.3e} in {:.2} s", start.elapsed().as_secs_f64())?;
            if worst > PROPAGATOR_LIMIT {
                Err(CliError::Invariant(format!("propagator deviation {worst:e} exceeds {PROPAGATOR_LIMIT:e}")))
            } else {
                Ok(())
            }
        }
    };
    writeln!(out, "wrote {} and {}", csv_path.display(), jsonl_path.display())?;
    verdict
}

/// Run parameters for the CSV header line; the output path is left out so
/// identical runs written to different places stay byte-identical.
fn metadata(cfg: &RunConfig) -> Result<String, CliError> {
    let echo = RunConfig { output: None, ..cfg.clone() };
    Ok(format!("cavity-gate {} {}", cfg.scenario(), serde_json::to_string(&echo)?))
}

fn integrator(cfg: &RunConfig) -> Result<IntegratorConfig, CliError> {
    let c = IntegratorConfig::adaptive(cfg.tolerance.unwrap_or(1e-8));
    c.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(c)
}

fn model(cfg: &RunConfig) -> Result<Model, CliError> {
    Ok(match cfg.model.unwrap_or(ModelKind::Full) {
        ModelKind::Effective => Model::Effective,
        ModelKind::Full => Model::Full,
        ModelKind::Lindblad => {
            let kappa = cfg
                .kappa_internal()?
                .ok_or_else(|| CliError::Config("lindblad model needs kappa or tc_seconds".into()))?;
            Model::Lindblad(CavityDamping { kappa, nbar_bath: cfg.nbar_bath.unwrap_or(0.0) })
        }
    })
}

/// Fock cutoff: the configured one, else the thermal rule with a floor of 12.
fn cutoff_for(cfg: &RunConfig, nbar: f64) -> Result<usize, CliError> {
    match cfg.cutoff {
        Some(c) => Ok(c),
        None => Ok(analysis::thermal_cutoff(nbar)?.max(12)),
    }
}

fn gate_params(cfg: &RunConfig) -> Result<GateParameters, CliError> {
    let g = cfg.g.unwrap_or(1.0);
    Ok(match cfg.k {
        Some(k) => GateParameters::from_k(g, k)?,
        None => gates::plan_gate(g, cfg.omega_ratio.unwrap_or(50.0))?,
    })
}

fn field(cutoff: usize, nbar: f64) -> Result<QuantumState, CliError> {
    Ok(operators::thermal_field(cutoff, nbar)?)
}

fn annotate(r: &mut FidelityReport, cfg: &RunConfig, m: &Model, nbar: f64) {
    r.parameters.insert("nbar".to_string(), nbar);
    if let Model::Lindblad(d) = m {
        r.parameters.insert("kappa".to_string(), d.kappa);
        r.parameters.insert("nbar_bath".to_string(), d.nbar_bath);
    }
    if let Some(khz) = cfg.g_khz {
        r.parameters.insert("g_khz".to_string(), khz);
    }
}

pub(crate) fn gate(cfg: &RunConfig) -> Result<FidelityReport, CliError> {
    let params = gate_params(cfg)?;
    let nbar = cfg.nbar.unwrap_or(0.0);
    let m = model(cfg)?;
    let mut r = gates::verify_gate(&params, &field(cutoff_for(cfg, nbar)?, nbar)?, &m, &integrator(cfg)?)?;
    annotate(&mut r, cfg, &m, nbar);
    Ok(r)
}

fn thermal_sweep(cfg: &RunConfig) -> Result<Vec<FidelityReport>, CliError> {
    let params = gate_params(cfg)?;
    let m = model(cfg)?;
    let list = cfg.nbar_list.clone().unwrap_or_else(|| vec![0.0]);
    let mut reports = analysis::thermal_sweep(&params, &list, &m, &integrator(cfg)?)?;
    for r in &mut reports {
        let nbar = r.parameters["nbar"];
        annotate(r, cfg, &m, nbar);
    }
    Ok(reports)
}

fn ghz(cfg: &RunConfig) -> Result<FidelityReport, CliError> {
    let n = cfg.n_atoms.unwrap_or(3);
    let g = cfg.g.unwrap_or(1.0);
    let params = match cfg.family_index {
        Some(i) => GhzParameters::from_index(n, g, i)?,
        None => gates::plan_ghz(n, g, cfg.omega_ratio.unwrap_or(50.0))?,
    };
    let nbar = cfg.nbar.unwrap_or(0.0);
    let m = model(cfg)?;
    let mut r = gates::run_ghz(&params, &field(cutoff_for(cfg, nbar)?, nbar)?, &m, &integrator(cfg)?)?;
    annotate(&mut r, cfg, &m, nbar);
    Ok(r)
}

/// Budget rows plus `κt` when a decay rate is configured. The decay row is the
/// full-model fidelity minus the damped one at the admissible drive.
fn error_budget(cfg: &RunConfig) -> Result<(Vec<BudgetRow>, Option<f64>), CliError> {
    let ratio = cfg.omega_ratio.unwrap_or(5.0);
    let eps = cfg.epsilon.unwrap_or(0.01);
    let cutoff = cfg.cutoff.unwrap_or(12);
    let icfg = integrator(cfg)?;
    let mut rows: Vec<BudgetRow> = analysis::error_budget(ratio, eps, cutoff, &icfg)?.iter().map(BudgetRow::from).collect();
    let Some(kappa) = cfg.kappa_internal()? else { return Ok((rows, None)) };
    let params = gates::plan_gate(1.0, ratio)?;
    let vacuum = field(cutoff, 0.0)?;
    let damping = CavityDamping { kappa, nbar_bath: cfg.nbar_bath.unwrap_or(0.0) };
    let (full, damped) = rayon::join(
        || gates::verify_gate(&params, &vacuum, &Model::Full, &icfg),
        || gates::verify_gate(&params, &vacuum, &Model::Lindblad(damping), &icfg),
    );
    let entry = BudgetEntry {
        quantity: "cavity_decay".to_string(),
        omega_ratio: params.omega_ratio(),
        omega_t_over_pi: params.omega_t_over_pi(),
        formula: None,
        simulated: Some(full?.fidelity - damped?.fidelity),
    };
    rows.push(BudgetRow::from(&entry));
    Ok((rows, Some(kappa * params.t)))
}

pub(crate) fn validate_propagator(cfg: &RunConfig) -> Result<Vec<ValidationRow>, CliError> {
    let samples = cfg.samples.unwrap_or(10);
    let (lo, hi) = (cfg.delta_min.unwrap_or(0.5), cfg.delta_max.unwrap_or(2.0));
    let cutoff = cfg.cutoff.unwrap_or(12);
    let padding = cfg.padding.unwrap_or(30);
    let icfg = integrator(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.unwrap_or(2024));
    let draws: Vec<(f64, f64)> = (0..samples)
        .map(|_| {
            let delta = lo + (hi - lo) * rng.random::<f64>();
            // 1 − u lies in (0, 1], so t covers (0, 4π/δ]
            let t = (1.0 - rng.random::<f64>()) * 4.0 * std::f64::consts::PI / delta;
            (delta, t)
        })
        .collect();
    draws
        .par_iter()
        .enumerate()
        .map(|(sample, &(delta, t))| {
            let spec = HilbertSpec::new(2, cutoff, 1.0, delta, 0.0)?;
            let closed = propagator::effective_propagator(&spec, t)?;
            let integrated = propagator::integrated_effective_propagator(&spec, t, padding, &icfg)?;
            Ok(ValidationRow { sample, delta, t, max_deviation: closed.max_abs_diff(&integrated) })
        })
        .collect()
}

fn effective_floor(reports: &[&FidelityReport]) -> Result<(), CliError> {
    for r in reports {
        if r.model == "effective" && r.fidelity < EFFECTIVE_FLOOR {
            return Err(CliError::Invariant(format!("effective-model fidelity {} below {EFFECTIVE_FLOOR}", r.fidelity)));
        }
    }
    Ok(())
}

fn summarize_gate<W: Write>(out: &mut W, r: &FidelityReport, cfg: &RunConfig) -> Result<(), CliError> {
    let row = GateRow::from(r);
    writeln!(
        out,
        "phase gate ({} model), Ω/g = {} (k = {}, Ωt = {}π), n̄ = {}, cutoff {}",
        row.model, row.omega_ratio, row.k, row.omega_t_over_pi, row.nbar, row.cutoff
    )?;
    writeln!(out, "worst-case fidelity {:.10}", row.fidelity)?;
    for p in &r.per_input {
        writeln!(out, "  |{}⟩  {:.10}", p.input, p.fidelity)?;
    }
    writeln!(
        out,
        "phases/π relative to |+-⟩: ++ {:.6}  +- {:.6}  -+ {:.6}  -- {:.6}",
        row.phase_pp, row.phase_pm, row.phase_mp, row.phase_mm
    )?;
    writeln!(out, "truncation leakage {:.3e}", row.truncation_leakage)?;
    if let Some(s) = row.self_convergence {
        writeln!(out, "integrator self-convergence {s:.3e}")?;
    }
    if let Some(g) = cfg.g_physical() {
        // internal times are in units of 1/g
        let seconds = r.parameters["t"] * r.parameters["g"] / g;
        writeln!(out, "gate time {:.3} µs at g/2π = {} kHz", seconds * 1e6, cfg.g_khz.unwrap_or_default())?;
    }
    Ok(())
}
