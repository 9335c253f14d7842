//! The subcommands, callable without going through argument parsing.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rydpump::noise::montecarlo;
use rydpump::protocols::{run, solve_step_c_timing, RecordMode, RunResult};
use serde_json::{json, Map, Value};

use crate::config::{RunConfig, SweepAxis, MHZ, US};
use crate::error::{numeric, CliError};
use crate::output::{fmt_f64, metadata, out_path, record_header, record_row, write_csv, write_json};

/// Command-line settings that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub record: Option<RecordMode>,
}

impl Overrides {
    pub fn apply(&self, mut cfg: RunConfig) -> RunConfig {
        if let Some(d) = &self.out_dir {
            cfg.output.dir = d.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.record {
            cfg.output.record = r;
        }
        cfg
    }
}

/// Files written by a command.
#[derive(Debug, Clone)]
pub struct Written {
    pub csv: Vec<PathBuf>,
    pub json: PathBuf,
}

fn simulate(cfg: &RunConfig) -> Result<(RunResult, Vec<String>, Vec<String>), CliError> {
    let prep = cfg.prepare()?;
    let result = run(&prep.protocol, &prep.rho0, &prep.observables, &prep.options).map_err(numeric)?;
    let labels = prep.observables.iter().map(|o| o.kind.label()).collect();
    let mut warnings = prep.warnings;
    warnings.extend(result.warnings.iter().cloned());
    Ok((result, labels, warnings))
}

fn summary(result: &RunResult, labels: &[String]) -> Value {
    let finals: Map<String, Value> =
        labels.iter().cloned().zip(result.last().values.iter().map(|v| json!(v))).collect();
    let max_trace = result.records.iter().map(|r| r.trace_error).fold(0.0, f64::max);
    let max_herm = result.records.iter().map(|r| r.hermiticity_error).fold(0.0, f64::max);
    json!({
        "final": finals,
        "cycles": result.last().cycle,
        "total_time_us": result.last().time / US,
        "max_trace_error": max_trace,
        "max_hermiticity_error": max_herm,
    })
}

pub fn cmd_run(cfg: &RunConfig) -> Result<Written, CliError> {
    let (result, labels, warnings) = simulate(cfg)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let stem = cfg.stem();
    let csv = out_path(&cfg.output.dir, &format!("{stem}.csv"))?;
    write_csv(&csv, &record_header(&labels), result.records.iter().map(record_row))?;
    let json = out_path(&cfg.output.dir, &format!("{stem}.json"))?;
    let mut doc = json!({ "metadata": metadata("run", cfg), "summary": summary(&result, &labels) });
    doc["summary"]["warnings"] = json!(warnings);
    write_json(&json, &doc)?;
    Ok(Written { csv: vec![csv], json })
}

fn grid(axes: &[SweepAxis]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.into_iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect()
    })
}

/// Runs the cartesian product of the sweep axes. `param`/`values` from the
/// command line replace the config's axes.
pub fn cmd_sweep(cfg: &RunConfig, param: Option<&str>, values: Option<&[f64]>) -> Result<Written, CliError> {
    let axes = match (param, values) {
        (Some(p), Some(v)) => vec![SweepAxis { param: p.to_string(), values: v.to_vec() }],
        (None, None) => cfg.sweep.clone(),
        _ => return Err(CliError::Config("--param and --values must be given together".into())),
    };
    if axes.is_empty() {
        return Err(CliError::Config("nothing to sweep: no --param/--values and no sweep block".into()));
    }
    if let Some(a) = axes.iter().find(|a| a.values.is_empty()) {
        return Err(CliError::Config(format!("sweep over {} has no values", a.param)));
    }
    let points = grid(&axes);
    let configs = points
        .iter()
        .map(|pt| axes.iter().zip(pt).try_fold(cfg.clone(), |c, (a, &v)| c.with_param(&a.param, v)))
        .collect::<Result<Vec<_>, _>>()?;
    // Validate everything before spending time on runs.
    for c in &configs {
        c.prepare()?;
    }
    let runs = configs.par_iter().map(simulate).collect::<Vec<_>>().into_iter().collect::<Result<Vec<_>, _>>()?;
    let labels = runs[0].1.clone();
    let mut header: Vec<String> = axes.iter().map(|a| format!("param:{}", a.param)).collect();
    header.extend(record_header(&labels));
    let rows = points.iter().zip(&runs).flat_map(|(pt, (result, _, _))| {
        result.records.iter().map(move |r| {
            let mut row: Vec<String> = pt.iter().map(|v| fmt_f64(*v)).collect();
            row.extend(record_row(r));
            row
        })
    });
    let stem = cfg.stem();
    let csv = out_path(&cfg.output.dir, &format!("{stem}_sweep.csv"))?;
    write_csv(&csv, &header, rows)?;
    let summaries: Vec<Value> = points
        .iter()
        .zip(&runs)
        .map(|(pt, (result, labels, warnings))| {
            let params: Map<String, Value> = axes.iter().zip(pt).map(|(a, v)| (a.param.clone(), json!(v))).collect();
            let mut s = summary(result, labels);
            s["params"] = Value::Object(params);
            s["warnings"] = json!(warnings);
            s
        })
        .collect();
    let json = out_path(&cfg.output.dir, &format!("{stem}_sweep.json"))?;
    write_json(&json, &json!({ "metadata": metadata("sweep", cfg), "axes": axes_json(&axes), "points": summaries }))?;
    Ok(Written { csv: vec![csv], json })
}

fn axes_json(axes: &[SweepAxis]) -> Value {
    serde_json::to_value(axes).unwrap_or(Value::Null)
}

/// Thermal Monte Carlo at each temperature (μK).
pub fn cmd_mc(cfg: &RunConfig, trajectories: Option<usize>, temperatures: Option<&[f64]>) -> Result<Written, CliError> {
    let mut cfg = cfg.clone();
    let noise = cfg.noise.as_mut().ok_or_else(|| CliError::Config("mc needs a noise block in the config".into()))?;
    if let Some(n) = trajectories {
        if n == 0 {
            return Err(CliError::Config("--trajectories must be at least 1".into()));
        }
        noise.trajectories = n;
    }
    if let Some(t) = temperatures {
        if t.is_empty() || t.iter().any(|x| !(*x >= 0.0)) {
            return Err(CliError::Config("--temperature needs non-negative values".into()));
        }
        noise.temperatures_uk = t.to_vec();
    }
    if noise.temperatures_uk.is_empty() {
        return Err(CliError::Config("no temperatures given".into()));
    }
    let temps = noise.temperatures_uk.clone();
    let prep = cfg.prepare()?;
    let mut opts = prep.options;
    opts.integrator.quasi_static_steps.get_or_insert(16);
    let label = prep.observables[0].kind.label();
    let mut traj_rows = Vec::new();
    let mut mean_rows = Vec::new();
    let mut per_t = Vec::new();
    for &t in &temps {
        let mc = cfg.montecarlo(t)?;
        let r = montecarlo(&prep.protocol, &prep.rho0, &prep.observables, &mc, &opts).map_err(numeric)?;
        for tr in &r.trajectories {
            traj_rows.push(vec![
                fmt_f64(t),
                tr.index.to_string(),
                tr.final_value().map(fmt_f64).unwrap_or_default(),
                tr.is_valid().to_string(),
                tr.error.clone().unwrap_or_default(),
            ]);
        }
        for (c, v) in r.mean_curve.iter().enumerate() {
            mean_rows.push(vec![fmt_f64(t), c.to_string(), fmt_f64(*v)]);
        }
        per_t.push(json!({
            "temperature_uk": t,
            "mean": r.mean,
            "std": r.std,
            "valid": r.valid_count(),
            "invalid": r.trajectories.len() - r.valid_count(),
            "sigma_x_um": r.variances.x.sqrt() * 1e6,
            "sigma_z_um": r.variances.z.sqrt() * 1e6,
            "sigma_v_m_per_s": r.variances.v.sqrt(),
        }));
    }
    let stem = cfg.stem();
    let traj = out_path(&cfg.output.dir, &format!("{stem}_mc_trajectories.csv"))?;
    let head: Vec<String> = ["param:temperature_uk", "trajectory", "final", "valid", "error"].map(String::from).to_vec();
    write_csv(&traj, &head, traj_rows)?;
    let mean = out_path(&cfg.output.dir, &format!("{stem}_mc_mean.csv"))?;
    write_csv(&mean, &["param:temperature_uk".to_string(), "cycle".into(), label.clone()], mean_rows)?;
    let json = out_path(&cfg.output.dir, &format!("{stem}_mc.json"))?;
    write_json(&json, &json!({ "metadata": metadata("mc", &cfg), "observable": label, "temperatures": per_t }))?;
    Ok(Written { csv: vec![traj, mean], json })
}

/// Detuned step-C'' timing for Ω_a = 2π × `omega_mhz` MHz.
pub fn cmd_solve_timing(omega_mhz: f64, max_k: u32) -> Result<Value, CliError> {
    if !(omega_mhz > 0.0 && omega_mhz.is_finite()) {
        return Err(CliError::Config(format!("--omega must be positive, got {omega_mhz}")));
    }
    let omega = omega_mhz * MHZ;
    let s = solve_step_c_timing(omega, max_k).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(json!({
        "omega_a_mhz": omega_mhz,
        "delta_mhz": s.delta / MHZ,
        "t_us": s.t / US,
        "k": s.k,
        "l": s.l,
        "j": s.j,
        "residuals": s.residuals(omega),
    }))
}

pub fn cmd_plot(input: &Path, output: &Path, panel: crate::plot::Panel) -> Result<(), CliError> {
    crate::plot::plot_csv(input, output, panel)
}
