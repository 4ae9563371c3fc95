//! Seeded runs, parameter sweeps and optimizer comparisons, with CSV and
//! plain-text outputs that are byte-identical for a fixed configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use crate::diagnostics::{action_estimate, ensemble_report, rate_bound_check, supermartingale_check, RateReport, Trajectory};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, RawConfig};
use crate::harness::problem::ProblemInstance;
use crate::optimizers::{OptimizerKind, PreparedRun, RunOutcome};

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Absolute tolerance of the noiseless energy monotonicity check.
pub const ENERGY_ABS_TOL: f64 = 1e-9;

/// Aggregate outcome of one configuration.
#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub optimizer: OptimizerKind,
    pub seeds: Vec<u64>,
    pub steps: usize,
    pub failures: Vec<(u64, String)>,
    pub mean_final_gap: f64,
    pub se_final_gap: f64,
    pub energy_non_increasing: Option<bool>,
    pub rate: Option<RateReport<f64>>,
    pub action: Option<f64>,
    pub files: Vec<PathBuf>,
}

impl ExperimentSummary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "optimizer = {}", self.optimizer);
        let _ = writeln!(s, "seeds = {}", self.seeds.len());
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "failed_seeds = {}", self.failures.len());
        for (seed, e) in &self.failures {
            let _ = writeln!(s, "failure.seed{seed} = {e}");
        }
        let _ = writeln!(s, "mean_final_gap = {}", num(self.mean_final_gap));
        let _ = writeln!(s, "se_final_gap = {}", num(self.se_final_gap));
        match self.energy_non_increasing {
            Some(b) => {
                let _ = writeln!(s, "energy_non_increasing = {b}");
            }
            None => {
                let _ = writeln!(s, "energy_non_increasing = n/a");
            }
        }
        if let Some(r) = &self.rate {
            let _ = writeln!(s, "rate.max_ratio = {}", num(r.max_ratio));
            let _ = writeln!(s, "rate.fitted_constant = {}", num(r.fitted_constant));
            let _ = writeln!(s, "rate.bounded = {}", r.bounded);
            let _ = writeln!(s, "rate.fit_holds = {}", r.fit_holds);
        }
        if let Some(a) = self.action {
            let _ = writeln!(s, "action = {}", num(a));
        }
        s
    }
}

fn write_file(path: &Path, contents: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    files.push(path.to_path_buf());
    Ok(())
}

fn trajectory_csv(traj: &Trajectory<f64>) -> String {
    let d = traj.x.first().map_or(0, |x| x.len());
    let p = traj.phi.first().map_or(0, |x| x.len());
    let mut s = String::from("k,t");
    for i in 0..d {
        let _ = write!(s, ",x{i}");
    }
    s.push_str(",loss_gap");
    for j in 0..p {
        let _ = write!(s, ",phi{j}");
    }
    s.push_str(",filter_trace,filter_gain,qv,martingale_qv\n");
    for k in 0..traj.len() {
        let _ = write!(s, "{k},{}", num(traj.times[k]));
        for v in &traj.x[k] {
            let _ = write!(s, ",{}", num(*v));
        }
        let _ = write!(s, ",{}", num(traj.loss_gap[k]));
        for v in &traj.phi[k] {
            let _ = write!(s, ",{}", num(*v));
        }
        let _ = writeln!(
            s,
            ",{},{},{},{}",
            num(traj.filter_trace[k]),
            num(traj.filter_gain[k]),
            num(traj.qv[k]),
            num(traj.martingale_qv[k])
        );
    }
    s
}

fn phi_csv(prepared: &PreparedRun<f64>) -> String {
    let p = prepared.phi.first().map_or(0, |x| x.len());
    let mut s = String::from("t");
    for j in 0..p {
        let _ = write!(s, ",phi{j}");
    }
    s.push('\n');
    for (t, phi) in prepared.mesh.times().iter().zip(&prepared.phi) {
        s.push_str(&num(*t));
        for v in phi {
            let _ = write!(s, ",{}", num(*v));
        }
        s.push('\n');
    }
    s
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0) / n).sqrt())
}

/// Runs every seed (in parallel) and returns outcomes in seed order.
pub fn run_seeds(cfg: &ExperimentConfig) -> Result<(PreparedRun<f64>, Option<ProblemInstance<f64>>, Vec<RunOutcome<f64>>)> {
    let problem = if cfg.stream_is_empirical() {
        Some(cfg.problem.generate()?)
    } else {
        None
    };
    let prepared = PreparedRun::new(cfg.optimizer.clone(), cfg.steps, problem.as_ref())?;
    let outcomes: Vec<RunOutcome<f64>> = cfg.seeds.par_iter().map(|&seed| prepared.run(problem.as_ref(), seed)).collect();
    Ok((prepared, problem, outcomes))
}

/// Runs a configuration and writes `trajectory_seed{s}.csv`, `phi.csv`,
/// `diagnostics.csv` and `summary.txt` into the configured output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    let (prepared, problem, outcomes) = run_seeds(cfg)?;
    let dir = &cfg.output;
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    let mut failures = Vec::new();
    for o in &outcomes {
        if let Some(e) = &o.error {
            warn!("seed {} failed: {e}", o.seed);
            failures.push((o.seed, e.to_string()));
        }
        write_file(&dir.join(format!("trajectory_seed{}.csv", o.seed)), &trajectory_csv(&o.trajectory), &mut files)?;
    }
    write_file(&dir.join("phi.csv"), &phi_csv(&prepared), &mut files)?;

    let ok: Vec<Trajectory<f64>> = outcomes.iter().filter(|o| o.error.is_none()).map(|o| o.trajectory.clone()).collect();
    let finals: Vec<f64> = ok.iter().map(|t| t.final_gap()).collect();
    let (mean_final_gap, se_final_gap) = mean_se(&finals);
    let schedule = &prepared.spec.schedule;
    let map = &prepared.spec.map;
    let mut diag = String::from("t,mean_energy,se_energy,mean_gap,bound_value,ratio\n");
    let mut energy_non_increasing = None;
    let mut rate = None;
    let mut action = None;
    match (&problem, ok.is_empty()) {
        (Some(p), false) => {
            let report = ensemble_report(map, schedule, p.x_star().view(), &ok)?;
            let rb = rate_bound_check(&report, schedule, cfg.burn_fraction, cfg.rate_bound);
            for k in 0..report.times.len() {
                let _ = writeln!(
                    diag,
                    "{},{},{},{},{},{}",
                    num(report.times[k]),
                    num(report.mean_energy[k]),
                    num(report.se_energy[k]),
                    num(report.mean_gap[k]),
                    num(rb.bound_value[k]),
                    num(rb.ratio[k])
                );
            }
            energy_non_increasing = Some(supermartingale_check(&report.energies, ENERGY_ABS_TOL).passed);
            action = Some(action_estimate(map, schedule, &ok)?);
            rate = Some(rb);
        }
        _ => {
            // No loss landscape: only times and the noise bound are meaningful.
            if let Some(t) = ok.first() {
                for k in 0..t.steps() {
                    let qv = mean_se(&ok.iter().map(|t| t.martingale_qv[k]).collect::<Vec<_>>()).0;
                    let bound = (-schedule.beta(t.times[k])).exp() * qv.max(1.0);
                    let _ = writeln!(diag, "{},NaN,NaN,NaN,{},NaN", num(t.times[k]), num(bound));
                }
            }
        }
    }
    write_file(&dir.join("diagnostics.csv"), &diag, &mut files)?;
    let summary = ExperimentSummary {
        optimizer: cfg.optimizer.kind,
        seeds: cfg.seeds.clone(),
        steps: cfg.steps,
        failures,
        mean_final_gap,
        se_final_gap,
        energy_non_increasing,
        rate,
        action,
        files: Vec::new(),
    };
    let mut text = summary.to_text();
    text.push_str("\n[config]\n");
    text.push_str(&cfg.raw.to_text());
    write_file(&dir.join("summary.txt"), &text, &mut files)?;
    info!("wrote {} files to {}", files.len(), dir.display());
    Ok(ExperimentSummary { files, ..summary })
}

/// Parses `key=v1,v2;key2=w1,w2` into (key, values) pairs.
pub fn parse_grid(spec: &str) -> Result<Vec<(String, Vec<String>)>> {
    let mut out = Vec::new();
    for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("grid entry '{part}' is not key=values")))?;
        let values: Vec<String> = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        if values.is_empty() {
            return Err(Error::Config(format!("grid key '{}' has no values", k.trim())));
        }
        out.push((k.trim().to_string(), values));
    }
    if out.is_empty() {
        return Err(Error::Config("empty grid".into()));
    }
    Ok(out)
}

/// One sweep or comparison cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub label: Vec<(String, String)>,
    pub summary: std::result::Result<ExperimentSummary, String>,
}

fn cell_row(cell: &CellResult) -> String {
    let mut s = String::new();
    for (_, v) in &cell.label {
        let _ = write!(s, "{v},");
    }
    match &cell.summary {
        Ok(sm) => {
            let flag = sm.energy_non_increasing.map_or("n/a".to_string(), |b| b.to_string());
            let ratio = sm.rate.as_ref().map_or(f64::NAN, |r| r.max_ratio);
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},ok",
                sm.seeds.len(),
                sm.failures.len(),
                num(sm.mean_final_gap),
                num(sm.se_final_gap),
                flag,
                num(ratio)
            );
        }
        Err(e) => {
            let _ = writeln!(s, "0,0,NaN,NaN,n/a,NaN,\"{}\"", e.replace('"', "'"));
        }
    }
    s
}

fn table(keys: &[String], cells: &[CellResult]) -> String {
    let mut s = String::new();
    for k in keys {
        let _ = write!(s, "{k},");
    }
    s.push_str("seeds,failed,mean_final_gap,se_final_gap,energy_non_increasing,max_ratio,status\n");
    for c in cells {
        s.push_str(&cell_row(c));
    }
    s
}

fn run_cell(raw: RawConfig, seed_override: Option<&str>) -> std::result::Result<ExperimentSummary, String> {
    ExperimentConfig::from_raw_with_seed(raw, seed_override)
        .and_then(|cfg| run_experiment(&cfg))
        .map_err(|e| e.to_string())
}

/// Runs the cross product of `grid` (first key outermost). Each cell writes
/// into `<output>/cell{i}`; `sweep.csv` in `<output>` lists one row per cell.
pub fn sweep(base: &ExperimentConfig, grid: &str) -> Result<Vec<CellResult>> {
    let grid = parse_grid(grid)?;
    for (k, _) in &grid {
        let mut probe = base.raw.clone();
        probe.set(k, "0")?;
    }
    let mut cells: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (k, values) in &grid {
        cells = cells
            .into_iter()
            .flat_map(|c| {
                values.iter().map(move |v| {
                    let mut c = c.clone();
                    c.push((k.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    let seeds = seeds_text(&base.seeds);
    let mut results = Vec::with_capacity(cells.len());
    for (i, label) in cells.into_iter().enumerate() {
        let mut raw = base.raw.clone();
        for (k, v) in &label {
            raw.set(k, v)?;
        }
        raw.set("output", &base.output.join(format!("cell{i}")).to_string_lossy())?;
        let summary = run_cell(raw, Some(&seeds));
        if let Err(e) = &summary {
            warn!("sweep cell {i} failed: {e}");
        }
        results.push(CellResult { label, summary });
    }
    let keys: Vec<String> = grid.into_iter().map(|(k, _)| k).collect();
    fs::create_dir_all(&base.output).map_err(|e| Error::Io(format!("{}: {e}", base.output.display())))?;
    let mut files = Vec::new();
    write_file(&base.output.join("sweep.csv"), &table(&keys, &results), &mut files)?;
    Ok(results)
}

fn seeds_text(seeds: &[u64]) -> String {
    seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
}

/// Runs the same configuration and seeds under several optimizers, writing
/// `<output>/<kind>/…` and `<output>/compare.csv`.
pub fn compare(base: &ExperimentConfig, optimizers: &[OptimizerKind]) -> Result<Vec<CellResult>> {
    if optimizers.is_empty() {
        return Err(Error::Config("compare needs at least one optimizer".into()));
    }
    let seeds = seeds_text(&base.seeds);
    let mut results = Vec::new();
    for kind in optimizers {
        let mut raw = base.raw.clone();
        raw.set("optimizer.kind", kind.name())?;
        raw.set("output", &base.output.join(kind.name()).to_string_lossy())?;
        let summary = run_cell(raw, Some(&seeds));
        results.push(CellResult {
            label: vec![("optimizer".to_string(), kind.name().to_string())],
            summary,
        });
    }
    fs::create_dir_all(&base.output).map_err(|e| Error::Io(format!("{}: {e}", base.output.display())))?;
    let mut files = Vec::new();
    write_file(&base.output.join("compare.csv"), &table(&["optimizer".to_string()], &results), &mut files)?;
    Ok(results)
}
