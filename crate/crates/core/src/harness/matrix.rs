//! Experiment matrix: one run per (method, ε, D, seed) cell, each written
//! to its own directory. A cell directory is created atomically (rename of
//! a staging directory), so its presence marks the cell as complete and
//! reruns skip it.

use std::collections::HashMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Mode};
use crate::dataset::{parse_casas, rasterize};
use crate::error::{Error, Result};
use crate::floorplan::{build_grid, CandidateGrid, Point};
use crate::objective::{write_observations_csv, BudgetedObjective, Evaluator, Observation, ReplayEvaluator, SimulationEvaluator};
use crate::optimizers::{self, Method, RunReport};
use crate::seed;
use crate::simulator::Simulator;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub method: Method,
    /// `None` in replay mode.
    pub epsilon: Option<f64>,
    /// `None` for GA.
    pub sensors: Option<usize>,
    pub seed: u64,
}

impl Cell {
    pub fn dir_name(&self) -> String {
        let eps = self.epsilon.map_or("na".to_string(), |e| e.to_string());
        let d = self.sensors.map_or("auto".to_string(), |d| d.to_string());
        format!("{}_e{}_d{}_s{}", self.method, eps, d, self.seed)
    }

    /// Shared by all methods in a (ε, D, seed) slot so that paired runs see
    /// the same query noise.
    pub fn run_seed(&self) -> u64 {
        seed::derive_path(
            self.seed,
            &[self.epsilon.map_or(0, f64::to_bits), self.sensors.unwrap_or(0) as u64],
        )
    }
}

pub fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let epsilons: Vec<Option<f64>> = match cfg.mode {
        Mode::Simulate => cfg.epsilons.iter().map(|&e| Some(e)).collect(),
        Mode::Replay => vec![None],
    };
    let mut out = Vec::new();
    for &method in &cfg.methods {
        for &epsilon in &epsilons {
            let counts: Vec<Option<usize>> = if method.takes_sensor_count() {
                cfg.sensor_counts.iter().map(|&d| Some(d)).collect()
            } else {
                vec![None]
            };
            for sensors in counts {
                for seed in cfg.seed_list() {
                    out.push(Cell {
                        method,
                        epsilon,
                        sensors,
                        seed,
                    });
                }
            }
        }
    }
    out
}

/// Candidate locations of one scenario: a grid, or the recorded sensors.
#[derive(Clone)]
pub struct Scenario {
    pub evaluator: Arc<dyn Evaluator>,
    pub rows: usize,
    pub cols: usize,
    /// Coordinates per location, if known.
    pub positions: Vec<Option<Point>>,
}

impl Scenario {
    pub fn from_grid(evaluator: Arc<dyn Evaluator>, grid: &CandidateGrid) -> Self {
        Self {
            evaluator,
            rows: grid.rows,
            cols: grid.cols,
            positions: grid.locations.iter().map(|&p| Some(p)).collect(),
        }
    }

    pub fn locations(&self) -> usize {
        self.evaluator.location_count()
    }
}

/// Builds the evaluator for every ε of the config (one entry in replay mode).
pub fn build_scenarios(cfg: &ExperimentConfig) -> Result<Vec<(Option<f64>, Scenario)>> {
    let kind = cfg.classifier_kind();
    match cfg.mode {
        Mode::Simulate => {
            let plan = cfg.floor_plan()?;
            let adl = cfg.adl()?;
            cfg.epsilons
                .iter()
                .map(|&eps| {
                    let grid = build_grid(&plan, eps)?;
                    let sim = Simulator::new(plan.clone(), grid.clone(), adl.clone(), cfg.simulator.clone())?;
                    let ev: Arc<dyn Evaluator> = Arc::new(SimulationEvaluator {
                        simulator: sim,
                        classifier: kind.clone(),
                    });
                    Ok((Some(eps), Scenario::from_grid(ev, &grid)))
                })
                .collect()
        }
        Mode::Replay => {
            let path = cfg.casas.as_ref().ok_or_else(|| Error::Config("replay mode needs a `casas` file".into()))?;
            let file = fs::File::open(path).map_err(|e| Error::Missing(format!("{}: {e}", path.display())))?;
            let log = parse_casas(BufReader::new(file));
            let ds = rasterize(&log, cfg.replay.period_seconds)?;
            let ev = ReplayEvaluator::new(&ds, cfg.replay.train_fraction, kind)?;
            let positions = log.inventory.ids.iter().map(|id| log.inventory.positions.get(id).copied()).collect();
            let l = log.inventory.len();
            Ok(vec![(
                None,
                Scenario {
                    evaluator: Arc::new(ev),
                    rows: 1,
                    cols: l,
                    positions,
                },
            )])
        }
    }
}

/// Runs a single cell in memory.
pub fn run_cell(cfg: &ExperimentConfig, scenario: &Scenario, cell: &Cell) -> Result<(RunReport, Vec<Observation>)> {
    let run_seed = cell.run_seed();
    let mut obj = BudgetedObjective::new(scenario.evaluator.clone(), cfg.budget, seed::derive(run_seed, 1))
        .with_memoize(cfg.memoize);
    let report = optimizers::run(
        cell.method,
        &mut obj,
        cell.sensors.unwrap_or(0),
        &cfg.optimizer_config(),
        seed::derive(run_seed, 2),
    )?;
    Ok((report, obj.log().to_vec()))
}

/// Per-cell summary record (`summary.csv` inside each cell directory).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: Method,
    pub epsilon: Option<f64>,
    #[serde(rename = "D")]
    pub target_sensors: Option<usize>,
    pub seed: u64,
    pub best_value: Option<f64>,
    pub sensors: usize,
    pub queries_used: usize,
    pub free_queries: usize,
    pub budget_exhausted: bool,
    pub best_placement: String,
    pub partial_placement: String,
    pub grid_rows: usize,
    pub grid_cols: usize,
}

impl CellSummary {
    pub fn new(cell: &Cell, report: &RunReport, scenario: &Scenario) -> Self {
        Self {
            method: cell.method,
            epsilon: cell.epsilon,
            target_sensors: cell.sensors,
            seed: cell.seed,
            best_value: report.best_value,
            sensors: report.best.as_ref().map_or(0, |p| p.len()),
            queries_used: report.queries_used(),
            free_queries: report.free_queries(),
            budget_exhausted: report.budget_exhausted,
            best_placement: report.best.as_ref().map(|p| p.to_string()).unwrap_or_default(),
            partial_placement: report.partial.as_ref().map(|p| p.to_string()).unwrap_or_default(),
            grid_rows: scenario.rows,
            grid_cols: scenario.cols,
        }
    }

    pub fn best_indices(&self) -> Vec<usize> {
        parse_indices(&self.best_placement)
    }
}

pub fn parse_indices(text: &str) -> Vec<usize> {
    text.split(';').filter_map(|s| s.trim().parse().ok()).collect()
}

pub fn write_cell_summary(path: &Path, s: &CellSummary) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.serialize(s)?;
    w.flush()?;
    Ok(())
}

pub fn read_cell_summary(path: &Path) -> Result<CellSummary> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .next()
        .ok_or_else(|| Error::Missing(format!("{} has no rows", path.display())))?
        .map_err(Error::from)
}

fn write_profile(dir: &Path, report: &RunReport, scenario: &Scenario) -> Result<()> {
    if report.snapshots.is_empty() {
        return Ok(());
    }
    let pdir = dir.join("profile");
    fs::create_dir_all(&pdir)?;
    for snap in &report.snapshots {
        let mut w = csv::Writer::from_path(pdir.join(format!("iter_{:04}.csv", snap.iteration)))?;
        w.write_record(["region_index", "x", "y", "prior", "mean", "std", "expected_gain"])?;
        for (i, r) in snap.regions.iter().enumerate() {
            let pos = scenario.positions.get(i).copied().flatten();
            w.write_record([
                i.to_string(),
                pos.map(|p| p.x.to_string()).unwrap_or_default(),
                pos.map(|p| p.y.to_string()).unwrap_or_default(),
                r.prior.to_string(),
                r.mean.to_string(),
                r.std.to_string(),
                r.expected_gain.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Writes all artifacts of a finished cell into `dir`.
pub fn write_cell(dir: &Path, cell: &Cell, report: &RunReport, log: &[Observation], scenario: &Scenario) -> Result<()> {
    fs::create_dir_all(dir)?;
    report.write_trace_csv(fs::File::create(dir.join("trace.csv"))?)?;
    write_observations_csv(log, fs::File::create(dir.join("observations.csv"))?)?;
    write_cell_summary(&dir.join("summary.csv"), &CellSummary::new(cell, report, scenario))?;
    write_profile(dir, report, scenario)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatrixOutcome {
    pub completed: Vec<String>,
    pub skipped: Vec<String>,
    pub failed: Vec<(String, String)>,
}

/// Runs every cell not already present under `out`, then rewrites the
/// root `summary.csv` from all cell summaries on disk. Cell failures are
/// collected (and written to `failures.csv`) without stopping the matrix.
pub fn run_matrix(cfg: &ExperimentConfig, out: &Path) -> Result<MatrixOutcome> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), cfg.to_toml_string())?;
    let scenarios: HashMap<Option<u64>, Scenario> = build_scenarios(cfg)?
        .into_iter()
        .map(|(e, s)| (e.map(f64::to_bits), s))
        .collect();

    let todo = cells(cfg);
    let results: Vec<(String, std::result::Result<bool, String>)> = todo
        .par_iter()
        .map(|cell| {
            let name = cell.dir_name();
            let dir = out.join(&name);
            if dir.is_dir() {
                return (name, Ok(false));
            }
            let scenario = &scenarios[&cell.epsilon.map(f64::to_bits)];
            let staging = out.join(format!(".{name}.partial"));
            let res = (|| -> Result<()> {
                let (report, log) = run_cell(cfg, scenario, cell)?;
                if staging.exists() {
                    fs::remove_dir_all(&staging)?;
                }
                write_cell(&staging, cell, &report, &log, scenario)?;
                fs::rename(&staging, &dir)?;
                Ok(())
            })();
            if res.is_err() {
                let _ = fs::remove_dir_all(&staging);
            }
            (name, res.map(|_| true).map_err(|e| e.to_string()))
        })
        .collect();

    let mut outcome = MatrixOutcome::default();
    for (name, r) in results {
        match r {
            Ok(true) => outcome.completed.push(name),
            Ok(false) => outcome.skipped.push(name),
            Err(e) => outcome.failed.push((name, e)),
        }
    }
    let failures = out.join("failures.csv");
    if outcome.failed.is_empty() {
        if failures.exists() {
            fs::remove_file(&failures)?;
        }
    } else {
        let mut w = csv::Writer::from_path(&failures)?;
        w.write_record(["cell", "error"])?;
        for (c, e) in &outcome.failed {
            w.write_record([c, e])?;
        }
        w.flush()?;
    }
    let records = super::report::load_cells(out)?;
    super::report::write_summary_csv(&out.join("summary.csv"), &super::report::summarize(&records))?;
    Ok(outcome)
}

/// Cell directories under `out`, sorted by name.
pub fn cell_dirs(out: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(out)? {
        let p = entry?.path();
        let hidden = p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.'));
        if p.is_dir() && !hidden && p.join("summary.csv").is_file() {
            dirs.push(p);
        }
    }
    dirs.sort();
    Ok(dirs)
}
