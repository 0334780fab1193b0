//! Placement search strategies sharing a [`BudgetedObjective`].

mod bo;
mod ga;
mod greedy;
pub mod sampler;

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::acquisition::{AcquisitionParams, RegionSummary};
use crate::error::{Error, Result};
use crate::objective::{BudgetedObjective, Observation, Placement, PriorBudgetMode};
use crate::surrogate::PrfParams;

pub use bo::{run_bo, run_dgbo};
pub use ga::{breed, crossover, mutate, run_ga, GaParams};
pub use greedy::run_greedy;
pub use sampler::{propose_candidates, SamplerParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bo,
    Dgbo,
    Ga,
    Greedy,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ga, Method::Greedy, Method::Bo, Method::Dgbo];

    pub fn name(self) -> &'static str {
        match self {
            Method::Bo => "bo",
            Method::Dgbo => "dgbo",
            Method::Ga => "ga",
            Method::Greedy => "greedy",
        }
    }

    /// GA picks its own sensor count.
    pub fn takes_sensor_count(self) -> bool {
        self != Method::Ga
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown method {s:?} (expected bo, dgbo, ga or greedy)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub surrogate: PrfParams,
    pub sampler: SamplerParams,
    pub ga: GaParams,
    pub acquisition: AcquisitionParams,
    pub prior_budget_mode: PriorBudgetMode,
    /// DGBO profile snapshot period in post-prior queries; 0 disables.
    pub snapshot_every: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            surrogate: PrfParams::default(),
            sampler: SamplerParams::default(),
            ga: GaParams::default(),
            acquisition: AcquisitionParams::default(),
            prior_budget_mode: PriorBudgetMode::Charge,
            snapshot_every: 10,
        }
    }
}

/// Runs `method` on `obj`. `sensors` is ignored by GA.
pub fn run(method: Method, obj: &mut BudgetedObjective, sensors: usize, cfg: &OptimizerConfig, seed: u64) -> Result<RunReport> {
    match method {
        Method::Bo => run_bo(obj, sensors, cfg, seed),
        Method::Dgbo => run_dgbo(obj, sensors, cfg, seed),
        Method::Ga => run_ga(obj, cfg, seed),
        Method::Greedy => run_greedy(obj, sensors, cfg, seed),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryRecord {
    pub query_index: usize,
    pub value: f64,
    /// Best eligible value so far; `None` before the first eligible query.
    pub incumbent: Option<f64>,
    pub charged: bool,
    pub sensors: usize,
}

/// Profile state after `iteration` credited post-prior queries.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileSnapshot {
    pub iteration: usize,
    pub regions: Vec<RegionSummary>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub method: Method,
    /// Requested sensor count (`None` for GA).
    pub target_sensors: Option<usize>,
    pub seed: u64,
    pub budget: usize,
    pub config: OptimizerConfig,
    pub records: Vec<QueryRecord>,
    pub best: Option<Placement>,
    pub best_value: Option<f64>,
    /// Greedy only: the budget ran out before all sensors were placed.
    pub budget_exhausted: bool,
    /// Greedy only: sensors fixed before exhaustion.
    pub partial: Option<Placement>,
    pub snapshots: Vec<ProfileSnapshot>,
}

impl RunReport {
    pub fn queries_used(&self) -> usize {
        self.records.iter().filter(|r| r.charged).count()
    }

    pub fn free_queries(&self) -> usize {
        self.records.len() - self.queries_used()
    }

    /// Incumbent after each charged query, indexed by charged ordinal.
    pub fn charged_incumbents(&self) -> Vec<Option<f64>> {
        self.records.iter().filter(|r| r.charged).map(|r| r.incumbent).collect()
    }

    pub fn snapshot(&self, iteration: usize) -> Option<&ProfileSnapshot> {
        self.snapshots.iter().find(|s| s.iteration == iteration)
    }

    /// CSV `query_index,value,incumbent`; an empty incumbent means none yet.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["query_index", "value", "incumbent"])?;
        for r in &self.records {
            w.write_record([
                r.query_index.to_string(),
                r.value.to_string(),
                r.incumbent.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub query_index: usize,
    pub value: f64,
    pub incumbent: Option<f64>,
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = || Error::Parse {
            location: format!("trace row {}", n + 2),
            message: "expected query_index,value,incumbent".into(),
        };
        if rec.len() != 3 {
            return Err(bad());
        }
        out.push(TraceRow {
            query_index: rec[0].parse().map_err(|_| bad())?,
            value: rec[1].parse().map_err(|_| bad())?,
            incumbent: match &rec[2] {
                "" => None,
                s => Some(s.parse().map_err(|_| bad())?),
            },
        });
    }
    Ok(out)
}

/// Folds observations into records and the incumbent.
struct Tracker {
    records: Vec<QueryRecord>,
    best: Option<(f64, Placement)>,
}

impl Tracker {
    fn new() -> Self {
        Self {
            records: Vec::new(),
            best: None,
        }
    }

    fn observe(&mut self, o: &Observation, eligible: bool) {
        if eligible && self.best.as_ref().is_none_or(|(v, _)| o.value > *v) {
            self.best = Some((o.value, o.placement.clone()));
        }
        self.records.push(QueryRecord {
            query_index: o.query_index,
            value: o.value,
            incumbent: self.best.as_ref().map(|b| b.0),
            charged: o.charged,
            sensors: o.placement.len(),
        });
    }

    fn best_value(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.0)
    }

    fn best_placement(&self) -> Option<&Placement> {
        self.best.as_ref().map(|b| &b.1)
    }

    fn finish(self, method: Method, target: Option<usize>, seed: u64, budget: usize, cfg: &OptimizerConfig) -> RunReport {
        let (best_value, best) = match self.best {
            Some((v, p)) => (Some(v), Some(p)),
            None => (None, None),
        };
        RunReport {
            method,
            target_sensors: target,
            seed,
            budget,
            config: cfg.clone(),
            records: self.records,
            best,
            best_value,
            budget_exhausted: false,
            partial: None,
            snapshots: Vec::new(),
        }
    }
}

fn check_sensor_count(d: usize, l: usize) -> Result<()> {
    if d == 0 || d > l {
        return Err(Error::invalid(format!("cannot place {d} sensors on {l} locations")));
    }
    Ok(())
}
