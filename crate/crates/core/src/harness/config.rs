//! Experiment configuration (TOML).
//!
//! ```toml
//! mode = "simulate"            # or "replay"
//! scenario = "t1"              # bundled plan, or `floorplan = "plan.toml"`
//! methods = ["bo", "dgbo"]
//! epsilons = [1.0]
//! sensor_counts = [5, 9]
//! seeds = 5                    # a count (0..5) or an explicit list
//! budget = 1000
//! classifier = "forest"
//!
//! [forest]
//! n_trees = 100
//! ```
//!
//! Relative paths resolve against the config file's directory. The
//! `GREYPLACE_SEED` environment variable (comma-separated) replaces the
//! seed list.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierKind, ForestParams, KnnParams};
use crate::error::{Error, Result};
use crate::floorplan::FloorPlan;
use crate::objective::{PriorBudgetMode, DEFAULT_BUDGET};
use crate::optimizers::{GaParams, Method, OptimizerConfig, SamplerParams};
use crate::acquisition::AcquisitionParams;
use crate::scenarios;
use crate::simulator::{AdlPlanSpec, SimulatorConfig};
use crate::surrogate::PrfParams;

pub const SEED_ENV: &str = "GREYPLACE_SEED";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Simulate,
    Replay,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierChoice {
    #[default]
    Forest,
    Knn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    Count(u64),
    List(Vec<u64>),
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::Count(n) => (0..*n).collect(),
            SeedSpec::List(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayParams {
    pub train_fraction: f64,
    pub period_seconds: f64,
}

impl Default for ReplayParams {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            period_seconds: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Bundled plan name (`t1` or `t2`), used when `floorplan` is unset.
    pub scenario: Option<String>,
    pub floorplan: Option<PathBuf>,
    pub adl_plan: Option<PathBuf>,
    pub casas: Option<PathBuf>,
    pub methods: Vec<Method>,
    pub epsilons: Vec<f64>,
    pub sensor_counts: Vec<usize>,
    pub seeds: SeedSpec,
    pub budget: usize,
    pub classifier: ClassifierChoice,
    pub prior_budget_mode: PriorBudgetMode,
    pub snapshot_every: usize,
    pub memoize: bool,
    pub simulator: SimulatorConfig,
    pub forest: ForestParams,
    pub knn: KnnParams,
    pub surrogate: PrfParams,
    pub sampler: SamplerParams,
    pub ga: GaParams,
    pub acquisition: AcquisitionParams,
    pub replay: ReplayParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let opt = OptimizerConfig::default();
        Self {
            mode: Mode::Simulate,
            scenario: None,
            floorplan: None,
            adl_plan: None,
            casas: None,
            methods: Method::ALL.to_vec(),
            epsilons: vec![0.5],
            sensor_counts: vec![5, 7, 9, 11, 13, 15],
            seeds: SeedSpec::Count(5),
            budget: DEFAULT_BUDGET,
            classifier: ClassifierChoice::Forest,
            prior_budget_mode: opt.prior_budget_mode,
            snapshot_every: opt.snapshot_every,
            memoize: false,
            simulator: SimulatorConfig::default(),
            forest: ForestParams::default(),
            knn: KnnParams::default(),
            surrogate: opt.surrogate,
            sampler: opt.sampler,
            ga: opt.ga,
            acquisition: opt.acquisition,
            replay: ReplayParams::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses without touching the filesystem or environment.
    pub fn from_toml_str(source: &str, origin: &str) -> Result<Self> {
        toml::from_str(source).map_err(|e| Error::from_toml(source, origin, e))
    }

    /// Reads, resolves relative paths, applies the seed override and validates.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg = Self::read(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// [`load`](Self::load) without the final validation, for callers that
    /// fill in fields first.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let source = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&source, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        if let Ok(v) = std::env::var(SEED_ENV) {
            cfg.seeds = SeedSpec::List(parse_seed_list(&v)?);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.floorplan, &mut self.adl_plan, &mut self.casas].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn seed_list(&self) -> Vec<u64> {
        self.seeds.seeds()
    }

    pub fn classifier_kind(&self) -> ClassifierKind {
        match self.classifier {
            ClassifierChoice::Forest => ClassifierKind::Forest(self.forest.clone()),
            ClassifierChoice::Knn => ClassifierKind::Knn(self.knn.clone()),
        }
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            surrogate: self.surrogate.clone(),
            sampler: self.sampler.clone(),
            ga: self.ga.clone(),
            acquisition: self.acquisition.clone(),
            prior_budget_mode: self.prior_budget_mode,
            snapshot_every: self.snapshot_every,
        }
    }

    pub fn floor_plan(&self) -> Result<FloorPlan> {
        match (&self.floorplan, self.scenario.as_deref()) {
            (Some(path), _) => FloorPlan::load(path),
            (None, Some("t1") | None) => Ok(scenarios::t1()),
            (None, Some("t2")) => Ok(scenarios::t2()),
            (None, Some(other)) => Err(Error::Config(format!("unknown scenario {other:?} (expected t1 or t2)"))),
        }
    }

    pub fn adl(&self) -> Result<AdlPlanSpec> {
        match &self.adl_plan {
            Some(p) => AdlPlanSpec::load(p),
            None => Ok(scenarios::default_adl_plan()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.methods.is_empty() {
            return fail("at least one method is required");
        }
        if self.seed_list().is_empty() {
            return fail("at least one seed is required");
        }
        if self.budget == 0 {
            return fail("budget must be positive");
        }
        if self.methods.iter().any(|m| m.takes_sensor_count())
            && (self.sensor_counts.is_empty() || self.sensor_counts.contains(&0))
        {
            return fail("sensor_counts must be non-empty and positive");
        }
        match self.mode {
            Mode::Simulate => {
                if self.epsilons.is_empty() || self.epsilons.iter().any(|&e| !(e > 0.0)) {
                    return fail("epsilons must be non-empty and positive");
                }
                match &self.floorplan {
                    Some(p) => require_file(p)?,
                    None => {
                        self.floor_plan()?;
                    }
                }
                if let Some(p) = &self.adl_plan {
                    require_file(p)?;
                }
                self.simulator.validate().map_err(|e| Error::Config(e.to_string()))?;
            }
            Mode::Replay => match &self.casas {
                Some(p) => require_file(p)?,
                None => return fail("replay mode needs a `casas` file"),
            },
        }
        if !(self.replay.train_fraction > 0.0 && self.replay.train_fraction < 1.0) {
            return fail("replay.train_fraction must be in (0, 1)");
        }
        if !(self.replay.period_seconds > 0.0) {
            return fail("replay.period_seconds must be positive");
        }
        self.surrogate.validate()?;
        self.ga.validate()?;
        if let ClassifierKind::Knn(k) = self.classifier_kind() {
            if k.k == 0 {
                return fail("knn.k must be positive");
            }
        }
        if self.forest.n_trees == 0 {
            return fail("forest.n_trees must be positive");
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("file not found: {}", p.display())))
    }
}

pub fn parse_seed_list(text: &str) -> Result<Vec<u64>> {
    let seeds = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<u64>().map_err(|_| Error::Config(format!("{SEED_ENV}: bad seed {s:?}"))))
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        return Err(Error::Config(format!("{SEED_ENV} is empty")));
    }
    Ok(seeds)
}
