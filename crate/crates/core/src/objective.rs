//! The stochastic black box `f(x)`: macro-F1 of an activity classifier
//! under a sensor placement, with query budgeting and an ordered log.
//!
//! Every query gets a fresh seed `derive(run_seed, query_index)`, which
//! drives both the simulated data and the classifier randomness. Replaying a
//! logged `(placement, seed)` pair therefore reproduces its value exactly.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{evaluate_loocv, evaluate_split, ClassifierKind};
use crate::dataset::split_by_days;
use crate::error::{Error, Result};
use crate::seed;
use crate::simulator::{Simulator, TraceDataset};

/// A sensor placement: strictly increasing grid indices.
///
/// Ordering is lexicographic on the index list, which is the tie-break
/// order used by the acquisition argmax.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Placement(Vec<usize>);

impl Placement {
    /// Sorts and validates `indices` against a grid of `locations` points.
    pub fn new(mut indices: Vec<usize>, locations: usize) -> Result<Self> {
        indices.sort_unstable();
        if indices.is_empty() {
            return Err(Error::invalid("placement is empty"));
        }
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("placement has duplicate indices"));
        }
        if let Some(&bad) = indices.last().filter(|&&i| i >= locations) {
            return Err(Error::invalid(format!("grid index {bad} out of range for {locations} locations")));
        }
        Ok(Self(indices))
    }

    pub fn single(index: usize) -> Self {
        Self(vec![index])
    }

    /// Placement from the set bits of a chromosome.
    pub fn from_bits(bits: &[bool]) -> Option<Self> {
        let idx: Vec<usize> = bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
        (!idx.is_empty()).then_some(Self(idx))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.binary_search(&index).is_ok()
    }

    /// Copy with `index` added (no-op if already present).
    pub fn with(&self, index: usize) -> Self {
        let mut v = self.0.clone();
        if let Err(pos) = v.binary_search(&index) {
            v.insert(pos, index);
        }
        Self(v)
    }

    /// Packed bit encoding of length `locations`.
    pub fn encode(&self, locations: usize) -> Vec<u64> {
        let mut words = vec![0u64; locations.div_ceil(64)];
        for &i in &self.0 {
            words[i / 64] |= 1 << (i % 64);
        }
        words
    }

    pub fn to_bits(&self, locations: usize) -> Vec<bool> {
        let mut bits = vec![false; locations];
        for &i in &self.0 {
            bits[i] = true;
        }
        bits
    }

    /// Parses the `;`-joined form written by [`fmt::Display`].
    pub fn parse(text: &str, locations: usize) -> Result<Self> {
        let indices = text
            .split(';')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::invalid(format!("bad placement index {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(indices, locations)
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(";")?;
            }
            write!(f, "{i}")?;
        }
        Ok(())
    }
}

/// Anything that scores a placement under a seed.
pub trait Evaluator: Send + Sync {
    fn location_count(&self) -> usize;
    fn evaluate(&self, placement: &Placement, seed: u64) -> Result<f64>;
}

/// Simulate occupants, then leave-one-occupant-out macro-F1.
pub struct SimulationEvaluator {
    pub simulator: Simulator,
    pub classifier: ClassifierKind,
}

impl Evaluator for SimulationEvaluator {
    fn location_count(&self) -> usize {
        self.simulator.grid().len()
    }

    fn evaluate(&self, placement: &Placement, seed: u64) -> Result<f64> {
        let ds = self
            .simulator
            .generate_dataset(placement.indices(), seed::derive(seed, 0))?;
        evaluate_loocv(&ds, &self.classifier, seed::derive(seed, 1))
    }
}

/// Recorded data: candidate locations are the dataset's sensors, and a
/// placement keeps only those columns before a fixed day split.
pub struct ReplayEvaluator {
    train: TraceDataset,
    test: TraceDataset,
    pub classifier: ClassifierKind,
}

impl ReplayEvaluator {
    pub fn new(dataset: &TraceDataset, train_fraction: f64, classifier: ClassifierKind) -> Result<Self> {
        let (train, test) = split_by_days(dataset, train_fraction)?;
        Ok(Self { train, test, classifier })
    }

    pub fn sensor_names(&self) -> &[String] {
        &self.train.sensor_names
    }
}

impl Evaluator for ReplayEvaluator {
    fn location_count(&self) -> usize {
        self.train.sensor_count()
    }

    fn evaluate(&self, placement: &Placement, seed: u64) -> Result<f64> {
        let train = self.train.filter_sensors(placement.indices())?;
        let test = self.test.filter_sensors(placement.indices())?;
        evaluate_split(&train, &test, &self.classifier, seed)
    }
}

/// Wraps a closure; used for synthetic objectives.
pub struct FnEvaluator<F> {
    locations: usize,
    f: F,
}

impl<F> FnEvaluator<F>
where
    F: Fn(&Placement, u64) -> f64 + Send + Sync,
{
    pub fn new(locations: usize, f: F) -> Self {
        Self { locations, f }
    }
}

impl<F> Evaluator for FnEvaluator<F>
where
    F: Fn(&Placement, u64) -> f64 + Send + Sync,
{
    fn location_count(&self) -> usize {
        self.locations
    }

    fn evaluate(&self, placement: &Placement, seed: u64) -> Result<f64> {
        Ok((self.f)(placement, seed))
    }
}

/// Whether DGBO's single-sensor prior queries count against the budget.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorBudgetMode {
    #[default]
    Charge,
    Free,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub query_index: usize,
    pub placement: Placement,
    pub value: f64,
    pub seed: u64,
    pub seconds: f64,
    /// False for free prior queries.
    pub charged: bool,
}

pub const DEFAULT_BUDGET: usize = 1000;

pub struct BudgetedObjective {
    evaluator: Arc<dyn Evaluator>,
    budget: usize,
    spent: usize,
    run_seed: u64,
    log: Vec<Observation>,
    memoize: bool,
    memo: HashMap<Placement, f64>,
}

impl BudgetedObjective {
    pub fn new(evaluator: Arc<dyn Evaluator>, budget: usize, run_seed: u64) -> Self {
        Self {
            evaluator,
            budget,
            spent: 0,
            run_seed,
            log: Vec::new(),
            memoize: false,
            memo: HashMap::new(),
        }
    }

    /// Reuse the first value seen for each placement. Debugging aid only:
    /// it turns the stochastic objective into a deterministic one.
    pub fn with_memoize(mut self, on: bool) -> Self {
        self.memoize = on;
        self
    }

    pub fn location_count(&self) -> usize {
        self.evaluator.location_count()
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn spent(&self) -> usize {
        self.spent
    }

    pub fn remaining(&self) -> usize {
        self.budget - self.spent
    }

    pub fn run_seed(&self) -> u64 {
        self.run_seed
    }

    pub fn log(&self) -> &[Observation] {
        &self.log
    }

    pub fn evaluator(&self) -> &Arc<dyn Evaluator> {
        &self.evaluator
    }

    fn check(&self, p: &Placement) -> Result<()> {
        let l = self.location_count();
        if p.is_empty() {
            return Err(Error::invalid("placement is empty"));
        }
        if let Some(&bad) = p.indices().last().filter(|&&i| i >= l) {
            return Err(Error::invalid(format!("grid index {bad} out of range for {l} locations")));
        }
        Ok(())
    }

    fn compute(&self, p: &Placement, seed: u64) -> Result<(f64, f64)> {
        let start = Instant::now();
        let value = match self.memo.get(p) {
            Some(&v) if self.memoize => v,
            _ => self.evaluator.evaluate(p, seed)?,
        };
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Validation(format!("objective value {value} outside [0, 1]")));
        }
        Ok((value, start.elapsed().as_secs_f64()))
    }

    fn record(&mut self, p: Placement, seed: u64, value: f64, seconds: f64, charged: bool) -> Observation {
        if self.memoize {
            self.memo.entry(p.clone()).or_insert(value);
        }
        let obs = Observation {
            query_index: self.log.len(),
            placement: p,
            value,
            seed,
            seconds,
            charged,
        };
        if charged {
            self.spent += 1;
        }
        self.log.push(obs.clone());
        obs
    }

    /// One charged query.
    pub fn evaluate(&mut self, p: &Placement) -> Result<Observation> {
        self.query(p, true)
    }

    fn query(&mut self, p: &Placement, charged: bool) -> Result<Observation> {
        if charged && self.spent >= self.budget {
            return Err(Error::BudgetExhausted {
                spent: self.spent,
                budget: self.budget,
            });
        }
        self.check(p)?;
        let seed = seed::derive(self.run_seed, self.log.len() as u64);
        let (value, seconds) = self.compute(p, seed)?;
        Ok(self.record(p.clone(), seed, value, seconds, charged))
    }

    pub fn evaluate_single_sensor(&mut self, index: usize, mode: PriorBudgetMode) -> Result<Observation> {
        self.query(&Placement::single(index), mode == PriorBudgetMode::Charge)
    }

    /// Evaluates an ordered batch concurrently. Query indices follow
    /// submission order. When charged, only the prefix that fits the
    /// remaining budget is evaluated, so the result may be shorter than
    /// the input.
    pub fn evaluate_batch(&mut self, batch: &[Placement], charged: bool) -> Result<Vec<Observation>> {
        let take = if charged { batch.len().min(self.remaining()) } else { batch.len() };
        let batch = &batch[..take];
        for p in batch {
            self.check(p)?;
        }
        let base = self.log.len() as u64;
        let seeds: Vec<u64> = (0..take as u64).map(|k| seed::derive(self.run_seed, base + k)).collect();
        let results: Vec<Result<(f64, f64)>> = {
            let this = &*self;
            batch.par_iter().zip(&seeds).map(|(p, &s)| this.compute(p, s)).collect()
        };
        let mut out = Vec::with_capacity(take);
        for ((p, s), r) in batch.iter().zip(seeds).zip(results) {
            let (value, seconds) = r?;
            out.push(self.record(p.clone(), s, value, seconds, charged));
        }
        Ok(out)
    }

    /// Re-runs a logged query with its seed.
    pub fn reevaluate(&self, obs: &Observation) -> Result<f64> {
        self.evaluator.evaluate(&obs.placement, obs.seed)
    }

    /// CSV `query_index,D,indices,value,seconds`.
    pub fn write_log_csv<W: Write>(&self, out: W) -> Result<()> {
        write_observations_csv(&self.log, out)
    }
}

pub fn write_observations_csv<W: Write>(log: &[Observation], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["query_index", "D", "indices", "value", "seconds"])?;
    for o in log {
        w.write_record([
            o.query_index.to_string(),
            o.placement.len().to_string(),
            o.placement.to_string(),
            o.value.to_string(),
            o.seconds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parsed row of an observation log.
#[derive(Clone, Debug, PartialEq)]
pub struct LoggedQuery {
    pub query_index: usize,
    pub placement: Vec<usize>,
    pub value: f64,
    pub seconds: f64,
}

pub fn read_observations_csv<R: std::io::Read>(input: R) -> Result<Vec<LoggedQuery>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Parse {
            location: format!("observations row {}", n + 2),
            message: format!("bad {what}"),
        };
        if rec.len() != 5 {
            return Err(bad("field count"));
        }
        let placement = rec[2]
            .split(';')
            .map(|s| s.parse::<usize>().map_err(|_| bad("indices")))
            .collect::<Result<Vec<_>>>()?;
        let d: usize = rec[1].parse().map_err(|_| bad("D"))?;
        if d != placement.len() {
            return Err(bad("D"));
        }
        out.push(LoggedQuery {
            query_index: rec[0].parse().map_err(|_| bad("query_index"))?,
            placement,
            value: rec[3].parse().map_err(|_| bad("value"))?,
            seconds: rec[4].parse().map_err(|_| bad("seconds"))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noisy(l: usize) -> Arc<dyn Evaluator> {
        Arc::new(FnEvaluator::new(l, |p: &Placement, s: u64| {
            (p.len() as f64 / 10.0 + (s % 1000) as f64 * 1e-5).min(1.0)
        }))
    }

    #[test]
    fn placement_validation() {
        assert_eq!(Placement::new(vec![3, 1], 5).unwrap().indices(), &[1, 3]);
        assert!(Placement::new(vec![], 5).is_err());
        assert!(Placement::new(vec![1, 1], 5).is_err());
        assert!(Placement::new(vec![5], 5).is_err());
        let p = Placement::new(vec![0, 64, 70], 100).unwrap();
        assert_eq!(p.encode(100), vec![1, 1 | 1 << 6]);
        assert_eq!(Placement::parse(&p.to_string(), 100).unwrap(), p);
        assert_eq!(Placement::from_bits(&p.to_bits(100)).unwrap(), p);
        assert!(Placement::single(1) < Placement::new(vec![1, 2], 3).unwrap());
    }

    #[test]
    fn budget_and_seeds() {
        let mut obj = BudgetedObjective::new(noisy(10), 3, 42);
        let p = Placement::new(vec![1, 2], 10).unwrap();
        let a = obj.evaluate(&p).unwrap();
        let b = obj.evaluate(&p).unwrap();
        assert_eq!((a.query_index, b.query_index), (0, 1));
        assert_ne!(a.seed, b.seed);
        assert_eq!(a.seed, seed::derive(42, 0));
        obj.evaluate(&p).unwrap();
        assert!(matches!(obj.evaluate(&p), Err(Error::BudgetExhausted { spent: 3, budget: 3 })));
        assert_eq!(obj.spent(), 3);
        assert_eq!(obj.log().len(), 3);
        for o in obj.log() {
            assert_eq!(obj.reevaluate(o).unwrap(), o.value);
        }
    }

    #[test]
    fn free_priors_do_not_charge() {
        let mut obj = BudgetedObjective::new(noisy(4), 2, 1);
        obj.evaluate_single_sensor(0, PriorBudgetMode::Free).unwrap();
        assert_eq!(obj.spent(), 0);
        obj.evaluate_single_sensor(1, PriorBudgetMode::Charge).unwrap();
        assert_eq!(obj.spent(), 1);
        assert_eq!(obj.log()[1].query_index, 1);
        assert!(!obj.log()[0].charged);
        assert!(obj.evaluate_single_sensor(4, PriorBudgetMode::Charge).is_err());
    }

    #[test]
    fn batch_truncates_to_budget_in_order() {
        let mut obj = BudgetedObjective::new(noisy(6), 4, 9);
        obj.evaluate(&Placement::single(0)).unwrap();
        let batch: Vec<Placement> = (0..6).map(Placement::single).collect();
        let got = obj.evaluate_batch(&batch, true).unwrap();
        assert_eq!(got.len(), 3);
        assert_eq!(got.iter().map(|o| o.query_index).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(got[2].placement, Placement::single(2));
        assert_eq!(obj.remaining(), 0);
    }

    #[test]
    fn memoize_reuses_values() {
        let mut obj = BudgetedObjective::new(noisy(4), 10, 5).with_memoize(true);
        let p = Placement::single(2);
        let a = obj.evaluate(&p).unwrap().value;
        let b = obj.evaluate(&p).unwrap().value;
        assert_eq!(a, b);
        assert_eq!(obj.spent(), 2);
    }

    #[test]
    fn log_csv_round_trip() {
        let mut obj = BudgetedObjective::new(noisy(10), 5, 3);
        obj.evaluate(&Placement::new(vec![1, 7], 10).unwrap()).unwrap();
        obj.evaluate(&Placement::single(4)).unwrap();
        let mut buf = Vec::new();
        obj.write_log_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("query_index,D,indices,value,seconds\n0,2,1;7,"));
        let rows = read_observations_csv(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].placement, vec![1, 7]);
        assert_eq!(rows[1].value, obj.log()[1].value);
    }

    #[test]
    fn rejects_out_of_range_values() {
        let ev: Arc<dyn Evaluator> = Arc::new(FnEvaluator::new(3, |_: &Placement, _| 1.5));
        let mut obj = BudgetedObjective::new(ev, 3, 0);
        assert!(obj.evaluate(&Placement::single(0)).is_err());
        assert_eq!(obj.spent(), 0);
    }
}
