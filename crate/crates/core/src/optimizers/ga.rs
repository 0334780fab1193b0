//! Genetic algorithm over length-`L` bit chromosomes. The sensor count is
//! not fixed: fitness subtracts a per-sensor penalty from `f`.

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Method, OptimizerConfig, RunReport, Tracker};
use crate::error::{Error, Result};
use crate::objective::{BudgetedObjective, Placement};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaParams {
    pub population: usize,
    pub elite_fraction: f64,
    pub parent_fraction: f64,
    pub mutation_rate: f64,
    /// Fitness penalty per deployed sensor.
    pub penalty: f64,
    /// Initial chromosomes get `U{1..=max_initial_sensors}` set bits.
    pub max_initial_sensors: usize,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            population: 10,
            elite_fraction: 0.1,
            parent_fraction: 0.2,
            mutation_rate: 0.005,
            penalty: 0.01,
            max_initial_sensors: 15,
        }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::Config("ga.population must be at least 2".into()));
        }
        for (name, v) in [
            ("elite_fraction", self.elite_fraction),
            ("parent_fraction", self.parent_fraction),
            ("mutation_rate", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("ga.{name} must be in [0, 1]")));
            }
        }
        if self.max_initial_sensors == 0 {
            return Err(Error::Config("ga.max_initial_sensors must be positive".into()));
        }
        Ok(())
    }

    fn elites(&self) -> usize {
        ((self.elite_fraction * self.population as f64).round() as usize).clamp(1, self.population)
    }

    fn parents(&self) -> usize {
        ((self.parent_fraction * self.population as f64).round() as usize).clamp(1, self.population)
    }
}

/// Two-point crossover: the genes in `[c1, c2)` are swapped.
pub fn crossover(a: &[bool], b: &[bool], c1: usize, c2: usize) -> (Vec<bool>, Vec<bool>) {
    assert!(c1 <= c2 && c2 <= a.len() && a.len() == b.len());
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x[c1..c2].copy_from_slice(&b[c1..c2]);
    y[c1..c2].copy_from_slice(&a[c1..c2]);
    (x, y)
}

/// Two distinct cut points in `[1, len - 2]`, ascending; `None` if the
/// chromosome is too short.
fn cut_points(len: usize, rng: &mut seed::Rng) -> Option<(usize, usize)> {
    if len < 4 {
        return None;
    }
    let v = index::sample(rng, len - 2, 2);
    let (a, b) = (v.index(0) + 1, v.index(1) + 1);
    Some((a.min(b), a.max(b)))
}

/// Flips each gene with probability `rate`; returns the number of flips.
pub fn mutate(genes: &mut [bool], rate: f64, rng: &mut seed::Rng) -> usize {
    let mut flips = 0;
    if rate <= 0.0 {
        return 0;
    }
    for g in genes.iter_mut() {
        if rng.random_bool(rate) {
            *g = !*g;
            flips += 1;
        }
    }
    flips
}

fn random_chromosome(l: usize, max_bits: usize, rng: &mut seed::Rng) -> Vec<bool> {
    let k = rng.random_range(1..=max_bits.min(l));
    let mut genes = vec![false; l];
    for i in index::sample(rng, l, k) {
        genes[i] = true;
    }
    genes
}

fn repair(genes: &mut [bool], rng: &mut seed::Rng) {
    if !genes.iter().any(|&g| g) {
        let i = rng.random_range(0..genes.len());
        genes[i] = true;
    }
}

/// One generation: the elites (with their fitness) and the unevaluated
/// children that complete the population.
pub fn breed(
    pop: &[Vec<bool>],
    fitness: &[f64],
    p: &GaParams,
    rng: &mut seed::Rng,
) -> (Vec<Vec<bool>>, Vec<f64>, Vec<Vec<bool>>) {
    let l = pop[0].len();
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]));
    let pool = &order[..p.parents()];

    let elites: Vec<Vec<bool>> = order[..p.elites()].iter().map(|&i| pop[i].clone()).collect();
    let elite_fit: Vec<f64> = order[..p.elites()].iter().map(|&i| fitness[i]).collect();
    let mut children = Vec::new();
    while elites.len() + children.len() < p.population {
        let a = &pop[pool[rng.random_range(0..pool.len())]];
        let b = &pop[pool[rng.random_range(0..pool.len())]];
        let (x, y) = match cut_points(l, rng) {
            Some((c1, c2)) => crossover(a, b, c1, c2),
            None => (a.clone(), b.clone()),
        };
        for mut child in [x, y] {
            if elites.len() + children.len() < p.population {
                mutate(&mut child, p.mutation_rate, rng);
                repair(&mut child, rng);
                children.push(child);
            }
        }
    }
    (elites, elite_fit, children)
}

pub fn run_ga(obj: &mut BudgetedObjective, cfg: &OptimizerConfig, seed: u64) -> Result<RunReport> {
    let p = &cfg.ga;
    p.validate()?;
    let l = obj.location_count();
    let mut rng = seed::rng(seed);
    let mut tracker = Tracker::new();

    let mut pop: Vec<Vec<bool>> = (0..p.population)
        .map(|_| random_chromosome(l, p.max_initial_sensors, &mut rng))
        .collect();
    let mut fitness = Vec::with_capacity(p.population);
    let batch: Vec<Placement> = pop.iter().map(|g| Placement::from_bits(g).expect("non-empty")).collect();
    for o in obj.evaluate_batch(&batch, true)? {
        tracker.observe(&o, true);
        fitness.push(o.value - p.penalty * o.placement.len() as f64);
    }

    while obj.remaining() > 0 && fitness.len() == pop.len() {
        let (mut next, mut next_fit, children) = breed(&pop, &fitness, p, &mut rng);
        let batch: Vec<Placement> = children.iter().map(|g| Placement::from_bits(g).expect("non-empty")).collect();
        let obs = obj.evaluate_batch(&batch, true)?;
        for (o, child) in obs.iter().zip(children) {
            tracker.observe(o, true);
            next_fit.push(o.value - p.penalty * o.placement.len() as f64);
            next.push(child);
        }
        pop = next;
        fitness = next_fit;
    }

    Ok(tracker.finish(Method::Ga, None, seed, obj.budget(), cfg))
}
