//! Surrogate-driven search: vanilla BO (EI acquisition) and DGBO, which
//! adds the distribution-guided information term fed by single-sensor
//! priors and spatial credit assignment.

use std::collections::HashSet;

use rand::Rng as _;
use rayon::prelude::*;

use super::sampler::{propose_candidates, random_placement};
use super::{check_sensor_count, Method, OptimizerConfig, ProfileSnapshot, RunReport, Tracker};
use crate::acquisition::{alpha_dg, ei, InformationProfile};
use crate::error::{Error, Result};
use crate::objective::{BudgetedObjective, Placement, PriorBudgetMode};
use crate::seed;
use crate::surrogate;

pub fn run_bo(obj: &mut BudgetedObjective, sensors: usize, cfg: &OptimizerConfig, seed: u64) -> Result<RunReport> {
    run_model_based(obj, sensors, cfg, seed, false)
}

pub fn run_dgbo(obj: &mut BudgetedObjective, sensors: usize, cfg: &OptimizerConfig, seed: u64) -> Result<RunReport> {
    run_model_based(obj, sensors, cfg, seed, true)
}

/// Highest score; ties go to the lexicographically smallest placement.
fn argmax(candidates: Vec<Placement>, scores: &[f64]) -> Placement {
    let mut best = 0;
    for i in 1..candidates.len() {
        if scores[i] > scores[best] || (scores[i] == scores[best] && candidates[i] < candidates[best]) {
            best = i;
        }
    }
    candidates.into_iter().nth(best).expect("non-empty candidate set")
}

fn run_model_based(
    obj: &mut BudgetedObjective,
    d: usize,
    cfg: &OptimizerConfig,
    seed: u64,
    guided: bool,
) -> Result<RunReport> {
    let l = obj.location_count();
    check_sensor_count(d, l)?;
    let method = if guided { Method::Dgbo } else { Method::Bo };
    let mut rng = seed::rng(seed);
    let mut tracker = Tracker::new();
    let mut snapshots = Vec::new();
    let mut profile = None;

    if guided {
        let mode = cfg.prior_budget_mode;
        if mode == PriorBudgetMode::Charge && obj.remaining() <= l {
            return Err(Error::invalid(format!(
                "budget {} leaves no queries after {l} charged prior queries",
                obj.remaining()
            )));
        }
        let singles: Vec<Placement> = (0..l).map(Placement::single).collect();
        let priors = obj.evaluate_batch(&singles, mode == PriorBudgetMode::Charge)?;
        for o in &priors {
            tracker.observe(o, d == 1);
        }
        let p = InformationProfile::new(priors.iter().map(|o| o.value).collect(), cfg.acquisition.clone());
        if cfg.snapshot_every > 0 {
            snapshots.push(ProfileSnapshot {
                iteration: 0,
                regions: p.summary(),
            });
        }
        profile = Some(p);
    }

    let mut seen: HashSet<Placement> = obj.log().iter().map(|o| o.placement.clone()).collect();
    let mut xs: Vec<Placement> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut next = random_placement(d, l, &mut rng);
    while obj.remaining() > 0 {
        let o = obj.evaluate(&next)?;
        tracker.observe(&o, true);
        if let Some(p) = profile.as_mut() {
            p.credit(&o.placement, o.value);
        }
        seen.insert(o.placement.clone());
        xs.push(o.placement);
        ys.push(o.value);
        if obj.remaining() == 0 {
            break;
        }

        let model = surrogate::fit(&xs, &ys, l, &cfg.surrogate, rng.random())?;
        let x_star = tracker.best_placement().expect("a size-D query exists").clone();
        let f_star = tracker.best_value().expect("incumbent exists");
        let gains = profile.as_ref().map(|p| p.region_gains(p.incumbent_gain(&x_star)));
        let mut candidates = propose_candidates(&cfg.sampler, d, l, Some(&x_star), &mut rng)?;
        // each iteration should try a placement not yet observed
        let fresh: Vec<Placement> = candidates.iter().filter(|x| !seen.contains(*x)).cloned().collect();
        if !fresh.is_empty() {
            candidates = fresh;
        }
        let scores: Vec<f64> = candidates
            .par_iter()
            .map(|x| {
                let (mu, sigma) = model.predict(x);
                let mut s = ei(mu, sigma, f_star);
                if let Some(g) = &gains {
                    s += alpha_dg(x, g);
                }
                s
            })
            .collect();
        next = argmax(candidates, &scores);

        if let (Some(p), Some(g)) = (profile.as_mut(), gains) {
            p.commit_gains(g);
            let n = xs.len();
            if cfg.snapshot_every > 0 && n % cfg.snapshot_every == 0 {
                snapshots.push(ProfileSnapshot {
                    iteration: n,
                    regions: p.summary(),
                });
            }
        }
    }

    let mut report = tracker.finish(method, Some(d), seed, obj.budget(), cfg);
    report.snapshots = snapshots;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::objective::{Evaluator, FnEvaluator};

    fn toy(l: usize) -> Arc<dyn Evaluator> {
        // value = share of sensors in {0, 1, 2}
        Arc::new(FnEvaluator::new(l, |p: &Placement, _| {
            p.indices().iter().filter(|&&i| i < 3).count() as f64 / p.len() as f64
        }))
    }

    #[test]
    fn budget_one_is_single_random_query() {
        let mut obj = BudgetedObjective::new(toy(10), 1, 0);
        let r = run_bo(&mut obj, 2, &OptimizerConfig::default(), 1).unwrap();
        assert_eq!(r.records.len(), 1);
        assert_eq!(r.best_value, Some(r.records[0].value));
    }

    #[test]
    fn bo_trace_non_decreasing_and_deterministic() {
        let cfg = OptimizerConfig::default();
        let mut a = BudgetedObjective::new(toy(16), 30, 3);
        let ra = run_bo(&mut a, 3, &cfg, 4).unwrap();
        let mut b = BudgetedObjective::new(toy(16), 30, 3);
        let rb = run_bo(&mut b, 3, &cfg, 4).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(ra.records.len(), 30);
        let inc: Vec<f64> = ra.records.iter().map(|r| r.incumbent.unwrap()).collect();
        assert!(inc.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(ra.best_value, Some(*inc.last().unwrap()));
    }

    #[test]
    fn dgbo_charge_mode_arithmetic() {
        let cfg = OptimizerConfig::default();
        let mut obj = BudgetedObjective::new(toy(8), 9, 0);
        let r = run_dgbo(&mut obj, 2, &cfg, 1).unwrap();
        assert_eq!(r.records.len(), 9);
        assert_eq!(r.records.iter().filter(|q| q.sensors == 2).count(), 1);
        assert_eq!(r.snapshots.len(), 1);
        let mut short = BudgetedObjective::new(toy(8), 8, 0);
        assert!(run_dgbo(&mut short, 2, &cfg, 1).is_err());
    }

    #[test]
    fn dgbo_free_mode_snapshots() {
        let cfg = OptimizerConfig {
            prior_budget_mode: PriorBudgetMode::Free,
            snapshot_every: 5,
            ..OptimizerConfig::default()
        };
        let mut obj = BudgetedObjective::new(toy(12), 21, 2);
        let r = run_dgbo(&mut obj, 2, &cfg, 5).unwrap();
        assert_eq!(r.queries_used(), 21);
        assert_eq!(r.free_queries(), 12);
        let iters: Vec<usize> = r.snapshots.iter().map(|s| s.iteration).collect();
        assert_eq!(iters, vec![0, 5, 10, 15, 20]);
        let prior = &r.snapshot(0).unwrap().regions;
        assert!(prior.iter().all(|g| g.expected_gain == g.prior));
        // the incumbent ignores single-sensor priors
        assert!(r.records[..12].iter().all(|q| q.incumbent.is_none()));
    }

    #[test]
    fn argmax_ties_pick_smallest() {
        let c = vec![
            Placement::new(vec![2, 3], 5).unwrap(),
            Placement::new(vec![0, 4], 5).unwrap(),
            Placement::new(vec![1, 2], 5).unwrap(),
        ];
        assert_eq!(argmax(c, &[0.5, 0.5, 0.1]).indices(), &[0, 4]);
    }
}
