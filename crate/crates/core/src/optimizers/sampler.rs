//! Candidate sets for the acquisition argmax: uniform random subsets plus
//! one-swap neighbours of the incumbent.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::Placement;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerParams {
    pub n_random: usize,
    pub n_neighbors: usize,
}

impl Default for SamplerParams {
    fn default() -> Self {
        Self {
            n_random: 500,
            n_neighbors: 500,
        }
    }
}

/// Uniform size-`d` subset of `0..l`.
pub fn random_placement(d: usize, l: usize, rng: &mut seed::Rng) -> Placement {
    let mut v = index::sample(rng, l, d).into_vec();
    v.sort_unstable();
    Placement::new(v, l).expect("sampled placement is valid")
}

/// Removes one member of `x` and adds a random non-member.
pub fn swap_neighbor(x: &Placement, l: usize, rng: &mut seed::Rng) -> Placement {
    let out = x.indices()[rng.random_range(0..x.len())];
    let free = l - x.len();
    // k-th non-member in ascending order
    let mut k = rng.random_range(0..free);
    let mut add = 0;
    for i in 0..l {
        if !x.contains(i) {
            if k == 0 {
                add = i;
                break;
            }
            k -= 1;
        }
    }
    let v: Vec<usize> = x.indices().iter().copied().filter(|&i| i != out).chain([add]).collect();
    Placement::new(v, l).expect("neighbor is valid")
}

/// Random and neighbourhood candidates, de-duplicated in first-seen order.
pub fn propose_candidates(
    params: &SamplerParams,
    d: usize,
    l: usize,
    incumbent: Option<&Placement>,
    rng: &mut seed::Rng,
) -> Result<Vec<Placement>> {
    if d == 0 || d > l {
        return Err(Error::invalid(format!("cannot place {d} sensors on {l} locations")));
    }
    if d == l {
        return Ok(vec![Placement::new((0..l).collect(), l)?]);
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(params.n_random + params.n_neighbors);
    for _ in 0..params.n_random {
        let p = random_placement(d, l, rng);
        if seen.insert(p.clone()) {
            out.push(p);
        }
    }
    if let Some(x) = incumbent.filter(|x| x.len() == d) {
        for _ in 0..params.n_neighbors {
            let p = swap_neighbor(x, l, rng);
            if seen.insert(p.clone()) {
                out.push(p);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_set_is_single_candidate() {
        let mut rng = seed::rng(0);
        let c = propose_candidates(&SamplerParams::default(), 4, 4, None, &mut rng).unwrap();
        assert_eq!(c.len(), 1);
        assert!(propose_candidates(&SamplerParams::default(), 5, 4, None, &mut rng).is_err());
    }

    #[test]
    fn neighbors_differ_in_one_index() {
        let mut rng = seed::rng(1);
        let x = Placement::new(vec![1, 2], 4).unwrap();
        let params = SamplerParams {
            n_random: 0,
            n_neighbors: 200,
        };
        let c = propose_candidates(&params, 2, 4, Some(&x), &mut rng).unwrap();
        // exhaustive: 2 removals x 2 additions
        assert_eq!(c.len(), 4);
        for p in &c {
            let shared = p.indices().iter().filter(|&&i| x.contains(i)).count();
            assert_eq!(shared, 1);
        }
    }

    #[test]
    fn random_only_without_incumbent_and_deterministic() {
        let params = SamplerParams::default();
        let a = propose_candidates(&params, 3, 49, None, &mut seed::rng(5)).unwrap();
        let b = propose_candidates(&params, 3, 49, None, &mut seed::rng(5)).unwrap();
        assert_eq!(a, b);
        assert!(a.len() <= 500 && a.iter().all(|p| p.len() == 3));
    }
}
