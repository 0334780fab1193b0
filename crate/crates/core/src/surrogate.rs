//! Probabilistic random forest over placement bit encodings.
//!
//! Each regression tree is fitted on a bootstrap resample and predicts a
//! leaf mean; the ensemble mean is `μ` and the across-tree standard
//! deviation (floored) is `σ`. Placements are sparse, so split statistics
//! are accumulated from each row's set bits only.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::word_bit;
use crate::error::{Error, Result};
use crate::objective::Placement;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrfParams {
    pub n_trees: usize,
    pub min_leaf: usize,
    /// Share of features considered at each split.
    pub feature_fraction: f64,
    pub sigma_floor: f64,
}

impl Default for PrfParams {
    fn default() -> Self {
        Self {
            n_trees: 50,
            min_leaf: 3,
            feature_fraction: 1.0,
            sigma_floor: 1e-6,
        }
    }
}

impl PrfParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("surrogate.n_trees must be positive".into()));
        }
        if !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return Err(Error::Config("surrogate.feature_fraction must be in (0, 1]".into()));
        }
        if !(self.sigma_floor > 0.0) {
            return Err(Error::Config("surrogate.sigma_floor must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Leaf(f64),
    Split { feature: usize, without: usize, with: usize },
}

#[derive(Clone, Debug, PartialEq)]
struct RegTree {
    nodes: Vec<Node>,
}

impl RegTree {
    fn predict(&self, words: &[u64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split { feature, without, with } => {
                    i = if word_bit(words, feature) { with } else { without };
                }
            }
        }
    }
}

struct Fitter<'a> {
    rows: &'a [Vec<usize>],
    words: &'a [Vec<u64>],
    ys: &'a [f64],
    weights: Vec<u32>,
    dims: usize,
    params: &'a PrfParams,
    nodes: Vec<Node>,
    // scratch, indexed by feature
    n1: Vec<u64>,
    s1: Vec<f64>,
    q1: Vec<f64>,
}

impl Fitter<'_> {
    fn build(&mut self, members: Vec<usize>, rng: &mut seed::Rng) -> usize {
        let (mut n, mut s, mut q) = (0u64, 0.0, 0.0);
        for &r in &members {
            let w = self.weights[r] as f64;
            n += self.weights[r] as u64;
            s += w * self.ys[r];
            q += w * self.ys[r] * self.ys[r];
        }
        let first = self.ys[members[0]];
        let mean = if members.iter().all(|&r| self.ys[r] == first) { first } else { s / n as f64 };
        let sse = (q - s * s / n as f64).max(0.0);
        let min_leaf = self.params.min_leaf.max(1) as u64;
        if n < 2 * min_leaf || sse <= 1e-14 * (1.0 + q) {
            self.nodes.push(Node::Leaf(mean));
            return self.nodes.len() - 1;
        }

        let mut touched = Vec::new();
        for &r in &members {
            let w = self.weights[r];
            for &f in &self.rows[r] {
                if self.n1[f] == 0 {
                    touched.push(f);
                }
                self.n1[f] += w as u64;
                self.s1[f] += w as f64 * self.ys[r];
                self.q1[f] += w as f64 * self.ys[r] * self.ys[r];
            }
        }
        touched.sort_unstable();

        let allowed: Option<Vec<bool>> = (self.params.feature_fraction < 1.0).then(|| {
            let k = ((self.dims as f64 * self.params.feature_fraction).ceil() as usize).max(1);
            let mut mask = vec![false; self.dims];
            for i in rand::seq::index::sample(rng, self.dims, k.min(self.dims)) {
                mask[i] = true;
            }
            mask
        });

        let mut best: Option<(f64, usize)> = None;
        for &f in &touched {
            let (n1, s1, q1) = (self.n1[f], self.s1[f], self.q1[f]);
            let n0 = n - n1;
            if n1 < min_leaf || n0 < min_leaf {
                continue;
            }
            if allowed.as_ref().is_some_and(|m| !m[f]) {
                continue;
            }
            let (s0, q0) = (s - s1, q - q1);
            let child = (q1 - s1 * s1 / n1 as f64) + (q0 - s0 * s0 / n0 as f64);
            if best.is_none_or(|(b, _)| child < b) {
                best = Some((child, f));
            }
        }
        for &f in &touched {
            self.n1[f] = 0;
            self.s1[f] = 0.0;
            self.q1[f] = 0.0;
        }

        let feature = match best {
            Some((child, f)) if child < sse - 1e-12 * (1.0 + sse) => f,
            _ => {
                self.nodes.push(Node::Leaf(mean));
                return self.nodes.len() - 1;
            }
        };
        let (with, without): (Vec<usize>, Vec<usize>) =
            members.into_iter().partition(|&r| word_bit(&self.words[r], feature));
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(mean));
        let a = self.build(without, rng);
        let b = self.build(with, rng);
        self.nodes[id] = Node::Split {
            feature,
            without: a,
            with: b,
        };
        id
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrfModel {
    trees: Vec<RegTree>,
    locations: usize,
    sigma_floor: f64,
}

/// Fits the forest on `(placement, value)` pairs over `locations` candidates.
pub fn fit(xs: &[Placement], ys: &[f64], locations: usize, params: &PrfParams, seed: u64) -> Result<PrfModel> {
    if xs.is_empty() {
        return Err(Error::invalid("surrogate needs at least one observation"));
    }
    if xs.len() != ys.len() {
        return Err(Error::invalid("placements and values differ in length"));
    }
    params.validate()?;
    let rows: Vec<Vec<usize>> = xs.iter().map(|p| p.indices().to_vec()).collect();
    if rows.iter().flatten().any(|&i| i >= locations) {
        return Err(Error::invalid("placement index out of range"));
    }
    let words: Vec<Vec<u64>> = xs.iter().map(|p| p.encode(locations)).collect();
    let n = xs.len();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed::derive(seed, t as u64));
            let mut weights = vec![0u32; n];
            for _ in 0..n {
                weights[rng.random_range(0..n)] += 1;
            }
            let members: Vec<usize> = (0..n).filter(|&r| weights[r] > 0).collect();
            let mut f = Fitter {
                rows: &rows,
                words: &words,
                ys,
                weights,
                dims: locations,
                params,
                nodes: Vec::new(),
                n1: vec![0; locations],
                s1: vec![0.0; locations],
                q1: vec![0.0; locations],
            };
            f.build(members, &mut rng);
            RegTree { nodes: f.nodes }
        })
        .collect();
    Ok(PrfModel {
        trees,
        locations,
        sigma_floor: params.sigma_floor,
    })
}

impl PrfModel {
    /// `(μ, σ)` at `x`.
    pub fn predict(&self, x: &Placement) -> (f64, f64) {
        self.predict_words(&x.encode(self.locations))
    }

    pub fn predict_words(&self, words: &[u64]) -> (f64, f64) {
        let k = self.trees.len() as f64;
        let outs: Vec<f64> = self.trees.iter().map(|t| t.predict(words)).collect();
        if outs.iter().all(|&v| v == outs[0]) {
            return (outs[0], self.sigma_floor);
        }
        let mu = outs.iter().sum::<f64>() / k;
        let var = outs.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / k;
        (mu, var.sqrt().max(self.sigma_floor))
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}
