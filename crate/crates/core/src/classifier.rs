//! Activity-recognition models over binary sensor vectors and the
//! macro-averaged F1 score used as the placement objective.
//!
//! Sensor vectors are low-dimensional bit patterns with massive repetition
//! (most windows show the same handful of patterns), so the forest trains on
//! unique `(pattern, class)` groups weighted by bootstrap multiplicity. The
//! result is the same forest that row-level training on the bootstrap
//! sample would produce, at a fraction of the cost.

use std::collections::{BTreeMap, HashMap};

use rand::Rng as _;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::{hamming, word_bit, BitMatrix};
use crate::error::{Error, Result};
use crate::seed;
use crate::simulator::TraceDataset;

/// Rows of (bit vector, class index).
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledMatrix {
    pub features: BitMatrix,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl LabeledMatrix {
    pub fn new(features: BitMatrix, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::invalid(format!("class index {bad} out of range for {} classes", class_names.len())));
        }
        Ok(Self {
            features,
            labels,
            class_names,
        })
    }

    /// Stacks the series of the selected occupants.
    pub fn from_series(ds: &TraceDataset, occupants: impl IntoIterator<Item = usize>) -> Self {
        let mut features = BitMatrix::zeros(0, ds.sensor_count());
        let mut labels = Vec::new();
        for i in occupants {
            features.extend(&ds.series[i].features);
            labels.extend_from_slice(&ds.series[i].labels);
        }
        Self {
            features,
            labels,
            class_names: ds.class_names.clone(),
        }
    }

    pub fn from_dataset(ds: &TraceDataset) -> Self {
        Self::from_series(ds, 0..ds.occupants())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }
}

/// Unique `(pattern, class)` groups with their row multiplicities, in
/// ascending `(pattern, class)` order.
#[derive(Clone, Debug)]
struct Groups {
    patterns: Vec<Vec<u64>>,
    classes: Vec<usize>,
    counts: Vec<u32>,
    total: u64,
}

impl Groups {
    fn build(data: &LabeledMatrix) -> Self {
        let mut map: BTreeMap<(Vec<u64>, usize), u32> = BTreeMap::new();
        let mut index: HashMap<(&[u64], usize), u32> = HashMap::new();
        for r in 0..data.len() {
            *index.entry((data.features.row(r), data.labels[r])).or_insert(0) += 1;
        }
        for ((p, c), n) in index {
            map.insert((p.to_vec(), c), n);
        }
        let mut g = Groups {
            patterns: Vec::with_capacity(map.len()),
            classes: Vec::with_capacity(map.len()),
            counts: Vec::with_capacity(map.len()),
            total: data.len() as u64,
        };
        for ((p, c), n) in map {
            g.patterns.push(p);
            g.classes.push(c);
            g.counts.push(n);
        }
        g
    }

    /// Bootstrap multiplicities: a multinomial draw of `total` rows with
    /// replacement, sampled as a chain of conditional binomials.
    fn bootstrap(&self, rng: &mut seed::Rng) -> Vec<u32> {
        let mut left_n = self.total;
        let mut left_rows = self.total;
        let mut out = Vec::with_capacity(self.counts.len());
        for &c in &self.counts {
            if left_n == 0 || left_rows == 0 {
                out.push(0);
                continue;
            }
            let p = (c as f64 / left_rows as f64).min(1.0);
            let b = Binomial::new(left_n, p).expect("valid binomial").sample(rng);
            out.push(b as u32);
            left_n -= b;
            left_rows -= c as u64;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows trees until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    pub min_leaf: u32,
    /// Candidate features per split; `None` means `floor(sqrt(D))`.
    pub max_features: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            max_features: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 5 }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Leaf { counts: Vec<u32>, class: usize },
    Split { feature: usize, zero: usize, one: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf(&self, words: &[u64]) -> &Node {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split { feature, zero, one } => i = if word_bit(words, *feature) { *one } else { *zero },
                leaf => return leaf,
            }
        }
    }

    pub fn predict_words(&self, words: &[u64]) -> usize {
        match self.leaf(words) {
            Node::Leaf { class, .. } => *class,
            Node::Split { .. } => unreachable!(),
        }
    }

    /// Class distribution of the leaf reached by `words`.
    pub fn leaf_counts(&self, words: &[u64]) -> &[u32] {
        match self.leaf(words) {
            Node::Leaf { counts, .. } => counts,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &[u32]> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { counts, .. } => Some(counts.as_slice()),
            Node::Split { .. } => None,
        })
    }
}

fn argmax_lowest(counts: &[u32]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

fn gini(counts: &[u64], total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

struct TreeBuilder<'a> {
    groups: &'a Groups,
    weights: &'a [u32],
    n_classes: usize,
    dims: usize,
    mtry: usize,
    params: &'a ForestParams,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn class_counts(&self, members: &[usize]) -> Vec<u64> {
        let mut counts = vec![0u64; self.n_classes];
        for &g in members {
            counts[self.groups.classes[g]] += self.weights[g] as u64;
        }
        counts
    }

    fn push_leaf(&mut self, counts: &[u64]) -> usize {
        let counts: Vec<u32> = counts.iter().map(|&c| c as u32).collect();
        let class = argmax_lowest(&counts);
        self.nodes.push(Node::Leaf { counts, class });
        self.nodes.len() - 1
    }

    fn build(&mut self, members: Vec<usize>, depth: usize, rng: &mut seed::Rng) -> usize {
        let counts = self.class_counts(&members);
        let total: u64 = counts.iter().sum();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = self.params.max_depth.is_some_and(|m| depth >= m);
        if pure || depth_capped || total < 2 * self.params.min_leaf.max(1) as u64 {
            return self.push_leaf(&counts);
        }

        // Draw features without replacement until `mtry` non-constant ones
        // have been examined or all features are exhausted.
        let mut order: Vec<usize> = (0..self.dims).collect();
        let mut examined = 0;
        let mut best: Option<(f64, usize)> = None;
        let mut ones = vec![0u64; self.n_classes];
        for drawn in 0..self.dims {
            if examined >= self.mtry {
                break;
            }
            let j = rng.random_range(drawn..self.dims);
            order.swap(drawn, j);
            let f = order[drawn];
            ones.iter_mut().for_each(|c| *c = 0);
            for &g in &members {
                if word_bit(&self.groups.patterns[g], f) {
                    ones[self.groups.classes[g]] += self.weights[g] as u64;
                }
            }
            let w1: u64 = ones.iter().sum();
            let w0 = total - w1;
            if w1 == 0 || w0 == 0 {
                continue;
            }
            examined += 1;
            let min_leaf = self.params.min_leaf as u64;
            if w1 < min_leaf || w0 < min_leaf {
                continue;
            }
            let zeros: Vec<u64> = counts.iter().zip(&ones).map(|(a, b)| a - b).collect();
            let score = w0 as f64 * gini(&zeros, w0) + w1 as f64 * gini(&ones, w1);
            if best.is_none_or(|(s, _)| score < s) {
                best = Some((score, f));
            }
        }
        let Some((_, feature)) = best else {
            return self.push_leaf(&counts);
        };

        let (one, zero): (Vec<usize>, Vec<usize>) = members
            .into_iter()
            .partition(|&g| word_bit(&self.groups.patterns[g], feature));
        let id = self.nodes.len();
        self.nodes.push(Node::Split {
            feature,
            zero: 0,
            one: 0,
        });
        let z = self.build(zero, depth + 1, rng);
        let o = self.build(one, depth + 1, rng);
        self.nodes[id] = Node::Split { feature, zero: z, one: o };
        id
    }
}

/// Random forest of Gini classification trees.
#[derive(Clone, Debug, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub n_classes: usize,
    pub dims: usize,
}

pub fn train_forest(data: &LabeledMatrix, params: &ForestParams, seed: u64) -> Result<ForestModel> {
    if data.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if params.n_trees == 0 {
        return Err(Error::invalid("forest needs at least one tree"));
    }
    let groups = Groups::build(data);
    let dims = data.dims();
    let mtry = params
        .max_features
        .unwrap_or_else(|| (dims as f64).sqrt().floor() as usize)
        .clamp(1, dims.max(1));
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed::derive(seed, t as u64));
            let weights = groups.bootstrap(&mut rng);
            let members: Vec<usize> = (0..weights.len()).filter(|&g| weights[g] > 0).collect();
            let mut b = TreeBuilder {
                groups: &groups,
                weights: &weights,
                n_classes: data.n_classes(),
                dims,
                mtry,
                params,
                nodes: Vec::new(),
            };
            b.build(members, 0, &mut rng);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(ForestModel {
        trees,
        n_classes: data.n_classes(),
        dims,
    })
}

impl ForestModel {
    pub fn predict(&self, vector: &[bool]) -> Result<usize> {
        if vector.len() != self.dims {
            return Err(Error::invalid(format!("vector has length {}, model expects {}", vector.len(), self.dims)));
        }
        let m = BitMatrix::from_rows(self.dims, &[vector]);
        Ok(self.predict_words(m.row(0)))
    }

    pub fn predict_words(&self, words: &[u64]) -> usize {
        let mut votes = vec![0u32; self.n_classes];
        for t in &self.trees {
            votes[t.predict_words(words)] += 1;
        }
        argmax_lowest(&votes)
    }
}

/// Hamming-distance k-nearest neighbours.
#[derive(Clone, Debug, PartialEq)]
pub struct KnnModel {
    pub k: usize,
    n_classes: usize,
    dims: usize,
    patterns: Vec<Vec<u64>>,
    /// Per unique pattern: `(row index, class)` in ascending row order.
    rows: Vec<Vec<(usize, usize)>>,
}

pub fn train_knn(data: &LabeledMatrix, params: &KnnParams) -> Result<KnnModel> {
    if data.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if params.k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    let mut index: BTreeMap<&[u64], Vec<(usize, usize)>> = BTreeMap::new();
    for r in 0..data.len() {
        index.entry(data.features.row(r)).or_default().push((r, data.labels[r]));
    }
    let (patterns, rows) = index.into_iter().map(|(p, r)| (p.to_vec(), r)).unzip();
    Ok(KnnModel {
        k: params.k,
        n_classes: data.n_classes(),
        dims: data.dims(),
        patterns,
        rows,
    })
}

impl KnnModel {
    pub fn predict(&self, vector: &[bool]) -> Result<usize> {
        if vector.len() != self.dims {
            return Err(Error::invalid(format!("vector has length {}, model expects {}", vector.len(), self.dims)));
        }
        let m = BitMatrix::from_rows(self.dims, &[vector]);
        Ok(self.predict_words(m.row(0)))
    }

    /// Votes over the `k` nearest training rows, ordered by
    /// `(distance, row index)`.
    pub fn predict_words(&self, words: &[u64]) -> usize {
        let mut by_dist: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (p, pat) in self.patterns.iter().enumerate() {
            by_dist.entry(hamming(words, pat)).or_default().push(p);
        }
        let mut votes = vec![0u32; self.n_classes];
        let mut need = self.k;
        for pats in by_dist.values() {
            if need == 0 {
                break;
            }
            let size: usize = pats.iter().map(|&p| self.rows[p].len()).sum();
            if size <= need {
                for &p in pats {
                    for &(_, c) in &self.rows[p] {
                        votes[c] += 1;
                    }
                }
                need -= size;
            } else {
                let mut tier: Vec<(usize, usize)> = pats.iter().flat_map(|&p| self.rows[p].iter().copied()).collect();
                tier.sort_unstable();
                for &(_, c) in &tier[..need] {
                    votes[c] += 1;
                }
                need = 0;
            }
        }
        argmax_lowest(&votes)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Forest(ForestParams),
    Knn(KnnParams),
}

impl Default for ClassifierKind {
    fn default() -> Self {
        ClassifierKind::Forest(ForestParams::default())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Forest(ForestModel),
    Knn(KnnModel),
}

impl Model {
    pub fn train(kind: &ClassifierKind, data: &LabeledMatrix, seed: u64) -> Result<Self> {
        Ok(match kind {
            ClassifierKind::Forest(p) => Model::Forest(train_forest(data, p, seed)?),
            ClassifierKind::Knn(p) => Model::Knn(train_knn(data, p)?),
        })
    }

    pub fn predict_words(&self, words: &[u64]) -> usize {
        match self {
            Model::Forest(m) => m.predict_words(words),
            Model::Knn(m) => m.predict_words(words),
        }
    }

    /// Predicts every row, evaluating each distinct pattern once.
    pub fn predict_matrix(&self, features: &BitMatrix) -> Vec<usize> {
        let mut cache: HashMap<&[u64], usize> = HashMap::new();
        (0..features.rows())
            .map(|r| {
                let w = features.row(r);
                *cache.entry(w).or_insert_with(|| self.predict_words(w))
            })
            .collect()
    }
}

/// Macro-averaged F1 over `m` classes; a class with no true, predicted or
/// missed rows scores 0.
pub fn macro_f1(predictions: &[usize], truths: &[usize], m: usize) -> f64 {
    assert_eq!(predictions.len(), truths.len(), "prediction/truth length mismatch");
    if m == 0 {
        return 0.0;
    }
    let mut tp = vec![0u64; m];
    let mut fp = vec![0u64; m];
    let mut fn_ = vec![0u64; m];
    for (&p, &t) in predictions.iter().zip(truths) {
        if p == t {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let sum: f64 = (0..m)
        .map(|j| {
            let denom = tp[j] as f64 + 0.5 * (fp[j] + fn_[j]) as f64;
            if denom == 0.0 {
                0.0
            } else {
                tp[j] as f64 / denom
            }
        })
        .sum();
    sum / m as f64
}

fn score(kind: &ClassifierKind, train: &LabeledMatrix, test: &LabeledMatrix, seed: u64) -> Result<f64> {
    let model = Model::train(kind, train, seed)?;
    let preds = model.predict_matrix(&test.features);
    Ok(macro_f1(&preds, &test.labels, test.n_classes()))
}

/// Per-fold scores of leave-one-occupant-out evaluation.
pub fn loocv_folds(ds: &TraceDataset, kind: &ClassifierKind, seed: u64) -> Result<Vec<f64>> {
    let n = ds.occupants();
    if n < 2 {
        return Err(Error::invalid(format!("leave-one-occupant-out needs at least 2 occupants, got {n}")));
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let train = LabeledMatrix::from_series(ds, (0..n).filter(|&j| j != i));
            let test = LabeledMatrix::from_series(ds, [i]);
            score(kind, &train, &test, seed::derive(seed, i as u64))
        })
        .collect()
}

/// Mean macro-F1 over leave-one-occupant-out folds.
pub fn evaluate_loocv(ds: &TraceDataset, kind: &ClassifierKind, seed: u64) -> Result<f64> {
    let folds = loocv_folds(ds, kind, seed)?;
    Ok(folds.iter().sum::<f64>() / folds.len() as f64)
}

/// Macro-F1 on `test` of a model trained on `train`.
pub fn evaluate_split(train: &TraceDataset, test: &TraceDataset, kind: &ClassifierKind, seed: u64) -> Result<f64> {
    if train.sensor_count() != test.sensor_count() {
        return Err(Error::invalid("train and test sensor sets differ"));
    }
    let train = LabeledMatrix::from_dataset(train);
    let test = LabeledMatrix::from_dataset(test);
    if test.is_empty() {
        return Err(Error::invalid("test split is empty"));
    }
    score(kind, &train, &test, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[(&[bool], usize)], m: usize) -> LabeledMatrix {
        let d = rows[0].0.len();
        let bits: Vec<Vec<bool>> = rows.iter().map(|r| r.0.to_vec()).collect();
        LabeledMatrix::new(
            BitMatrix::from_rows(d, &bits),
            rows.iter().map(|r| r.1).collect(),
            (0..m).map(|i| format!("c{i}")).collect(),
        )
        .unwrap()
    }

    fn separable() -> LabeledMatrix {
        let mut rows: Vec<(&[bool], usize)> = Vec::new();
        for _ in 0..20 {
            rows.push((&[true, false, true], 1));
            rows.push((&[true, true, false], 1));
            rows.push((&[false, true, true], 0));
            rows.push((&[false, false, false], 0));
        }
        matrix(&rows, 2)
    }

    #[test]
    fn f1_hand_cases() {
        let v = macro_f1(&[0, 1, 1, 1], &[0, 0, 1, 1], 2);
        assert!((v - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
        assert!((macro_f1(&[0, 0, 0, 0], &[0, 0, 1, 1], 2) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(macro_f1(&[2, 0, 1], &[2, 0, 1], 5), 3.0 / 5.0);
        assert_eq!(macro_f1(&[0, 0], &[0, 0], 1), 1.0);
    }

    #[test]
    fn forest_separates_toy() {
        let data = separable();
        let model = train_forest(&data, &ForestParams::default(), 7).unwrap();
        assert_eq!(model.trees.len(), 100);
        assert_eq!(model.predict(&[true, false, false]).unwrap(), 1);
        assert_eq!(model.predict(&[false, false, true]).unwrap(), 0);
        let preds = Model::Forest(model.clone()).predict_matrix(&data.features);
        assert_eq!(preds, data.labels);
        assert!(model.predict(&[true]).is_err());
        let again = train_forest(&data, &ForestParams::default(), 7).unwrap();
        assert_eq!(model, again);
    }

    #[test]
    fn leaf_distributions_sum_to_bootstrap_size() {
        let data = separable();
        let model = train_forest(&data, &ForestParams::default(), 3).unwrap();
        for t in &model.trees {
            let total: u32 = t.leaves().map(|c| c.iter().sum::<u32>()).sum();
            assert_eq!(total as usize, data.len());
        }
    }

    #[test]
    fn single_class_gives_constant_model() {
        let data = matrix(&[(&[true, false], 1), (&[false, true], 1)], 3);
        let model = train_forest(&data, &ForestParams::default(), 1).unwrap();
        assert_eq!(model.predict(&[false, false]).unwrap(), 1);
        assert!(model.trees.iter().all(|t| t.node_count() == 1));
    }

    #[test]
    fn knn_votes() {
        let data = matrix(&[(&[true, true], 0), (&[true, false], 1), (&[false, true], 1)], 2);
        let knn = train_knn(&data, &KnnParams { k: 3 }).unwrap();
        assert_eq!(knn.predict(&[true, true]).unwrap(), 1);
        let k1 = train_knn(&data, &KnnParams { k: 1 }).unwrap();
        assert_eq!(Model::Knn(k1).predict_matrix(&data.features), data.labels);
        let empty = LabeledMatrix::new(BitMatrix::zeros(0, 2), vec![], vec!["a".into()]).unwrap();
        assert!(train_knn(&empty, &KnnParams::default()).is_err());
    }

    #[test]
    fn knn_breaks_distance_ties_by_row_index() {
        // Two rows at distance 1 from the query; k=1 must pick row 0.
        let data = matrix(&[(&[true, false, false], 1), (&[false, true, false], 0), (&[true, true, true], 0)], 2);
        let knn = train_knn(&data, &KnnParams { k: 1 }).unwrap();
        assert_eq!(knn.predict(&[false, false, false]).unwrap(), 1);
    }

    #[test]
    fn bootstrap_is_multinomial_of_full_size() {
        let data = separable();
        let g = Groups::build(&data);
        assert_eq!(g.patterns.len(), 4);
        let mut rng = seed::rng(11);
        for _ in 0..50 {
            let w = g.bootstrap(&mut rng);
            assert_eq!(w.iter().map(|&x| x as u64).sum::<u64>(), g.total);
        }
    }
}
