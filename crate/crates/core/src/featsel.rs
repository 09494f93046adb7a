//! Feature ranking with an extremely randomized trees ensemble.
//!
//! Trees are grown on the full sample set (no bootstrap). At each node a
//! random subset of features is drawn, each candidate gets a single uniform
//! threshold between its node-local extremes, and the candidate with the
//! largest entropy reduction wins. Feature importance is the sample-weighted
//! impurity decrease accumulated per feature.

use rand::seq::index;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Samples;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraTreesParams {
    pub n_trees: usize,
    /// Candidate features per split; `None` means `ceil(sqrt(d))`.
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for ExtraTreesParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_features: None,
            min_samples_split: 2,
            max_depth: None,
            seed: 0,
        }
    }
}

impl ExtraTreesParams {
    fn resolved_max_features(&self, d: usize) -> Result<usize> {
        let m = self
            .max_features
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize);
        if m < 1 || m > d {
            return Err(Error::Config(format!(
                "max_features must lie in 1..={d}, got {m}"
            )));
        }
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be at least 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(Error::Config("min_samples_split must be at least 2".into()));
        }
        if self.max_depth == Some(0) {
            return Err(Error::Config("max_depth must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        impurity_decrease: f64,
        n_samples: usize,
    },
    Leaf {
        counts: Vec<usize>,
    },
}

/// Arena-backed tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf_for(&self, x: &[f64]) -> &[usize] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    at = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
                TreeNode::Leaf { counts } => return counts,
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax_count(self.leaf_for(x))
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Internal { left, right, .. } => {
                    1 + walk(nodes, *left).max(walk(nodes, *right))
                }
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraTreesModel {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub n_classes: usize,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub scores: Vec<f64>,
    /// Feature indices by descending score, ties to the lower index.
    pub ranking: Vec<usize>,
}

pub fn entropy(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Entropy reduction (bits) of splitting `parent` into `left` and `right`.
pub fn information_gain(parent: &[usize], left: &[usize], right: &[usize]) -> Result<f64> {
    if parent.len() != left.len() || parent.len() != right.len() {
        return Err(Error::Contract(format!(
            "histogram widths differ: parent {}, left {}, right {}",
            parent.len(),
            left.len(),
            right.len()
        )));
    }
    if parent
        .iter()
        .zip(left.iter().zip(right))
        .any(|(&p, (&l, &r))| l + r != p)
    {
        return Err(Error::Contract(
            "left + right counts do not add up to parent".into(),
        ));
    }
    Ok(gain_unchecked(parent, left, right))
}

fn gain_unchecked(parent: &[usize], left: &[usize], right: &[usize]) -> f64 {
    let n: usize = parent.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let h = entropy(parent);
    let nl: usize = left.iter().sum();
    let nr = n - nl;
    let n = n as f64;
    let g = h - (nl as f64 / n) * entropy(left) - (nr as f64 / n) * entropy(right);
    g.clamp(0.0, h)
}

fn argmax_count(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &v) in counts.iter().enumerate() {
        if v > counts[best] {
            best = c;
        }
    }
    best
}

pub fn fit_extra_trees(data: &Samples, params: &ExtraTreesParams) -> Result<ExtraTreesModel> {
    if data.is_empty() {
        return Err(Error::EmptyInput("cannot grow trees on zero rows".into()));
    }
    params.validate()?;
    let max_features = params.resolved_max_features(data.dim())?;
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(params.seed, rng::TREES + t as u64);
            grow_tree(data, params, max_features, &mut rng)
        })
        .collect();
    Ok(ExtraTreesModel {
        trees,
        n_features: data.dim(),
        n_classes: data.n_classes,
        n_samples: data.len(),
    })
}

struct Pending {
    node: usize,
    start: usize,
    end: usize,
    depth: usize,
}

fn histogram(data: &Samples, idx: &[usize]) -> Vec<usize> {
    let mut counts = vec![0; data.n_classes];
    for &i in idx {
        counts[data.y[i]] += 1;
    }
    counts
}

fn grow_tree(
    data: &Samples,
    params: &ExtraTreesParams,
    max_features: usize,
    rng: &mut rng::Rng,
) -> Tree {
    let d = data.dim();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut nodes = vec![TreeNode::Leaf { counts: Vec::new() }];
    let mut stack = vec![Pending {
        node: 0,
        start: 0,
        end: order.len(),
        depth: 0,
    }];

    while let Some(Pending {
        node,
        start,
        end,
        depth,
    }) = stack.pop()
    {
        let idx = &mut order[start..end];
        let counts = histogram(data, idx);
        let n = idx.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let at_depth = params.max_depth.is_some_and(|m| depth >= m);
        if pure || n < params.min_samples_split || at_depth {
            nodes[node] = TreeNode::Leaf { counts };
            continue;
        }

        // (gain, feature, threshold)
        let mut best: Option<(f64, usize, f64)> = None;
        let mut candidates = index::sample(rng, d, max_features).into_vec();
        candidates.sort_unstable();
        let mut draws = Vec::with_capacity(candidates.len());
        for &f in &candidates {
            let (lo, hi) = idx
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    let v = data.x.get(i, f);
                    (lo.min(v), hi.max(v))
                });
            let u: f64 = rng.random();
            draws.push((f, lo, hi, lo + u * (hi - lo)));
        }
        for (f, lo, hi, threshold) in draws {
            if !(hi > lo && threshold < hi) {
                continue;
            }
            let mut left = vec![0; data.n_classes];
            for &i in idx.iter() {
                if data.x.get(i, f) <= threshold {
                    left[data.y[i]] += 1;
                }
            }
            let right: Vec<usize> = counts.iter().zip(&left).map(|(p, l)| p - l).collect();
            let gain = gain_unchecked(&counts, &left, &right);
            if best.is_none_or(|(g, _, _)| gain > g) {
                best = Some((gain, f, threshold));
            }
        }

        let Some((gain, feature, threshold)) = best else {
            nodes[node] = TreeNode::Leaf { counts };
            continue;
        };

        // partition in place: values <= threshold first
        let mut split = 0;
        for k in 0..n {
            if data.x.get(idx[k], feature) <= threshold {
                idx.swap(k, split);
                split += 1;
            }
        }
        let left = nodes.len();
        let right = left + 1;
        nodes.push(TreeNode::Leaf { counts: Vec::new() });
        nodes.push(TreeNode::Leaf { counts: Vec::new() });
        nodes[node] = TreeNode::Internal {
            feature,
            threshold,
            left,
            right,
            impurity_decrease: gain,
            n_samples: n,
        };
        stack.push(Pending {
            node: right,
            start: start + split,
            end,
            depth: depth + 1,
        });
        stack.push(Pending {
            node: left,
            start,
            end: start + split,
            depth: depth + 1,
        });
    }
    Tree { nodes }
}

pub fn feature_importances(model: &ExtraTreesModel) -> ImportanceReport {
    let mut scores = vec![0.0; model.n_features];
    let total = model.n_samples as f64;
    for tree in &model.trees {
        for node in &tree.nodes {
            if let TreeNode::Internal {
                feature,
                impurity_decrease,
                n_samples,
                ..
            } = node
            {
                scores[*feature] += *n_samples as f64 / total * impurity_decrease;
            }
        }
    }
    let n_trees = model.trees.len().max(1) as f64;
    scores.iter_mut().for_each(|s| *s /= n_trees);
    let sum: f64 = scores.iter().sum();
    if sum > 0.0 {
        scores.iter_mut().for_each(|s| *s /= sum);
    }
    let ranking = rank_desc(&scores);
    ImportanceReport { scores, ranking }
}

fn rank_desc(scores: &[f64]) -> Vec<usize> {
    let mut ranking: Vec<usize> = (0..scores.len()).collect();
    ranking.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    ranking
}

impl ImportanceReport {
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let ranking = rank_desc(&scores);
        Self { scores, ranking }
    }
}

pub fn select_top_k(report: &ImportanceReport, k: usize) -> Result<Vec<usize>> {
    let d = report.scores.len();
    if k == 0 || k > d {
        return Err(Error::Bounds { index: k, len: d });
    }
    Ok(report.ranking[..k].to_vec())
}

pub fn predict_forest(model: &ExtraTreesModel, features: &[f64]) -> Result<usize> {
    if features.len() != model.n_features {
        return Err(Error::Schema(format!(
            "query has {} features, forest expects {}",
            features.len(),
            model.n_features
        )));
    }
    let mut votes = vec![0usize; model.n_classes];
    for tree in &model.trees {
        votes[tree.predict(features)] += 1;
    }
    Ok(argmax_count(&votes))
}
