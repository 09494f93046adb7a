//! Fold planning, k-fold cross-validation and holdout evaluation.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{confusion, metrics_with, write_metric_row, Averaging, EvalReport, MetricSet};
use crate::dataset::{split_indices, Dataset, LabelCodec};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// Each fold's row indices in ascending order.
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    /// Every index not in fold `f`, ascending.
    pub fn training_indices(&self, f: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, fold)| fold.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    if k > n {
        return Err(Error::Config(format!(
            "k = {k} exceeds the {n} available rows"
        )));
    }
    Ok(())
}

fn deal(order: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut folds = vec![Vec::with_capacity(order.len() / k + 1); k];
    for (pos, &i) in order.iter().enumerate() {
        folds[pos % k].push(i);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    folds
}

/// Seeded shuffle of `0..n` dealt round-robin into `k` folds.
pub fn kfold_plan(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    check_k(n, k)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, rng::FOLDS));
    Ok(FoldPlan {
        k,
        folds: deal(&order, k),
    })
}

/// Like [`kfold_plan`] but each class is shuffled separately and dealt in turn,
/// so every fold receives a near-equal share of every class.
pub fn stratified_kfold_plan(labels: &[usize], k: usize, seed: u64) -> Result<FoldPlan> {
    check_k(labels.len(), k)?;
    let mut rng = rng::stream(seed, rng::FOLDS);
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let mut order = Vec::with_capacity(labels.len());
    for (_, mut members) in by_class {
        members.shuffle(&mut rng);
        order.extend(members);
    }
    Ok(FoldPlan {
        k,
        folds: deal(&order, k),
    })
}

/// Fits preprocessing and a model on `train`, then predicts class indices for `test`.
pub trait Learner: Sync {
    fn fit_predict(
        &self,
        train: &Dataset,
        test: &Dataset,
        codec: &LabelCodec,
    ) -> Result<Vec<usize>>;
}

impl<F> Learner for F
where
    F: Fn(&Dataset, &Dataset, &LabelCodec) -> Result<Vec<usize>> + Sync,
{
    fn fit_predict(
        &self,
        train: &Dataset,
        test: &Dataset,
        codec: &LabelCodec,
    ) -> Result<Vec<usize>> {
        self(train, test, codec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub k: usize,
    pub seed: u64,
    pub stratified: bool,
    /// Keep at most this many rows per class (seeded choice) before folding.
    pub per_class_cap: Option<usize>,
    pub averaging: Averaging,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            k: 10,
            seed: 0,
            stratified: false,
            per_class_cap: None,
            averaging: Averaging::Weighted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<EvalReport>,
    /// Unweighted mean of the fold aggregates.
    pub mean: MetricSet,
    /// Unweighted mean of each class's fold metrics.
    pub mean_per_class: Vec<(String, MetricSet)>,
    pub warnings: Vec<String>,
}

impl CvReport {
    /// One row per fold plus a final `mean` row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["fold", "accuracy", "precision", "recall", "f1", "support"])?;
        for (f, r) in self.folds.iter().enumerate() {
            write_metric_row(&mut w, &(f + 1).to_string(), &r.aggregate, r.total)?;
        }
        let total = self.folds.iter().map(|r| r.total).sum();
        write_metric_row(&mut w, "mean", &self.mean, total)?;
        w.flush().map_err(|e| Error::io("cv report", e))?;
        Ok(())
    }
}

fn cap_per_class(labels: &[usize], cap: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng::stream(seed, rng::SUBSAMPLE);
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let mut keep = Vec::new();
    for (_, mut members) in by_class {
        if members.len() > cap {
            members.shuffle(&mut rng);
            members.truncate(cap);
        }
        keep.extend(members);
    }
    keep.sort_unstable();
    keep
}

pub fn evaluate_predictions(
    truth: &[usize],
    predicted: &[usize],
    codec: &LabelCodec,
    averaging: Averaging,
) -> Result<EvalReport> {
    let cm = confusion(truth, predicted, codec.len())?.with_names(codec.classes())?;
    metrics_with(&cm, averaging)
}

pub fn cross_validate<L: Learner + ?Sized>(
    learner: &L,
    data: &Dataset,
    codec: &LabelCodec,
    options: &CvOptions,
) -> Result<CvReport> {
    let labels = data.encode_labels(codec)?;
    let (data, labels) = match options.per_class_cap {
        Some(cap) => {
            let keep = cap_per_class(&labels, cap, options.seed);
            let sub = data.subset(&keep);
            let l = keep.iter().map(|&i| labels[i]).collect::<Vec<_>>();
            (sub, l)
        }
        None => (data.clone(), labels),
    };
    let plan = if options.stratified {
        stratified_kfold_plan(&labels, options.k, options.seed)?
    } else {
        kfold_plan(labels.len(), options.k, options.seed)?
    };

    let mut present = vec![false; codec.len()];
    labels.iter().for_each(|&c| present[c] = true);

    let outcomes: Vec<Result<(EvalReport, Vec<String>)>> = (0..plan.k)
        .into_par_iter()
        .map(|f| {
            let test_idx = &plan.folds[f];
            let train = data.subset(&plan.training_indices(f));
            let test = data.subset(test_idx);
            let truth: Vec<usize> = test_idx.iter().map(|&i| labels[i]).collect();
            let mut warnings = Vec::new();
            let mut in_fold = vec![false; codec.len()];
            truth.iter().for_each(|&c| in_fold[c] = true);
            for c in 0..codec.len() {
                if present[c] && !in_fold[c] {
                    warnings.push(format!(
                        "fold {}: class {} absent from the test fold",
                        f + 1,
                        codec.classes()[c]
                    ));
                }
            }
            let predicted = learner.fit_predict(&train, &test, codec)?;
            let report = evaluate_predictions(&truth, &predicted, codec, options.averaging)?;
            Ok((report, warnings))
        })
        .collect();

    let mut folds = Vec::with_capacity(plan.k);
    let mut warnings = Vec::new();
    for outcome in outcomes {
        let (r, w) = outcome?;
        folds.push(r);
        warnings.extend(w);
    }
    let mean = MetricSet::mean(&folds.iter().map(|r| r.aggregate).collect::<Vec<_>>());
    let mean_per_class = (0..codec.len())
        .map(|c| {
            let sets: Vec<MetricSet> = folds.iter().map(|r| r.classes[c].metrics).collect();
            (codec.classes()[c].clone(), MetricSet::mean(&sets))
        })
        .collect();
    Ok(CvReport {
        folds,
        mean,
        mean_per_class,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Protocol {
    Holdout { train_fraction: f64 },
    Cv { k: usize },
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol::Holdout {
            train_fraction: 0.7,
        }
    }
}

/// Aggregate metrics of `learner` under `protocol`.
pub fn evaluate_protocol<L: Learner + ?Sized>(
    learner: &L,
    data: &Dataset,
    codec: &LabelCodec,
    protocol: Protocol,
    seed: u64,
) -> Result<MetricSet> {
    match protocol {
        Protocol::Holdout { train_fraction } => {
            let (train_idx, test_idx) = split_indices(data.len(), train_fraction, seed)?;
            let train = data.subset(&train_idx);
            let test = data.subset(&test_idx);
            let truth = test.encode_labels(codec)?;
            let predicted = learner.fit_predict(&train, &test, codec)?;
            Ok(evaluate_predictions(&truth, &predicted, codec, Averaging::Weighted)?.aggregate)
        }
        Protocol::Cv { k } => {
            let options = CvOptions {
                k,
                seed,
                ..Default::default()
            };
            Ok(cross_validate(learner, data, codec, &options)?.mean)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_folds() {
        let plan = kfold_plan(10, 10, 1).unwrap();
        assert!(plan.folds.iter().all(|f| f.len() == 1));
    }

    #[test]
    fn balanced_sizes() {
        let plan = kfold_plan(10, 3, 1).unwrap();
        let mut sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        sizes.sort();
        assert_eq!(sizes, vec![3, 3, 4]);
        assert_eq!(plan.training_indices(0).len() + plan.folds[0].len(), 10);
    }

    #[test]
    fn bad_k() {
        assert!(matches!(kfold_plan(3, 4, 0), Err(Error::Config(_))));
        assert!(matches!(kfold_plan(3, 1, 0), Err(Error::Config(_))));
    }

    #[test]
    fn stratified_spreads_each_class() {
        let labels: Vec<usize> = (0..100).map(|i| if i < 10 { 1 } else { 0 }).collect();
        let plan = stratified_kfold_plan(&labels, 5, 3).unwrap();
        for fold in &plan.folds {
            assert_eq!(fold.len(), 20);
            assert_eq!(fold.iter().filter(|&&i| labels[i] == 1).count(), 2);
        }
    }

    #[test]
    fn cap_keeps_at_most_cap() {
        let labels = vec![0, 0, 0, 0, 1, 1, 2];
        let keep = cap_per_class(&labels, 2, 5);
        let count = |c| keep.iter().filter(|&&i| labels[i] == c).count();
        assert_eq!((count(0), count(1), count(2)), (2, 2, 1));
    }
}
