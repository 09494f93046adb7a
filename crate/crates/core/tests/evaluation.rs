mod common;

use std::collections::BTreeSet;

use flowclass_core::dataset::{Dataset, FeatureSchema, LabelCodec};
use flowclass_core::eval::{
    confusion, cross_validate, grid_search, kfold_plan, metrics, metrics_with, rank_grid,
    Averaging, ConfusionMatrix, CvOptions, GridAxis, GridSpec, MetricSet, Protocol,
};
use flowclass_core::pipeline::ModelConfig;
use flowclass_core::{Matrix, Result};
use rand::Rng;

fn random_cm(r: &mut impl Rng) -> ConfusionMatrix {
    let n = r.random_range(1..=8);
    let mut counts: Vec<Vec<u64>> = (0..n)
        .map(|_| {
            (0..n)
                .map(|_| {
                    if r.random_bool(0.3) {
                        0
                    } else {
                        r.random_range(0..50)
                    }
                })
                .collect()
        })
        .collect();
    counts[0][0] += 1;
    ConfusionMatrix {
        counts,
        class_names: (0..n).map(|c| format!("c{c}")).collect(),
    }
}

#[test]
fn metrics_match_naive_recount() {
    let mut r = common::rng(1);
    for _ in 0..1000 {
        let cm = random_cm(&mut r);
        let n = cm.counts.len();
        let report = metrics(&cm).unwrap();
        let mut total = 0u64;
        let mut trace = 0u64;
        for i in 0..n {
            for j in 0..n {
                total += cm.counts[i][j];
                if i == j {
                    trace += cm.counts[i][j];
                }
            }
        }
        assert_eq!(report.total, total);
        let mut weighted = [0.0f64; 3];
        for c in 0..n {
            let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
            for i in 0..n {
                for j in 0..n {
                    let v = cm.counts[i][j];
                    match (i == c, j == c) {
                        (true, true) => tp += v,
                        (false, true) => fp += v,
                        (true, false) => fn_ += v,
                        (false, false) => tn += v,
                    }
                }
            }
            let cr = &report.classes[c];
            assert_eq!((cr.tp, cr.fp, cr.fn_, cr.tn), (tp, fp, fn_, tn));
            let div = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
            let p = div(tp, tp + fp);
            let rc = div(tp, tp + fn_);
            let f1 = if p + rc == 0.0 {
                0.0
            } else {
                2.0 * p * rc / (p + rc)
            };
            let m = cr.metrics;
            assert!((m.precision - p).abs() <= 1e-12);
            assert!((m.recall - rc).abs() <= 1e-12);
            assert!((m.f1 - f1).abs() <= 1e-12);
            assert!((m.accuracy - div(tp + tn, total)).abs() <= 1e-12);
            let w = (tp + fn_) as f64 / total as f64;
            weighted[0] += w * p;
            weighted[1] += w * rc;
            weighted[2] += w * f1;
            for v in [m.accuracy, m.precision, m.recall, m.f1] {
                assert!((0.0..=1.0).contains(&v));
            }
        }
        assert_eq!(report.classes.iter().map(|c| c.tp).sum::<u64>(), trace);
        assert_eq!(report.classes.iter().map(|c| c.support).sum::<u64>(), total);
        assert!((report.aggregate.accuracy - trace as f64 / total as f64).abs() <= 1e-12);
        assert!((report.aggregate.precision - weighted[0]).abs() <= 1e-12);
        assert!((report.aggregate.recall - weighted[1]).abs() <= 1e-12);
        assert!((report.aggregate.f1 - weighted[2]).abs() <= 1e-12);
    }
}

#[test]
fn worked_example() {
    let cm = ConfusionMatrix {
        counts: vec![vec![5, 5], vec![0, 10]],
        class_names: vec!["a".into(), "b".into()],
    };
    let r = metrics(&cm).unwrap();
    assert_eq!(r.aggregate.accuracy, 0.75);
    assert!((r.classes[0].metrics.f1 - 2.0 / 3.0).abs() < 1e-12);
    let m = metrics_with(&cm, Averaging::Macro).unwrap();
    assert!((m.aggregate.f1 - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
}

#[test]
fn confusion_matches_tally() {
    let mut r = common::rng(2);
    for _ in 0..20 {
        let n = r.random_range(1..=7);
        let truth: Vec<usize> = (0..1000).map(|_| r.random_range(0..n)).collect();
        let pred: Vec<usize> = (0..1000).map(|_| r.random_range(0..n)).collect();
        let cm = confusion(&truth, &pred, n).unwrap();
        for i in 0..n {
            for j in 0..n {
                let tally = truth
                    .iter()
                    .zip(&pred)
                    .filter(|&(&t, &p)| t == i && p == j)
                    .count() as u64;
                assert_eq!(cm.counts[i][j], tally);
            }
        }
        assert_eq!(cm.total(), 1000);
    }
}

#[test]
fn kfold_partitions_exhaustively() {
    for n in 2..=200usize {
        for k in 2..=n {
            let plan = kfold_plan(n, k, (n * 1000 + k) as u64).unwrap();
            assert_eq!(plan.folds.len(), k);
            let mut seen = vec![false; n];
            let (mut lo, mut hi) = (usize::MAX, 0);
            for fold in &plan.folds {
                lo = lo.min(fold.len());
                hi = hi.max(fold.len());
                for &i in fold {
                    assert!(
                        i < n && !seen[i],
                        "n={n} k={k}: index {i} repeated or out of range"
                    );
                    seen[i] = true;
                }
            }
            assert!(seen.iter().all(|&s| s), "n={n} k={k}: union incomplete");
            assert!(hi - lo <= 1, "n={n} k={k}: sizes {lo}..{hi}");
        }
    }
    assert_eq!(kfold_plan(50, 7, 3).unwrap(), kfold_plan(50, 7, 3).unwrap());
    assert!(kfold_plan(5, 6, 0).is_err());
}

fn single_class_dataset(n: usize) -> Dataset {
    let x = Matrix::from_vec(n, 12, (0..n * 12).map(|i| (i % 17) as f64).collect()).unwrap();
    Dataset::new(FeatureSchema::moore(), x, vec!["WWW".to_string(); n]).unwrap()
}

#[test]
fn constant_predictor_on_single_class() {
    let data = single_class_dataset(40);
    let codec = LabelCodec::fit(data.labels()).unwrap();
    let constant = |_: &Dataset, test: &Dataset, _: &LabelCodec| -> Result<Vec<usize>> {
        Ok(vec![0; test.len()])
    };
    let report = cross_validate(
        &constant,
        &data,
        &codec,
        &CvOptions {
            k: 4,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(report.folds.len(), 4);
    assert_eq!(report.mean.accuracy, 1.0);
    assert!(report.warnings.is_empty());
}

#[test]
fn missing_class_in_fold_warns() {
    let mut data = single_class_dataset(20);
    let mut labels = data.labels().to_vec();
    labels[3] = "CHAT".into();
    data = Dataset::new(FeatureSchema::moore(), data.features().clone(), labels).unwrap();
    let codec = LabelCodec::fit(data.labels()).unwrap();
    let constant = |_: &Dataset, test: &Dataset, _: &LabelCodec| -> Result<Vec<usize>> {
        Ok(vec![1; test.len()])
    };
    let report = cross_validate(
        &constant,
        &data,
        &codec,
        &CvOptions {
            k: 5,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(report.warnings.len(), 4);
    assert!(report.warnings[0].contains("CHAT"));
}

#[test]
fn dnn_cross_validation_on_blobs() {
    let data = common::blob_dataset(100, 7, 6.0, 21);
    let codec = LabelCodec::fit(data.labels()).unwrap();
    let mut config = ModelConfig::default();
    config.training.epochs = 30;
    config.training.batch_size = 32;
    let options = CvOptions {
        k: 10,
        seed: 3,
        ..Default::default()
    };
    let report = cross_validate(&config, &data, &codec, &options).unwrap();
    assert_eq!(report.folds.len(), 10);
    assert!(
        report.mean.accuracy >= 0.95,
        "mean accuracy {}",
        report.mean.accuracy
    );
    let mean_acc = report
        .folds
        .iter()
        .map(|f| f.aggregate.accuracy)
        .sum::<f64>()
        / 10.0;
    assert!((report.mean.accuracy - mean_acc).abs() < 1e-12);
    let again = cross_validate(&config, &data, &codec, &options).unwrap();
    assert_eq!(report, again);
}

fn axis(name: &str, values: &[f64]) -> GridAxis {
    GridAxis {
        name: name.into(),
        values: values.to_vec(),
    }
}

#[test]
fn grid_counts_and_winner() {
    let grid = GridSpec {
        axes: vec![
            axis("learning_rate", &[0.1, 0.01, 0.001]),
            axis("batch_size", &[10.0, 100.0]),
        ],
    };
    let result = rank_grid(&grid, |cell| {
        let lr = cell[0].1;
        let bs = cell[1].1;
        let acc = 1.0 - (lr - 0.01).abs() - bs / 1000.0;
        Ok(MetricSet {
            accuracy: acc,
            precision: acc,
            recall: acc,
            f1: acc,
        })
    })
    .unwrap();
    assert_eq!(result.ranked.len(), 6);
    let best = result
        .ranked
        .iter()
        .map(|e| e.score.accuracy)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(result.winner().score.accuracy, best);
    assert_eq!(
        result.winner().cell,
        vec![("learning_rate".into(), 0.01), ("batch_size".into(), 10.0)]
    );
    let indices: BTreeSet<usize> = result.ranked.iter().map(|e| e.index).collect();
    assert_eq!(indices.len(), 6);

    let single = GridSpec {
        axes: vec![axis("knn_k", &[3.0])],
    };
    let r = rank_grid(&single, |_| Ok(MetricSet::default())).unwrap();
    assert_eq!(r.ranked.len(), 1);
    assert!(rank_grid(
        &GridSpec {
            axes: vec![axis("knn_k", &[])]
        },
        |_| Ok(MetricSet::default())
    )
    .is_err());
}

#[test]
fn hidden_layer_sweep() {
    let data = common::blob_dataset(40, 4, 6.0, 5);
    let codec = LabelCodec::fit(data.labels()).unwrap();
    let mut base = ModelConfig::default();
    base.training.epochs = 5;
    base.training.batch_size = 32;
    let grid = GridSpec {
        axes: vec![axis(
            "hidden_layers",
            &[3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0],
        )],
    };
    let protocol = Protocol::Holdout {
        train_fraction: 0.7,
    };
    let result = grid_search(&grid, &data, &codec, protocol, 1, |cell| {
        base.with_cell(cell)
    })
    .unwrap();
    assert_eq!(result.ranked.len(), 8);
    let mut layers: Vec<f64> = result.ranked.iter().map(|e| e.cell[0].1).collect();
    layers.sort_by(f64::total_cmp);
    assert_eq!(layers, vec![3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
    for e in &result.ranked {
        let m = e.score;
        assert!([m.accuracy, m.precision, m.recall, m.f1]
            .iter()
            .all(|v| (0.0..=1.0).contains(v)));
    }
    let again = grid_search(&grid, &data, &codec, protocol, 1, |cell| {
        base.with_cell(cell)
    })
    .unwrap();
    assert_eq!(result, again);
}
