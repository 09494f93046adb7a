use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `counts[i][j]` = samples of true class `i` predicted as class `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    /// Attaches class names; defaults are the indices as strings.
    pub fn with_names(mut self, names: &[String]) -> Result<Self> {
        if names.len() != self.n_classes() {
            return Err(Error::Contract(format!(
                "{} class names for {} classes",
                names.len(),
                self.n_classes()
            )));
        }
        self.class_names = names.to_vec();
        Ok(self)
    }
}

pub fn confusion(
    truth: &[usize],
    predicted: &[usize],
    n_classes: usize,
) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::Contract(format!(
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut counts = vec![vec![0u64; n_classes]; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::Contract(format!(
                "label pair ({t}, {p}) outside 0..{n_classes}"
            )));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix {
        counts,
        class_names: (0..n_classes).map(|c| c.to_string()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Support-weighted mean over classes.
    #[default]
    Weighted,
    /// Unweighted mean over classes.
    Macro,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricSet {
    pub fn mean(sets: &[MetricSet]) -> MetricSet {
        let n = sets.len().max(1) as f64;
        let sum = |f: fn(&MetricSet) -> f64| sets.iter().map(f).sum::<f64>() / n;
        MetricSet {
            accuracy: sum(|m| m.accuracy),
            precision: sum(|m| m.precision),
            recall: sum(|m| m.recall),
            f1: sum(|m| m.f1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub name: String,
    pub support: u64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub metrics: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<ClassReport>,
    pub total: u64,
    pub averaging: Averaging,
    /// `accuracy` is trace/total; the rest are averaged per `averaging`.
    pub aggregate: MetricSet,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<EvalReport> {
    metrics_with(cm, Averaging::Weighted)
}

pub fn metrics_with(cm: &ConfusionMatrix, averaging: Averaging) -> Result<EvalReport> {
    let n = cm.n_classes();
    let total = cm.total();
    if n == 0 || total == 0 {
        return Err(Error::EmptyInput("confusion matrix has no samples".into()));
    }
    let mut classes = Vec::with_capacity(n);
    for c in 0..n {
        let tp = cm.counts[c][c];
        let row: u64 = cm.counts[c].iter().sum();
        let col: u64 = cm.counts.iter().map(|r| r[c]).sum();
        let (fp, fn_) = (col - tp, row - tp);
        let tn = total - tp - fp - fn_;
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        classes.push(ClassReport {
            name: cm
                .class_names
                .get(c)
                .cloned()
                .unwrap_or_else(|| c.to_string()),
            support: row,
            tp,
            fp,
            fn_,
            tn,
            metrics: MetricSet {
                accuracy: ratio(tp + tn, total),
                precision,
                recall,
                f1,
            },
        });
    }
    let weight = |c: &ClassReport| match averaging {
        Averaging::Weighted => c.support as f64 / total as f64,
        Averaging::Macro => 1.0 / n as f64,
    };
    let avg = |f: fn(&MetricSet) -> f64| classes.iter().map(|c| weight(c) * f(&c.metrics)).sum();
    let aggregate = MetricSet {
        accuracy: ratio(cm.trace(), total),
        precision: avg(|m| m.precision),
        recall: avg(|m| m.recall),
        f1: avg(|m| m.f1),
    };
    Ok(EvalReport {
        classes,
        total,
        averaging,
        aggregate,
    })
}

impl EvalReport {
    /// Per-class rows (class, accuracy, precision, recall, f1, support) plus an aggregate row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["class", "accuracy", "precision", "recall", "f1", "support"])?;
        for c in &self.classes {
            write_metric_row(&mut w, &c.name, &c.metrics, c.support)?;
        }
        let label = match self.averaging {
            Averaging::Weighted => "weighted_avg",
            Averaging::Macro => "macro_avg",
        };
        write_metric_row(&mut w, label, &self.aggregate, self.total)?;
        w.flush().map_err(|e| Error::io("report", e))?;
        Ok(())
    }
}

pub(crate) fn write_metric_row<W: Write>(
    w: &mut csv::Writer<W>,
    label: &str,
    m: &MetricSet,
    support: u64,
) -> Result<()> {
    w.write_record([
        label.to_string(),
        m.accuracy.to_string(),
        m.precision.to_string(),
        m.recall.to_string(),
        m.f1.to_string(),
        support.to_string(),
    ])?;
    Ok(())
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<14} {:>9} {:>9} {:>9} {:>9} {:>9}",
            "class", "accuracy", "precision", "recall", "f1", "support"
        )?;
        let row = |f: &mut fmt::Formatter<'_>, name: &str, m: &MetricSet, s: u64| {
            writeln!(
                f,
                "{:<14} {:>8.2}% {:>8.2}% {:>8.2}% {:>8.2}% {:>9}",
                name,
                100.0 * m.accuracy,
                100.0 * m.precision,
                100.0 * m.recall,
                100.0 * m.f1,
                s
            )
        };
        for c in &self.classes {
            row(f, &c.name, &c.metrics, c.support)?;
        }
        let label = match self.averaging {
            Averaging::Weighted => "weighted avg",
            Averaging::Macro => "macro avg",
        };
        row(f, label, &self.aggregate, self.total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(counts: Vec<Vec<u64>>) -> ConfusionMatrix {
        let n = counts.len();
        ConfusionMatrix {
            counts,
            class_names: (0..n).map(|c| c.to_string()).collect(),
        }
    }

    #[test]
    fn confusion_examples() {
        assert_eq!(
            confusion(&[0, 1], &[0, 1], 2).unwrap().counts,
            vec![vec![1, 0], vec![0, 1]]
        );
        assert_eq!(
            confusion(&[0, 0], &[1, 1], 2).unwrap().counts,
            vec![vec![0, 2], vec![0, 0]]
        );
        assert!(confusion(&[0], &[0, 1], 2).is_err());
        assert!(confusion(&[2], &[0], 2).is_err());
    }

    #[test]
    fn perfect_diagonal() {
        let r = metrics(&cm(vec![vec![3, 0, 0], vec![0, 5, 0], vec![0, 0, 1]])).unwrap();
        for c in &r.classes {
            assert_eq!(
                c.metrics,
                MetricSet {
                    accuracy: 1.0,
                    precision: 1.0,
                    recall: 1.0,
                    f1: 1.0
                }
            );
        }
        assert_eq!(r.aggregate.accuracy, 1.0);
        assert_eq!(r.aggregate.f1, 1.0);
    }

    #[test]
    fn worked_two_class_example() {
        let r = metrics(&cm(vec![vec![5, 5], vec![0, 10]])).unwrap();
        let (a, b) = (&r.classes[0].metrics, &r.classes[1].metrics);
        assert_eq!(a.precision, 1.0);
        assert_eq!(a.recall, 0.5);
        assert!((a.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((b.precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(b.recall, 1.0);
        assert!((b.f1 - 0.8).abs() < 1e-15);
        assert_eq!(r.aggregate.accuracy, 0.75);
        // weighted recall equals accuracy
        assert!((r.aggregate.recall - 0.75).abs() < 1e-15);
    }

    #[test]
    fn zero_support_class() {
        let r = metrics(&cm(vec![vec![4, 0], vec![0, 0]])).unwrap();
        assert_eq!(r.classes[1].support, 0);
        assert_eq!(r.classes[1].metrics.recall, 0.0);
        assert_eq!(r.classes[1].metrics.precision, 0.0);
        assert_eq!(r.classes[1].metrics.f1, 0.0);
        assert!(metrics(&cm(vec![vec![0, 0], vec![0, 0]])).is_err());
        assert!(metrics(&cm(vec![])).is_err());
    }

    #[test]
    fn macro_averaging() {
        let r = metrics_with(&cm(vec![vec![5, 5], vec![0, 10]]), Averaging::Macro).unwrap();
        assert!((r.aggregate.precision - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert!((r.aggregate.recall - 0.75).abs() < 1e-15);
    }

    #[test]
    fn csv_export() {
        let r = metrics(
            &cm(vec![vec![5, 5], vec![0, 10]])
                .with_names(&["A".into(), "B".into()])
                .unwrap(),
        )
        .unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "class,accuracy,precision,recall,f1,support");
        assert!(lines[1].starts_with("A,0.75,1,0.5,"));
        assert!(lines[3].starts_with("weighted_avg,0.75,"));
        assert!(format!("{r}").contains("weighted avg"));
    }
}
