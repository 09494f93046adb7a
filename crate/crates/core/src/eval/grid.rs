//! Exhaustive hyperparameter grid evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kfold::{evaluate_protocol, Learner, Protocol};
use super::metrics::MetricSet;
use crate::dataset::{Dataset, LabelCodec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(default, rename = "axis")]
    pub axes: Vec<GridAxis>,
}

/// One point of the grid: `(axis name, value)` in axis order.
pub type Cell = Vec<(String, f64)>;

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::Config("grid has no axes".into()));
        }
        if let Some(a) = self.axes.iter().find(|a| a.values.is_empty()) {
            return Err(Error::Config(format!(
                "grid axis '{}' has no values",
                a.name
            )));
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    /// Cartesian product, last axis varying fastest.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        self.validate()?;
        let mut cells: Vec<Cell> = vec![Vec::new()];
        for axis in &self.axes {
            cells = cells
                .into_iter()
                .flat_map(|prefix| {
                    axis.values.iter().map(move |&v| {
                        let mut c = prefix.clone();
                        c.push((axis.name.clone(), v));
                        c
                    })
                })
                .collect();
        }
        Ok(cells)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    /// Position in grid order.
    pub index: usize,
    pub cell: Cell,
    pub score: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    /// Best first: accuracy, then F1, then grid order.
    pub ranked: Vec<GridEntry>,
}

impl GridResult {
    pub fn winner(&self) -> &GridEntry {
        &self.ranked[0]
    }
}

/// Scores every cell with `score` (cells may run in parallel) and ranks them.
pub fn rank_grid<F>(grid: &GridSpec, score: F) -> Result<GridResult>
where
    F: Fn(&Cell) -> Result<MetricSet> + Sync,
{
    let cells = grid.cells()?;
    let scores: Vec<Result<MetricSet>> = cells.par_iter().map(&score).collect();
    let mut ranked = Vec::with_capacity(cells.len());
    for (index, (cell, s)) in cells.into_iter().zip(scores).enumerate() {
        ranked.push(GridEntry {
            index,
            cell,
            score: s?,
        });
    }
    ranked.sort_by(|a, b| {
        b.score
            .accuracy
            .total_cmp(&a.score.accuracy)
            .then(b.score.f1.total_cmp(&a.score.f1))
            .then(a.index.cmp(&b.index))
    });
    Ok(GridResult { ranked })
}

/// Evaluates the learner built for each cell under `protocol`.
pub fn grid_search<L, B>(
    grid: &GridSpec,
    data: &Dataset,
    codec: &LabelCodec,
    protocol: Protocol,
    seed: u64,
    build: B,
) -> Result<GridResult>
where
    L: Learner,
    B: Fn(&Cell) -> Result<L> + Sync,
{
    rank_grid(grid, |cell| {
        let learner = build(cell)?;
        evaluate_protocol(&learner, data, codec, protocol, seed)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis(name: &str, values: &[f64]) -> GridAxis {
        GridAxis {
            name: name.into(),
            values: values.to_vec(),
        }
    }

    #[test]
    fn product_order() {
        let g = GridSpec {
            axes: vec![axis("a", &[1.0, 2.0]), axis("b", &[10.0, 20.0, 30.0])],
        };
        let cells = g.cells().unwrap();
        assert_eq!(cells.len(), 6);
        assert_eq!(g.size(), 6);
        assert_eq!(cells[1], vec![("a".into(), 1.0), ("b".into(), 20.0)]);
        assert_eq!(cells[3], vec![("a".into(), 2.0), ("b".into(), 10.0)]);
    }

    #[test]
    fn empty_axis_rejected() {
        let g = GridSpec {
            axes: vec![axis("a", &[1.0]), axis("b", &[])],
        };
        assert!(matches!(g.cells(), Err(Error::Config(_))));
        assert!(GridSpec::default().cells().is_err());
    }

    #[test]
    fn ranking_rules() {
        let g = GridSpec {
            axes: vec![axis("x", &[0.0, 1.0, 2.0, 3.0])],
        };
        let r = rank_grid(&g, |c| {
            let x = c[0].1;
            // cells 1 and 3 tie on accuracy; 3 has the better F1; 0 and 2 tie fully
            let (acc, f1) = match x as u32 {
                0 | 2 => (0.5, 0.5),
                1 => (0.9, 0.7),
                _ => (0.9, 0.8),
            };
            Ok(MetricSet {
                accuracy: acc,
                precision: 0.0,
                recall: 0.0,
                f1,
            })
        })
        .unwrap();
        let order: Vec<usize> = r.ranked.iter().map(|e| e.index).collect();
        assert_eq!(order, vec![3, 1, 0, 2]);
        assert_eq!(r.winner().index, 3);
    }

    #[test]
    fn parses_from_toml_shape() {
        let g: GridSpec =
            serde_json::from_str(r#"{"axis":[{"name":"learning_rate","values":[0.01,0.001]}]}"#)
                .unwrap();
        assert_eq!(g.size(), 2);
    }
}
