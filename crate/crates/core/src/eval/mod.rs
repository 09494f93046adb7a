//! Confusion matrices, per-class metrics, fold planning, cross-validation and grid search.

pub mod grid;
pub mod kfold;
pub mod metrics;

pub use grid::{grid_search, rank_grid, Cell, GridAxis, GridEntry, GridResult, GridSpec};
pub use kfold::{
    cross_validate, evaluate_predictions, evaluate_protocol, kfold_plan, stratified_kfold_plan,
    CvOptions, CvReport, FoldPlan, Learner, Protocol,
};
pub use metrics::{
    confusion, metrics, metrics_with, Averaging, ClassReport, ConfusionMatrix, EvalReport,
    MetricSet,
};
