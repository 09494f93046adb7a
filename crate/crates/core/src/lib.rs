//! Flow-statistics internet traffic classification.
//!
//! The pipeline: load precomputed per-flow discriminators from CSV, encode
//! class labels, min-max scale the features, optionally rank features with an
//! extremely randomized trees ensemble, then train a deep feedforward network
//! with a softmax output (or a KNN / linear SVM baseline) and evaluate it with
//! holdout or k-fold protocols.

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod featsel;
pub mod matrix;
pub mod model_file;
pub mod nn;
pub mod pipeline;
pub mod rng;

pub use dataset::{Dataset, FeatureSchema, LabelCodec, NormalizationParams, Samples};
pub use error::{Error, ErrorKind, Result};
pub use matrix::Matrix;
