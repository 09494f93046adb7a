//! Comparison classifiers consuming the same preprocessed features as the network.

pub mod knn;
pub mod svm;

pub use knn::{knn_fit, knn_predict, knn_predict_batch, KnnModel};
pub use svm::{decision_values, svm_fit, svm_predict, svm_predict_batch, SvmModel, SvmParams};
