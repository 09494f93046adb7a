//! End-to-end fitting: normalizer, optional feature selection, then one of the
//! three classifiers. A fitted [`Pipeline`] replays the same preprocessing at
//! predict time.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{
    knn_fit, knn_predict_batch, svm_fit, svm_predict_batch, KnnModel, SvmModel, SvmParams,
};
use crate::dataset::{Dataset, FeatureSchema, LabelCodec, NormalizationParams, Samples};
use crate::error::{Error, Result};
use crate::eval::{Cell, Learner};
use crate::featsel::{
    feature_importances, fit_extra_trees, select_top_k, ExtraTreesParams, ImportanceReport,
};
use crate::matrix::Matrix;
use crate::nn::{self, NetworkModel, NetworkSpec, TrainingConfig, TrainingHistory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Dnn,
    Knn,
    Svm,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dnn" => Ok(ModelKind::Dnn),
            "knn" => Ok(ModelKind::Knn),
            "svm" => Ok(ModelKind::Svm),
            other => Err(Error::Config(format!(
                "unknown model kind '{other}' (expected dnn, knn or svm)"
            ))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Dnn => "dnn",
            ModelKind::Knn => "knn",
            ModelKind::Svm => "svm",
        })
    }
}

/// Everything that determines a fitted model besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub training: TrainingConfig,
    pub hidden_layers: Vec<usize>,
    pub batch_norm: bool,
    /// Train on the `top_k` highest-importance features only.
    pub top_k: Option<usize>,
    pub extra_trees: ExtraTreesParams,
    pub knn_k: usize,
    pub svm: SvmParams,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Dnn,
            training: TrainingConfig::default(),
            hidden_layers: vec![16; 7],
            batch_norm: true,
            top_k: None,
            extra_trees: ExtraTreesParams::default(),
            knn_k: 5,
            svm: SvmParams::default(),
        }
    }
}

fn as_count(name: &str, v: f64) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::Config(format!(
            "grid axis '{name}' needs positive integers, got {v}"
        )))
    }
}

impl ModelConfig {
    pub fn seed(&self) -> u64 {
        self.training.seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.training.seed = seed;
        self.extra_trees.seed = seed;
        self.svm.seed = seed;
    }

    /// Applies one named hyperparameter.
    pub fn set(&mut self, name: &str, v: f64) -> Result<()> {
        match name {
            "learning_rate" => self.training.learning_rate = v,
            "batch_size" => self.training.batch_size = as_count(name, v)?,
            "dropout_rate" => self.training.dropout_rate = v,
            "epochs" => self.training.epochs = as_count(name, v)?,
            "hidden_layers" => {
                let width = self.hidden_layers.first().copied().unwrap_or(16);
                self.hidden_layers = vec![width; as_count(name, v)?];
            }
            "hidden_width" => {
                let w = as_count(name, v)?;
                self.hidden_layers.iter_mut().for_each(|h| *h = w);
            }
            "knn_k" => self.knn_k = as_count(name, v)?,
            "svm_lambda" => self.svm.lambda = v,
            "svm_epochs" => self.svm.epochs = as_count(name, v)?,
            "svm_learning_rate" => self.svm.learning_rate = v,
            "top_k" => self.top_k = Some(as_count(name, v)?),
            other => return Err(Error::Config(format!("unknown hyperparameter '{other}'"))),
        }
        Ok(())
    }

    pub fn with_cell(&self, cell: &Cell) -> Result<Self> {
        let mut c = self.clone();
        for (name, v) in cell {
            c.set(name, *v)?;
        }
        Ok(c)
    }
}

/// Preprocessing replayed at predict time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessState {
    pub schema: FeatureSchema,
    pub codec: LabelCodec,
    pub normalizer: NormalizationParams,
    /// Schema column indices fed to the model, in model input order.
    pub selected: Vec<usize>,
}

impl PreprocessState {
    pub fn transform(&self, raw: &Matrix) -> Result<Matrix> {
        let scaled = self.normalizer.apply_matrix(raw)?;
        Ok(scaled.select_cols(&self.selected))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FittedModel {
    Dnn(NetworkModel),
    Knn(KnnModel),
    Svm(SvmModel),
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            FittedModel::Dnn(_) => ModelKind::Dnn,
            FittedModel::Knn(_) => ModelKind::Knn,
            FittedModel::Svm(_) => ModelKind::Svm,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub classes: Vec<usize>,
    /// Per-class probabilities; only the network produces them.
    pub probabilities: Option<Matrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub preprocess: PreprocessState,
    pub model: FittedModel,
}

impl Pipeline {
    /// Predicts from raw (unscaled) schema-ordered features.
    pub fn predict(&self, raw: &Matrix) -> Result<Prediction> {
        let x = self.preprocess.transform(raw)?;
        match &self.model {
            FittedModel::Dnn(m) => {
                let (classes, probs) = nn::predict(m, &x)?;
                Ok(Prediction {
                    classes,
                    probabilities: Some(probs),
                })
            }
            FittedModel::Knn(m) => Ok(Prediction {
                classes: knn_predict_batch(m, &x)?,
                probabilities: None,
            }),
            FittedModel::Svm(m) => Ok(Prediction {
                classes: svm_predict_batch(m, &x)?,
                probabilities: None,
            }),
        }
    }
}

/// Min-max scales on `train` and encodes labels.
pub fn preprocess(train: &Dataset, codec: &LabelCodec) -> Result<(NormalizationParams, Samples)> {
    let normalizer = NormalizationParams::fit(train)?;
    let samples = normalizer.apply(train)?.to_samples(codec)?;
    Ok((normalizer, samples))
}

/// Importance ranking of all schema features, computed on min-max scaled data.
pub fn rank_features(
    data: &Dataset,
    codec: &LabelCodec,
    params: &ExtraTreesParams,
) -> Result<ImportanceReport> {
    let (_, samples) = preprocess(data, codec)?;
    Ok(feature_importances(&fit_extra_trees(&samples, params)?))
}

pub fn fit_pipeline(
    train: &Dataset,
    codec: &LabelCodec,
    config: &ModelConfig,
) -> Result<(Pipeline, Option<TrainingHistory>)> {
    let (normalizer, mut samples) = preprocess(train, codec)?;
    let selected = match config.top_k {
        Some(k) => {
            let forest = fit_extra_trees(&samples, &config.extra_trees)?;
            select_top_k(&feature_importances(&forest), k)?
        }
        None => (0..samples.dim()).collect(),
    };
    samples.x = samples.x.select_cols(&selected);

    let mut history = None;
    let model = match config.kind {
        ModelKind::Dnn => {
            let spec = NetworkSpec {
                input_dim: selected.len(),
                hidden_layers: config.hidden_layers.clone(),
                n_classes: codec.len(),
                dropout_rate: config.training.dropout_rate,
                batch_norm: config.batch_norm,
            };
            let (model, h) = nn::train(&samples, &spec, &config.training)?;
            history = Some(h);
            FittedModel::Dnn(model)
        }
        ModelKind::Knn => FittedModel::Knn(knn_fit(&samples, config.knn_k)?),
        ModelKind::Svm => FittedModel::Svm(svm_fit(&samples, &config.svm)?),
    };
    let preprocess = PreprocessState {
        schema: train.schema().clone(),
        codec: codec.clone(),
        normalizer,
        selected,
    };
    Ok((Pipeline { preprocess, model }, history))
}

impl Learner for ModelConfig {
    fn fit_predict(
        &self,
        train: &Dataset,
        test: &Dataset,
        codec: &LabelCodec,
    ) -> Result<Vec<usize>> {
        let (pipeline, _) = fit_pipeline(train, codec, self)?;
        Ok(pipeline.predict(test.features())?.classes)
    }
}
