//! Run configuration file and flag overrides.

use std::fs;
use std::path::{Path, PathBuf};

use flowclass_core::dataset::{FeatureSchema, DEFAULT_LABEL_COLUMN, MOORE_FEATURES};
use flowclass_core::eval::{Averaging, GridSpec};
use flowclass_core::pipeline::ModelConfig;
use flowclass_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::args::Common;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub seed: Option<u64>,
    pub train_fraction: f64,
    /// Allow-list; rows of other classes are dropped at load time.
    pub classes: Option<Vec<String>>,
    pub schema: SchemaConfig,
    pub cv: CvConfig,
    pub output: OutputConfig,
    pub model: ModelConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            seed: None,
            train_fraction: 0.7,
            classes: None,
            schema: SchemaConfig::default(),
            cv: CvConfig::default(),
            output: OutputConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

/// CSV column names for the twelve features, in model order, and the label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemaConfig {
    pub label: String,
    pub features: Vec<String>,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        Self {
            label: DEFAULT_LABEL_COLUMN.to_string(),
            features: MOORE_FEATURES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub stratified: bool,
    pub per_class_cap: Option<usize>,
    pub averaging: Averaging,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub model: PathBuf,
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            model: PathBuf::from("model.json"),
            dir: PathBuf::from("."),
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_text(path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// File values (or defaults) with every given flag applied on top.
    pub fn resolve(common: &Common) -> Result<Self> {
        let mut c = match &common.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        if let Some(d) = &common.data {
            c.data = Some(d.clone());
        }
        if let Some(s) = common.seed {
            c.seed = Some(s);
        }
        if let Some(classes) = &common.classes {
            c.classes = Some(classes.clone());
        }
        if let Some(kind) = &common.model_kind {
            c.model.kind = kind.parse()?;
        }
        if let Some(e) = common.epochs {
            c.model.training.epochs = e;
        }
        if let Some(b) = common.batch_size {
            c.model.training.batch_size = b;
        }
        if let Some(lr) = common.learning_rate {
            c.model.training.learning_rate = lr;
        }
        if let Some(k) = common.top_k {
            c.model.top_k = Some(k);
        }
        if let Some(f) = common.train_fraction {
            c.train_fraction = f;
        }
        if let Some(seed) = c.seed {
            c.model.set_seed(seed);
        }
        Ok(c)
    }

    pub fn data_path(&self) -> Result<&Path> {
        self.data.as_deref().ok_or_else(|| {
            Error::Config("no data file; pass --data or set data in the config file".into())
        })
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| {
            Error::Config("no seed; pass --seed or set seed in the config file".into())
        })
    }

    pub fn feature_schema(&self) -> Result<FeatureSchema> {
        FeatureSchema::new(self.schema.features.clone(), self.schema.label.clone())
    }
}

pub fn load_grid(path: &Path) -> Result<GridSpec> {
    let grid: GridSpec = toml::from_str(&read_text(path)?)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    grid.validate()?;
    Ok(grid)
}
