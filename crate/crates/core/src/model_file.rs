//! Self-contained model files.
//!
//! The file is JSON. Every floating-point value is written in scientific
//! notation with 17 significant digits, which round-trips any `f64` exactly,
//! so a reloaded model predicts bit-identically to the one that was saved.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pipeline::{FittedModel, ModelConfig, ModelKind, Pipeline, PreprocessState};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub seed: u64,
    /// SHA-256 of the canonical JSON encoding of the model configuration.
    pub config_hash: String,
}

impl Fingerprint {
    pub fn of(config: &ModelConfig) -> Self {
        let canonical = serde_json::to_vec(config).expect("config serializes");
        Self {
            seed: config.seed(),
            config_hash: hex::encode(Sha256::digest(&canonical)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u64,
    pub kind: ModelKind,
    pub preprocess: PreprocessState,
    pub model: FittedModel,
    pub fingerprint: Fingerprint,
}

impl ModelFile {
    pub fn new(pipeline: Pipeline, config: &ModelConfig) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            kind: pipeline.model.kind(),
            preprocess: pipeline.preprocess,
            model: pipeline.model,
            fingerprint: Fingerprint::of(config),
        }
    }

    pub fn pipeline(&self) -> Pipeline {
        Pipeline {
            preprocess: self.preprocess.clone(),
            model: self.model.clone(),
        }
    }

    pub fn to_text(&self) -> Result<String> {
        let value = serde_json::to_value(self).map_err(|e| Error::Format {
            version: Some(self.format_version),
            message: e.to_string(),
        })?;
        let mut out = String::new();
        write_value(&mut out, &value, 0);
        out.push('\n');
        Ok(out)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Format {
            version: None,
            message: format!("not a model file: {e}"),
        })?;
        let version = value.get("format_version").and_then(Value::as_u64);
        match version {
            None => {
                return Err(Error::Format {
                    version: None,
                    message: "missing format_version".into(),
                })
            }
            Some(v) if v != FORMAT_VERSION => {
                return Err(Error::Format {
                    version,
                    message: format!(
                        "unsupported version; this build reads version {FORMAT_VERSION}"
                    ),
                })
            }
            Some(_) => {}
        }
        let file: ModelFile = serde_json::from_value(value).map_err(|e| Error::Format {
            version,
            message: e.to_string(),
        })?;
        if file.kind != file.model.kind() {
            return Err(Error::Format {
                version,
                message: "kind does not match the stored model".into(),
            });
        }
        if let FittedModel::Dnn(m) = &file.model {
            m.params.check_against(&m.spec).map_err(|e| Error::Format {
                version,
                message: e.to_string(),
            })?;
        }
        Ok(file)
    }

    /// Writes to a temporary sibling then renames over `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_text()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Replaces `path` with `bytes` via write-to-temp and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn is_scalar(v: &Value) -> bool {
    !matches!(v, Value::Array(_) | Value::Object(_))
}

fn write_value(out: &mut String, v: &Value, level: usize) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else {
                out.push_str(&format_f64(n.as_f64().expect("finite number")));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string encodes")),
        Value::Array(items) if items.iter().all(is_scalar) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item, level);
            }
            out.push(']');
        }
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                indent(out, level + 1);
                write_value(out, item, level + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            indent(out, level);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (i, (k, item)) in map.iter().enumerate() {
                indent(out, level + 1);
                out.push_str(&serde_json::to_string(k).expect("key encodes"));
                out.push_str(": ");
                write_value(out, item, level + 1);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            indent(out, level);
            out.push('}');
        }
    }
}
