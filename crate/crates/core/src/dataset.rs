//! Flow-record tables: CSV loading, label coding, min-max scaling and holdout splits.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

/// Number of flow discriminators every schema carries.
pub const FEATURE_COUNT: usize = 12;

/// Default column names, in f1..f12 order.
pub const MOORE_FEATURES: [&str; FEATURE_COUNT] = [
    "server_port",
    "client_port",
    "actual_data_packets_c2s",
    "pushed_data_packets_c2s",
    "pushed_data_packets_s2c",
    "min_segment_size_c2s",
    "avg_segment_size_c2s",
    "initial_window_bytes_c2s",
    "initial_window_bytes_s2c",
    "rtt_samples_c2s",
    "median_data_packets_c2s",
    "variance_bytes_packet_s2c",
];

pub const DEFAULT_LABEL_COLUMN: &str = "class";

/// The seven application classes traffic is grouped into by default.
pub const DEFAULT_CLASSES: [&str; 7] = [
    "BULK",
    "CHAT",
    "DATABASE",
    "INTERACTIVE",
    "MAIL",
    "P2P",
    "WWW",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema")]
pub struct FeatureSchema {
    names: Vec<String>,
    label_column: String,
}

#[derive(Deserialize)]
struct RawSchema {
    names: Vec<String>,
    label_column: String,
}

impl TryFrom<RawSchema> for FeatureSchema {
    type Error = Error;

    fn try_from(raw: RawSchema) -> Result<Self> {
        FeatureSchema::new(raw.names, raw.label_column)
    }
}

impl FeatureSchema {
    pub fn new(names: Vec<String>, label_column: impl Into<String>) -> Result<Self> {
        let label_column = label_column.into();
        if names.len() != FEATURE_COUNT {
            return Err(Error::Schema(format!(
                "expected {FEATURE_COUNT} feature names, got {}",
                names.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for name in &names {
            if name.is_empty() {
                return Err(Error::Schema("empty feature name".into()));
            }
            if *name == label_column {
                return Err(Error::Schema(format!(
                    "feature '{name}' is also the label column"
                )));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name '{name}'")));
            }
        }
        Ok(Self {
            names,
            label_column,
        })
    }

    pub fn moore() -> Self {
        Self {
            names: MOORE_FEATURES.iter().map(|s| s.to_string()).collect(),
            label_column: DEFAULT_LABEL_COLUMN.to_string(),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn label_column(&self) -> &str {
        &self.label_column
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

impl Default for FeatureSchema {
    fn default() -> Self {
        Self::moore()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    pub features: Vec<f64>,
    pub label: String,
}

/// Bidirectional class name <-> index mapping. Classes are kept in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelCodec {
    classes: Vec<String>,
    index: HashMap<String, usize>,
}

impl TryFrom<Vec<String>> for LabelCodec {
    type Error = Error;

    fn try_from(classes: Vec<String>) -> Result<Self> {
        let codec = LabelCodec::fit(&classes)?;
        if codec.classes != classes {
            return Err(Error::Schema(
                "stored class list is not sorted and distinct".into(),
            ));
        }
        Ok(codec)
    }
}

impl From<LabelCodec> for Vec<String> {
    fn from(codec: LabelCodec) -> Self {
        codec.classes
    }
}

impl LabelCodec {
    pub fn fit<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyInput("no labels to encode".into()));
        }
        let classes: Vec<String> = labels
            .iter()
            .map(|s| s.as_ref())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(str::to_string)
            .collect();
        let index = classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        Ok(Self { classes, index })
    }

    pub fn encode(&self, class: &str) -> Result<usize> {
        self.index
            .get(class)
            .copied()
            .ok_or_else(|| Error::Schema(format!("unknown class '{class}'")))
    }

    pub fn decode(&self, index: usize) -> Result<&str> {
        self.classes
            .get(index)
            .map(String::as_str)
            .ok_or(Error::Bounds {
                index,
                len: self.classes.len(),
            })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

pub fn one_hot(index: usize, n: usize) -> Result<Vec<f64>> {
    if index >= n {
        return Err(Error::Bounds { index, len: n });
    }
    let mut v = vec![0.0; n];
    v[index] = 1.0;
    Ok(v)
}

/// Per-feature extremes observed on a fitting set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormalizationParams {
    pub fn fit(data: &Dataset) -> Result<Self> {
        Self::fit_matrix(&data.features)
    }

    pub fn fit_matrix(x: &Matrix) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::EmptyInput(
                "cannot fit normalizer on zero rows".into(),
            ));
        }
        let mut min = x.row(0).to_vec();
        let mut max = min.clone();
        for row in x.iter_rows().skip(1) {
            for ((lo, hi), &v) in min.iter_mut().zip(max.iter_mut()).zip(row) {
                *lo = lo.min(v);
                *hi = hi.max(v);
            }
        }
        Ok(Self { min, max })
    }

    pub fn width(&self) -> usize {
        self.min.len()
    }

    /// Scales one value of feature `j`. Constant features map to 0 and
    /// out-of-range values are clipped to [0, 1].
    #[inline]
    pub fn scale(&self, j: usize, x: f64) -> f64 {
        let (lo, hi) = (self.min[j], self.max[j]);
        if hi <= lo {
            return 0.0;
        }
        ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
    }

    pub fn apply_row(&self, row: &mut [f64]) -> Result<()> {
        if row.len() != self.width() {
            return Err(Error::Schema(format!(
                "row has {} features, normalizer expects {}",
                row.len(),
                self.width()
            )));
        }
        for (j, v) in row.iter_mut().enumerate() {
            *v = self.scale(j, *v);
        }
        Ok(())
    }

    pub fn apply_matrix(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.width() {
            return Err(Error::Schema(format!(
                "table has {} features, normalizer expects {}",
                x.cols(),
                self.width()
            )));
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            self.apply_row(out.row_mut(i))?;
        }
        Ok(out)
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        Ok(Dataset {
            schema: data.schema.clone(),
            features: self.apply_matrix(&data.features)?,
            labels: data.labels.clone(),
            provenance: Provenance::Normalized,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Raw,
    Normalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: FeatureSchema,
    features: Matrix,
    labels: Vec<String>,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, features: Matrix, labels: Vec<String>) -> Result<Self> {
        if features.cols() != schema.len() && features.rows() > 0 {
            return Err(Error::Schema(format!(
                "feature table has {} columns, schema has {}",
                features.cols(),
                schema.len()
            )));
        }
        if features.rows() != labels.len() {
            return Err(Error::Contract(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(pos) = features.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::Contract(format!(
                "non-finite feature value in row {}",
                pos / schema.len()
            )));
        }
        let features = if features.rows() == 0 {
            Matrix::zeros(0, schema.len())
        } else {
            features
        };
        Ok(Self {
            schema,
            features,
            labels,
            provenance: Provenance::Raw,
        })
    }

    pub fn from_records(schema: FeatureSchema, records: Vec<FlowRecord>) -> Result<Self> {
        let mut labels = Vec::with_capacity(records.len());
        let mut rows = Vec::with_capacity(records.len());
        for r in records {
            if r.features.len() != schema.len() {
                return Err(Error::Schema(format!(
                    "record has {} features, schema has {}",
                    r.features.len(),
                    schema.len()
                )));
            }
            rows.push(r.features);
            labels.push(r.label);
        }
        Self::new(schema, Matrix::from_rows(&rows)?, labels)
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn record(&self, i: usize) -> FlowRecord {
        FlowRecord {
            features: self.features.row(i).to_vec(),
            label: self.labels[i].clone(),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            schema: self.schema.clone(),
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i].clone()).collect(),
            provenance: self.provenance,
        }
    }

    /// Keeps rows whose class is in `allow`, returning the filtered set and the drop count.
    pub fn retain_classes<S: AsRef<str>>(&self, allow: &[S]) -> (Self, usize) {
        let allow: BTreeSet<&str> = allow.iter().map(|s| s.as_ref()).collect();
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| allow.contains(self.labels[i].as_str()))
            .collect();
        let dropped = self.len() - keep.len();
        (self.subset(&keep), dropped)
    }

    pub fn encode_labels(&self, codec: &LabelCodec) -> Result<Vec<usize>> {
        self.labels.iter().map(|l| codec.encode(l)).collect()
    }

    pub fn to_samples(&self, codec: &LabelCodec) -> Result<Samples> {
        Ok(Samples {
            x: self.features.clone(),
            y: self.encode_labels(codec)?,
            n_classes: codec.len(),
        })
    }
}

/// Model-ready view: feature matrix plus encoded labels in `0..n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub x: Matrix,
    pub y: Vec<usize>,
    pub n_classes: usize,
}

impl Samples {
    pub fn new(x: Matrix, y: Vec<usize>, n_classes: usize) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::Contract(format!(
                "{} feature rows but {} labels",
                x.rows(),
                y.len()
            )));
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
            return Err(Error::Bounds {
                index: bad,
                len: n_classes,
            });
        }
        Ok(Self { x, y, n_classes })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &c in &self.y {
            counts[c] += 1;
        }
        counts
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

/// Reads a labelled table. Header names are matched against the schema; extra columns are ignored.
pub fn read_csv<R: Read>(reader: R, schema: &FeatureSchema) -> Result<Dataset> {
    let table = read_table(reader, schema, true)?;
    Dataset::new(schema.clone(), table.features, table.labels)
}

/// Reads the schema's feature columns only (no label column required), as used at predict time.
pub fn load_feature_table(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Matrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(read_table(file, schema, false)?.features)
}

struct Table {
    features: Matrix,
    labels: Vec<String>,
}

fn read_table<R: Read>(reader: R, schema: &FeatureSchema, with_label: bool) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::EmptyInput("file has no header row".into()));
    }
    let position: HashMap<&str, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim(), i))
        .collect();

    let mut wanted: Vec<&str> = schema.names().iter().map(String::as_str).collect();
    if with_label {
        wanted.push(schema.label_column());
    }
    let missing: Vec<&str> = wanted
        .iter()
        .copied()
        .filter(|w| !position.contains_key(w))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Schema(format!(
            "missing column(s): {}",
            missing.join(", ")
        )));
    }
    let columns: Vec<usize> = schema
        .names()
        .iter()
        .map(|n| position[n.as_str()])
        .collect();
    let label_col = with_label.then(|| position[schema.label_column()]);

    let mut data = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        for (&col, name) in columns.iter().zip(schema.names()) {
            let cell = record.get(col).unwrap_or("").trim();
            let value = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    row: line,
                    column: name.clone(),
                    value: cell.to_string(),
                })?;
            data.push(value);
        }
        if let Some(col) = label_col {
            let label = record.get(col).unwrap_or("").trim();
            if label.is_empty() {
                return Err(Error::Parse {
                    row: line,
                    column: schema.label_column().to_string(),
                    value: String::new(),
                });
            }
            labels.push(label.to_string());
        }
    }
    let rows = data.len() / schema.len();
    if rows == 0 {
        return Err(Error::EmptyInput("file contains no data rows".into()));
    }
    Ok(Table {
        features: Matrix::from_vec(rows, schema.len(), data)?,
        labels,
    })
}

/// Seeded shuffle of `0..n` split at `floor(n * train_fraction)`.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let n_train = (n as f64 * train_fraction).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InsufficientData {
            needed: if n_train == 0 {
                (1.0 / train_fraction).ceil() as usize
            } else {
                (1.0 / (1.0 - train_fraction)).ceil() as usize
            },
            got: n,
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, rng::SPLIT));
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

pub fn train_test_split(
    data: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(data.len(), train_fraction, seed)?;
    Ok((data.subset(&train), data.subset(&test)))
}
