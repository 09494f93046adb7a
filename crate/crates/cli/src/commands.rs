use std::fmt;
use std::io::{self, Write};
use std::path::Path;

use flowclass_core::dataset::{load_csv, load_feature_table, split_indices, Dataset, LabelCodec};
use flowclass_core::eval::{
    cross_validate, evaluate_predictions, grid_search, CvOptions, GridResult, Protocol,
};
use flowclass_core::model_file::{write_atomic, ModelFile};
use flowclass_core::pipeline::{fit_pipeline, rank_features};
use flowclass_core::{Error, ErrorKind};

use crate::args::{Cli, Command, Common, ProtocolArg};
use crate::config::{load_grid, RunConfig};

/// An error tagged with the pipeline stage that raised it.
#[derive(Debug)]
pub struct Failure {
    stage: &'static str,
    error: Error,
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self.error.kind() {
            ErrorKind::Config => 1,
            ErrorKind::Data => 2,
            ErrorKind::Divergence => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.error)
    }
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, Failure>;
}

impl<T> Stage<T> for flowclass_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|error| Failure { stage, error })
    }
}

type Outcome = Result<(), Failure>;

pub fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Train { common, model, out } => train(&common, model.as_deref(), out.as_deref()),
        Command::Predict { model, data, out } => predict(&model, &data, out.as_deref()),
        Command::Features { common, out } => features(&common, out.as_deref()),
        Command::Cv { common, folds, out } => cv(&common, folds, out.as_deref()),
        Command::Gridsearch {
            common,
            grid,
            protocol,
            folds,
            out,
            best,
        } => gridsearch(&common, &grid, protocol, folds, out.as_deref(), &best),
    }
}

/// Writes `bytes` atomically to `path`, or to stdout without one.
fn emit(path: Option<&Path>, bytes: &[u8]) -> flowclass_core::Result<()> {
    match path {
        Some(p) => write_atomic(p, bytes),
        None => io::stdout()
            .write_all(bytes)
            .map_err(|e| Error::Config(format!("cannot write to stdout: {e}"))),
    }
}

fn csv_bytes(
    write: impl FnOnce(&mut Vec<u8>) -> flowclass_core::Result<()>,
) -> flowclass_core::Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

struct Loaded {
    config: RunConfig,
    data: Dataset,
    codec: LabelCodec,
}

fn load(common: &Common) -> Result<Loaded, Failure> {
    let config = RunConfig::resolve(common).stage("read configuration")?;
    config
        .model
        .training
        .validate()
        .stage("read configuration")?;
    let schema = config.feature_schema().stage("read configuration")?;
    let path = config.data_path().stage("read configuration")?;
    let mut data = load_csv(path, &schema).stage("load data")?;
    if let Some(allow) = &config.classes {
        let (kept, dropped) = data.retain_classes(allow);
        if dropped > 0 {
            eprintln!("dropped {dropped} rows outside the class allow-list");
        }
        data = kept;
    }
    if data.is_empty() {
        return Err(Error::EmptyInput(
            "no rows left after the class filter".into(),
        ))
        .stage("load data");
    }
    let codec = LabelCodec::fit(data.labels()).stage("encode labels")?;
    Ok(Loaded {
        config,
        data,
        codec,
    })
}

fn train(common: &Common, model_path: Option<&Path>, out_dir: Option<&Path>) -> Outcome {
    let Loaded {
        config,
        data,
        codec,
    } = load(common)?;
    let seed = config.require_seed().stage("read configuration")?;
    let (train_idx, test_idx) =
        split_indices(data.len(), config.train_fraction, seed).stage("split")?;
    let (train, test) = (data.subset(&train_idx), data.subset(&test_idx));

    let (pipeline, history) = fit_pipeline(&train, &codec, &config.model).stage("train")?;
    let prediction = pipeline.predict(test.features()).stage("evaluate")?;
    let truth = test.encode_labels(&codec).stage("evaluate")?;
    let report = evaluate_predictions(&truth, &prediction.classes, &codec, config.cv.averaging)
        .stage("evaluate")?;

    let model_path = model_path.unwrap_or(&config.output.model);
    ModelFile::new(pipeline, &config.model)
        .save(model_path)
        .stage("write model")?;
    let dir = out_dir.unwrap_or(&config.output.dir);
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))
        .stage("write reports")?;
    if let Some(h) = history {
        let bytes = csv_bytes(|b| h.write_csv(b)).stage("write reports")?;
        write_atomic(&dir.join("history.csv"), &bytes).stage("write reports")?;
    }
    let bytes = csv_bytes(|b| report.write_csv(b)).stage("write reports")?;
    write_atomic(&dir.join("report.csv"), &bytes).stage("write reports")?;

    println!("{report}");
    println!(
        "trained {} on {} rows, tested on {}; model written to {}",
        config.model.kind,
        train.len(),
        test.len(),
        model_path.display()
    );
    Ok(())
}

fn predict(model_path: &Path, data: &Path, out: Option<&Path>) -> Outcome {
    let file = ModelFile::load(model_path).stage("load model")?;
    let pipeline = file.pipeline();
    let x = load_feature_table(data, &pipeline.preprocess.schema).stage("load data")?;
    let prediction = pipeline.predict(&x).stage("predict")?;
    let codec = &pipeline.preprocess.codec;

    let bytes = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        let mut header = vec!["row".to_string(), "class".to_string()];
        if prediction.probabilities.is_some() {
            header.extend(codec.classes().iter().map(|c| format!("p_{c}")));
        }
        w.write_record(&header)?;
        for (i, &c) in prediction.classes.iter().enumerate() {
            let mut record = vec![i.to_string(), codec.decode(c)?.to_string()];
            if let Some(p) = &prediction.probabilities {
                record.extend(p.row(i).iter().map(|v| v.to_string()));
            }
            w.write_record(&record)?;
        }
        w.flush()
            .map_err(|e| Error::Config(format!("cannot buffer output: {e}")))
    })
    .stage("write predictions")?;
    emit(out, &bytes).stage("write predictions")
}

fn features(common: &Common, out: Option<&Path>) -> Outcome {
    let Loaded {
        config,
        data,
        codec,
    } = load(common)?;
    config.require_seed().stage("read configuration")?;
    let report = rank_features(&data, &codec, &config.model.extra_trees).stage("rank features")?;
    let names = data.schema().names();
    let bytes = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["feature_name", "score", "rank"])?;
        for (rank, &j) in report.ranking.iter().enumerate() {
            w.write_record([
                names[j].clone(),
                report.scores[j].to_string(),
                (rank + 1).to_string(),
            ])?;
        }
        w.flush()
            .map_err(|e| Error::Config(format!("cannot buffer output: {e}")))
    })
    .stage("write importances")?;
    emit(out, &bytes).stage("write importances")
}

fn cv(common: &Common, folds: Option<usize>, out: Option<&Path>) -> Outcome {
    let Loaded {
        config,
        data,
        codec,
    } = load(common)?;
    let seed = config.require_seed().stage("read configuration")?;
    let options = CvOptions {
        k: folds.unwrap_or(config.model.training.k_folds),
        seed,
        stratified: config.cv.stratified,
        per_class_cap: config.cv.per_class_cap,
        averaging: config.cv.averaging,
    };
    let report = cross_validate(&config.model, &data, &codec, &options).stage("cross-validate")?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let bytes = csv_bytes(|b| report.write_csv(b)).stage("write report")?;
    emit(out, &bytes).stage("write report")
}

fn grid_csv(result: &GridResult) -> flowclass_core::Result<Vec<u8>> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        let mut header = vec!["rank".to_string(), "index".to_string()];
        header.extend(result.winner().cell.iter().map(|(name, _)| name.clone()));
        header.extend(["accuracy", "precision", "recall", "f1"].map(String::from));
        w.write_record(&header)?;
        for (rank, e) in result.ranked.iter().enumerate() {
            let mut record = vec![(rank + 1).to_string(), e.index.to_string()];
            record.extend(e.cell.iter().map(|(_, v)| v.to_string()));
            let s = e.score;
            record.extend([s.accuracy, s.precision, s.recall, s.f1].map(|v| v.to_string()));
            w.write_record(&record)?;
        }
        w.flush()
            .map_err(|e| Error::Config(format!("cannot buffer output: {e}")))
    })
}

fn gridsearch(
    common: &Common,
    grid_path: &Path,
    protocol: ProtocolArg,
    folds: Option<usize>,
    out: Option<&Path>,
    best: &Path,
) -> Outcome {
    let grid = load_grid(grid_path).stage("read grid")?;
    let Loaded {
        config,
        data,
        codec,
    } = load(common)?;
    let seed = config.require_seed().stage("read configuration")?;
    // reject unknown axis names before spending any time training
    for cell in grid.cells().stage("read grid")? {
        config.model.with_cell(&cell).stage("read grid")?;
    }
    let protocol = match protocol {
        ProtocolArg::Holdout => Protocol::Holdout {
            train_fraction: config.train_fraction,
        },
        ProtocolArg::Cv => Protocol::Cv {
            k: folds.unwrap_or(config.model.training.k_folds),
        },
    };
    let result = grid_search(&grid, &data, &codec, protocol, seed, |cell| {
        config.model.with_cell(cell)
    })
    .stage("grid search")?;

    let winner = result.winner();
    let mut best_config = config.clone();
    best_config.model = config.model.with_cell(&winner.cell).stage("grid search")?;
    let text = best_config.to_toml().stage("write best configuration")?;
    write_atomic(best, text.as_bytes()).stage("write best configuration")?;
    emit(out, &grid_csv(&result).stage("write results")?).stage("write results")?;
    eprintln!(
        "best of {} configurations: accuracy {:.4} ({})",
        result.ranked.len(),
        winner.score.accuracy,
        winner
            .cell
            .iter()
            .map(|(n, v)| format!("{n}={v}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(())
}
