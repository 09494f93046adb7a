use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "flowclass",
    version,
    about = "Flow-statistics traffic classifier"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit on a 7:3 split, evaluate on the held-out part and save the model
    Train {
        #[command(flatten)]
        common: Common,
        /// Where to write the model file
        #[arg(long)]
        model: Option<PathBuf>,
        /// Directory for history.csv and report.csv
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify the rows of a CSV with a saved model
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Predictions CSV (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank the features by extra-trees importance
    Features {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// k-fold cross-validation
    Cv {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate every combination in a grid file and rank them
    Gridsearch {
        #[command(flatten)]
        common: Common,
        /// TOML file with one [[axis]] table per hyperparameter
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, value_enum, default_value_t = ProtocolArg::Holdout)]
        protocol: ProtocolArg,
        #[arg(long)]
        folds: Option<usize>,
        /// Ranked results CSV (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Where to write the winning configuration
        #[arg(long, default_value = "best.toml")]
        best: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Holdout,
    Cv,
}

/// Flags shared by the commands that read a labelled dataset. Each one overrides the config file.
#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Keep only these classes (comma separated)
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    /// dnn, knn or svm
    #[arg(long)]
    pub model_kind: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Train on the k most important features only
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
}
