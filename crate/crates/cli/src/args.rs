use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "imax-calib", version, about = "Post-hoc multi-class calibration with I-Max binning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a calibrator and write a bundle.
    Fit(FitArgs),
    /// Apply a bundle to scores.
    Apply(ApplyArgs),
    /// Evaluate calibrated probabilities.
    Eval(EvalArgs),
    /// Generate synthetic data.
    Synth(SynthArgs),
    /// Mutual information of binned logits against the KDE upper bound.
    MiReport(MiReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputKind {
    Logits,
    Probs,
}

impl From<InputKind> for imax_calib::ScoreKind {
    fn from(k: InputKind) -> Self {
        match k {
            InputKind::Logits => imax_calib::ScoreKind::RawLogits,
            InputKind::Probs => imax_calib::ScoreKind::Probabilities,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Bundle path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// eq_size, eq_mass, imax, temperature, platt or imax_with_scaler.
    #[arg(long, default_value = "imax")]
    pub method: String,
    #[arg(long, default_value_t = 15)]
    pub bins: usize,
    #[arg(long, default_value = "scw", value_parser = ["cw", "scw"])]
    pub strategy: String,
    #[arg(long, default_value_t = 1)]
    pub groups: usize,
    /// Representatives of I-Max bins from a scaler fitted on the same set.
    #[arg(long, default_value = "none", value_parser = ["none", "temperature", "platt"])]
    pub scaler: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Hold out this class-balanced fraction and fit on the rest.
    #[arg(long)]
    pub holdout_frac: Option<f64>,
    #[arg(long, value_enum, default_value = "logits")]
    pub input_kind: InputKind,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, value_enum)]
    pub input_kind: Option<InputKind>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the raw logits, for the raw-logit tie-break in `eval`.
    #[arg(long)]
    pub raw_sidecar: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Calibrated probabilities. Alternatively pass --scores and --bundle.
    #[arg(long, conflicts_with_all = ["scores", "bundle"])]
    pub calibrated: Option<PathBuf>,
    #[arg(long, requires = "bundle")]
    pub scores: Option<PathBuf>,
    #[arg(long, requires = "scores")]
    pub bundle: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub input_kind: Option<InputKind>,
    #[arg(long)]
    pub labels: PathBuf,
    /// Raw logits for the raw-logit tie-break.
    #[arg(long)]
    pub raw_scores: Option<PathBuf>,
    /// eq_size, eq_mass, kmeans, imax_eval or exact_grouping; repeatable.
    #[arg(long, value_delimiter = ',')]
    pub eval_scheme: Vec<String>,
    /// Repeatable.
    #[arg(long, value_delimiter = ',')]
    pub eval_bins: Vec<usize>,
    /// Comma list of prior, half, one-over-k, zero or a number in [0, 1).
    #[arg(long, value_delimiter = ',')]
    pub cw_threshold: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub top_k: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "class-index", value_parser = ["class-index", "raw-logit"])]
    pub tie_break: String,
    /// Evaluate only the holdout side of the split made by `fit`.
    #[arg(long)]
    pub holdout_frac: Option<f64>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: ReportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Symmetric,
    Fig2Imbalanced,
    Calibrated,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, conflicts_with = "multiclass")]
    pub preset: Option<Preset>,
    /// Mean separation for the symmetric preset.
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// Class prior for the calibrated preset.
    #[arg(long, default_value_t = 0.01)]
    pub prior: f64,
    /// Conditional standard deviation for the calibrated preset.
    #[arg(long, default_value_t = 2.0)]
    pub sd: f64,
    #[arg(long)]
    pub multiclass: bool,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub tgen: f64,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct MiReportArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_enum, default_value = "logits")]
    pub input_kind: InputKind,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,15,16")]
    pub bins: Vec<usize>,
    /// One-vs-rest class; default class 1 for K = 2, else all classes merged.
    #[arg(long)]
    pub class: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
