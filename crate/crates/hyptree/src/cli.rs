//! Command line: `train`, `predict`, `evaluate`, `cv`, `grid-search` and `calibrate`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hyptree_core::booster::IterationRecord;
use hyptree_core::calibrate::{self, CorrelationRow, SymmetryResult, Type1Row, Type1Setup};
use hyptree_core::data::DEFAULT_MAX_BINS;
use hyptree_core::evaluate::{CvResult, GridResult, Metric, MetricReport, ParamGrid, SearchSpace};
use hyptree_core::nulltest::DrawBudget;
use hyptree_core::{
    fit_detailed, kfold_indices, predict, BoosterConfig, LossKind, NullSplitRule, Penalties, PruneReport, Regularizer,
    TestConfig,
};
use serde::{Deserialize, Serialize};

use crate::ingest::{self, IngestSummary, LoadOptions, DEFAULT_MAX_LEVELS};
use crate::model_file::{self, ModelFile};
use crate::parallel;
use crate::report::{self, num, Report};

#[derive(Debug, Parser)]
#[command(name = "hyptree", version, about = "Gradient boosted trees pruned by a permutation null-gain test")]
pub struct Cli {
    /// Progress messages on stderr (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write it as JSON.
    Train(TrainArgs),
    /// Write predictions for every usable row of a CSV.
    Predict(PredictArgs),
    /// Score a saved model on a labelled CSV.
    Evaluate(EvaluateArgs),
    /// k-fold cross-validation of one configuration.
    Cv(CvArgs),
    /// Exhaustive k-fold grid search over a hyperparameter grid.
    GridSearch(GridArgs),
    /// Monte Carlo calibration of the null-gain test.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossArg {
    #[value(name = "squared_error", alias = "squared-error")]
    SquaredError,
    Logistic,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::SquaredError => LossKind::SquaredError,
            LossArg::Logistic => LossKind::Logistic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    HypothesisTest,
    Penalties,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NullSplitArg {
    Best,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetArg {
    MatchAlpha,
    KDraws,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricArg {
    Mae,
    #[value(name = "roc_auc", alias = "roc-auc", alias = "auc")]
    RocAuc,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Mae => Metric::Mae,
            MetricArg::RocAuc => Metric::RocAuc,
        }
    }
}

/// Input CSV selection.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Target column name.
    #[arg(long)]
    pub target: Option<String>,
    /// Columns to ignore (comma separated or repeated).
    #[arg(long, value_delimiter = ',')]
    pub drop: Vec<String>,
    /// Text columns with more distinct values are dropped.
    #[arg(long)]
    pub max_levels: Option<usize>,
}

/// Booster settings; each flag overrides the same key in `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct BoosterArgs {
    /// JSON file with defaults for any of these flags (snake_case keys).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    /// Regularizer; penalty flags require `penalties`.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Test level α = 2^-k.
    #[arg(long)]
    pub test_k: Option<u32>,
    /// Fraction of R_Y left unpermuted.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, value_enum)]
    pub null_split: Option<NullSplitArg>,
    #[arg(long, value_enum)]
    pub draw_budget: Option<BudgetArg>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Upper bound on the number of trees.
    #[arg(long)]
    pub n_estimators: Option<usize>,
    #[arg(long)]
    pub min_child_rows: Option<usize>,
    #[arg(long)]
    pub max_bins: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub alpha_l1: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub booster: BoosterArgs,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for report.json / report.csv (training log and ingestion summary).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Also write prune_report.json with every null-test verdict.
    #[arg(long, requires = "out_dir")]
    pub emit_prune_report: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// CSV of `row,prediction`; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Defaults to the target the model was trained on.
    #[arg(long)]
    pub target: Option<String>,
    /// Defaults to mae for squared error and roc_auc for logistic models.
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub booster: BoosterArgs,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    /// Parallel fits.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub booster: BoosterArgs,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub lr_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub depth_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub k_grid: Vec<u32>,
    #[arg(long, value_delimiter = ',')]
    pub rho_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub gamma_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub n_estimators_grid: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    /// Pass rate of noise splits against 2^-k.
    Type1,
    /// Correlation between R_Y and the target against rho.
    Correlation,
    /// One null draw against another.
    Symmetry,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[arg(long, value_enum)]
    pub mode: CalibrationMode,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    pub k: Vec<u32>,
    #[arg(long, default_value_t = 2000)]
    pub trials: usize,
    /// Rows per synthetic dataset (type1, symmetry).
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    /// Values of rho for the correlation mode.
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
    pub rhos: Vec<f64>,
    /// Sample size for the correlation mode.
    #[arg(long, default_value_t = 10_000)]
    pub c: usize,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, value_enum, default_value = "best")]
    pub null_split: NullSplitArg,
    #[arg(long, value_enum, default_value = "match-alpha")]
    pub draw_budget: BudgetArg,
    #[arg(long, default_value_t = DEFAULT_MAX_BINS)]
    pub max_bins: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Keys accepted in a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub target: Option<String>,
    pub drop: Option<Vec<String>>,
    pub max_levels: Option<usize>,
    pub loss: Option<LossArg>,
    pub mode: Option<ModeArg>,
    pub test_k: Option<u32>,
    pub rho: Option<f64>,
    pub null_split: Option<NullSplitArg>,
    pub draw_budget: Option<BudgetArg>,
    pub lr: Option<f64>,
    pub max_depth: Option<usize>,
    pub n_estimators: Option<usize>,
    pub min_child_rows: Option<usize>,
    pub max_bins: Option<usize>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub alpha_l1: Option<f64>,
    pub seed: Option<u64>,
    pub folds: Option<usize>,
    pub metric: Option<MetricArg>,
    pub jobs: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Flags merged over an optional config file.
struct Resolved {
    file: FileConfig,
}

impl Resolved {
    fn new(booster: &BoosterArgs) -> anyhow::Result<Self> {
        let file = match &booster.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        Ok(Resolved { file })
    }

    fn load_options(&self, data: &DataArgs) -> anyhow::Result<(PathBuf, LoadOptions)> {
        let path = data.data.clone().or_else(|| self.file.data.clone()).context("--data is required")?;
        let target = data.target.clone().or_else(|| self.file.target.clone()).context("--target is required")?;
        let drop = if data.drop.is_empty() { self.file.drop.clone().unwrap_or_default() } else { data.drop.clone() };
        let max_levels = data.max_levels.or(self.file.max_levels).unwrap_or(DEFAULT_MAX_LEVELS);
        Ok((path, LoadOptions { target, drop, max_levels }))
    }

    fn booster(&self, b: &BoosterArgs) -> anyhow::Result<BoosterConfig> {
        let f = &self.file;
        let loss = b.loss.or(f.loss).context("--loss is required (squared_error or logistic)")?;
        let mode = b.mode.or(f.mode).unwrap_or(ModeArg::HypothesisTest);
        let defaults = BoosterConfig::default();
        let seed = b.seed.or(f.seed).unwrap_or(0);
        let max_bins = b.max_bins.or(f.max_bins).unwrap_or(defaults.max_bins);
        let gamma = b.gamma.or(f.gamma);
        let lambda = b.lambda.or(f.lambda);
        let alpha_l1 = b.alpha_l1.or(f.alpha_l1);
        let test_k = b.test_k.or(f.test_k);
        let rho = b.rho.or(f.rho);
        let null_split = b.null_split.or(f.null_split);
        let draw_budget = b.draw_budget.or(f.draw_budget);
        let regularizer = match mode {
            ModeArg::HypothesisTest => {
                if gamma.is_some() || lambda.is_some() || alpha_l1.is_some() {
                    bail!("--gamma/--lambda/--alpha-l1 apply to --mode penalties only");
                }
                let base = TestConfig::default();
                Regularizer::HypothesisTest(TestConfig {
                    k_draws: test_k.unwrap_or(base.k_draws),
                    rho: rho.unwrap_or(base.rho),
                    seed,
                    null_split: match null_split {
                        Some(NullSplitArg::Random) => NullSplitRule::RandomThreshold,
                        Some(NullSplitArg::Best) | None => NullSplitRule::BestThreshold,
                    },
                    budget: match draw_budget {
                        Some(BudgetArg::KDraws) => DrawBudget::KDraws,
                        Some(BudgetArg::MatchAlpha) | None => DrawBudget::MatchAlpha,
                    },
                    max_bins,
                    ..base
                })
            }
            ModeArg::Penalties => {
                if test_k.is_some() || rho.is_some() || null_split.is_some() || draw_budget.is_some() {
                    bail!("--test-k/--rho/--null-split/--draw-budget apply to --mode hypothesis-test only");
                }
                Regularizer::Penalties(Penalties {
                    lambda: lambda.unwrap_or(0.0),
                    alpha_l1: alpha_l1.unwrap_or(0.0),
                    gamma: gamma.unwrap_or(0.0),
                })
            }
        };
        let config = BoosterConfig {
            loss: loss.into(),
            learning_rate: b.lr.or(f.lr).unwrap_or(defaults.learning_rate),
            max_depth: b.max_depth.or(f.max_depth).unwrap_or(defaults.max_depth),
            n_estimators_cap: b.n_estimators.or(f.n_estimators).unwrap_or(defaults.n_estimators_cap),
            regularizer,
            min_child_rows: b.min_child_rows.or(f.min_child_rows).unwrap_or(defaults.min_child_rows),
            max_bins,
            seed,
        };
        config.validate()?;
        Ok(config)
    }

    fn folds(&self, flag: Option<usize>) -> usize {
        flag.or(self.file.folds).unwrap_or(5)
    }

    fn jobs(&self, flag: Option<usize>) -> usize {
        flag.or(self.file.jobs).unwrap_or(1)
    }

    fn metric(&self, flag: Option<MetricArg>, loss: LossKind) -> Metric {
        flag.or(self.file.metric).map(Metric::from).unwrap_or_else(|| default_metric(loss))
    }
}

fn default_metric(loss: LossKind) -> Metric {
    match loss {
        LossKind::SquaredError => Metric::Mae,
        LossKind::Logistic => Metric::RocAuc,
    }
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

#[derive(Debug, Serialize)]
pub struct TrainReport {
    pub config: BoosterConfig,
    pub ingest: IngestSummary,
    pub trees: usize,
    pub training_log: Vec<IterationRecord>,
}

impl Report for TrainReport {
    fn csv_header(&self) -> Vec<String> {
        ["iteration", "train_loss", "tree_added", "splits", "tests_performed", "splits_pruned", "splits_kept"]
            .map(String::from)
            .to_vec()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.training_log
            .iter()
            .map(|r| {
                vec![
                    r.iteration.to_string(),
                    num(r.train_loss),
                    r.tree_added.to_string(),
                    r.splits.to_string(),
                    r.tests_performed.to_string(),
                    r.splits_pruned.to_string(),
                    r.splits_kept.to_string(),
                ]
            })
            .collect()
    }

    // a zero-tree model is still a result
    fn is_empty(&self) -> bool {
        false
    }
}

impl Report for MetricReport {
    fn csv_header(&self) -> Vec<String> {
        vec!["metric".into(), "value".into(), "n".into()]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        vec![vec![metric_name(self.metric).into(), num(self.value), self.n.to_string()]]
    }
}

fn metric_name(m: Metric) -> &'static str {
    match m {
        Metric::Mae => "mae",
        Metric::RocAuc => "roc_auc",
    }
}

#[derive(Debug, Serialize)]
pub struct CvReport {
    pub config: BoosterConfig,
    pub folds: usize,
    pub ingest: IngestSummary,
    pub result: CvResult,
}

impl Report for CvReport {
    fn csv_header(&self) -> Vec<String> {
        ["fold", "metric", "train", "test", "log_ratio"].map(String::from).to_vec()
    }

    /// `log_ratio = ln(test / train)`, blank when undefined.
    fn csv_rows(&self) -> Vec<Vec<String>> {
        let r = &self.result;
        r.fold_metrics
            .iter()
            .zip(&r.train_metrics)
            .enumerate()
            .map(|(f, (&test, &train))| {
                let ratio = (test / train).ln();
                vec![
                    f.to_string(),
                    metric_name(r.metric).into(),
                    num(train),
                    num(test),
                    opt_num(ratio.is_finite().then_some(ratio)),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Serialize)]
pub struct GridReport {
    pub mode: ModeArg,
    pub folds: usize,
    pub ingest: IngestSummary,
    pub result: GridResult,
}

impl Report for GridReport {
    fn csv_header(&self) -> Vec<String> {
        let mut h: Vec<String> = [
            "index", "learning_rate", "max_depth", "mode", "k_draws", "rho", "gamma", "lambda", "alpha_l1", "n_estimators",
            "metric", "mean",
        ]
        .map(String::from)
        .to_vec();
        h.extend((0..self.folds).map(|f| format!("fold_{f}")));
        h.push("best".into());
        h
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.result
            .records
            .iter()
            .map(|r| {
                let c = &r.config;
                let (mode, k, rho, gamma, lambda, alpha) = match c.regularizer {
                    Regularizer::HypothesisTest(t) => {
                        ("hypothesis-test", t.k_draws.to_string(), num(t.rho), String::new(), String::new(), String::new())
                    }
                    Regularizer::Penalties(p) => {
                        ("penalties", String::new(), String::new(), num(p.gamma), num(p.lambda), num(p.alpha_l1))
                    }
                };
                let mut row = vec![
                    r.index.to_string(),
                    num(c.learning_rate),
                    c.max_depth.to_string(),
                    mode.into(),
                    k,
                    rho,
                    gamma,
                    lambda,
                    alpha,
                    c.n_estimators_cap.to_string(),
                    metric_name(self.result.metric).into(),
                    num(r.mean),
                ];
                row.extend(r.fold_metrics.iter().map(|&m| num(m)));
                row.push((r.index == self.result.best_index).to_string());
                row
            })
            .collect()
    }
}

#[derive(Debug, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CalibrationReport {
    Type1 { setup: Type1Setup, rows: Vec<Type1Row> },
    Correlation { rows: Vec<CorrelationRow> },
    Symmetry { n: usize, config: TestConfig, seed: u64, result: SymmetryResult },
}

impl Report for CalibrationReport {
    fn csv_header(&self) -> Vec<String> {
        let cols: &[&str] = match self {
            CalibrationReport::Type1 { .. } => &[
                "k_draws",
                "rho",
                "trials",
                "passes",
                "pass_rate",
                "nominal_alpha",
                "std_error",
                "within_3se",
                "null_draws",
                "exchangeable_rate",
            ],
            CalibrationReport::Correlation { .. } => &["rho", "c", "reps", "mean_correlation", "std_correlation"],
            CalibrationReport::Symmetry { .. } => &["n", "trials", "exceed", "ties", "exceed_rate"],
        };
        cols.iter().map(|c| c.to_string()).collect()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        match self {
            CalibrationReport::Type1 { rows, .. } => rows
                .iter()
                .map(|r| {
                    vec![
                        r.k_draws.to_string(),
                        num(r.rho),
                        r.trials.to_string(),
                        r.passes.to_string(),
                        num(r.pass_rate),
                        num(r.nominal_alpha),
                        num(r.std_error),
                        r.within_3se.to_string(),
                        r.null_draws.to_string(),
                        num(r.exchangeable_rate),
                    ]
                })
                .collect(),
            CalibrationReport::Correlation { rows } => rows
                .iter()
                .map(|r| {
                    vec![num(r.rho), r.c.to_string(), r.reps.to_string(), num(r.mean_correlation), num(r.std_correlation)]
                })
                .collect(),
            CalibrationReport::Symmetry { n, result: r, .. } => vec![vec![
                n.to_string(),
                r.trials.to_string(),
                r.exceed.to_string(),
                r.ties.to_string(),
                num(r.exceed_rate),
            ]],
        }
    }
}

struct Ctx {
    verbose: u8,
}

impl Ctx {
    fn info(&self, msg: impl std::fmt::Display) {
        if self.verbose > 0 {
            eprintln!("{msg}");
        }
    }
}

fn print_paths(paths: &[PathBuf]) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    for p in paths {
        writeln!(out, "{}", p.display())?;
    }
    Ok(())
}

fn train(args: &TrainArgs, ctx: &Ctx) -> anyhow::Result<()> {
    let resolved = Resolved::new(&args.booster)?;
    let config = resolved.booster(&args.booster)?;
    let (path, options) = resolved.load_options(&args.data)?;
    let (dataset, summary) = ingest::load_csv(&path, &options)?;
    ctx.info(format_args!("{}: {} rows x {} features", path.display(), dataset.n_rows(), dataset.n_cols()));
    let outcome = fit_detailed(&dataset, &config)?;
    ctx.info(format_args!("fitted {} trees", outcome.ensemble.trees.len()));
    let training_log = outcome.ensemble.training_log.clone();
    let trees = outcome.ensemble.trees.len();
    let model = ModelFile::new(outcome.ensemble, options.target.clone(), summary.features.clone())?;
    model_file::save_model(&model, &args.out)?;
    let mut written = vec![args.out.clone()];
    if let Some(dir) = &args.out_dir {
        let report = TrainReport { config, ingest: summary, trees, training_log };
        written.extend(report::emit_report(&report, dir)?);
        if args.emit_prune_report {
            let prune_path = dir.join("prune_report.json");
            let reports: &[PruneReport] = &outcome.prune_reports;
            report::write_atomic(&prune_path, report::to_json(&reports).as_bytes())?;
            written.push(prune_path);
        }
    }
    print_paths(&written)
}

fn predict_cmd(args: &PredictArgs, ctx: &Ctx) -> anyhow::Result<()> {
    let model = model_file::load_model(&args.model)?;
    let (dataset, rows) = ingest::load_for_model(&args.data, &model.features, None)?;
    ctx.info(format_args!("{} usable rows", rows.len()));
    let predictions = predict(&model.ensemble(), &dataset)?;
    let table: Vec<Vec<String>> =
        rows.iter().zip(&predictions).map(|(r, p)| vec![r.to_string(), num(*p)]).collect();
    let csv = report::to_csv(&["row".into(), "prediction".into()], &table)?;
    match &args.out {
        Some(path) => {
            report::write_atomic(path, csv.as_bytes())?;
            print_paths(std::slice::from_ref(path))
        }
        None => Ok(std::io::stdout().lock().write_all(csv.as_bytes())?),
    }
}

fn evaluate_cmd(args: &EvaluateArgs) -> anyhow::Result<()> {
    let model = model_file::load_model(&args.model)?;
    let target = args.target.as_deref().unwrap_or(&model.target);
    let (dataset, _) = ingest::load_for_model(&args.data, &model.features, Some(target))?;
    let metric = args.metric.map(Metric::from).unwrap_or_else(|| default_metric(model.loss));
    let predictions = predict(&model.ensemble(), &dataset)?;
    let report = MetricReport::new(metric, dataset.target(), &predictions)?;
    if let Some(dir) = &args.out_dir {
        report::emit_report(&report, dir)?;
    }
    print!("{}", report::to_json(&report));
    Ok(())
}

fn cv(args: &CvArgs, ctx: &Ctx) -> anyhow::Result<()> {
    let resolved = Resolved::new(&args.booster)?;
    let config = resolved.booster(&args.booster)?;
    let (path, options) = resolved.load_options(&args.data)?;
    let (dataset, summary) = ingest::load_csv(&path, &options)?;
    let k = resolved.folds(args.folds);
    let metric = resolved.metric(args.metric, config.loss);
    let folds = kfold_indices(dataset.n_rows(), k, config.seed)?;
    ctx.info(format_args!("{k}-fold cross-validation on {} rows", dataset.n_rows()));
    let result = parallel::cross_validate(&dataset, &config, &folds, metric, resolved.jobs(args.jobs))?;
    let report = CvReport { config, folds: k, ingest: summary, result };
    print_paths(&report::emit_report(&report, &args.out_dir)?)
}

fn grid_search(args: &GridArgs, ctx: &Ctx) -> anyhow::Result<()> {
    let resolved = Resolved::new(&args.booster)?;
    let base = resolved.booster(&args.booster)?;
    let (path, options) = resolved.load_options(&args.data)?;
    let (dataset, summary) = ingest::load_csv(&path, &options)?;
    let mode = match base.regularizer {
        Regularizer::HypothesisTest(_) => ModeArg::HypothesisTest,
        Regularizer::Penalties(_) => ModeArg::Penalties,
    };
    let mut grid = match mode {
        ModeArg::HypothesisTest => ParamGrid::default_hypothesis_test(base),
        ModeArg::Penalties => ParamGrid::default_penalties(base),
    };
    if !args.lr_grid.is_empty() {
        grid.learning_rate = args.lr_grid.clone();
    }
    if !args.depth_grid.is_empty() {
        grid.max_depth = args.depth_grid.clone();
    }
    match &mut grid.space {
        SearchSpace::HypothesisTest { k_draws, rho } => {
            if !(args.gamma_grid.is_empty() && args.lambda_grid.is_empty() && args.n_estimators_grid.is_empty()) {
                bail!("--gamma-grid/--lambda-grid/--n-estimators-grid need --mode penalties");
            }
            if !args.k_grid.is_empty() {
                *k_draws = args.k_grid.clone();
            }
            if !args.rho_grid.is_empty() {
                *rho = args.rho_grid.clone();
            }
        }
        SearchSpace::Penalties { gamma, lambda, n_estimators } => {
            if !(args.k_grid.is_empty() && args.rho_grid.is_empty()) {
                bail!("--k-grid/--rho-grid need --mode hypothesis-test");
            }
            if !args.gamma_grid.is_empty() {
                *gamma = args.gamma_grid.clone();
            }
            if !args.lambda_grid.is_empty() {
                *lambda = args.lambda_grid.clone();
            }
            if !args.n_estimators_grid.is_empty() {
                *n_estimators = args.n_estimators_grid.clone();
            }
        }
    }
    let k = resolved.folds(args.folds);
    let metric = resolved.metric(args.metric, base.loss);
    let folds = kfold_indices(dataset.n_rows(), k, base.seed)?;
    ctx.info(format_args!("{} combinations x {k} folds", grid.combinations()?.len()));
    let outcome = parallel::grid_search(&dataset, &grid, &folds, metric, resolved.jobs(args.jobs))?;
    let model = ModelFile::new(outcome.final_model, options.target.clone(), summary.features.clone())?;
    let report = GridReport { mode, folds: k, ingest: summary, result: outcome.result };
    let mut written = report::emit_report(&report, &args.out_dir)?;
    let model_path = args.out_dir.join("model.json");
    model_file::save_model(&model, &model_path)?;
    written.push(model_path);
    print_paths(&written)
}

fn calibrate_cmd(args: &CalibrateArgs, ctx: &Ctx) -> anyhow::Result<()> {
    let null_split = match args.null_split {
        NullSplitArg::Best => NullSplitRule::BestThreshold,
        NullSplitArg::Random => NullSplitRule::RandomThreshold,
    };
    let budget = match args.draw_budget {
        BudgetArg::MatchAlpha => DrawBudget::MatchAlpha,
        BudgetArg::KDraws => DrawBudget::KDraws,
    };
    let report = match args.mode {
        CalibrationMode::Type1 => {
            let setup = Type1Setup { null_split, budget, max_bins: args.max_bins, ..Type1Setup::new(args.n, args.rho, args.trials, args.seed) };
            ctx.info(format_args!("type-1 calibration: {} trials per k", args.trials));
            CalibrationReport::Type1 { rows: calibrate::calibrate_type1(&setup, &args.k)?, setup }
        }
        CalibrationMode::Correlation => {
            CalibrationReport::Correlation { rows: calibrate::calibrate_correlation(args.c, &args.rhos, args.reps, args.seed)? }
        }
        CalibrationMode::Symmetry => {
            let config = TestConfig {
                null_split,
                budget,
                max_bins: args.max_bins,
                ..TestConfig::new(1, args.rho, args.seed)
            };
            let result = calibrate::null_symmetry(args.n, args.trials, &config, args.seed)?;
            CalibrationReport::Symmetry { n: args.n, config, seed: args.seed, result }
        }
    };
    print_paths(&report::emit_report(&report, &args.out_dir)?)
}

pub fn execute(cli: &Cli) -> anyhow::Result<()> {
    let ctx = Ctx { verbose: cli.verbose };
    match &cli.command {
        Command::Train(a) => train(a, &ctx),
        Command::Predict(a) => predict_cmd(a, &ctx),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Cv(a) => cv(a, &ctx),
        Command::GridSearch(a) => grid_search(a, &ctx),
        Command::Calibrate(a) => calibrate_cmd(a, &ctx),
    }
}

/// Parses `args` (program name first) and runs the command. Usage errors exit
/// with 2, failures with 1.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
