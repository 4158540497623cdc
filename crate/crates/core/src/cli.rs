//! The `lfiqa` command line.
//!
//! Exit codes: 0 on success, 1 when a check fails or a command errors while
//! working, 2 on usage errors (bad flags, missing or unreadable inputs).
//! `LF_THREADS` caps the worker pool; 0 or unset means one thread per core.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::autodiff::{grad_check, grad_check_case};
use crate::cost::cost_report;
use crate::data::{
    augment, load_lfi, read_dataset, split_entries, synth_dataset, trim_reshape, write_dataset,
};
use crate::error::LfError;
use crate::features::{angular_features, spatial_features, ANGULAR_KIND, SPATIAL_LEN};
use crate::model::{
    build_ablation, build_alas_dads, load_checkpoint, save_checkpoint, AblationKind, ModelSpec,
    Scale, FULL_INPUT, TINY_INPUT,
};
use crate::ops::LayerKind;
use crate::tensor::{LfShape, LfTensor};
use crate::train::{evaluate, history_csv, train, AdamHyper, TrainConfig};

/// Largest relative gradient error that passes `gradcheck`.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser, Debug)]
#[command(
    name = "lfiqa",
    version,
    about = "Light-field quality assessment with separable 4-D convolutions"
)]
pub struct Cli {
    /// Seed for every random choice (initialization, sampling, splits).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Network scale: the full 7x7x434x434 network or the 3x3x32x32 desk-scale one.
    #[arg(long, global = true, value_enum, default_value_t = ScaleArg::Tiny)]
    pub scale: ScaleArg,
    /// Output location. A directory for cost-report, synth, train and augment;
    /// a CSV file for gradcheck, features, eval and predict (stdout if omitted).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Full,
    Tiny,
}

impl ScaleArg {
    fn scale(self) -> Scale {
        match self {
            ScaleArg::Full => Scale::Full,
            ScaleArg::Tiny => Scale::Tiny,
        }
    }

    fn input(self) -> LfShape {
        match self {
            ScaleArg::Full => FULL_INPUT,
            ScaleArg::Tiny => TINY_INPUT,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Per-layer analytic vs. measured MACs and parameters, plus block savings.
    /// Fails if any layer's counts disagree.
    CostReport(CostReportArgs),
    /// Finite-difference gradient check of each layer kind. Fails above 1e-4.
    Gradcheck(GradcheckArgs),
    /// Spatial (36) and angular (8) feature vectors of light fields.
    Features(FeaturesArgs),
    /// Writes a synthetic blur-graded dataset.
    Synth(SynthArgs),
    /// Trains the network; writes model.alas, history.csv and metrics.csv.
    Train(TrainArgs),
    /// Scores a checkpoint on a dataset; writes rmse,srocc,plcc.
    Eval(EvalArgs),
    /// Quality score and feature estimates for one light field.
    Predict(PredictArgs),
    /// Writes the eight rotation/flip variants of a light field.
    Augment(AugmentArgs),
}

#[derive(Args, Debug)]
pub struct CostReportArgs {
    /// Report an ablation backbone (10-4D-Conv, 10-LF-DSC, 10-LF-ASC,
    /// 10-LF-DSC-ASC) instead of the quality network.
    #[arg(long)]
    pub ablation: Option<String>,
    /// Channel count of the ablation blocks.
    #[arg(long, default_value_t = 3)]
    pub channels: usize,
    /// Spatial kernel extent of the ablation blocks.
    #[arg(long, default_value_t = 3)]
    pub kernel: usize,
    /// Angular kernel extent of the ablation blocks.
    #[arg(long, default_value_t = 3)]
    pub angular: usize,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// `all` or a comma-separated list of layer kinds (subview2d, depthwise,
    /// pointwise, anglewise_h, anglewise_v, full4d, maxpool, relu,
    /// residual_add, global_avg_pool, dense, dropout).
    #[arg(long, default_value = "all")]
    pub ops: String,
    /// Number of random cases per kind, seeded from --seed upward.
    #[arg(long, default_value_t = 5)]
    pub cases: u64,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
}

#[derive(Args, Debug)]
pub struct FeaturesArgs {
    /// Light fields: `.lft` tensors or `.json` subview manifests.
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Number of light fields (at least 4).
    #[arg(long, default_value_t = 64)]
    pub count: usize,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory written by `synth`.
    #[arg(long)]
    pub data: PathBuf,
    /// Fraction of source groups used for training; the rest is held out.
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,
    /// Training draws per batch.
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    /// Validation draws per batch.
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    /// Early-stopping patience in epochs.
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    /// Epoch limit per batch.
    #[arg(long, default_value_t = 5)]
    pub l: usize,
    /// Number of tiny batches.
    #[arg(long, default_value_t = 100)]
    pub batches: usize,
    /// Weight of the auxiliary losses.
    #[arg(long, default_value_t = 0.01)]
    pub lambda: f64,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Independent replicas that periodically adopt the best one.
    #[arg(long, default_value_t = 1)]
    pub replicas: usize,
    /// Batches between replica synchronizations.
    #[arg(long, default_value_t = 100)]
    pub sync_every: usize,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Evaluate only the held-out part of the split `train` made with the same
    /// --split and --seed. Without it every entry is scored.
    #[arg(long)]
    pub split: Option<f64>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Light field (`.lft` or `.json` manifest); center-cropped to the model input.
    #[arg(long = "in")]
    pub input: PathBuf,
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    /// Light field (`.lft` or `.json` manifest).
    #[arg(long = "in")]
    pub input: PathBuf,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Check(String),
    Lib(LfError),
}

impl From<LfError> for Failure {
    fn from(e: LfError) -> Self {
        Failure::Lib(e)
    }
}

type CliResult = std::result::Result<(), Failure>;

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = configure_threads().and_then(|()| dispatch(&cli));
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            1
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn configure_threads() -> CliResult {
    let Ok(raw) = std::env::var("LF_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| {
        Failure::Usage(format!(
            "LF_THREADS must be a non-negative integer, got {raw:?}"
        ))
    })?;
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

fn dispatch(cli: &Cli) -> CliResult {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::CostReport(a) => cmd_cost_report(cli, a, out),
        Command::Gradcheck(a) => cmd_gradcheck(cli.seed, a, out),
        Command::Features(a) => cmd_features(a, out),
        Command::Synth(a) => cmd_synth(cli, a, require_out(out)?),
        Command::Train(a) => cmd_train(cli, a, require_out(out)?),
        Command::Eval(a) => cmd_eval(cli.seed, a, out),
        Command::Predict(a) => cmd_predict(a, out),
        Command::Augment(a) => cmd_augment(a, require_out(out)?),
    }
}

fn require_out(out: Option<&Path>) -> Result<&Path, Failure> {
    out.ok_or_else(|| Failure::Usage("this command needs --out <dir>".into()))
}

fn require_file(path: &Path) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("no such file: {}", path.display())))
    }
}

fn require_dataset(dir: &Path) -> CliResult {
    require_file(&dir.join("labels.csv"))
}

fn check_ratio(r: f64) -> CliResult {
    if r > 0.0 && r < 1.0 {
        Ok(())
    } else {
        Err(Failure::Usage(format!(
            "--split must lie strictly between 0 and 1, got {r}"
        )))
    }
}

fn write(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| Failure::Lib(LfError::io(path, e)))
}

fn make_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| Failure::Lib(LfError::io(dir, e)))
}

/// Writes to `out` when given, stdout otherwise.
fn emit(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_lfi(path: &Path) -> Result<LfTensor, Failure> {
    require_file(path)?;
    let lfi = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => load_lfi(path)?,
        _ => LfTensor::load_lft(path)?,
    };
    Ok(lfi)
}

fn cmd_cost_report(cli: &Cli, a: &CostReportArgs, out: Option<&Path>) -> CliResult {
    let input = cli.scale.input();
    let model = match &a.ablation {
        None => build_alas_dads(input, cli.scale.scale(), cli.seed)?,
        Some(label) => {
            let kind = AblationKind::from_label(label).ok_or_else(|| {
                let known: Vec<_> = AblationKind::ALL.iter().map(|k| k.label()).collect();
                Failure::Usage(format!(
                    "unknown ablation {label:?}; expected one of {}",
                    known.join(", ")
                ))
            })?;
            if a.channels == 0 || a.kernel == 0 || a.angular == 0 {
                return Err(Failure::Usage(
                    "--channels, --kernel and --angular must be >= 1".into(),
                ));
            }
            build_ablation(kind, input, a.channels, a.kernel, a.angular, cli.seed)?
        }
    };
    let report = cost_report(&model)?;
    let summary = format!(
        "scope,analytic_macs,measured_macs,params\ntotal,{},{},{}\n",
        report.total_analytic, report.total_measured, report.total_params
    );
    match out {
        Some(dir) => {
            make_dir(dir)?;
            write(&dir.join("cost.csv"), &report.to_csv())?;
            write(&dir.join("savings.csv"), &report.savings_csv())?;
            write(&dir.join("summary.csv"), &summary)?;
        }
        None => print!("{}\n{}\n{summary}", report.to_csv(), report.savings_csv()),
    }
    if report.exact() {
        Ok(())
    } else {
        let bad: Vec<String> = report
            .rows
            .iter()
            .filter(|r| r.analytic_macs != r.measured_macs)
            .map(|r| r.layer_index.to_string())
            .collect();
        Err(Failure::Check(format!(
            "analytic and measured MACs differ at layers {}",
            bad.join(", ")
        )))
    }
}

fn cmd_gradcheck(seed: u64, a: &GradcheckArgs, out: Option<&Path>) -> CliResult {
    let kinds: Vec<LayerKind> = if a.ops == "all" {
        LayerKind::ALL.to_vec()
    } else {
        a.ops
            .split(',')
            .map(|name| {
                LayerKind::from_name(name.trim())
                    .ok_or_else(|| Failure::Usage(format!("unknown op {name:?}")))
            })
            .collect::<Result<_, _>>()?
    };
    if a.cases == 0 || a.eps.is_nan() || a.eps <= 0.0 {
        return Err(Failure::Usage("--cases must be >= 1 and --eps > 0".into()));
    }
    let mut csv = String::from("op,cases,max_rel_error,pass\n");
    let mut failed = Vec::new();
    for kind in kinds {
        let mut worst = 0.0f64;
        for s in seed..seed + a.cases {
            let (layer, input) = grad_check_case(kind, s);
            worst = worst.max(grad_check(&layer, &input, a.eps)?);
        }
        let pass = worst <= GRADCHECK_TOLERANCE;
        if !pass {
            failed.push(kind.name());
        }
        let _ = writeln!(csv, "{},{},{worst:e},{pass}", kind.name(), a.cases);
    }
    emit(out, &csv)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "gradient error above {GRADCHECK_TOLERANCE:e} for {}",
            failed.join(", ")
        )))
    }
}

fn cmd_features(a: &FeaturesArgs, out: Option<&Path>) -> CliResult {
    for p in &a.inputs {
        require_file(p)?;
    }
    let mut csv = String::from("lfi_path,kind");
    for i in 1..=SPATIAL_LEN {
        let _ = write!(csv, ",v{i}");
    }
    csv.push('\n');
    for p in &a.inputs {
        let lfi = read_lfi(p)?;
        for (kind, values) in [
            ("spatial", spatial_features(&lfi)?.values),
            (ANGULAR_KIND, angular_features(&lfi)?.values),
        ] {
            let _ = write!(csv, "{},{kind}", p.display());
            for v in &values {
                let _ = write!(csv, ",{v}");
            }
            // Angular rows are shorter; pad so every row has the header's width.
            csv.push_str(&",".repeat(SPATIAL_LEN - values.len()));
            csv.push('\n');
        }
    }
    emit(out, &csv)
}

fn cmd_synth(cli: &Cli, a: &SynthArgs, out: &Path) -> CliResult {
    if a.count < 4 {
        return Err(Failure::Usage("--count must be at least 4".into()));
    }
    let entries = synth_dataset(a.count, cli.scale.input(), cli.seed)?;
    write_dataset(&entries, out)?;
    Ok(())
}

fn cmd_train(cli: &Cli, a: &TrainArgs, out: &Path) -> CliResult {
    require_dataset(&a.data)?;
    check_ratio(a.split)?;
    let config = TrainConfig {
        m: a.m,
        n: a.n,
        p: a.p,
        l: a.l,
        batches: a.batches,
        lambda: a.lambda,
        adam: AdamHyper {
            lr: a.lr,
            ..AdamHyper::default()
        },
        seed: cli.seed,
        replicas: a.replicas,
        sync_every: a.sync_every,
        ..TrainConfig::default()
    };
    config
        .validate()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let entries = read_dataset(&a.data)?;
    let (train_set, test_set) = split_entries(&entries, a.split, cli.seed)?;
    let shape = train_set
        .first()
        .ok_or(LfError::EmptyDataset)?
        .tensor()?
        .shape();
    let mut model = build_alas_dads(shape, cli.scale.scale(), cli.seed)?;
    model.lambda = a.lambda;
    let (mut trained, history) = train(&model, &train_set, &config)?;
    // Score exactly what the checkpoint stores.
    trained.round_to_f32();
    make_dir(out)?;
    save_checkpoint(&trained, &out.join("model.alas"))?;
    write(&out.join("history.csv"), &history_csv(&history))?;
    if !test_set.is_empty() {
        write(&out.join("metrics.csv"), &metrics_csv(&trained, &test_set)?)?;
    }
    Ok(())
}

/// `rmse,srocc,plcc`; undefined correlations are written as `nan`.
fn metrics_csv(
    model: &ModelSpec,
    entries: &[crate::data::DatasetEntry],
) -> Result<String, Failure> {
    let eval = evaluate(model, entries)?;
    let row = match eval.metrics() {
        Ok(m) => format!("{},{},{}", m.rmse, m.srocc, m.plcc),
        Err(e) => {
            eprintln!("warning: correlations undefined ({e})");
            format!("{},nan,nan", eval.rmse())
        }
    };
    Ok(format!("rmse,srocc,plcc\n{row}\n"))
}

fn cmd_eval(seed: u64, a: &EvalArgs, out: Option<&Path>) -> CliResult {
    require_file(&a.model)?;
    require_dataset(&a.data)?;
    if let Some(r) = a.split {
        check_ratio(r)?;
    }
    let model = load_checkpoint(&a.model)?;
    let mut entries = read_dataset(&a.data)?;
    if let Some(r) = a.split {
        entries = split_entries(&entries, r, seed)?.1;
    }
    emit(out, &metrics_csv(&model, &entries)?)
}

fn cmd_predict(a: &PredictArgs, out: Option<&Path>) -> CliResult {
    require_file(&a.model)?;
    let model = load_checkpoint(&a.model)?;
    let mut lfi = read_lfi(&a.input)?;
    if lfi.shape() != model.input_shape {
        lfi = trim_reshape(&lfi, model.input_shape)?;
    }
    let p = model.predict(&lfi)?;
    let mut csv = String::from("lfi_path,score");
    for i in 1..=p.spatial.len() {
        let _ = write!(csv, ",spatial_{i}");
    }
    for i in 1..=p.angular.len() {
        let _ = write!(csv, ",angular_{i}");
    }
    let _ = write!(csv, "\n{},{}", a.input.display(), p.score);
    for v in p.spatial.iter().chain(&p.angular) {
        let _ = write!(csv, ",{v}");
    }
    csv.push('\n');
    emit(out, &csv)
}

/// File suffixes of the eight variants, in [`augment`] order.
pub const AUGMENT_SUFFIXES: [&str; 8] =
    ["r0", "r0f", "r90", "r90f", "r180", "r180f", "r270", "r270f"];

fn cmd_augment(a: &AugmentArgs, out: &Path) -> CliResult {
    let lfi = read_lfi(&a.input)?;
    let stem = a
        .input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("lfi");
    make_dir(out)?;
    for (variant, suffix) in augment(&lfi).iter().zip(AUGMENT_SUFFIXES) {
        variant.save_lft(&out.join(format!("{stem}_{suffix}.lft")))?;
    }
    Ok(())
}
