// SPDX-License-Identifier: MIT OR Apache-2.0

//! The `tokseg` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or parse
//! error, 3 internal invariant violation.

#![forbid(unsafe_code)]

pub mod config;

use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use tokseg_core::dataio::{self, SplitsDocument};
use tokseg_core::eval::{self, ChangePointTally};
use tokseg_core::synth::{self, RegimeSpec};
use tokseg_core::tokenizer;
use tokseg_core::{Dataset, SummaryMethod, SummaryOptions, TimeSeries};

pub use config::{CliConfig, InputFormat};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Data(_) => EXIT_DATA,
            Self::Internal(_) => EXIT_INTERNAL,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Data(m) | Self::Internal(m) => m,
        }
    }
}

impl From<tokseg_core::Error> for CliError {
    // Library errors reaching the CLI come from the inputs it was handed.
    fn from(e: tokseg_core::Error) -> Self {
        Self::Data(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "tokseg",
    version,
    about = "Segment time series into short token sequences"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic piecewise-Gaussian series and its true split points.
    Gen(GenArgs),
    /// Detect split points and write them as JSON.
    Detect(DetectArgs),
    /// Summarize series into tokens and write the full result JSON.
    Summarize(SummarizeArgs),
    /// Score predicted split points against the truth.
    EvalCp(EvalCpArgs),
    /// 1-NN DTW classification accuracy on token sequences.
    EvalKnn(EvalKnnArgs),
    /// 1-NN accuracy with Gaussian noise added to the test split.
    EvalNoise(EvalNoiseArgs),
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// `key = value` config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores). Output does not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct TokenizerArgs {
    #[arg(long)]
    delta_min: Option<usize>,
    #[arg(long)]
    delta_max: Option<usize>,
    #[arg(long)]
    delta_step: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    s_min: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct InputArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    /// `csv` (one series) or `rows` (labeled univariate rows).
    #[arg(long)]
    format: Option<InputFormat>,
    /// Field delimiter for `rows`: comma or tab.
    #[arg(long)]
    delimiter: Option<String>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the true splits; defaults to `<out>.truth.json`.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[command(flatten)]
    io: InputArgs,
    /// Also write `position,score,scale` rows for every scored position.
    #[arg(long)]
    dump_scores: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    tokenizer: TokenizerArgs,
}

#[derive(Args, Debug)]
struct SummarizeArgs {
    #[command(flatten)]
    io: InputArgs,
    #[arg(long)]
    method: Option<SummaryMethod>,
    /// Mixture components per segment (gmm).
    #[arg(long)]
    k: Option<usize>,
    /// Chunk count (uniform).
    #[arg(long)]
    chunks: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    tokenizer: TokenizerArgs,
}

#[derive(Args, Debug)]
struct EvalCpArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    tol: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// `manifest` (default) or `rows`.
    #[arg(long)]
    format: Option<InputFormat>,
    #[arg(long)]
    delimiter: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    chunks: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalKnnArgs {
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long)]
    method: Option<SummaryMethod>,
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    tokenizer: TokenizerArgs,
}

#[derive(Args, Debug)]
struct EvalNoiseArgs {
    #[command(flatten)]
    split: SplitArgs,
    /// Comma-separated noise levels in units of the z-normalized signal stdev.
    #[arg(long)]
    sigmas: Option<String>,
    /// Comma-separated summary methods.
    #[arg(long)]
    methods: Option<String>,
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    tokenizer: TokenizerArgs,
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    EXIT_USAGE
                }
            };
        }
    };

    let outcome = panic::catch_unwind(AssertUnwindSafe(|| dispatch(cli, out, err)));
    match outcome {
        Ok(Ok(())) => EXIT_OK,
        Ok(Err(e)) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .map(String::as_str)
                .or_else(|| payload.downcast_ref::<&str>().copied())
                .unwrap_or("unknown panic");
            let _ = writeln!(err, "internal error: {msg}");
            EXIT_INTERNAL
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Gen(a) => {
            let cfg = resolve(&a.common, None, |_| Ok(()), err)?;
            with_threads(cfg.threads, || gen(&a, &cfg))
        }
        Command::Detect(a) => {
            let cfg = resolve(&a.common, Some(&a.tokenizer), |c| apply_io(c, &a.io), err)?;
            let json = with_threads(cfg.threads, || detect(&a, &cfg))?;
            emit(&json, cfg.out.as_deref(), out)
        }
        Command::Summarize(a) => {
            let cfg = resolve(
                &a.common,
                Some(&a.tokenizer),
                |c| {
                    apply_io(c, &a.io)?;
                    set_opt(c, "method", a.method)?;
                    set_opt(c, "k", a.k)?;
                    set_opt(c, "n_chunks", a.chunks)
                },
                err,
            )?;
            let json = with_threads(cfg.threads, || summarize(&cfg))?;
            emit(&json, cfg.out.as_deref(), out)
        }
        Command::EvalCp(a) => {
            let common = CommonArgs {
                config: a.config.clone(),
                ..CommonArgs::default()
            };
            let cfg = resolve(&common, None, |c| set_opt(c, "tol", a.tol), err)?;
            eval_cp(&a, &cfg, out)
        }
        Command::EvalKnn(a) => {
            let cfg = resolve(
                &a.common,
                Some(&a.tokenizer),
                |c| {
                    apply_split(c, &a.split)?;
                    set_opt(c, "method", a.method)
                },
                err,
            )?;
            let json = with_threads(cfg.threads, || eval_knn(&a.split, &cfg))?;
            emit(&json, None, out)
        }
        Command::EvalNoise(a) => {
            let cfg = resolve(
                &a.common,
                Some(&a.tokenizer),
                |c| {
                    apply_split(c, &a.split)?;
                    set_opt(c, "sigmas", a.sigmas.as_ref())?;
                    set_opt(c, "methods", a.methods.as_ref())
                },
                err,
            )?;
            let json = with_threads(cfg.threads, || eval_noise(&a.split, &cfg))?;
            emit(&json, None, out)
        }
    }
}

fn set_opt<T: ToString>(cfg: &mut CliConfig, key: &str, value: Option<T>) -> CliResult<()> {
    match value {
        Some(v) => cfg.set(key, &v.to_string()),
        None => Ok(()),
    }
}

fn apply_io(cfg: &mut CliConfig, io: &InputArgs) -> CliResult<()> {
    if let Some(p) = &io.input {
        cfg.input = Some(p.clone());
    }
    if let Some(p) = &io.out {
        cfg.out = Some(p.clone());
    }
    if let Some(f) = io.format {
        cfg.format = Some(f);
    }
    set_opt(cfg, "delimiter", io.delimiter.as_ref())
}

fn apply_split(cfg: &mut CliConfig, split: &SplitArgs) -> CliResult<()> {
    if let Some(f) = split.format {
        cfg.format = Some(f);
    }
    set_opt(cfg, "delimiter", split.delimiter.as_ref())?;
    set_opt(cfg, "k", split.k)?;
    set_opt(cfg, "n_chunks", split.chunks)
}

/// Defaults, then the config file, then flags; prints the result to `err`.
fn resolve(
    common: &CommonArgs,
    tok: Option<&TokenizerArgs>,
    extra: impl FnOnce(&mut CliConfig) -> CliResult<()>,
    err: &mut dyn Write,
) -> CliResult<CliConfig> {
    let mut cfg = CliConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    set_opt(&mut cfg, "seed", common.seed)?;
    set_opt(&mut cfg, "threads", common.threads)?;
    if let Some(t) = tok {
        set_opt(&mut cfg, "delta_min", t.delta_min)?;
        set_opt(&mut cfg, "delta_max", t.delta_max)?;
        set_opt(&mut cfg, "delta_step", t.delta_step)?;
        set_opt(&mut cfg, "stride", t.stride)?;
        set_opt(&mut cfg, "alpha", t.alpha)?;
        set_opt(&mut cfg, "s_min", t.s_min)?;
        set_opt(&mut cfg, "epsilon", t.epsilon)?;
        set_opt(&mut cfg, "lambda", t.lambda)?;
    }
    extra(&mut cfg)?;
    cfg.validate()?;
    let _ = write!(err, "# resolved config\n{}", cfg.render());
    Ok(cfg)
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    if threads == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Internal(format!("cannot start thread pool: {e}")))?;
    pool.install(f)
}

fn emit(text: &str, path: Option<&Path>, out: &mut dyn Write) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", p.display()))),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Data(format!("cannot write to standard output: {e}"))),
    }
}

fn required_input(cfg: &CliConfig) -> CliResult<&Path> {
    cfg.input
        .as_deref()
        .ok_or_else(|| CliError::Usage("missing --input".into()))
}

/// Series for `detect`/`summarize`, plus whether the input held a single series.
fn load_series(cfg: &CliConfig) -> CliResult<(Vec<TimeSeries>, bool)> {
    let input = required_input(cfg)?;
    match cfg.format.unwrap_or(InputFormat::Csv) {
        InputFormat::Csv => Ok((vec![dataio::parse_matrix_csv(input)?], true)),
        InputFormat::Rows => Ok((
            dataio::parse_labeled_rows(input, cfg.delimiter)?.series,
            false,
        )),
        InputFormat::Manifest => Ok((dataio::parse_manifest(input)?.series, false)),
    }
}

fn load_dataset(path: &Path, cfg: &CliConfig) -> CliResult<Dataset> {
    match cfg.format.unwrap_or(InputFormat::Manifest) {
        InputFormat::Manifest => Ok(dataio::parse_manifest(path)?),
        InputFormat::Rows => Ok(dataio::parse_labeled_rows(path, cfg.delimiter)?),
        InputFormat::Csv => Err(CliError::Usage(
            "train/test splits must be given as a manifest or labeled rows".into(),
        )),
    }
}

fn summary_options(cfg: &CliConfig, method: SummaryMethod) -> SummaryOptions {
    SummaryOptions {
        method,
        components: cfg.k,
        chunks: cfg.n_chunks,
        seed: cfg.seed,
    }
}

fn gen(a: &GenArgs, cfg: &CliConfig) -> CliResult<()> {
    let text = std::fs::read_to_string(&a.spec)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", a.spec.display())))?;
    let spec = RegimeSpec::parse_str(&text)?;
    let (series, truth) = synth::generate_piecewise_gaussian(&spec, cfg.seed)?;
    dataio::write_matrix_csv(&a.out, &series)?;
    let truth_path = a
        .truth
        .clone()
        .unwrap_or_else(|| a.out.with_extension("truth.json"));
    let doc = SplitsDocument {
        id: series.id().to_string(),
        length: series.len(),
        splits: truth,
    };
    dataio::write_json(truth_path, &doc)?;
    Ok(())
}

fn detect(a: &DetectArgs, cfg: &CliConfig) -> CliResult<String> {
    let (series, single) = load_series(cfg)?;
    let mut docs = Vec::with_capacity(series.len());
    let mut scores = String::from("series,position,score,scale\n");
    for s in &series {
        let detection = tokenizer::detect(&dataio::znormalize(s), &cfg.tokenizer)?;
        if a.dump_scores.is_some() {
            for c in &detection.scored {
                scores.push_str(&format!(
                    "{},{},{},{}\n",
                    s.id(),
                    c.position,
                    dataio::format_f64(c.score),
                    c.scale
                ));
            }
        }
        docs.push(SplitsDocument::from_segmentation(
            s.id(),
            &detection.segmentation,
        ));
    }
    let json = if single {
        dataio::to_json_string(&docs[0])?
    } else {
        dataio::to_json_string(&docs)?
    };
    if let Some(path) = &a.dump_scores {
        std::fs::write(path, scores)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(json)
}

fn summarize(cfg: &CliConfig) -> CliResult<String> {
    let (series, single) = load_series(cfg)?;
    let options = summary_options(cfg, cfg.method);
    let results = tokseg_core::pipeline::stats_summarize_batch(&series, &cfg.tokenizer, &options)?;
    let json = if single {
        dataio::result_to_json(&results[0])?
    } else {
        dataio::results_to_json(&results)?
    };
    Ok(json)
}

fn eval_cp(a: &EvalCpArgs, cfg: &CliConfig, out: &mut dyn Write) -> CliResult<()> {
    let pred = dataio::read_splits(&a.pred)?;
    let truth = dataio::read_splits(&a.truth)?;
    if pred.len() != truth.len() {
        return Err(CliError::Data(format!(
            "{} predicted documents but {} truth documents",
            pred.len(),
            truth.len()
        )));
    }
    let mut tally = ChangePointTally::default();
    for (p, t) in pred.iter().zip(&truth) {
        tally.add(&p.splits, &t.splits, cfg.tol)?;
    }
    emit(&dataio::to_json_string(&tally.score(cfg.tol))?, None, out)
}

fn eval_knn(split: &SplitArgs, cfg: &CliConfig) -> CliResult<String> {
    let train = load_dataset(&split.train, cfg)?;
    let test = load_dataset(&split.test, cfg)?;
    let report = eval::run_classification(
        &train,
        &test,
        &[cfg.method],
        &cfg.tokenizer,
        &summary_options(cfg, cfg.method),
    )?;
    Ok(dataio::to_json_string(&report)?)
}

fn eval_noise(split: &SplitArgs, cfg: &CliConfig) -> CliResult<String> {
    let train = load_dataset(&split.train, cfg)?;
    let test = load_dataset(&split.test, cfg)?;
    let first = *cfg
        .methods
        .first()
        .ok_or_else(|| CliError::Usage("--methods is empty".into()))?;
    let report = eval::run_noise_experiment(
        &train,
        &test,
        &cfg.sigmas,
        &cfg.methods,
        &cfg.tokenizer,
        &summary_options(cfg, first),
    )?;
    Ok(dataio::to_json_string(&report)?)
}
