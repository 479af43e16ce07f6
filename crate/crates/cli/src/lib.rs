//! Command-line driver tying corpus ingestion, training, decoding,
//! calibration analysis, and plotting together.
//!
//! Subcommands: `synth`, `train`, `decode`, `analyze`, `plot`. Every
//! subcommand is deterministic given its flags and seed; only wall-clock
//! timing fields vary between runs. Exit codes: 0 success, 1 usage error,
//! 2 data error, 3 runtime error (divergence, resource exhaustion).

pub mod svg;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use mitd_core::calibration::{
    build_report, records_from_tsv, records_to_tsv, size_vs_empty_curve, PredictionRecord,
    RecordSet, StrategyResult,
};
use mitd_core::corpus::{build_vocabulary, encode_all, parse_unimorph, RawSample, SymbolId};
use mitd_core::search::{beam_decode, decode, DecodeConfig, DecodeError, DecodeResult, Strategy};
use mitd_core::synth::{generate, SynthError, SynthSpec};
use mitd_core::transducer::{
    load_model, save_model, train, Hyperparameters, ModelIoError, Transducer, TransducerError,
};
use mitd_core::{SequenceModel, TableModel};

#[derive(Parser, Debug)]
#[command(
    name = "mitd",
    about = "Morphological inflection transduction: train, decode, and measure calibration",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate train/dev/test files for the synthetic inflection language.
    Synth(SynthArgs),
    /// Train a transducer on UniMorph-format TSV files.
    Train(TrainArgs),
    /// Decode a test file with one or more strategies, recording results.
    Decode(DecodeArgs),
    /// Aggregate decode records into a calibration report.
    Analyze(AnalyzeArgs),
    /// Plot mean empty-string log probability against training-set size.
    Plot(PlotArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    /// Directory receiving train.tsv, dev.tsv, test.tsv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5000)]
    pub train_count: usize,
    #[arg(long, default_value_t = 500)]
    pub dev_count: usize,
    #[arg(long, default_value_t = 500)]
    pub test_count: usize,
    #[arg(long, default_value_t = 12)]
    pub alphabet_size: usize,
    #[arg(long, default_value_t = 3)]
    pub lemma_min: usize,
    #[arg(long, default_value_t = 8)]
    pub lemma_max: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// Training TSV (lemma TAB form TAB feat1;feat2).
    #[arg(long)]
    pub train: PathBuf,
    /// Development TSV for early stopping.
    #[arg(long)]
    pub dev: PathBuf,
    /// Output model path.
    #[arg(long)]
    pub model: PathBuf,
    /// Optional plain-text training report path.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 128)]
    pub hidden_dim: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 30)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[arg(long, default_value_t = 5.0)]
    pub grad_clip_norm: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl TrainArgs {
    pub fn hyperparameters(&self) -> Hyperparameters {
        Hyperparameters {
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            grad_clip_norm: self.grad_clip_norm,
            seed: self.seed,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct DecodeArgs {
    /// Trained `mitd1` model or a `table v1` fixture.
    #[arg(long)]
    pub model: PathBuf,
    /// Input TSV to decode.
    #[arg(long)]
    pub test: PathBuf,
    /// Comma-separated strategies: greedy, beam:K, exact, brute_force.
    #[arg(long, default_value = "greedy,beam:10,exact")]
    pub strategies: String,
    /// Hypothesis length cap (default 2|x|+5).
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Lower bound for exact search: `none` or `beam:K`.
    #[arg(long, default_value = "none")]
    pub lower_bound: String,
    /// Abort an exact decode when its queue exceeds this size.
    #[arg(long)]
    pub queue_capacity: Option<usize>,
    /// Predictions TSV output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Records TSV output path (input to analyze/plot).
    #[arg(long)]
    pub records: PathBuf,
    /// Training-set size metadata for resource classification.
    #[arg(long)]
    pub train_size: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct AnalyzeArgs {
    /// One or more records TSV files (repeat the flag per file).
    #[arg(long, required = true)]
    pub records: Vec<PathBuf>,
    /// Report CSV output path.
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct PlotArgs {
    /// Records TSV files carrying train_size metadata (repeat per file).
    #[arg(long, required = true)]
    pub records: Vec<PathBuf>,
    /// Output SVG path.
    #[arg(long)]
    pub out: PathBuf,
}

/// Process exit codes per error category.
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<ModelIoError> for CliError {
    fn from(e: ModelIoError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TransducerError> for CliError {
    fn from(e: TransducerError) -> Self {
        match e {
            TransducerError::BadHyper(_) => CliError::Usage(e.to_string()),
            TransducerError::Diverged { .. } => CliError::Runtime(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {}", path.display(), e)))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Data(format!("{}: {}", parent.display(), e)))?;
        }
    }
    fs::write(path, contents).map_err(|e| CliError::Data(format!("{}: {}", path.display(), e)))
}

fn parse_corpus(path: &Path) -> Result<Vec<RawSample>, CliError> {
    let text = read_file(path)?;
    parse_unimorph(&text).map_err(|e| CliError::Data(format!("{}: {}", path.display(), e)))
}

/// Parse and run from any argv iterator; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e);
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Decode(args) => cmd_decode(args).map(|_| ()),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Plot(args) => cmd_plot(args),
    }
}

/// Generate synthetic train/dev/test TSVs under `--out`.
pub fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let spec = SynthSpec {
        alphabet_size: args.alphabet_size,
        lemma_min: args.lemma_min,
        lemma_max: args.lemma_max,
        train_count: args.train_count,
        dev_count: args.dev_count,
        test_count: args.test_count,
        seed: args.seed,
    };
    let data = generate(&spec)?;
    write_file(&args.out.join("train.tsv"), data.train.as_bytes())?;
    write_file(&args.out.join("dev.tsv"), data.dev.as_bytes())?;
    write_file(&args.out.join("test.tsv"), data.test.as_bytes())?;
    println!(
        "wrote {} train / {} dev / {} test samples to {}",
        args.train_count,
        args.dev_count,
        args.test_count,
        args.out.display()
    );
    Ok(())
}

/// Train on `--train`, early-stop on `--dev`, and save the model.
pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let train_raw = parse_corpus(&args.train)?;
    let dev_raw = parse_corpus(&args.dev)?;
    let vocab = build_vocabulary(&train_raw)
        .map_err(|e| CliError::Data(format!("{}: {}", args.train.display(), e)))?;
    let (train_set, _) = encode_all(&vocab, &train_raw);
    let (dev_set, dev_unknown) = encode_all(&vocab, &dev_raw);
    if dev_unknown > 0 {
        eprintln!(
            "note: {} dev target characters were out of vocabulary",
            dev_unknown
        );
    }
    let hyper = args.hyperparameters();
    let (params, report) = train(&train_set, &dev_set, &vocab, &hyper)?;
    if let Some(parent) = args.model.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Data(format!("{}: {}", parent.display(), e)))?;
        }
    }
    save_model(&params, &hyper, &vocab, &args.model)?;
    if let Some(report_path) = &args.report {
        write_file(report_path, report.to_text().as_bytes())?;
    }
    println!(
        "trained {} epochs; best dev exact match {:.4} at epoch {}; model written to {}",
        report.train_loss.len(),
        report.best_dev_accuracy(),
        report.selected_epoch,
        args.model.display()
    );
    Ok(())
}

/// A loaded decodable model: either a trained transducer or a table fixture.
pub enum LoadedModel {
    Trained(Box<Transducer>),
    Table(TableModel),
}

/// Sniff the file type by its first line and load accordingly.
pub fn load_decode_model(path: &Path) -> Result<LoadedModel, CliError> {
    let head = fs::read(path).map_err(|e| CliError::Data(format!("{}: {}", path.display(), e)))?;
    if head.starts_with(b"mitd1\n") {
        let (params, hyper, vocab) = load_model(path)?;
        Ok(LoadedModel::Trained(Box::new(Transducer::new(
            params, hyper, vocab,
        ))))
    } else if head.starts_with(b"table v1\n") {
        let text = String::from_utf8(head)
            .map_err(|e| CliError::Data(format!("{}: {}", path.display(), e)))?;
        let table = TableModel::from_text(&text)
            .map_err(|e| CliError::Data(format!("{}: {}", path.display(), e)))?;
        Ok(LoadedModel::Table(table))
    } else {
        Err(CliError::Data(format!(
            "{}: neither a mitd1 model nor a table v1 fixture",
            path.display()
        )))
    }
}

fn parse_strategies(list: &str) -> Result<Vec<Strategy>, CliError> {
    let mut out = Vec::new();
    for part in list.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let strategy: Strategy = part.parse().map_err(CliError::Usage)?;
        if !out.contains(&strategy) {
            out.push(strategy);
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("no strategies requested".into()));
    }
    Ok(out)
}

fn parse_lower_bound(s: &str) -> Result<Option<usize>, CliError> {
    if s == "none" {
        return Ok(None);
    }
    match s.parse::<Strategy>() {
        Ok(Strategy::Beam { width }) => Ok(Some(width)),
        _ => Err(CliError::Usage(format!(
            "--lower-bound must be `none` or `beam:K`, got {:?}",
            s
        ))),
    }
}

/// Outcome of one decode subcommand run.
pub struct DecodeSummary {
    pub samples: usize,
    pub failures: usize,
}

struct DecodeInput {
    id: String,
    lemma: String,
    msd: String,
    x: Vec<SymbolId>,
    gold: String,
}

fn decode_inputs(model: &LoadedModel, samples: &[RawSample]) -> Vec<DecodeInput> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (x, gold) = match model {
                LoadedModel::Trained(t) => {
                    let (encoded, _) = mitd_core::corpus::encode_sample(&t.vocab, s);
                    (encoded.x, t.vocab.render(&encoded.y))
                }
                // Table models ignore the source; targets compare as text.
                LoadedModel::Table(_) => (Vec::new(), s.target.clone()),
            };
            DecodeInput {
                id: i.to_string(),
                lemma: s.lemma.clone(),
                msd: s.msd.join(";"),
                x,
                gold,
            }
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn decode_one<M: SequenceModel>(
    model: &M,
    render: &dyn Fn(&[SymbolId]) -> String,
    input: &DecodeInput,
    strategies: &[Strategy],
    base_cfg: &DecodeConfig,
    bound_width: Option<usize>,
    failures: &mut usize,
) -> Result<PredictionRecord, CliError> {
    let empty_log_prob = model
        .empty_string_log_prob(&input.x)
        .map_err(|e| CliError::Runtime(format!("sample {}: {}", input.id, e)))?;
    let mut results = BTreeMap::new();
    for &strategy in strategies {
        let mut cfg = base_cfg.clone();
        if strategy == Strategy::Exact {
            if let Some(width) = bound_width {
                let bound = beam_decode(model, &input.x, &DecodeConfig::with_beam(width))
                    .map_err(|e| CliError::Runtime(format!("sample {}: {}", input.id, e)))?;
                cfg.lower_bound = Some(bound.score);
                cfg.bound_witness = Some(mitd_core::Hypothesis {
                    prefix: bound.y,
                    score: bound.score,
                    complete: true,
                });
            }
        }
        let outcome: Result<DecodeResult, DecodeError> = decode(model, &input.x, strategy, &cfg);
        let result = match outcome {
            Ok(r) => StrategyResult {
                y_hat: render(&r.y),
                score: r.score,
                seconds: r.stats.seconds,
                nodes: r.stats.nodes_expanded,
            },
            Err(DecodeError::QueueCapacityExceeded { best_so_far, .. }) => {
                // Record the failure and keep decoding the rest of the file.
                *failures += 1;
                match best_so_far {
                    Some(h) => StrategyResult {
                        y_hat: render(&h.prefix),
                        score: f64::NAN,
                        seconds: 0.0,
                        nodes: 0,
                    },
                    None => StrategyResult {
                        y_hat: String::new(),
                        score: f64::NAN,
                        seconds: 0.0,
                        nodes: 0,
                    },
                }
            }
            Err(e) => {
                return Err(CliError::Runtime(format!(
                    "sample {} strategy {}: {}",
                    input.id, strategy, e
                )))
            }
        };
        results.insert(strategy, result);
    }
    Ok(PredictionRecord {
        sample_id: input.id.clone(),
        gold: input.gold.clone(),
        empty_log_prob,
        results,
    })
}

fn decode_all<M: SequenceModel>(
    model: &M,
    render: &dyn Fn(&[SymbolId]) -> String,
    inputs: &[DecodeInput],
    strategies: &[Strategy],
    base_cfg: &DecodeConfig,
    bound_width: Option<usize>,
) -> Result<(Vec<PredictionRecord>, usize), CliError> {
    let mut failures = 0usize;
    let mut records = Vec::with_capacity(inputs.len());
    for input in inputs {
        records.push(decode_one(
            model,
            render,
            input,
            strategies,
            base_cfg,
            bound_width,
            &mut failures,
        )?);
    }
    Ok((records, failures))
}

/// Decode `--test` with every requested strategy and write predictions plus
/// analysis records. Queue-capacity failures become per-sample failure rows
/// and the run continues.
pub fn cmd_decode(args: &DecodeArgs) -> Result<DecodeSummary, CliError> {
    let model = load_decode_model(&args.model)?;
    let samples = parse_corpus(&args.test)?;
    let strategies = parse_strategies(&args.strategies)?;
    let bound_width = parse_lower_bound(&args.lower_bound)?;
    let base_cfg = DecodeConfig {
        beam_width: 1,
        max_len: args.max_len,
        lower_bound: None,
        bound_witness: None,
        queue_capacity: args.queue_capacity,
    };
    let inputs = decode_inputs(&model, &samples);
    let (records, failures) = match &model {
        LoadedModel::Trained(t) => {
            let vocab = t.vocab.clone();
            let render = move |ids: &[SymbolId]| vocab.render(ids);
            decode_all(
                t.as_ref(),
                &render,
                &inputs,
                &strategies,
                &base_cfg,
                bound_width,
            )?
        }
        LoadedModel::Table(table) => {
            let render = |ids: &[SymbolId]| table.render(ids);
            decode_all(table, &render, &inputs, &strategies, &base_cfg, bound_width)?
        }
    };

    let mut predictions = String::from("sample_id\tlemma\tmsd\tgold\tstrategy\ty_hat\tscore\n");
    for (input, record) in inputs.iter().zip(&records) {
        for (strategy, result) in &record.results {
            let _ = writeln!(
                predictions,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                input.id, input.lemma, input.msd, record.gold, strategy, result.y_hat, result.score,
            );
        }
    }
    write_file(&args.out, predictions.as_bytes())?;

    let set = RecordSet {
        name: args
            .records
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "records".into()),
        train_size: args.train_size,
        records,
    };
    write_file(&args.records, records_to_tsv(&set).as_bytes())?;

    if failures > 0 {
        eprintln!(
            "warning: {} exact decodes exceeded the queue capacity",
            failures
        );
    }
    println!(
        "decoded {} samples with {} strategies ({} failures)",
        inputs.len(),
        strategies.len(),
        failures
    );
    Ok(DecodeSummary {
        samples: inputs.len(),
        failures,
    })
}

/// Aggregate one or more records files into the calibration report CSV and
/// print an aligned rendering.
pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let mut sets = Vec::new();
    for path in &args.records {
        let text = read_file(path)?;
        let name = path
            .file_stem()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let set = records_from_tsv(&name, &text)
            .map_err(|e| CliError::Data(format!("{}: {}", path.display(), e)))?;
        sets.push(set);
    }
    let report = build_report(&sets)
        .map_err(|e| CliError::Data(format!("records analysis failed: {}", e)))?;
    write_file(&args.report, report.to_csv().as_bytes())?;
    print!("{}", report.to_aligned_text());
    Ok(())
}

/// Render the size-versus-empty-probability curve as an SVG.
pub fn cmd_plot(args: &PlotArgs) -> Result<(), CliError> {
    let mut sets = Vec::new();
    for path in &args.records {
        let text = read_file(path)?;
        let name = path.display().to_string();
        let set = records_from_tsv(&name, &text)
            .map_err(|e| CliError::Data(format!("{}: {}", path.display(), e)))?;
        if set.train_size.is_none() {
            return Err(CliError::Data(format!(
                "{}: records lack train_size metadata (pass --train-size to decode)",
                path.display()
            )));
        }
        sets.push(set);
    }
    let runs: Vec<(usize, &[PredictionRecord])> = sets
        .iter()
        .map(|s| (s.train_size.unwrap(), s.records.as_slice()))
        .collect();
    let points = size_vs_empty_curve(&runs)
        .map_err(|e| CliError::Data(format!("size curve failed: {}", e)))?;
    let image = svg::render_curve(&points);
    write_file(&args.out, image.as_bytes())?;
    println!("plotted {} points to {}", points.len(), args.out.display());
    Ok(())
}
