//! `tabforge` command line. Exit codes: 0 success, 1 usage, 2 data or parse
//! error, 3 numeric failure (divergence, failed gradient check).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::dataset::{
    self, corpus_to_examples, load_corpus, save_corpus, split_corpus, synth_corpus, AugmentConfig, DatasetError,
    Piece, DEFAULT_RATIOS,
};
use crate::decoder::{transcribe_sequence, DecodeConfig, DecodeError, DecodeMode, HISTORY_FRAMES};
use crate::midi::{events_to_frames_with, read_frame_jsonl, read_smf, write_frame_jsonl, FrameOptions, FrameRecord, MidiError};
use crate::nn::gradcheck::{run_gradient_suite, DEFAULT_EPSILON, DEFAULT_TOLERANCE};
use crate::nn::{load_weights, save_weights, ModelWeights, WeightsError};
use crate::playability::PlayabilityConfig;
use crate::report::{evaluate_model, render_ascii_tab, EvalConfig, HistorySource, ReportError};
use crate::trainer::{train_with_progress, TrainConfig, TrainError};

#[derive(Debug, Parser)]
#[command(name = "tabforge", version, about = "MIDI to guitar tablature with a learned fingering model")]
pub struct Cli {
    /// Seed for every random choice (corpus, init, shuffling, augmentation, sampling).
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Progress output on stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    /// Worker threads for per-piece example generation (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic tablature corpus (JSONL).
    Synth(SynthArgs),
    /// Convert a Standard MIDI File to frame JSONL.
    Ingest(IngestArgs),
    /// Write the corpus' MIDI frames with random interval insertions (frame JSONL).
    Augment(AugmentArgs),
    /// Train a model on a corpus; writes weights and a CSV log.
    Train(TrainArgs),
    /// Evaluate a model on the corpus' test split and print the match report.
    Eval(EvalArgs),
    /// Transcribe a MIDI file or frame JSONL into ASCII tablature.
    Transcribe(TranscribeArgs),
    /// Finite-difference check of every layer's gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of pieces.
    #[arg(long, default_value_t = 100)]
    pub pieces: usize,
    /// Frames per piece.
    #[arg(long, default_value_t = 50)]
    pub frames: usize,
    /// Corpus JSONL to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Standard MIDI File to read.
    #[arg(long)]
    pub midi: PathBuf,
    /// Onsets closer than this many ticks share a frame.
    #[arg(long, default_value_t = crate::midi::DEFAULT_QUANTIZE)]
    pub quantize: u64,
    /// Keep notes on MIDI channel 10.
    #[arg(long)]
    pub include_percussion: bool,
    /// Frame JSONL to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Tablature corpus JSONL.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Per-frame probability of inserting interval-related pitches.
    #[arg(long, default_value_t = 0.5)]
    pub prob: f64,
    /// Frame JSONL to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Tablature corpus JSONL.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Training epochs.
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    /// Mini-batch size.
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// History frames in the network input; the network takes exactly 4.
    #[arg(long, default_value_t = HISTORY_FRAMES)]
    pub history: usize,
    /// Interval-insertion probability for training and validation inputs.
    #[arg(long, default_value_t = 0.0)]
    pub augment_prob: f64,
    /// Where to write the best-validation weights.
    #[arg(long)]
    pub weights: PathBuf,
    /// Per-epoch CSV log (epoch, losses, accuracies).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Tablature corpus JSONL.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Weights file written by train.
    #[arg(long)]
    pub weights: PathBuf,
    /// Frames sampled (without replacement) for the report.
    #[arg(long, default_value_t = 5000)]
    pub samples: usize,
    /// greedy | exhaustive-n
    #[arg(long, default_value = "greedy")]
    pub mode: DecodeMode,
    /// Interval-insertion probability for the requested pitches.
    #[arg(long, default_value_t = 0.0)]
    pub augment_prob: f64,
    /// ground-truth | decoded
    #[arg(long, default_value = "ground-truth")]
    pub history: HistorySource,
    /// Evaluate every piece instead of the test split.
    #[arg(long)]
    pub all: bool,
    /// Also write the report as TSV.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TranscribeArgs {
    /// Standard MIDI File input.
    #[arg(long, conflicts_with = "frames", required_unless_present = "frames")]
    pub midi: Option<PathBuf>,
    /// Frame JSONL input (one tab per line).
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// Weights file written by train.
    #[arg(long)]
    pub weights: PathBuf,
    /// greedy | exhaustive-n
    #[arg(long, default_value = "greedy")]
    pub mode: DecodeMode,
    /// Consecutive fret positions one hand position covers.
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u8).range(1..=25))]
    pub fret_window: u8,
    /// Onsets closer than this many ticks share a frame (MIDI input only).
    #[arg(long, default_value_t = crate::midi::DEFAULT_QUANTIZE)]
    pub quantize: u64,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Random instances per layer type.
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    /// Central-difference step.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Maximum accepted relative error.
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    pub tolerance: f64,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

fn data(context: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", context.display()))
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } | TrainError::Network(_) => CliError::Numeric(e.to_string()),
            TrainError::Config(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<DecodeError> for CliError {
    fn from(e: DecodeError) -> Self {
        match e {
            DecodeError::Network(_) => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Network(_) => CliError::Numeric(e.to_string()),
            ReportError::Decode(d) => d.into(),
            ReportError::Train(t) => t.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Synth(a) => synth(cli, a),
        Command::Ingest(a) => ingest(a),
        Command::Augment(a) => augment(cli, a),
        Command::Train(a) => train(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Transcribe(a) => transcribe(a),
        Command::Gradcheck(a) => gradcheck(cli, a),
    })
}

fn check_probability(name: &str, p: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{name} must be in [0, 1], got {p}")))
    }
}

fn read_corpus(path: &Path) -> Result<Vec<Piece>, CliError> {
    let pieces = load_corpus(path).map_err(|e| data(path, e))?;
    if pieces.is_empty() {
        return Err(data(path, "corpus is empty"));
    }
    Ok(pieces)
}

fn read_model(path: &Path) -> Result<ModelWeights<f32>, CliError> {
    load_weights(path).map_err(|e: WeightsError| data(path, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| data(path, e))
}

/// Train/validation/test split; corpora too small to split use every piece
/// for all three.
fn split(pieces: &[Piece], seed: u64) -> Result<dataset::Split, CliError> {
    match split_corpus(pieces, DEFAULT_RATIOS, seed) {
        Ok(s) if !s.0.is_empty() && !s.1.is_empty() && !s.2.is_empty() => Ok(s),
        Ok(_) | Err(DatasetError::TooFewPieces(_)) => Ok((pieces.to_vec(), pieces.to_vec(), pieces.to_vec())),
        Err(e) => Err(CliError::Data(e.to_string())),
    }
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<(), CliError> {
    if a.pieces == 0 || a.frames == 0 {
        return Err(CliError::Usage("--pieces and --frames must be at least 1".into()));
    }
    let corpus = synth_corpus(cli.seed, a.pieces, a.frames);
    save_corpus(&corpus, &a.out).map_err(|e| data(&a.out, e))?;
    println!("wrote {} pieces × {} frames to {}", a.pieces, a.frames, a.out.display());
    Ok(())
}

fn ingest(a: &IngestArgs) -> Result<(), CliError> {
    let events = read_smf(&a.midi).map_err(|e: MidiError| data(&a.midi, e))?;
    let opts = FrameOptions {
        quantize: a.quantize,
        include_percussion: a.include_percussion,
    };
    let seq = events_to_frames_with(&events, &opts);
    let id = a.midi.file_stem().map(|s| s.to_string_lossy().into_owned());
    write_frame_jsonl(&a.out, &[FrameRecord::from_sequence(id, &seq)]).map_err(|e| data(&a.out, e))?;
    println!("{} note events → {} frames → {}", events.len(), seq.len(), a.out.display());
    Ok(())
}

fn augment(cli: &Cli, a: &AugmentArgs) -> Result<(), CliError> {
    check_probability("--prob", a.prob)?;
    let pieces = read_corpus(&a.corpus)?;
    let cfg = AugmentConfig::new(a.prob, cli.seed);
    let examples = corpus_to_examples(&pieces, HISTORY_FRAMES, Some(&cfg)).map_err(|e| data(&a.corpus, e))?;
    let mut records = Vec::with_capacity(pieces.len());
    let mut offset = 0;
    for p in &pieces {
        let frames = examples[offset..offset + p.frames.len()].iter().map(|e| e.midi().to_vec()).collect();
        offset += p.frames.len();
        records.push(FrameRecord {
            id: Some(p.id.clone()),
            frames,
        });
    }
    write_frame_jsonl(&a.out, &records).map_err(|e| data(&a.out, e))?;
    println!("augmented {} pieces ({} frames) → {}", pieces.len(), examples.len(), a.out.display());
    Ok(())
}

fn train(cli: &Cli, a: &TrainArgs) -> Result<(), CliError> {
    if a.history != HISTORY_FRAMES {
        return Err(CliError::Usage(format!(
            "--history {}: the network input holds exactly {HISTORY_FRAMES} history frames",
            a.history
        )));
    }
    check_probability("--augment-prob", a.augment_prob)?;
    let pieces = read_corpus(&a.corpus)?;
    let (train_set, val_set, _) = split(&pieces, cli.seed)?;
    let (train_aug, val_aug) = if a.augment_prob > 0.0 {
        (
            Some(AugmentConfig::new(a.augment_prob, cli.seed)),
            Some(AugmentConfig::new(a.augment_prob, cli.seed.wrapping_add(1))),
        )
    } else {
        (None, None)
    };
    let tr = corpus_to_examples(&train_set, a.history, train_aug.as_ref()).map_err(|e| data(&a.corpus, e))?;
    let va = corpus_to_examples(&val_set, a.history, val_aug.as_ref()).map_err(|e| data(&a.corpus, e))?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        learning_rate: a.lr,
        seed: cli.seed,
        shuffle: true,
    };
    cfg.validate()?;
    if cli.verbose {
        eprintln!("{} training / {} validation examples", tr.len(), va.len());
    }
    let verbose = cli.verbose;
    let (weights, log) = train_with_progress(&ModelWeights::init(cli.seed), &tr, &va, &cfg, |r| {
        if verbose {
            eprintln!(
                "epoch {:>4}  train {:.6} ({:.4})  val {:.6} ({:.4})",
                r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy
            );
        }
    })?;
    save_weights(&weights, &a.weights).map_err(|e| data(&a.weights, e))?;
    if let Some(path) = &a.log {
        log.write_csv(path).map_err(|e| data(path, e))?;
    }
    let best = log.best();
    println!(
        "best epoch {} of {}: val loss {:.6}, val accuracy {:.4} → {}",
        best.epoch,
        log.records.len(),
        best.val_loss,
        best.val_accuracy,
        a.weights.display()
    );
    Ok(())
}

fn eval(cli: &Cli, a: &EvalArgs) -> Result<(), CliError> {
    check_probability("--augment-prob", a.augment_prob)?;
    if a.samples == 0 {
        return Err(CliError::Usage("--samples must be at least 1".into()));
    }
    let pieces = read_corpus(&a.corpus)?;
    let weights = read_model(&a.weights)?;
    let test = if a.all { pieces } else { split(&pieces, cli.seed)?.2 };
    let cfg = EvalConfig {
        samples: a.samples,
        decode: DecodeConfig {
            mode: a.mode,
            ..DecodeConfig::default()
        },
        augment: (a.augment_prob > 0.0).then(|| AugmentConfig::new(a.augment_prob, cli.seed)),
        history: a.history,
        seed: cli.seed,
    };
    let result = evaluate_model(&weights, &test, &cfg)?;
    let title = format!(
        "{} frames from {} pieces; augment {}; history {}; mode {}",
        result.report.total(),
        test.len(),
        a.augment_prob,
        match a.history {
            HistorySource::GroundTruth => "ground-truth",
            HistorySource::Decoded => "decoded",
        },
        match a.mode {
            DecodeMode::Greedy => "greedy",
            DecodeMode::ExhaustiveN => "exhaustive-n",
        }
    );
    print!("{}", result.report.to_table(&title));
    if let Some(path) = &a.report {
        write_file(path, result.report.to_tsv())?;
    }
    Ok(())
}

fn transcribe(a: &TranscribeArgs) -> Result<(), CliError> {
    let weights = read_model(&a.weights)?;
    let sequences: Vec<(Option<String>, Vec<_>)> = if let Some(path) = &a.midi {
        let events = read_smf(path).map_err(|e| data(path, e))?;
        let opts = FrameOptions {
            quantize: a.quantize,
            ..FrameOptions::default()
        };
        vec![(None, events_to_frames_with(&events, &opts).frames)]
    } else {
        let path = a.frames.as_ref().expect("clap requires one input");
        read_frame_jsonl(path)
            .map_err(|e| data(path, e))?
            .into_iter()
            .map(|r| (r.id.clone(), r.to_sequence().frames))
            .collect()
    };
    let cfg = DecodeConfig {
        mode: a.mode,
        playability: PlayabilityConfig::with_window(a.fret_window),
        ..DecodeConfig::default()
    };
    let mut out = String::new();
    let mut dropped = 0;
    for (id, frames) in &sequences {
        let results = transcribe_sequence(frames, &weights, &cfg)?;
        dropped += results.iter().map(|r| r.dropped_pitches.len()).sum::<usize>();
        if let Some(id) = id {
            out.push_str(&format!("# {id}\n"));
        }
        out.push_str(&render_ascii_tab(&results));
    }
    match &a.out {
        Some(path) => write_file(path, &out)?,
        None => print!("{out}"),
    }
    if dropped > 0 {
        eprintln!("{dropped} requested pitches could not be placed and were dropped");
    }
    Ok(())
}

fn gradcheck(cli: &Cli, a: &GradcheckArgs) -> Result<(), CliError> {
    if a.instances == 0 || a.epsilon <= 0.0 || a.tolerance <= 0.0 {
        return Err(CliError::Usage("--instances, --epsilon and --tolerance must be positive".into()));
    }
    let report = run_gradient_suite(a.instances, cli.seed, a.epsilon, a.tolerance);
    print!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Numeric(format!("gradient check failed (tolerance {:e})", a.tolerance)))
    }
}
