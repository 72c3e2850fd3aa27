//! Match taxonomy, the outcome-by-pitch-count report, model evaluation on
//! held-out pieces, and ASCII tablature.

use std::fmt::Write as _;

use ndarray::{Array2, Axis};
use rand::seq::index;
use thiserror::Error;

use crate::dataset::{corpus_to_examples, rng_for, streams, AugmentConfig, Piece, TrainingExample};
use crate::decoder::{decode_frame, transcribe_sequence, DecodeConfig, DecodeError, DecodeResult};
use crate::fretboard::{frame_to_midi, FretboardFrame, Tuning, FRET_COLUMNS, STRINGS};
use crate::nn::{forward_batch, ModelWeights, NnError, ProbabilisticTablature};
use crate::trainer::{to_matrices, TrainError};

/// Pitch-count columns 1..=6.
pub const PITCH_COLUMNS: usize = 6;
const EVAL_CHUNK: usize = 1024;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no samples to report on")]
    Empty,
    #[error("sample {index}: truth has {count} pitches, expected 1 to 6")]
    TruthPitchCount { index: usize, count: usize },
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Network(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatchOutcome {
    NoMatch,
    Partial,
    Match,
}

impl MatchOutcome {
    pub const ALL: [MatchOutcome; 3] = [MatchOutcome::NoMatch, MatchOutcome::Partial, MatchOutcome::Match];

    pub fn label(&self) -> &'static str {
        match self {
            MatchOutcome::NoMatch => "no match",
            MatchOutcome::Partial => "partial",
            MatchOutcome::Match => "match",
        }
    }

    fn row(&self) -> usize {
        *self as usize
    }
}

/// Exact match on identical cell sets, no match on disjoint ones.
pub fn classify_match(pred: &FretboardFrame, truth: &FretboardFrame) -> MatchOutcome {
    if pred == truth {
        MatchOutcome::Match
    } else if pred.overlap(truth) == 0 {
        MatchOutcome::NoMatch
    } else {
        MatchOutcome::Partial
    }
}

/// Outcome counts bucketed by the truth frame's pitch count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchReport {
    counts: [[usize; PITCH_COLUMNS]; 3],
    total: usize,
}

impl MatchReport {
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn count(&self, outcome: MatchOutcome, pitches: usize) -> usize {
        self.counts[outcome.row()][pitches - 1]
    }

    /// Fraction of all samples with this outcome and truth pitch count.
    pub fn fraction(&self, outcome: MatchOutcome, pitches: usize) -> f64 {
        self.count(outcome, pitches) as f64 / self.total as f64
    }

    pub fn column_fraction(&self, pitches: usize) -> f64 {
        MatchOutcome::ALL.iter().map(|&o| self.count(o, pitches)).sum::<usize>() as f64 / self.total as f64
    }

    pub fn outcome_fraction(&self, outcome: MatchOutcome) -> f64 {
        self.counts[outcome.row()].iter().sum::<usize>() as f64 / self.total as f64
    }

    /// Rows no match, partial, match, sum; columns 1..=6 pitches, sum.
    pub fn grid(&self) -> [[f64; PITCH_COLUMNS + 1]; 4] {
        let mut g = [[0.0; PITCH_COLUMNS + 1]; 4];
        for o in MatchOutcome::ALL {
            for c in 1..=PITCH_COLUMNS {
                g[o.row()][c - 1] = self.fraction(o, c);
            }
            g[o.row()][PITCH_COLUMNS] = self.outcome_fraction(o);
        }
        for c in 1..=PITCH_COLUMNS {
            g[3][c - 1] = self.column_fraction(c);
        }
        g[3][PITCH_COLUMNS] = 1.0;
        g
    }

    pub fn rounded_grid(&self) -> [[f64; PITCH_COLUMNS + 1]; 4] {
        self.grid().map(|row| row.map(|v| (v * 100.0).round() / 100.0))
    }

    fn row_labels() -> [&'static str; 4] {
        ["no match", "partial", "match", "sum"]
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("outcome\t1\t2\t3\t4\t5\t6\tsum\n");
        for (label, row) in Self::row_labels().iter().zip(self.rounded_grid()) {
            out.push_str(label);
            for v in row {
                write!(out, "\t{v:.2}").expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }

    /// Plain-text table. `title` goes on the first line.
    pub fn to_table(&self, title: &str) -> String {
        let mut out = format!("{title}\n");
        writeln!(out, "truth = pre-augmentation frame; columns = truth pitch count; n = {}", self.total)
            .expect("writing to a String");
        write!(out, "{:<10}", "").expect("writing to a String");
        for h in ["1", "2", "3", "4", "5", "6", "sum"] {
            write!(out, "{h:>6}").expect("writing to a String");
        }
        out.push('\n');
        for (label, row) in Self::row_labels().iter().zip(self.rounded_grid()) {
            write!(out, "{label:<10}").expect("writing to a String");
            for v in row {
                write!(out, "{v:>6.2}").expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }
}

/// Aggregates `(prediction, truth)` pairs.
pub fn build_report(samples: &[(FretboardFrame, FretboardFrame)]) -> Result<MatchReport, ReportError> {
    if samples.is_empty() {
        return Err(ReportError::Empty);
    }
    let tuning = Tuning::standard();
    let mut counts = [[0usize; PITCH_COLUMNS]; 3];
    for (index, (pred, truth)) in samples.iter().enumerate() {
        let count = frame_to_midi(truth, &tuning).len();
        if !(1..=PITCH_COLUMNS).contains(&count) {
            return Err(ReportError::TruthPitchCount { index, count });
        }
        counts[classify_match(pred, truth).row()][count - 1] += 1;
    }
    Ok(MatchReport {
        counts,
        total: samples.len(),
    })
}

/// Where the history frames come from when evaluating a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HistorySource {
    /// True previous frames, as during training.
    #[default]
    GroundTruth,
    /// The model's own previous decisions.
    Decoded,
}

impl std::str::FromStr for HistorySource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ground-truth" => Ok(HistorySource::GroundTruth),
            "decoded" => Ok(HistorySource::Decoded),
            other => Err(format!("unknown history source {other:?} (ground-truth | decoded)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub samples: usize,
    pub decode: DecodeConfig,
    /// Augments the requested pitches; truth stays the original frame.
    pub augment: Option<AugmentConfig>,
    pub history: HistorySource,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            samples: 5000,
            decode: DecodeConfig::default(),
            augment: None,
            history: HistorySource::GroundTruth,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MatchReport,
    /// `(prediction, truth)` in sampling order.
    pub samples: Vec<(FretboardFrame, FretboardFrame)>,
}

/// Decodes up to `cfg.samples` frames drawn uniformly without replacement
/// from `pieces` and reports them against the original frames.
pub fn evaluate_model(
    weights: &ModelWeights<f32>,
    pieces: &[Piece],
    cfg: &EvalConfig,
) -> Result<Evaluation, ReportError> {
    let examples = corpus_to_examples(pieces, crate::decoder::HISTORY_FRAMES, cfg.augment.as_ref())?;
    if examples.is_empty() {
        return Err(ReportError::Empty);
    }
    let n = examples.len();
    let mut picked: Vec<usize> = if cfg.samples >= n {
        (0..n).collect()
    } else {
        index::sample(&mut rng_for(cfg.seed, streams::SAMPLE), n, cfg.samples).into_vec()
    };
    picked.sort_unstable();

    let predictions: Vec<FretboardFrame> = match cfg.history {
        HistorySource::GroundTruth => {
            let chosen: Vec<TrainingExample> = picked.iter().map(|&i| examples[i].clone()).collect();
            decode_examples(weights, &chosen, &cfg.decode)?
        }
        HistorySource::Decoded => {
            let mut all = Vec::with_capacity(n);
            let mut offset = 0;
            for piece in pieces {
                let requested: Vec<_> = examples[offset..offset + piece.frames.len()].iter().map(|e| e.midi()).collect();
                offset += piece.frames.len();
                all.extend(transcribe_sequence(&requested, weights, &cfg.decode)?.into_iter().map(|r| r.frame));
            }
            picked.iter().map(|&i| all[i]).collect()
        }
    };
    let samples: Vec<(FretboardFrame, FretboardFrame)> = picked
        .iter()
        .zip(predictions)
        .map(|(&i, pred)| (pred, examples[i].target_frame()))
        .collect();
    Ok(Evaluation {
        report: build_report(&samples)?,
        samples,
    })
}

/// Batched forward pass over examples, then one decode per example using its
/// own requested pitches.
pub fn decode_examples(
    weights: &ModelWeights<f32>,
    examples: &[TrainingExample],
    cfg: &DecodeConfig,
) -> Result<Vec<FretboardFrame>, ReportError> {
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(EVAL_CHUNK) {
        let (x, _): (Array2<f32>, _) = to_matrices(chunk)?;
        let p = forward_batch(weights, x.view())?;
        for (e, row) in chunk.iter().zip(p.axis_iter(Axis(0))) {
            let map = ProbabilisticTablature::from_values(row.iter().map(|&v| v as f64).collect())?;
            out.push(decode_frame(&e.midi(), &map, cfg).frame);
        }
    }
    Ok(out)
}

const STRING_LABELS: [char; STRINGS] = ['E', 'A', 'D', 'G', 'B', 'e'];

/// Six lines, high e on top. Each frame takes a column as wide as its widest
/// fret number, preceded by a dash; a closing dash ends non-empty lines.
pub fn render_frames(frames: &[FretboardFrame]) -> String {
    let mut lines: Vec<String> = STRING_LABELS.iter().map(|l| format!("{l}|")).collect();
    for frame in frames {
        let width = frame.frets().iter().flatten().map(|f| f.to_string().len()).max().unwrap_or(1);
        for (s, line) in lines.iter_mut().enumerate() {
            line.push('-');
            match frame.fret(s) {
                Some(f) => write!(line, "{f:->width$}").expect("writing to a String"),
                None => line.push_str(&"-".repeat(width)),
            }
        }
    }
    if !frames.is_empty() {
        lines.iter_mut().for_each(|l| l.push('-'));
    }
    let mut out = String::new();
    for line in lines.iter().rev() {
        out.push_str(line);
        out.push('\n');
    }
    out
}

pub fn render_ascii_tab(results: &[DecodeResult]) -> String {
    render_frames(&results.iter().map(|r| r.frame).collect::<Vec<_>>())
}

/// Rows of a probabilistic tablature, high string on top, for inspection.
pub fn render_probabilities(p: &ProbabilisticTablature) -> String {
    let mut out = String::new();
    for (s, row) in p.rows().enumerate().collect::<Vec<_>>().into_iter().rev() {
        write!(out, "{}|", STRING_LABELS[s]).expect("writing to a String");
        for v in row.iter().take(FRET_COLUMNS) {
            write!(out, " {v:.2}").expect("writing to a String");
        }
        out.push('\n');
    }
    out
}
