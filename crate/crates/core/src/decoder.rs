//! Turns a probabilistic tablature plus requested pitches into one binary
//! frame: argmax of `p · b_k` over the playable candidates `b_k`.

use std::cmp::Ordering;

use thiserror::Error;

use crate::fretboard::{fold_to_range, frame_to_midi, FretboardFrame, MidiPitchSet, Tuning, MIDI_PITCHES, FLAT_LEN};
use crate::nn::{forward, ModelWeights, NnError, ProbabilisticTablature, INPUT_LEN};
use crate::playability::{candidate_frames, frames_for_subsets, CandidateSet, PlayabilityConfig};

pub const HISTORY_FRAMES: usize = 4;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("no candidate frames to choose from")]
    NoCandidates,
    #[error(transparent)]
    Network(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecodeMode {
    /// Realize as many pitches as possible, then score.
    #[default]
    Greedy,
    /// Score every realizable pitch count by mean probability per pitch.
    ExhaustiveN,
}

impl std::str::FromStr for DecodeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greedy" => Ok(DecodeMode::Greedy),
            "exhaustive-n" | "exhaustive_n" => Ok(DecodeMode::ExhaustiveN),
            other => Err(format!("unknown decode mode {other:?} (greedy | exhaustive-n)")),
        }
    }
}

/// Tie-breaking rule applied among equal scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Smaller maximum fret, then smaller fret sum, then smaller flattened
    /// bit vector.
    #[default]
    LowPosition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DecodeConfig {
    pub mode: DecodeMode,
    pub tie_break: TieBreak,
    pub playability: PlayabilityConfig,
    pub tuning: Tuning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub frame: FretboardFrame,
    pub n_realized: usize,
    pub score: f64,
    /// Folded requested pitches that the frame does not sound.
    pub dropped_pitches: MidiPitchSet,
}

/// Sum of `p` over the active cells of `b`.
pub fn score(p: &ProbabilisticTablature, b: &FretboardFrame) -> f64 {
    b.cells().map(|c| p.get(c.string, c.fret)).sum()
}

fn tie_order(a: &FretboardFrame, b: &FretboardFrame, rule: TieBreak) -> Ordering {
    match rule {
        TieBreak::LowPosition => a
            .max_fret()
            .cmp(&b.max_fret())
            .then(a.fret_sum().cmp(&b.fret_sum()))
            .then(a.cmp(b)),
    }
}

/// Whether `(score_a, a)` beats `(score_b, b)`.
fn better(score_a: f64, a: &FretboardFrame, score_b: f64, b: &FretboardFrame, rule: TieBreak) -> bool {
    match score_a.partial_cmp(&score_b) {
        Some(Ordering::Greater) => true,
        Some(Ordering::Less) => false,
        _ => tie_order(a, b, rule) == Ordering::Less,
    }
}

fn best_of<'a>(
    p: &ProbabilisticTablature,
    frames: &'a [FretboardFrame],
    rule: TieBreak,
) -> Option<(&'a FretboardFrame, f64)> {
    let mut best: Option<(&FretboardFrame, f64)> = None;
    for f in frames {
        let s = score(p, f);
        match best {
            Some((bf, bs)) if !better(s, f, bs, bf, rule) => {}
            _ => best = Some((f, s)),
        }
    }
    best
}

pub fn select_best(
    p: &ProbabilisticTablature,
    candidates: &CandidateSet,
    tie_break: TieBreak,
) -> Result<FretboardFrame, DecodeError> {
    best_of(p, &candidates.frames, tie_break)
        .map(|(f, _)| *f)
        .ok_or(DecodeError::NoCandidates)
}

fn result_for(frame: FretboardFrame, score: f64, folded: &MidiPitchSet, tuning: &Tuning) -> DecodeResult {
    let realized = frame_to_midi(&frame, tuning);
    DecodeResult {
        frame,
        n_realized: realized.len(),
        score,
        dropped_pitches: folded.difference(&realized),
    }
}

/// Decodes one frame. Arbitrary pitch sets are accepted: pitches outside the
/// fretboard are folded by octaves and unplayable subsets are dropped.
pub fn decode_frame(pitches: &MidiPitchSet, p: &ProbabilisticTablature, cfg: &DecodeConfig) -> DecodeResult {
    let tuning = &cfg.tuning;
    let folded = fold_to_range(pitches, tuning);
    if folded.is_empty() {
        return result_for(FretboardFrame::empty(), 0.0, &folded, tuning);
    }
    let greedy = candidate_frames(&folded, tuning, &cfg.playability);
    let (frame, s) = best_of(p, &greedy.frames, cfg.tie_break).expect("candidate set is never empty");
    let (mut best_frame, mut best_score) = (*frame, s);
    if cfg.mode == DecodeMode::ExhaustiveN && greedy.n_used > 1 {
        // Compare mean probability per realized pitch across smaller N. On
        // equal means the larger N (fewer dropped pitches) is kept.
        let mut best_norm = best_score / greedy.n_used as f64;
        for n in (1..greedy.n_used).rev() {
            let frames = frames_for_subsets(&folded, n, tuning, &cfg.playability);
            if let Some((f, s)) = best_of(p, &frames, cfg.tie_break) {
                let norm = s / n as f64;
                if norm > best_norm {
                    best_norm = norm;
                    best_frame = *f;
                    best_score = s;
                }
            }
        }
    }
    result_for(best_frame, best_score, &folded, tuning)
}

/// Network input: 128 MIDI bits, then the history frames oldest first,
/// 150 bits each. Missing history is zero.
pub fn build_input(pitches: &MidiPitchSet, history: &[FretboardFrame]) -> Vec<f32> {
    let mut input = vec![0.0f32; INPUT_LEN];
    for p in pitches.iter() {
        input[p as usize] = 1.0;
    }
    let pad = HISTORY_FRAMES.saturating_sub(history.len());
    let recent = &history[history.len().saturating_sub(HISTORY_FRAMES)..];
    for (slot, frame) in (pad..HISTORY_FRAMES).zip(recent) {
        let base = MIDI_PITCHES + slot * FLAT_LEN;
        for (i, &bit) in frame.flatten().bits().iter().enumerate() {
            input[base + i] = bit as f32;
        }
    }
    input
}

/// Closed-loop transcription: each decoded frame becomes history for the
/// next one.
pub fn transcribe_sequence(
    frames: &[MidiPitchSet],
    weights: &ModelWeights<f32>,
    cfg: &DecodeConfig,
) -> Result<Vec<DecodeResult>, DecodeError> {
    weights.validate()?;
    let mut history: Vec<FretboardFrame> = Vec::with_capacity(HISTORY_FRAMES);
    let mut out = Vec::with_capacity(frames.len());
    for pitches in frames {
        let input = build_input(pitches, &history);
        let p = forward(weights, &input)?;
        let result = decode_frame(pitches, &p, cfg);
        if history.len() == HISTORY_FRAMES {
            history.remove(0);
        }
        history.push(result.frame);
        out.push(result);
    }
    Ok(out)
}
