//! Corpus handling: pieces of tablature frames, training-example
//! construction with history windows and pitch augmentation, splitting, and
//! the on-disk formats.
//!
//! Corpus JSONL, one piece per line:
//!
//! ```text
//! {"id": "piece-0001", "frames": [[[string, fret], ...], ...]}
//! ```
//!
//! Example cache (`.tfex`, integers little-endian):
//!
//! ```text
//! "TFEX"        4 bytes magic
//! version       u32 (= 1)
//! input_bits    u32
//! target_bits   u32
//! count         u64
//! count × { input packed LSB-first in ceil(input_bits/8) bytes,
//!           target packed LSB-first in ceil(target_bits/8) bytes }
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fretboard::{
    frame_to_midi, FretboardFrame, MidiPitchSet, Tuning, FLAT_LEN, MAX_FRET, MIDI_PITCHES, STRINGS,
};
use crate::playability::{is_playable, PlayabilityConfig};

pub const DEFAULT_HISTORY: usize = 4;
pub const EXAMPLE_MAGIC: &[u8; 4] = b"TFEX";
pub const EXAMPLE_VERSION: u32 = 1;

/// RNG stream ids; each purpose draws from its own stream so toggling one
/// does not perturb the others.
pub mod streams {
    pub const AUGMENT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const SYNTH: u64 = 3;
    pub const TRAIN: u64 = 4;
    pub const SAMPLE: u64 = 5;
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("piece {0:?} has no frames")]
    EmptyPiece(String),
    #[error("need at least 3 pieces to split, got {0}")]
    TooFewPieces(usize),
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios((f64, f64, f64)),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("example cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Piece {
    pub id: String,
    pub frames: Vec<FretboardFrame>,
}

impl Piece {
    pub fn new(id: impl Into<String>, frames: Vec<FretboardFrame>) -> Result<Self, DatasetError> {
        let id = id.into();
        if frames.is_empty() {
            return Err(DatasetError::EmptyPiece(id));
        }
        Ok(Piece { id, frames })
    }
}

/// One `(input, target)` pair. `input` is the MIDI bits followed by the
/// history frames oldest-first; `target` is the flattened frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingExample {
    pub input: Vec<u8>,
    pub target: Vec<u8>,
}

impl TrainingExample {
    pub fn midi(&self) -> MidiPitchSet {
        MidiPitchSet::from_bits(&self.input[..MIDI_PITCHES])
    }

    pub fn target_frame(&self) -> FretboardFrame {
        FretboardFrame::unflatten(&self.target).expect("targets are built from valid frames")
    }

    /// History frames oldest-first, including zero padding.
    pub fn history(&self) -> Vec<FretboardFrame> {
        self.input[MIDI_PITCHES..]
            .chunks(FLAT_LEN)
            .map(|c| FretboardFrame::unflatten(c).expect("history built from valid frames"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub probability: f64,
    /// Semitone offsets drawn uniformly.
    pub intervals: Vec<i8>,
    pub seed: u64,
}

impl AugmentConfig {
    /// Octave up and down, then fifth, fourth, major/minor third and
    /// major/minor sixth upward.
    pub const DEFAULT_INTERVALS: [i8; 8] = [12, -12, 7, 5, 4, 3, 9, 8];

    pub fn new(probability: f64, seed: u64) -> Self {
        assert!((0.0..=1.0).contains(&probability), "probability must be in [0, 1]");
        AugmentConfig {
            probability,
            intervals: Self::DEFAULT_INTERVALS.to_vec(),
            seed,
        }
    }
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self::new(0.5, 0)
    }
}

/// For each original pitch, with `cfg.probability` adds one pitch at a
/// uniformly drawn interval. Originals are always kept; added pitches outside
/// 0..=127 are discarded.
pub fn augment_pitches<R: Rng + ?Sized>(pitches: &MidiPitchSet, cfg: &AugmentConfig, rng: &mut R) -> MidiPitchSet {
    let mut out = pitches.clone();
    if cfg.intervals.is_empty() {
        return out;
    }
    for p in pitches.iter() {
        if cfg.probability > 0.0 && rng.random_bool(cfg.probability) {
            let interval = cfg.intervals[rng.random_range(0..cfg.intervals.len())];
            let shifted = p as i16 + interval as i16;
            if (0..MIDI_PITCHES as i16).contains(&shifted) {
                out.insert(shifted as u8);
            }
        }
    }
    out
}

/// One example per frame, using the true previous frames as history.
pub fn piece_to_examples(
    piece: &Piece,
    history: usize,
    augment: Option<&AugmentConfig>,
) -> Result<Vec<TrainingExample>, DatasetError> {
    let mut rng = rng_for(augment.map_or(0, |a| a.seed), streams::AUGMENT);
    piece_to_examples_with_rng(piece, history, augment, &mut rng)
}

pub fn piece_to_examples_with_rng<R: Rng + ?Sized>(
    piece: &Piece,
    history: usize,
    augment: Option<&AugmentConfig>,
    rng: &mut R,
) -> Result<Vec<TrainingExample>, DatasetError> {
    if piece.frames.is_empty() {
        return Err(DatasetError::EmptyPiece(piece.id.clone()));
    }
    let tuning = Tuning::standard();
    let zero = FretboardFrame::empty();
    let input_len = MIDI_PITCHES + history * FLAT_LEN;
    let mut out = Vec::with_capacity(piece.frames.len());
    for (t, frame) in piece.frames.iter().enumerate() {
        let mut input = vec![0u8; input_len];
        let mut midi = frame_to_midi(frame, &tuning);
        if let Some(cfg) = augment {
            midi = augment_pitches(&midi, cfg, rng);
        }
        input[..MIDI_PITCHES].copy_from_slice(&midi.to_bits());
        for slot in 0..history {
            // slot 0 is the oldest: frame t - history + slot
            let src = (t + slot).checked_sub(history).map_or(&zero, |i| &piece.frames[i]);
            let base = MIDI_PITCHES + slot * FLAT_LEN;
            input[base..base + FLAT_LEN].copy_from_slice(src.flatten().bits());
        }
        out.push(TrainingExample {
            input,
            target: frame.flatten().bits().to_vec(),
        });
    }
    Ok(out)
}

/// Examples for a whole corpus, concatenated in piece order. Piece `i` draws
/// augmentation from its own stream, so results do not depend on how the
/// work is scheduled.
pub fn corpus_to_examples(
    pieces: &[Piece],
    history: usize,
    augment: Option<&AugmentConfig>,
) -> Result<Vec<TrainingExample>, DatasetError> {
    use rayon::prelude::*;
    let per_piece: Result<Vec<Vec<TrainingExample>>, DatasetError> = pieces
        .par_iter()
        .enumerate()
        .map(|(i, piece)| {
            let seed = augment.map_or(0, |a| a.seed);
            let mut rng = rng_for(seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15), streams::AUGMENT);
            piece_to_examples_with_rng(piece, history, augment, &mut rng)
        })
        .collect();
    Ok(per_piece?.into_iter().flatten().collect())
}

pub type Split = (Vec<Piece>, Vec<Piece>, Vec<Piece>);

pub const DEFAULT_RATIOS: (f64, f64, f64) = (0.64, 0.16, 0.20);

/// Piece-level shuffle and split. Validation and test sizes are floored; the
/// remainder goes to training.
pub fn split_corpus(pieces: &[Piece], ratios: (f64, f64, f64), seed: u64) -> Result<Split, DatasetError> {
    use rand::seq::SliceRandom;
    let (a, b, c) = ratios;
    if a < 0.0 || b < 0.0 || c < 0.0 || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(DatasetError::BadRatios(ratios));
    }
    let n = pieces.len();
    if n < 3 {
        return Err(DatasetError::TooFewPieces(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, streams::SHUFFLE));
    let n_val = (n as f64 * b + 1e-9).floor() as usize;
    let n_test = (n as f64 * c + 1e-9).floor() as usize;
    let n_train = n - n_val - n_test;
    let take = |idx: &[usize]| idx.iter().map(|&i| pieces[i].clone()).collect::<Vec<_>>();
    Ok((
        take(&order[..n_train]),
        take(&order[n_train..n_train + n_val]),
        take(&order[n_train + n_val..]),
    ))
}

#[derive(Serialize, Deserialize)]
struct PieceRecord {
    id: String,
    frames: Vec<Vec<(i64, i64)>>,
}

pub fn parse_piece_line(line: &str, line_no: usize) -> Result<Piece, DatasetError> {
    let err = |message: String| DatasetError::Line {
        line: line_no,
        message,
    };
    let record: PieceRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
    if record.frames.is_empty() {
        return Err(err(format!("piece {:?} has no frames", record.id)));
    }
    let mut frames = Vec::with_capacity(record.frames.len());
    for (fi, cells) in record.frames.iter().enumerate() {
        let mut frame = FretboardFrame::empty();
        for &(s, f) in cells {
            if !(0..STRINGS as i64).contains(&s) {
                return Err(err(format!("frame {fi}: string {s} out of range 0..=5")));
            }
            if !(0..=MAX_FRET as i64).contains(&f) {
                return Err(err(format!("frame {fi}: fret {f} out of range 0..=24")));
            }
            if frame.fret(s as usize).is_some() {
                return Err(err(format!("frame {fi}: string {s} used twice")));
            }
            frame.set(s as usize, Some(f as u8));
        }
        frames.push(frame);
    }
    Ok(Piece {
        id: record.id,
        frames,
    })
}

pub fn piece_to_line(piece: &Piece) -> String {
    let record = PieceRecord {
        id: piece.id.clone(),
        frames: piece
            .frames
            .iter()
            .map(|f| f.cells().map(|c| (c.string as i64, c.fret as i64)).collect())
            .collect(),
    };
    serde_json::to_string(&record).expect("plain data serializes")
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Piece>, DatasetError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut pieces = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        pieces.push(parse_piece_line(&line, i + 1)?);
    }
    Ok(pieces)
}

pub fn save_corpus(pieces: &[Piece], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for p in pieces {
        writeln!(out, "{}", piece_to_line(p))?;
    }
    out.flush()?;
    Ok(())
}

/// Share of frames with 1..=6 notes in the synthetic corpus.
pub const SYNTH_PITCH_COUNT_WEIGHTS: [f64; 6] = [0.70, 0.13, 0.11, 0.03, 0.02, 0.01];

/// Random playable pieces. Each piece has a home hand position that drifts
/// now and then, and is built from a short riff that repeats with
/// variations, so the previous frames carry information about the next.
/// Frames never contain unisons (every note is a distinct pitch).
pub fn synth_corpus(seed: u64, n_pieces: usize, frames_per_piece: usize) -> Vec<Piece> {
    assert!(n_pieces >= 1 && frames_per_piece >= 1, "sizes must be at least 1");
    let mut rng = rng_for(seed, streams::SYNTH);
    (0..n_pieces)
        .map(|i| {
            let mut position: u8 = if rng.random_bool(0.6) {
                rng.random_range(1..=5)
            } else {
                rng.random_range(5..=14)
            };
            let riff_len = rng.random_range(4..=8).min(frames_per_piece);
            let mut riff: Vec<FretboardFrame> = Vec::with_capacity(riff_len);
            for _ in 0..riff_len {
                riff.push(synth_frame(&mut rng, position));
            }
            let mut frames = Vec::with_capacity(frames_per_piece);
            for t in 0..frames_per_piece {
                if t > 0 && t % riff_len == 0 && rng.random_bool(0.25) {
                    // move the riff to a new position
                    let shift: i8 = if rng.random_bool(0.5) { 2 } else { -2 };
                    position = (position as i8 + shift).clamp(1, 16) as u8;
                    riff = riff.iter().map(|_| synth_frame(&mut rng, position)).collect();
                }
                let frame = if rng.random_bool(0.2) {
                    synth_frame(&mut rng, position)
                } else {
                    riff[t % riff_len]
                };
                frames.push(frame);
            }
            Piece {
                id: format!("synth-{i:05}"),
                frames,
            }
        })
        .collect()
}

fn draw_note_count<R: Rng + ?Sized>(rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in SYNTH_PITCH_COUNT_WEIGHTS.iter().enumerate() {
        acc += w;
        if u < acc {
            return i + 1;
        }
    }
    SYNTH_PITCH_COUNT_WEIGHTS.len()
}

/// One playable frame around `position` (lowest fretted position of a
/// four-fret box).
pub fn synth_frame<R: Rng + ?Sized>(rng: &mut R, position: u8) -> FretboardFrame {
    let tuning = Tuning::standard();
    let cfg = PlayabilityConfig::default();
    let k = draw_note_count(rng);
    loop {
        let start = rng.random_range(0..=STRINGS - k);
        let mut frame = FretboardFrame::empty();
        for s in start..start + k {
            let fret = if rng.random_bool(0.15) {
                0
            } else {
                position + rng.random_range(0..4)
            };
            frame.set(s, Some(fret.min(MAX_FRET)));
        }
        if is_playable(&frame, &cfg) && frame_to_midi(&frame, &tuning).len() == k {
            return frame;
        }
    }
}

fn pack_bits(bits: &[u8], out: &mut Vec<u8>) {
    for chunk in bits.chunks(8) {
        let mut byte = 0u8;
        for (i, &b) in chunk.iter().enumerate() {
            byte |= (b & 1) << i;
        }
        out.push(byte);
    }
}

fn unpack_bits(bytes: &[u8], len: usize) -> Vec<u8> {
    (0..len).map(|i| (bytes[i / 8] >> (i % 8)) & 1).collect()
}

pub fn write_examples(examples: &[TrainingExample]) -> Vec<u8> {
    let input_bits = examples.first().map_or(0, |e| e.input.len());
    let target_bits = examples.first().map_or(FLAT_LEN, |e| e.target.len());
    let mut out = Vec::new();
    out.extend_from_slice(EXAMPLE_MAGIC);
    out.extend_from_slice(&EXAMPLE_VERSION.to_le_bytes());
    out.extend_from_slice(&(input_bits as u32).to_le_bytes());
    out.extend_from_slice(&(target_bits as u32).to_le_bytes());
    out.extend_from_slice(&(examples.len() as u64).to_le_bytes());
    for e in examples {
        pack_bits(&e.input, &mut out);
        pack_bits(&e.target, &mut out);
    }
    out
}

pub fn read_examples(bytes: &[u8]) -> Result<Vec<TrainingExample>, DatasetError> {
    let bad = |m: &str| DatasetError::Cache(m.to_string());
    if bytes.len() < 24 || &bytes[..4] != EXAMPLE_MAGIC {
        return Err(bad("bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    if u32_at(4) != EXAMPLE_VERSION {
        return Err(bad(&format!("unsupported version {}", u32_at(4))));
    }
    let input_bits = u32_at(8) as usize;
    let target_bits = u32_at(12) as usize;
    let count = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
    let (ib, tb) = (input_bits.div_ceil(8), target_bits.div_ceil(8));
    let expected = 24 + count * (ib + tb);
    if bytes.len() != expected {
        return Err(bad(&format!("size {} does not match {count} examples ({expected} bytes)", bytes.len())));
    }
    Ok(bytes[24..]
        .chunks_exact(ib + tb)
        .map(|rec| TrainingExample {
            input: unpack_bits(&rec[..ib], input_bits),
            target: unpack_bits(&rec[ib..], target_bits),
        })
        .collect())
}

pub fn save_examples(examples: &[TrainingExample], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    fs::write(path, write_examples(examples))?;
    Ok(())
}

pub fn load_examples(path: impl AsRef<Path>) -> Result<Vec<TrainingExample>, DatasetError> {
    read_examples(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame(cells: &[(usize, usize)]) -> FretboardFrame {
        FretboardFrame::from_cells(cells.iter().copied()).unwrap()
    }

    fn piece(n: usize) -> Piece {
        let frames = (0..n).map(|i| frame(&[(i % 6, i % 5 + 1)])).collect();
        Piece::new("p", frames).unwrap()
    }

    #[test]
    fn single_frame_piece_is_padded() {
        let ex = piece_to_examples(&piece(1), 4, None).unwrap();
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].input.len(), 728);
        assert!(ex[0].input[128..].iter().all(|&b| b == 0));
        assert_eq!(ex[0].target, piece(1).frames[0].flatten().bits().to_vec());
    }

    #[test]
    fn history_window_oldest_first() {
        let p = piece(5);
        let ex = piece_to_examples(&p, 4, None).unwrap();
        assert_eq!(ex[4].history(), p.frames[0..4].to_vec());
        // example 2 sees two pads then frames 0 and 1
        assert_eq!(
            ex[2].history(),
            vec![FretboardFrame::empty(), FretboardFrame::empty(), p.frames[0], p.frames[1]]
        );
    }

    #[test]
    fn zero_probability_is_identity() {
        let p = piece(6);
        let cfg = AugmentConfig::new(0.0, 9);
        let ex = piece_to_examples(&p, 4, Some(&cfg)).unwrap();
        let t = Tuning::standard();
        for (e, f) in ex.iter().zip(&p.frames) {
            assert_eq!(e.midi(), frame_to_midi(f, &t));
        }
    }

    #[test]
    fn empty_piece_rejected() {
        assert!(matches!(Piece::new("x", vec![]), Err(DatasetError::EmptyPiece(_))));
        let bad = Piece {
            id: "x".into(),
            frames: vec![],
        };
        assert!(piece_to_examples(&bad, 4, None).is_err());
    }

    #[test]
    fn augment_examples() {
        let mut rng = rng_for(1, streams::AUGMENT);
        let input = MidiPitchSet::from([60]);
        assert_eq!(augment_pitches(&input, &AugmentConfig::new(0.0, 1), &mut rng), input);
        let forced = AugmentConfig {
            probability: 1.0,
            intervals: vec![12],
            seed: 1,
        };
        assert_eq!(augment_pitches(&input, &forced, &mut rng), MidiPitchSet::from([60, 72]));
        let cfg = AugmentConfig::new(1.0, 5);
        let a = augment_pitches(&input, &cfg, &mut rng_for(5, streams::AUGMENT));
        let b = augment_pitches(&input, &cfg, &mut rng_for(5, streams::AUGMENT));
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        // out-of-range additions are dropped
        let high = AugmentConfig {
            probability: 1.0,
            intervals: vec![12],
            seed: 0,
        };
        assert_eq!(augment_pitches(&MidiPitchSet::from([120]), &high, &mut rng), MidiPitchSet::from([120]));
    }

    #[test]
    fn augmentation_rate_and_intervals() {
        let cfg = AugmentConfig::new(0.5, 3);
        let mut rng = rng_for(3, streams::AUGMENT);
        let mut added = 0;
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..4000 {
            let out = augment_pitches(&MidiPitchSet::from([60]), &cfg, &mut rng);
            if out.len() == 2 {
                added += 1;
                seen.insert(out.iter().find(|&p| p != 60).unwrap() as i16 - 60);
            }
        }
        let rate = added as f64 / 4000.0;
        assert!((rate - 0.5).abs() < 0.03, "rate {rate}");
        assert_eq!(seen, [-12i16, 3, 4, 5, 7, 8, 9, 12].into_iter().collect());
    }

    fn pieces(n: usize) -> Vec<Piece> {
        (0..n).map(|i| Piece::new(format!("p{i}"), vec![frame(&[(0, 1)])]).unwrap()).collect()
    }

    #[test]
    fn split_sizes() {
        let (tr, va, te) = split_corpus(&pieces(100), DEFAULT_RATIOS, 1).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (64, 16, 20));
        let again = split_corpus(&pieces(100), DEFAULT_RATIOS, 1).unwrap();
        assert_eq!((tr.clone(), va.clone(), te.clone()), again);
        let mut ids: Vec<String> = tr.iter().chain(&va).chain(&te).map(|p| p.id.clone()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 100);
        let (tr, va, te) = split_corpus(&pieces(10), (1.0, 0.0, 0.0), 1).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (10, 0, 0));
        assert!(matches!(split_corpus(&pieces(2), DEFAULT_RATIOS, 1), Err(DatasetError::TooFewPieces(2))));
        assert!(matches!(split_corpus(&pieces(5), (0.5, 0.5, 0.5), 1), Err(DatasetError::BadRatios(_))));
    }

    #[test]
    fn corpus_lines() {
        let p = Piece::new("a", vec![frame(&[(0, 0), (3, 2)]), frame(&[(5, 24)])]).unwrap();
        let line = piece_to_line(&p);
        assert_eq!(line, r#"{"id":"a","frames":[[[0,0],[3,2]],[[5,24]]]}"#);
        assert_eq!(parse_piece_line(&line, 1).unwrap(), p);
        let err = parse_piece_line(r#"{"id":"a","frames":[[[0,25]]]}"#, 7).unwrap_err();
        assert!(matches!(err, DatasetError::Line { line: 7, .. }));
        assert!(err.to_string().contains("fret 25"));
        let err = parse_piece_line(r#"{"id":"a","frames":[[[1,2],[1,3]]]}"#, 2).unwrap_err();
        assert!(err.to_string().contains("used twice"));
        assert!(parse_piece_line("{not json", 3).is_err());
        assert!(parse_piece_line(r#"{"id":"a","frames":[[[6,0]]]}"#, 1).is_err());
    }

    #[test]
    fn corpus_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        fs::write(&path, "").unwrap();
        assert!(load_corpus(&path).unwrap().is_empty());
        let corpus = synth_corpus(4, 7, 12);
        save_corpus(&corpus, &path).unwrap();
        assert_eq!(load_corpus(&path).unwrap(), corpus);
        fs::write(&path, format!("{}\n{{\"id\":\"b\",\"frames\":[[[0,25]]]}}\n", piece_to_line(&corpus[0]))).unwrap();
        match load_corpus(&path) {
            Err(DatasetError::Line { line: 2, .. }) => {}
            other => panic!("expected line 2 error, got {other:?}"),
        }
    }

    #[test]
    fn synth_is_deterministic_and_playable() {
        let a = synth_corpus(11, 20, 30);
        assert_eq!(a, synth_corpus(11, 20, 30));
        assert_ne!(a, synth_corpus(12, 20, 30));
        let t = Tuning::standard();
        for f in a.iter().flat_map(|p| &p.frames) {
            assert!(is_playable(f, &PlayabilityConfig::default()));
            assert_eq!(frame_to_midi(f, &t).len(), f.active_count());
        }
    }

    #[test]
    fn synth_pitch_count_histogram() {
        let corpus = synth_corpus(2024, 100, 100);
        let mut counts = [0usize; 6];
        for f in corpus.iter().flat_map(|p| &p.frames) {
            counts[f.active_count() - 1] += 1;
        }
        let total: usize = counts.iter().sum();
        assert_eq!(total, 10_000);
        for (c, w) in counts.iter().zip(SYNTH_PITCH_COUNT_WEIGHTS) {
            let share = *c as f64 / total as f64;
            assert!((share - w).abs() <= 0.02, "{counts:?}");
        }
    }

    #[test]
    fn example_cache_round_trip() {
        let ex = corpus_to_examples(&synth_corpus(1, 3, 9), 4, Some(&AugmentConfig::new(0.5, 2))).unwrap();
        let bytes = write_examples(&ex);
        assert_eq!(&bytes[..4], b"TFEX");
        assert_eq!(read_examples(&bytes).unwrap(), ex);
        assert!(read_examples(&bytes[..bytes.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn examples_respect_invariants(seed in 0u64..1000, prob in 0.0f64..=1.0) {
            let corpus = synth_corpus(seed, 2, 10);
            let cfg = AugmentConfig::new(prob, seed);
            let t = Tuning::standard();
            for p in &corpus {
                let plain = piece_to_examples(p, 4, None).unwrap();
                let aug = piece_to_examples(p, 4, Some(&cfg)).unwrap();
                prop_assert_eq!(plain.len(), p.frames.len());
                for (e, a) in plain.iter().zip(&aug) {
                    prop_assert_eq!(e.input.len(), 728);
                    prop_assert!(e.target.iter().any(|&b| b == 1));
                    let truth = frame_to_midi(&e.target_frame(), &t);
                    prop_assert_eq!(&e.midi(), &truth);
                    prop_assert!(truth.is_subset(&a.midi()));
                    prop_assert_eq!(&e.input[128..], &a.input[128..]);
                }
            }
        }
    }
}
