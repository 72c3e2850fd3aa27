//! MIDI-to-guitar-tablature transcription.
//!
//! A feed-forward/transposed-convolution network turns the requested MIDI
//! pitches plus the four previous tablature frames into a 6×25 "probabilistic
//! tablature". The decoder then enumerates every playable fingering of the
//! requested pitches and keeps the one with the largest inner product with
//! that map.

pub mod cli;
pub mod dataset;
pub mod decoder;
pub mod fretboard;
pub mod midi;
pub mod nn;
pub mod playability;
pub mod report;
pub mod trainer;

pub use fretboard::{
    flat_index, fold_to_range, frame_to_midi, placements_for_pitch, FlatFrame, FrameError,
    FretboardFrame, MidiPitchSet, Placement, Tuning,
};
pub use playability::{candidate_frames, enumerate_playable, is_playable, CandidateSet, PlayabilityConfig};
pub use dataset::{AugmentConfig, Piece, TrainingExample};
pub use decoder::{decode_frame, transcribe_sequence, DecodeConfig, DecodeMode, DecodeResult};
pub use trainer::{cosine_accuracy, train, TrainConfig, TrainLog};
pub use report::{build_report, classify_match, render_ascii_tab, MatchOutcome, MatchReport};
