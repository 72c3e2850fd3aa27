//! Fretboard data model: standard tuning, tablature frames, MIDI pitch sets
//! and the flat 150-bit layout used by the network.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const STRINGS: usize = 6;
/// Columns per string: the open string plus frets 1..=24.
pub const FRET_COLUMNS: usize = 25;
pub const MAX_FRET: u8 = 24;
pub const FLAT_LEN: usize = STRINGS * FRET_COLUMNS;
pub const MIDI_PITCHES: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("string {string} has more than one active cell")]
    DuplicateString { string: usize },
    #[error("string index {0} out of range (0..6)")]
    StringOutOfRange(usize),
    #[error("fret {0} out of range (0..=24)")]
    FretOutOfRange(usize),
    #[error("flat frame must have {FLAT_LEN} bits, got {0}")]
    FlatLength(usize),
    #[error("flat frame bit {index} has non-binary value {value}")]
    NonBinary { index: usize, value: u8 },
    #[error("only standard tuning is supported")]
    UnsupportedTuning,
}

/// Open-string pitches, low E (index 0) to high E (index 5).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tuning {
    open_pitches: [u8; STRINGS],
    fret_count: u8,
}

impl Tuning {
    pub const STANDARD_PITCHES: [u8; STRINGS] = [40, 45, 50, 55, 59, 64];

    pub const fn standard() -> Self {
        Tuning {
            open_pitches: Self::STANDARD_PITCHES,
            fret_count: MAX_FRET,
        }
    }

    /// Only standard tuning with 24 frets is accepted.
    pub fn new(open_pitches: [u8; STRINGS], fret_count: u8) -> Result<Self, FrameError> {
        if open_pitches != Self::STANDARD_PITCHES || fret_count != MAX_FRET {
            return Err(FrameError::UnsupportedTuning);
        }
        Ok(Self::standard())
    }

    pub fn open_pitches(&self) -> &[u8; STRINGS] {
        &self.open_pitches
    }

    pub fn fret_count(&self) -> u8 {
        self.fret_count
    }

    pub fn lowest_pitch(&self) -> u8 {
        self.open_pitches[0]
    }

    pub fn highest_pitch(&self) -> u8 {
        self.open_pitches[STRINGS - 1] + self.fret_count
    }

    pub fn pitch_at(&self, string: usize, fret: u8) -> u8 {
        self.open_pitches[string] + fret
    }

    pub fn in_range(&self, pitch: u8) -> bool {
        (self.lowest_pitch()..=self.highest_pitch()).contains(&pitch)
    }
}

impl Default for Tuning {
    fn default() -> Self {
        Self::standard()
    }
}

/// One string/fret position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Placement {
    pub string: usize,
    pub fret: u8,
}

impl Placement {
    pub fn new(string: usize, fret: u8) -> Self {
        Placement { string, fret }
    }
}

/// A 6×25 binary fretboard snapshot. Each string holds at most one fret, so
/// the one-cell-per-row invariant is carried by the representation itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct FretboardFrame {
    frets: [Option<u8>; STRINGS],
}

impl FretboardFrame {
    pub const fn empty() -> Self {
        FretboardFrame {
            frets: [None; STRINGS],
        }
    }

    /// Builds a frame from `(string, fret)` cells, rejecting two cells on one
    /// string and out-of-range positions.
    pub fn from_cells<I>(cells: I) -> Result<Self, FrameError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut frame = Self::empty();
        for (string, fret) in cells {
            if string >= STRINGS {
                return Err(FrameError::StringOutOfRange(string));
            }
            if fret > MAX_FRET as usize {
                return Err(FrameError::FretOutOfRange(fret));
            }
            if frame.frets[string].is_some() {
                return Err(FrameError::DuplicateString { string });
            }
            frame.frets[string] = Some(fret as u8);
        }
        Ok(frame)
    }

    pub fn from_frets(frets: [Option<u8>; STRINGS]) -> Result<Self, FrameError> {
        if let Some(f) = frets.iter().flatten().find(|&&f| f > MAX_FRET) {
            return Err(FrameError::FretOutOfRange(*f as usize));
        }
        Ok(FretboardFrame { frets })
    }

    pub fn fret(&self, string: usize) -> Option<u8> {
        self.frets[string]
    }

    pub fn frets(&self) -> &[Option<u8>; STRINGS] {
        &self.frets
    }

    /// Sets (or clears) the fret on one string.
    ///
    /// Panics if `string >= 6` or `fret > 24`.
    pub fn set(&mut self, string: usize, fret: Option<u8>) {
        assert!(string < STRINGS, "string {string} out of range");
        if let Some(f) = fret {
            assert!(f <= MAX_FRET, "fret {f} out of range");
        }
        self.frets[string] = fret;
    }

    pub fn is_active(&self, string: usize, fret: u8) -> bool {
        self.frets[string] == Some(fret)
    }

    /// Active cells ordered by string.
    pub fn cells(&self) -> impl Iterator<Item = Placement> + '_ {
        self.frets
            .iter()
            .enumerate()
            .filter_map(|(s, f)| f.map(|f| Placement::new(s, f)))
    }

    pub fn active_count(&self) -> usize {
        self.frets.iter().filter(|f| f.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.active_count() == 0
    }

    pub fn max_fret(&self) -> u8 {
        self.frets.iter().flatten().copied().max().unwrap_or(0)
    }

    pub fn fret_sum(&self) -> u32 {
        self.frets.iter().flatten().map(|&f| f as u32).sum()
    }

    /// Number of cells active in both frames.
    pub fn overlap(&self, other: &FretboardFrame) -> usize {
        self.frets
            .iter()
            .zip(other.frets.iter())
            .filter(|(a, b)| a.is_some() && a == b)
            .count()
    }

    pub fn flatten(&self) -> FlatFrame {
        let mut bits = [0u8; FLAT_LEN];
        for cell in self.cells() {
            bits[flat_index(cell.string, cell.fret)] = 1;
        }
        FlatFrame(bits)
    }

    pub fn unflatten(bits: &[u8]) -> Result<Self, FrameError> {
        if bits.len() != FLAT_LEN {
            return Err(FrameError::FlatLength(bits.len()));
        }
        let mut frame = Self::empty();
        for (index, &value) in bits.iter().enumerate() {
            match value {
                0 => {}
                1 => {
                    let string = index / FRET_COLUMNS;
                    if frame.frets[string].is_some() {
                        return Err(FrameError::DuplicateString { string });
                    }
                    frame.frets[string] = Some((index % FRET_COLUMNS) as u8);
                }
                value => return Err(FrameError::NonBinary { index, value }),
            }
        }
        Ok(frame)
    }

    /// Sort key equivalent to comparing flattened bit vectors: an absent
    /// string sorts lowest, and a lower fret puts its 1-bit earlier, which
    /// sorts higher.
    fn row_key(fret: Option<u8>) -> u8 {
        match fret {
            None => 0,
            Some(f) => FRET_COLUMNS as u8 - f,
        }
    }
}

/// Orders frames lexicographically by their flattened bit vectors.
impl Ord for FretboardFrame {
    fn cmp(&self, other: &Self) -> Ordering {
        self.frets
            .iter()
            .zip(other.frets.iter())
            .map(|(&a, &b)| Self::row_key(a).cmp(&Self::row_key(b)))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

impl PartialOrd for FretboardFrame {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for FretboardFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .frets
            .iter()
            .map(|fret| fret.map_or_else(|| "x".to_string(), |v| v.to_string()))
            .collect();
        write!(f, "[{}]", parts.join(" "))
    }
}

#[inline]
pub fn flat_index(string: usize, fret: u8) -> usize {
    string * FRET_COLUMNS + fret as usize
}

/// Row-major 150-bit layout of a frame, string 0 first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FlatFrame(pub [u8; FLAT_LEN]);

impl FlatFrame {
    pub fn bits(&self) -> &[u8; FLAT_LEN] {
        &self.0
    }

    pub fn to_frame(&self) -> Result<FretboardFrame, FrameError> {
        FretboardFrame::unflatten(&self.0)
    }
}

/// Sorted, duplicate-free set of MIDI pitches.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MidiPitchSet(BTreeSet<u8>);

impl MidiPitchSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, pitch: u8) -> bool {
        debug_assert!(pitch < 128);
        self.0.insert(pitch)
    }

    pub fn remove(&mut self, pitch: u8) -> bool {
        self.0.remove(&pitch)
    }

    pub fn contains(&self, pitch: u8) -> bool {
        self.0.contains(&pitch)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        self.0.iter().copied()
    }

    pub fn to_vec(&self) -> Vec<u8> {
        self.iter().collect()
    }

    pub fn is_subset(&self, other: &MidiPitchSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn difference(&self, other: &MidiPitchSet) -> MidiPitchSet {
        MidiPitchSet(self.0.difference(&other.0).copied().collect())
    }

    /// 128-entry binary vector, one entry per MIDI pitch.
    pub fn to_bits(&self) -> [u8; MIDI_PITCHES] {
        let mut bits = [0u8; MIDI_PITCHES];
        for p in self.iter() {
            bits[p as usize] = 1;
        }
        bits
    }

    pub fn from_bits<T: Copy + Into<f64>>(bits: &[T]) -> Self {
        bits.iter()
            .take(MIDI_PITCHES)
            .enumerate()
            .filter(|(_, &b)| b.into() > 0.5)
            .map(|(p, _)| p as u8)
            .collect()
    }
}

impl FromIterator<u8> for MidiPitchSet {
    fn from_iter<I: IntoIterator<Item = u8>>(iter: I) -> Self {
        MidiPitchSet(iter.into_iter().filter(|&p| p < 128).collect())
    }
}

impl<const N: usize> From<[u8; N]> for MidiPitchSet {
    fn from(pitches: [u8; N]) -> Self {
        pitches.into_iter().collect()
    }
}

impl fmt::Display for MidiPitchSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|p| p.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// Pitches sounded by a frame; unisons on different strings collapse.
pub fn frame_to_midi(frame: &FretboardFrame, tuning: &Tuning) -> MidiPitchSet {
    frame
        .cells()
        .map(|c| tuning.pitch_at(c.string, c.fret))
        .collect()
}

/// All positions producing `pitch`, by ascending string.
pub fn placements_for_pitch(pitch: u8, tuning: &Tuning) -> Vec<Placement> {
    tuning
        .open_pitches()
        .iter()
        .enumerate()
        .filter_map(|(s, &open)| {
            let fret = pitch.checked_sub(open)?;
            (fret <= tuning.fret_count()).then(|| Placement::new(s, fret))
        })
        .collect()
}

/// Shifts every pitch by octaves into the playable range and deduplicates.
pub fn fold_to_range(pitches: &MidiPitchSet, tuning: &Tuning) -> MidiPitchSet {
    pitches.iter().map(|p| fold_pitch(p, tuning)).collect()
}

pub fn fold_pitch(pitch: u8, tuning: &Tuning) -> u8 {
    let mut p = pitch;
    while p < tuning.lowest_pitch() {
        p += 12;
    }
    while p > tuning.highest_pitch() {
        p -= 12;
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn std_tuning() -> Tuning {
        Tuning::standard()
    }

    fn e_major() -> FretboardFrame {
        FretboardFrame::from_cells([(0, 0), (1, 2), (2, 2), (3, 1), (4, 0), (5, 0)]).unwrap()
    }

    #[test]
    fn tuning_range() {
        let t = std_tuning();
        assert_eq!(t.lowest_pitch(), 40);
        assert_eq!(t.highest_pitch(), 88);
        assert!(Tuning::new([40, 45, 50, 55, 59, 64], 24).is_ok());
        assert_eq!(
            Tuning::new([38, 45, 50, 55, 59, 64], 24),
            Err(FrameError::UnsupportedTuning)
        );
    }

    #[test]
    fn frame_to_midi_examples() {
        let t = std_tuning();
        assert!(frame_to_midi(&FretboardFrame::empty(), &t).is_empty());
        let low_e = FretboardFrame::from_cells([(0, 0)]).unwrap();
        assert_eq!(frame_to_midi(&low_e, &t), MidiPitchSet::from([40]));
        assert_eq!(
            frame_to_midi(&e_major(), &t),
            MidiPitchSet::from([40, 47, 52, 56, 59, 64])
        );
    }

    #[test]
    fn unison_collapses() {
        let t = std_tuning();
        // string 0 fret 5 and open A are both 45
        let f = FretboardFrame::from_cells([(0, 5), (1, 0)]).unwrap();
        assert_eq!(frame_to_midi(&f, &t), MidiPitchSet::from([45]));
    }

    #[test]
    fn invalid_frames_rejected() {
        assert_eq!(
            FretboardFrame::from_cells([(2, 3), (2, 5)]),
            Err(FrameError::DuplicateString { string: 2 })
        );
        assert_eq!(
            FretboardFrame::from_cells([(0, 25)]),
            Err(FrameError::FretOutOfRange(25))
        );
        assert_eq!(
            FretboardFrame::from_cells([(6, 0)]),
            Err(FrameError::StringOutOfRange(6))
        );
        let mut bits = [0u8; FLAT_LEN];
        bits[25] = 1;
        bits[30] = 1;
        assert_eq!(
            FretboardFrame::unflatten(&bits),
            Err(FrameError::DuplicateString { string: 1 })
        );
    }

    #[test]
    fn placements_examples() {
        let t = std_tuning();
        assert_eq!(placements_for_pitch(40, &t), vec![Placement::new(0, 0)]);
        let expected: Vec<Placement> = [(0, 24), (1, 19), (2, 14), (3, 9), (4, 5), (5, 0)]
            .iter()
            .map(|&(s, f)| Placement::new(s, f))
            .collect();
        assert_eq!(placements_for_pitch(64, &t), expected);
        assert!(placements_for_pitch(39, &t).is_empty());
        assert!(placements_for_pitch(89, &t).is_empty());
        assert_eq!(placements_for_pitch(88, &t), vec![Placement::new(5, 24)]);
    }

    #[test]
    fn fold_examples() {
        let t = std_tuning();
        assert_eq!(fold_to_range(&MidiPitchSet::from([60]), &t), MidiPitchSet::from([60]));
        assert_eq!(fold_to_range(&MidiPitchSet::from([28]), &t), MidiPitchSet::from([40]));
        assert_eq!(
            fold_to_range(&MidiPitchSet::from([100, 88]), &t),
            MidiPitchSet::from([88])
        );
        assert_eq!(fold_pitch(0, &t), 48);
        assert_eq!(fold_pitch(127, &t), 79);
    }

    #[test]
    fn flatten_examples() {
        assert!(FretboardFrame::empty().flatten().bits().iter().all(|&b| b == 0));
        let f = FretboardFrame::from_cells([(0, 0)]).unwrap().flatten();
        assert_eq!(f.bits().iter().position(|&b| b == 1), Some(0));
        let f = FretboardFrame::from_cells([(5, 24)]).unwrap().flatten();
        assert_eq!(f.bits().iter().position(|&b| b == 1), Some(149));
        assert_eq!(
            FretboardFrame::unflatten(&[0u8; 149]),
            Err(FrameError::FlatLength(149))
        );
    }

    #[test]
    fn render_display() {
        assert_eq!(e_major().to_string(), "[0 2 2 1 0 0]");
    }

    pub(crate) fn arb_frame() -> impl Strategy<Value = FretboardFrame> {
        proptest::array::uniform6(proptest::option::of(0u8..=24))
            .prop_map(|frets| FretboardFrame::from_frets(frets).unwrap())
    }

    proptest! {
        #[test]
        fn flatten_round_trip(frame in arb_frame()) {
            prop_assert_eq!(frame.flatten().to_frame().unwrap(), frame);
        }

        #[test]
        fn ordering_matches_flattened_bits(a in arb_frame(), b in arb_frame()) {
            prop_assert_eq!(a.cmp(&b), a.flatten().bits().cmp(b.flatten().bits()));
        }

        #[test]
        fn frame_to_midi_bounds(frame in arb_frame()) {
            let t = Tuning::standard();
            let pitches = frame_to_midi(&frame, &t);
            prop_assert!(pitches.len() <= frame.active_count());
            prop_assert!(pitches.iter().all(|p| (40..=88).contains(&p)));
            let sounded: Vec<u8> = frame.cells().map(|c| t.pitch_at(c.string, c.fret)).collect();
            let distinct = sounded.iter().collect::<BTreeSet<_>>().len() == sounded.len();
            prop_assert_eq!(pitches.len() == frame.active_count(), distinct);
        }

        #[test]
        fn placements_nonempty_iff_in_range(pitch in 0u8..128) {
            let t = Tuning::standard();
            let placements = placements_for_pitch(pitch, &t);
            prop_assert_eq!(!placements.is_empty(), (40..=88).contains(&pitch));
            prop_assert!(placements.len() <= 6);
            for p in placements {
                prop_assert_eq!(t.pitch_at(p.string, p.fret), pitch);
            }
        }

        #[test]
        fn fold_is_idempotent(pitches in proptest::collection::btree_set(0u8..128, 0..10)) {
            let t = Tuning::standard();
            let set: MidiPitchSet = pitches.into_iter().collect();
            let once = fold_to_range(&set, &t);
            prop_assert!(once.iter().all(|p| t.in_range(p)));
            prop_assert_eq!(fold_to_range(&once, &t), once);
        }
    }
}
