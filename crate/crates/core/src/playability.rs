//! Playable-fretboard enumeration.
//!
//! A frame is playable when every string carries at most one note and all
//! fretted (non-open) notes fit inside a window of `fret_window` consecutive
//! fret positions. [`candidate_frames`] realizes as many requested pitches as
//! possible: it tries every subset of size `N`, starting at `min(|m|, 6)`, and
//! lowers `N` until some subset has a playable layout.

use crate::fretboard::{
    fold_to_range, placements_for_pitch, FretboardFrame, MidiPitchSet, Placement, Tuning, STRINGS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlayabilityConfig {
    /// Number of consecutive fret positions the fretting hand can cover.
    pub fret_window: u8,
    pub max_strings: usize,
}

impl PlayabilityConfig {
    pub fn with_window(fret_window: u8) -> Self {
        assert!(fret_window >= 1, "fret window must be at least 1");
        PlayabilityConfig {
            fret_window,
            ..Self::default()
        }
    }

    /// Largest allowed `max_fret - min_fret` over fretted notes.
    pub fn max_span(&self) -> u8 {
        self.fret_window.saturating_sub(1)
    }
}

impl Default for PlayabilityConfig {
    fn default() -> Self {
        PlayabilityConfig {
            fret_window: 6,
            max_strings: STRINGS,
        }
    }
}

/// Playable frames realizing `n_used` distinct pitches, sorted by flattened
/// bits and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub n_used: usize,
    pub frames: Vec<FretboardFrame>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

pub fn is_playable(frame: &FretboardFrame, cfg: &PlayabilityConfig) -> bool {
    // One note per string holds by construction of `FretboardFrame`.
    let mut fretted = frame.frets().iter().flatten().filter(|&&f| f >= 1);
    let Some(&first) = fretted.next() else {
        return true;
    };
    let (lo, hi) = fretted.fold((first, first), |(lo, hi), &f| (lo.min(f), hi.max(f)));
    hi - lo <= cfg.max_span()
}

/// Every playable frame in which each requested pitch sits on its own string.
pub fn enumerate_playable(
    pitches: &MidiPitchSet,
    tuning: &Tuning,
    cfg: &PlayabilityConfig,
) -> Vec<FretboardFrame> {
    let mut out = Vec::new();
    enumerate_into(&pitches.to_vec(), tuning, cfg, &mut out);
    out.sort_unstable();
    out.dedup();
    out
}

fn enumerate_into(
    pitches: &[u8],
    tuning: &Tuning,
    cfg: &PlayabilityConfig,
    out: &mut Vec<FretboardFrame>,
) {
    if pitches.len() > cfg.max_strings.min(STRINGS) {
        return;
    }
    let mut options: Vec<Vec<Placement>> = pitches
        .iter()
        .map(|&p| placements_for_pitch(p, tuning))
        .collect();
    if options.iter().any(|o| o.is_empty()) {
        return;
    }
    // Most constrained pitch first keeps the search tree narrow.
    options.sort_by_key(|o| o.len());
    let mut search = Search {
        options: &options,
        max_span: cfg.max_span(),
        frame: FretboardFrame::empty(),
        out,
    };
    search.descend(0, None);
}

struct Search<'a> {
    options: &'a [Vec<Placement>],
    max_span: u8,
    frame: FretboardFrame,
    out: &'a mut Vec<FretboardFrame>,
}

impl Search<'_> {
    fn descend(&mut self, depth: usize, span: Option<(u8, u8)>) {
        if depth == self.options.len() {
            self.out.push(self.frame);
            return;
        }
        for &Placement { string, fret } in &self.options[depth] {
            if self.frame.fret(string).is_some() {
                continue;
            }
            let next_span = if fret == 0 {
                span
            } else {
                let (lo, hi) = span.map_or((fret, fret), |(lo, hi)| (lo.min(fret), hi.max(fret)));
                if hi - lo > self.max_span {
                    continue;
                }
                Some((lo, hi))
            };
            self.frame.set(string, Some(fret));
            self.descend(depth + 1, next_span);
            self.frame.set(string, None);
        }
    }
}

/// Playable frames for the union of all `n`-subsets of `pitches`.
pub fn frames_for_subsets(
    pitches: &MidiPitchSet,
    n: usize,
    tuning: &Tuning,
    cfg: &PlayabilityConfig,
) -> Vec<FretboardFrame> {
    let all = pitches.to_vec();
    let mut out = Vec::new();
    if n == 0 {
        out.push(FretboardFrame::empty());
        return out;
    }
    for subset in Combinations::new(all.len(), n) {
        let chosen: Vec<u8> = subset.iter().map(|&i| all[i]).collect();
        enumerate_into(&chosen, tuning, cfg, &mut out);
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Greedy candidate generation: the first (largest) `N` with any playable
/// layout wins.
pub fn candidate_frames(
    pitches: &MidiPitchSet,
    tuning: &Tuning,
    cfg: &PlayabilityConfig,
) -> CandidateSet {
    let folded = fold_to_range(pitches, tuning);
    let start = folded.len().min(cfg.max_strings.min(STRINGS));
    for n in (1..=start).rev() {
        let frames = frames_for_subsets(&folded, n, tuning, cfg);
        if !frames.is_empty() {
            return CandidateSet { n_used: n, frames };
        }
    }
    CandidateSet {
        n_used: 0,
        frames: vec![FretboardFrame::empty()],
    }
}

/// Lexicographic k-combinations of `0..n`.
pub(crate) struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    pub(crate) fn new(n: usize, k: usize) -> Self {
        Combinations {
            n,
            idx: (0..k).collect(),
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let current = self.idx.clone();
        let k = self.idx.len();
        // advance
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(current)
    }
}
