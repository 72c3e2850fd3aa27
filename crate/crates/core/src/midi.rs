//! Standard MIDI File ingestion and conversion of note events into
//! change-point pitch frames.
//!
//! Only what the transcriber needs is decoded: note-on/note-off with absolute
//! tick times. Meta and sysex events are skipped, tempo is ignored.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fretboard::MidiPitchSet;

pub const DEFAULT_QUANTIZE: u64 = 10;
/// Zero-based channel index of General MIDI percussion (channel 10).
pub const PERCUSSION_CHANNEL: u8 = 9;

#[derive(Debug, Error)]
pub enum MidiError {
    #[error("expected chunk \"{expected}\" at byte offset {offset}")]
    BadChunk { expected: &'static str, offset: usize },
    #[error("truncated data at byte offset {offset}")]
    Truncated { offset: usize },
    #[error("unsupported SMF format {format} at byte offset {offset}")]
    UnsupportedFormat { format: u16, offset: usize },
    #[error("invalid data at byte offset {offset}: {message}")]
    Invalid { offset: usize, message: String },
    #[error("line {line}: {message}")]
    FrameLine { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MidiError {
    /// Byte offset of a parse failure, when the error came from SMF bytes.
    pub fn offset(&self) -> Option<usize> {
        match self {
            MidiError::BadChunk { offset, .. }
            | MidiError::Truncated { offset }
            | MidiError::UnsupportedFormat { offset, .. }
            | MidiError::Invalid { offset, .. } => Some(*offset),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoteKind {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoteEvent {
    /// Absolute time in ticks.
    pub tick: u64,
    pub pitch: u8,
    pub kind: NoteKind,
    pub track: u16,
    pub channel: u8,
}

impl NoteEvent {
    pub fn on(tick: u64, pitch: u8) -> Self {
        NoteEvent {
            tick,
            pitch,
            kind: NoteKind::On,
            track: 0,
            channel: 0,
        }
    }

    pub fn off(tick: u64, pitch: u8) -> Self {
        NoteEvent {
            kind: NoteKind::Off,
            ..Self::on(tick, pitch)
        }
    }

    pub fn with_track(mut self, track: u16) -> Self {
        self.track = track;
        self
    }

    pub fn with_channel(mut self, channel: u8) -> Self {
        self.channel = channel;
        self
    }
}

/// Parsed file: ticks-per-quarter (or raw SMPTE division word) and note
/// events from every track, stably sorted by tick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmfFile {
    pub format: u16,
    pub division: u16,
    pub events: Vec<NoteEvent>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], MidiError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(MidiError::Truncated { offset: self.pos })?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, MidiError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, MidiError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, MidiError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Variable-length quantity: 7 bits per byte, high bit = continuation,
    /// at most four bytes.
    fn vlq(&mut self) -> Result<u32, MidiError> {
        let start = self.pos;
        let mut value = 0u32;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | (b & 0x7f) as u32;
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(MidiError::Invalid {
            offset: start,
            message: "variable-length quantity longer than 4 bytes".into(),
        })
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// Parses an SMF (format 0 or 1) and returns its note events.
pub fn parse_smf(bytes: &[u8]) -> Result<Vec<NoteEvent>, MidiError> {
    Ok(parse_smf_file(bytes)?.events)
}

pub fn parse_smf_file(bytes: &[u8]) -> Result<SmfFile, MidiError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.remaining() < 4 || &bytes[0..4] != b"MThd" {
        return Err(MidiError::BadChunk {
            expected: "MThd",
            offset: 0,
        });
    }
    cur.take(4)?;
    let header_len = cur.u32()? as usize;
    if header_len < 6 {
        return Err(MidiError::Invalid {
            offset: 4,
            message: format!("header length {header_len} < 6"),
        });
    }
    let header_start = cur.pos;
    let format_offset = cur.pos;
    let format = cur.u16()?;
    let ntracks = cur.u16()?;
    let division = cur.u16()?;
    if format == 2 || format > 2 {
        return Err(MidiError::UnsupportedFormat {
            format,
            offset: format_offset,
        });
    }
    cur.pos = header_start;
    cur.take(header_len)?;

    let mut events = Vec::new();
    let mut track_index: u16 = 0;
    while track_index < ntracks {
        if cur.remaining() == 0 {
            return Err(MidiError::Truncated { offset: cur.pos });
        }
        let chunk_offset = cur.pos;
        let id = cur.take(4)?;
        let len = cur.u32()? as usize;
        if id != b"MTrk" {
            // Alien chunk types are skipped per the SMF standard.
            cur.take(len).map_err(|_| MidiError::Truncated { offset: chunk_offset })?;
            continue;
        }
        let body_offset = cur.pos;
        let body = cur
            .take(len)
            .map_err(|_| MidiError::Truncated { offset: chunk_offset })?;
        parse_track(body, body_offset, track_index, &mut events)?;
        track_index += 1;
    }
    events.sort_by_key(|e| e.tick);
    Ok(SmfFile {
        format,
        division,
        events,
    })
}

fn parse_track(
    body: &[u8],
    base: usize,
    track: u16,
    out: &mut Vec<NoteEvent>,
) -> Result<(), MidiError> {
    let mut cur = Cursor { bytes: body, pos: 0 };
    let abs = |cur: &Cursor| base + cur.pos;
    let mut tick: u64 = 0;
    let mut running: Option<u8> = None;
    while cur.remaining() > 0 {
        let delta = cur.vlq().map_err(|e| rebase(e, base))?;
        tick += delta as u64;
        let status_offset = abs(&cur);
        let first = cur.u8().map_err(|e| rebase(e, base))?;
        let (status, first_data) = if first & 0x80 != 0 {
            (first, None)
        } else {
            match running {
                Some(s) => (s, Some(first)),
                None => {
                    return Err(MidiError::Invalid {
                        offset: status_offset,
                        message: "data byte without running status".into(),
                    })
                }
            }
        };
        match status {
            0xff => {
                running = None;
                let kind = cur.u8().map_err(|e| rebase(e, base))?;
                let len = cur.vlq().map_err(|e| rebase(e, base))? as usize;
                cur.take(len).map_err(|e| rebase(e, base))?;
                if kind == 0x2f {
                    return Ok(());
                }
            }
            0xf0 | 0xf7 => {
                running = None;
                let len = cur.vlq().map_err(|e| rebase(e, base))? as usize;
                cur.take(len).map_err(|e| rebase(e, base))?;
            }
            0x80..=0xef => {
                running = Some(status);
                let data_len = match status & 0xf0 {
                    0xc0 | 0xd0 => 1,
                    _ => 2,
                };
                let mut data = [0u8; 2];
                let mut filled = 0;
                if let Some(b) = first_data {
                    data[0] = b;
                    filled = 1;
                }
                while filled < data_len {
                    data[filled] = cur.u8().map_err(|e| rebase(e, base))?;
                    filled += 1;
                }
                if data[..data_len].iter().any(|b| b & 0x80 != 0) {
                    return Err(MidiError::Invalid {
                        offset: status_offset,
                        message: "status byte inside channel message data".into(),
                    });
                }
                let channel = status & 0x0f;
                let kind = match status & 0xf0 {
                    0x90 if data[1] > 0 => Some(NoteKind::On),
                    0x90 | 0x80 => Some(NoteKind::Off),
                    _ => None,
                };
                if let Some(kind) = kind {
                    out.push(NoteEvent {
                        tick,
                        pitch: data[0],
                        kind,
                        track,
                        channel,
                    });
                }
            }
            _ => {
                return Err(MidiError::Invalid {
                    offset: status_offset,
                    message: format!("unexpected status byte 0x{status:02x}"),
                })
            }
        }
    }
    // Missing end-of-track meta is tolerated.
    Ok(())
}

fn rebase(err: MidiError, base: usize) -> MidiError {
    match err {
        MidiError::Truncated { offset } => MidiError::Truncated {
            offset: offset + base,
        },
        MidiError::Invalid { offset, message } => MidiError::Invalid {
            offset: offset + base,
            message,
        },
        other => other,
    }
}

fn write_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 4];
    let mut n = 0;
    loop {
        buf[n] = (value & 0x7f) as u8;
        n += 1;
        value >>= 7;
        if value == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        let cont = if i > 0 { 0x80 } else { 0 };
        out.push(buf[i] | cont);
    }
}

/// Serializes note events as an SMF: format 0 when every event is on track 0,
/// format 1 otherwise. Note-on velocity is fixed at 100.
pub fn write_smf(events: &[NoteEvent], division: u16) -> Vec<u8> {
    let ntracks = events.iter().map(|e| e.track as usize + 1).max().unwrap_or(1);
    let format: u16 = if ntracks > 1 { 1 } else { 0 };
    let mut out = Vec::new();
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&format.to_be_bytes());
    out.extend_from_slice(&(ntracks as u16).to_be_bytes());
    out.extend_from_slice(&division.to_be_bytes());
    for track in 0..ntracks {
        let mut track_events: Vec<&NoteEvent> =
            events.iter().filter(|e| e.track as usize == track).collect();
        track_events.sort_by_key(|e| e.tick);
        let mut body = Vec::new();
        let mut last = 0u64;
        for e in track_events {
            write_vlq(&mut body, (e.tick - last) as u32);
            last = e.tick;
            match e.kind {
                NoteKind::On => body.extend_from_slice(&[0x90 | e.channel, e.pitch, 100]),
                NoteKind::Off => body.extend_from_slice(&[0x80 | e.channel, e.pitch, 64]),
            }
        }
        body.extend_from_slice(&[0x00, 0xff, 0x2f, 0x00]);
        out.extend_from_slice(b"MTrk");
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
    }
    out
}

pub fn read_smf(path: impl AsRef<Path>) -> Result<Vec<NoteEvent>, MidiError> {
    let bytes = fs::read(path)?;
    parse_smf(&bytes)
}

/// Ordered change-point frames of one stream.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FrameSequence {
    pub frames: Vec<MidiPitchSet>,
}

impl FrameSequence {
    pub fn new(frames: Vec<MidiPitchSet>) -> Self {
        FrameSequence { frames }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameOptions {
    pub quantize: u64,
    pub include_percussion: bool,
}

impl Default for FrameOptions {
    fn default() -> Self {
        FrameOptions {
            quantize: DEFAULT_QUANTIZE,
            include_percussion: false,
        }
    }
}

/// Merges all tracks into change-point frames, skipping the percussion
/// channel. See [`events_to_frames_with`].
pub fn events_to_frames(events: &[NoteEvent], quantize: u64) -> FrameSequence {
    events_to_frames_with(
        events,
        &FrameOptions {
            quantize,
            ..FrameOptions::default()
        },
    )
}

/// A frame is emitted for every quantize bucket that contains at least one
/// onset. It holds every pitch sounding at the end of the bucket plus the
/// bucket's onsets (so notes shorter than the bucket are not lost). Frames
/// identical to the previously emitted one are suppressed.
pub fn events_to_frames_with(events: &[NoteEvent], opts: &FrameOptions) -> FrameSequence {
    let quantize = opts.quantize.max(1);
    let mut sorted: Vec<&NoteEvent> = events
        .iter()
        .filter(|e| opts.include_percussion || e.channel != PERCUSSION_CHANNEL)
        .filter(|e| e.pitch < 128)
        .collect();
    sorted.sort_by_key(|e| e.tick / quantize);

    let mut active = [0u32; 128];
    let mut frames: Vec<MidiPitchSet> = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let bucket = sorted[i].tick / quantize;
        let mut onsets = MidiPitchSet::new();
        while i < sorted.len() && sorted[i].tick / quantize == bucket {
            let e = sorted[i];
            let slot = &mut active[e.pitch as usize];
            match e.kind {
                NoteKind::On => {
                    *slot += 1;
                    onsets.insert(e.pitch);
                }
                NoteKind::Off => *slot = slot.saturating_sub(1),
            }
            i += 1;
        }
        if onsets.is_empty() {
            continue;
        }
        let mut frame: MidiPitchSet = (0..128u8).filter(|&p| active[p as usize] > 0).collect();
        for p in onsets.iter() {
            frame.insert(p);
        }
        if frames.last() != Some(&frame) {
            frames.push(frame);
        }
    }
    FrameSequence { frames }
}

/// One line of the frame JSONL format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub frames: Vec<Vec<u8>>,
}

impl FrameRecord {
    pub fn from_sequence(id: Option<String>, seq: &FrameSequence) -> Self {
        FrameRecord {
            id,
            frames: seq.frames.iter().map(|f| f.to_vec()).collect(),
        }
    }

    pub fn to_sequence(&self) -> FrameSequence {
        FrameSequence {
            frames: self.frames.iter().map(|f| f.iter().copied().collect()).collect(),
        }
    }
}

pub fn read_frame_jsonl(path: impl AsRef<Path>) -> Result<Vec<FrameRecord>, MidiError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: FrameRecord = serde_json::from_str(&line).map_err(|e| MidiError::FrameLine {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if let Some(p) = record.frames.iter().flatten().find(|&&p| p > 127) {
            return Err(MidiError::FrameLine {
                line: idx + 1,
                message: format!("pitch {p} out of MIDI range"),
            });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn write_frame_jsonl(path: impl AsRef<Path>, records: &[FrameRecord]) -> Result<(), MidiError> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(p: &[u8]) -> MidiPitchSet {
        p.iter().copied().collect()
    }

    #[test]
    fn vlq_encoding() {
        for (value, bytes) in [
            (0u32, vec![0x00]),
            (0x40, vec![0x40]),
            (0x7f, vec![0x7f]),
            (0x80, vec![0x81, 0x00]),
            (0x2000, vec![0xc0, 0x00]),
            (0x0fff_ffff, vec![0xff, 0xff, 0xff, 0x7f]),
        ] {
            let mut out = Vec::new();
            write_vlq(&mut out, value);
            assert_eq!(out, bytes);
            let mut cur = Cursor { bytes: &out, pos: 0 };
            assert_eq!(cur.vlq().unwrap(), value);
        }
        let mut cur = Cursor {
            bytes: &[0x81, 0x81, 0x81, 0x81, 0x01],
            pos: 0,
        };
        assert!(matches!(cur.vlq(), Err(MidiError::Invalid { offset: 0, .. })));
    }

    #[test]
    fn frames_single_note() {
        let ev = [NoteEvent::on(0, 60), NoteEvent::off(480, 60)];
        assert_eq!(events_to_frames(&ev, 10).frames, vec![set(&[60])]);
    }

    #[test]
    fn frames_two_change_points() {
        let ev = [
            NoteEvent::on(0, 60),
            NoteEvent::on(0, 64),
            NoteEvent::off(480, 60),
            NoteEvent::on(480, 67),
        ];
        assert_eq!(
            events_to_frames(&ev, 10).frames,
            vec![set(&[60, 64]), set(&[64, 67])]
        );
    }

    #[test]
    fn frames_empty() {
        assert!(events_to_frames(&[], 10).is_empty());
    }

    #[test]
    fn jitter_within_bucket_merges() {
        let ev = [
            NoteEvent::on(0, 40),
            NoteEvent::on(3, 47),
            NoteEvent::on(7, 52),
            NoteEvent::off(400, 40),
            NoteEvent::off(400, 47),
            NoteEvent::off(400, 52),
        ];
        assert_eq!(events_to_frames(&ev, 10).frames, vec![set(&[40, 47, 52])]);
        assert_eq!(events_to_frames(&ev, 1).len(), 3);
    }

    #[test]
    fn percussion_excluded_by_default() {
        let ev = [
            NoteEvent::on(0, 36).with_channel(9),
            NoteEvent::on(0, 60).with_track(1),
        ];
        assert_eq!(events_to_frames(&ev, 10).frames, vec![set(&[60])]);
        let opts = FrameOptions {
            include_percussion: true,
            ..FrameOptions::default()
        };
        assert_eq!(events_to_frames_with(&ev, &opts).frames, vec![set(&[36, 60])]);
    }

    #[test]
    fn short_note_inside_bucket_kept() {
        let ev = [NoteEvent::on(0, 60), NoteEvent::off(2, 60), NoteEvent::on(100, 62)];
        assert_eq!(
            events_to_frames(&ev, 10).frames,
            vec![set(&[60]), set(&[62])]
        );
    }

    #[test]
    fn repeated_chord_after_silence_not_duplicated() {
        let ev = [
            NoteEvent::on(0, 60),
            NoteEvent::off(100, 60),
            NoteEvent::on(200, 60),
            NoteEvent::off(300, 60),
        ];
        assert_eq!(events_to_frames(&ev, 10).frames, vec![set(&[60])]);
    }

    #[test]
    fn bad_header_offset() {
        let err = parse_smf(b"RIFF\0\0\0\x06\0\0\0\x01\0\x60").unwrap_err();
        assert_eq!(err.offset(), Some(0));
        let err = parse_smf(b"MThd\0\0\0\x06\0\x02\0\x01\0\x60").unwrap_err();
        assert!(matches!(err, MidiError::UnsupportedFormat { format: 2, offset: 8 }));
        let err = parse_smf(b"MThd\0\0\0\x06\0\0").unwrap_err();
        assert!(matches!(err, MidiError::Truncated { .. }));
    }

    #[test]
    fn running_status_and_velocity_zero() {
        // delta 0: note-on 60; delta 0: running 64; delta 96: running 60 vel 0;
        // delta 0: running 64 vel 0; end of track
        let body: Vec<u8> = vec![
            0x00, 0x90, 60, 90, 0x00, 64, 90, 0x60, 60, 0, 0x00, 64, 0, 0x00, 0xff, 0x2f, 0x00,
        ];
        let mut bytes = b"MThd\0\0\0\x06\0\0\0\x01\0\x60MTrk".to_vec();
        bytes.extend_from_slice(&(body.len() as u32).to_be_bytes());
        bytes.extend_from_slice(&body);
        let events = parse_smf(&bytes).unwrap();
        assert_eq!(
            events,
            vec![
                NoteEvent::on(0, 60),
                NoteEvent::on(0, 64),
                NoteEvent::off(96, 60),
                NoteEvent::off(96, 64)
            ]
        );
    }

    #[test]
    fn truncated_track_reports_offset() {
        let mut bytes = b"MThd\0\0\0\x06\0\0\0\x01\0\x60MTrk".to_vec();
        bytes.extend_from_slice(&100u32.to_be_bytes());
        bytes.extend_from_slice(&[0x00, 0x90, 60, 90]);
        let err = parse_smf(&bytes).unwrap_err();
        assert!(matches!(err, MidiError::Truncated { offset: 14 }));
    }

    fn arb_events() -> impl Strategy<Value = Vec<NoteEvent>> {
        proptest::collection::vec(
            (0u64..5000, 0u8..128, any::<bool>(), 0u16..3, 0u8..16),
            0..40,
        )
        .prop_map(|raw| {
            let mut events: Vec<NoteEvent> = raw
                .into_iter()
                .map(|(tick, pitch, on, track, channel)| NoteEvent {
                    tick,
                    pitch,
                    kind: if on { NoteKind::On } else { NoteKind::Off },
                    track,
                    channel,
                })
                .collect();
            events.sort_by_key(|e| (e.tick, e.track));
            events
        })
    }

    proptest! {
        #[test]
        fn write_then_parse_preserves_events(events in arb_events()) {
            let bytes = write_smf(&events, 480);
            let parsed = parse_smf(&bytes).unwrap();
            // Parsing orders events by tick, then by track.
            let mut expected = events.clone();
            expected.sort_by_key(|e| (e.tick, e.track));
            let mut got = parsed.clone();
            got.sort_by_key(|e| (e.tick, e.track));
            prop_assert_eq!(got, expected);
        }

        #[test]
        fn frames_never_repeat_and_bounded_by_onsets(events in arb_events(), q in 1u64..50) {
            let seq = events_to_frames(&events, q);
            for w in seq.frames.windows(2) {
                prop_assert_ne!(&w[0], &w[1]);
            }
            prop_assert!(seq.frames.iter().all(|f| !f.is_empty()));
            let onset_ticks: std::collections::BTreeSet<u64> = events
                .iter()
                .filter(|e| e.kind == NoteKind::On && e.channel != PERCUSSION_CHANNEL)
                .map(|e| e.tick)
                .collect();
            prop_assert!(onset_ticks.len() >= seq.len());
        }
    }
}
