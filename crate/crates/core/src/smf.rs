//! Standard MIDI File ingestion and emission.
//!
//! Reading accepts format 0 and 1 files, merges all tracks, resolves
//! note-on/note-off pairs through the tempo map, and returns absolute-second
//! timing. Velocity is discarded; pitches outside the 88-key range are
//! dropped. Writing emits a format 0 file whose tempo map is derived from a
//! [`BeatFramework`], with a fixed velocity of 80 (the token representation
//! carries no velocity, so a constant is the least-surprise rendering).

use crate::beat::{build_measures, BeatFramework};
use crate::note::{NoteEvent, NoteSequence, PITCH_MAX, PITCH_MIN};
use thiserror::Error;

/// Pulses per quarter note used for emission. At the slowest supported beat
/// spacing one tick stays close to a millisecond.
pub const WRITE_PPQ: u16 = 480;
/// Velocity written for every note.
pub const WRITE_VELOCITY: u8 = 80;
/// Default tempo when a file carries no set-tempo event (120 BPM).
const DEFAULT_USPQ: u32 = 500_000;

#[derive(Debug, Error, PartialEq)]
pub enum SmfError {
    #[error("malformed SMF: {0}")]
    MalformedFile(String),
    #[error("unsupported SMF: {0}")]
    UnsupportedFormat(String),
}

/// Result of reading a file: the merged note stream plus a count of note-ons
/// that had no matching note-off and were truncated at end of track.
#[derive(Debug, Clone, PartialEq)]
pub struct SmfRead {
    pub notes: NoteSequence,
    pub dangling_note_ons: usize,
}

// ---------------------------------------------------------------------------
// Tempo map

/// Piecewise-constant tempo map over absolute ticks.
struct TempoMap {
    /// (tick, microseconds per quarter, seconds at tick), sorted by tick.
    segments: Vec<(u64, u32, f64)>,
    ppq: f64,
}

impl TempoMap {
    fn new(mut changes: Vec<(u64, u32)>, ppq: u16) -> Self {
        changes.sort_by_key(|&(tick, _)| tick);
        changes.dedup_by(|a, b| {
            // same tick: the later event wins
            if a.0 == b.0 {
                b.1 = a.1;
                true
            } else {
                false
            }
        });
        if changes.first().map_or(true, |&(tick, _)| tick > 0) {
            changes.insert(0, (0, DEFAULT_USPQ));
        }
        let ppq = f64::from(ppq);
        let mut segments = Vec::with_capacity(changes.len());
        let mut secs = 0.0;
        let mut prev: Option<(u64, u32)> = None;
        for (tick, uspq) in changes {
            if let Some((pt, pu)) = prev {
                secs += (tick - pt) as f64 * f64::from(pu) / ppq / 1e6;
            }
            segments.push((tick, uspq, secs));
            prev = Some((tick, uspq));
        }
        Self { segments, ppq }
    }

    fn tick_to_seconds(&self, tick: u64) -> f64 {
        let i = self
            .segments
            .partition_point(|&(t, _, _)| t <= tick)
            .saturating_sub(1);
        let (t0, uspq, secs) = self.segments[i];
        secs + (tick - t0) as f64 * f64::from(uspq) / self.ppq / 1e6
    }
}

// ---------------------------------------------------------------------------
// Reading

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn bytes(&mut self, n: usize, what: &str) -> Result<&'a [u8], SmfError> {
        if self.remaining() < n {
            return Err(SmfError::MalformedFile(format!(
                "unexpected end of data while reading {what}"
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8, SmfError> {
        Ok(self.bytes(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, SmfError> {
        let b = self.bytes(2, what)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32, SmfError> {
        let b = self.bytes(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Variable-length quantity, at most 4 bytes per the SMF spec.
    fn vlq(&mut self) -> Result<u32, SmfError> {
        let mut value: u32 = 0;
        for _ in 0..4 {
            let byte = self.u8("variable-length quantity")?;
            value = (value << 7) | u32::from(byte & 0x7f);
            if byte & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(SmfError::MalformedFile("variable-length quantity exceeds 4 bytes".into()))
    }
}

#[derive(Debug, Clone, Copy)]
enum TrackEvent {
    NoteOn { channel: u8, pitch: u8 },
    NoteOff { channel: u8, pitch: u8 },
    Tempo(u32),
}

/// Events of one track at absolute ticks, plus the track's end tick.
fn parse_track(reader: &mut Reader) -> Result<(Vec<(u64, TrackEvent)>, u64), SmfError> {
    let mut events = Vec::new();
    let mut tick: u64 = 0;
    let mut running_status: Option<u8> = None;
    loop {
        tick += u64::from(reader.vlq()?);
        let first = reader.u8("event status")?;
        let status = if first & 0x80 != 0 {
            // system and meta messages cancel running status
            running_status = (first < 0xf0).then_some(first);
            first
        } else {
            // data byte under running status
            reader.pos -= 1;
            running_status
                .ok_or_else(|| SmfError::MalformedFile("data byte without running status".into()))?
        };
        match status {
            0xff => {
                let meta_type = reader.u8("meta type")?;
                let len = reader.vlq()? as usize;
                let data = reader.bytes(len, "meta payload")?;
                match meta_type {
                    0x2f => return Ok((events, tick)),
                    0x51 => {
                        if len != 3 {
                            return Err(SmfError::MalformedFile("set-tempo length != 3".into()));
                        }
                        let uspq =
                            (u32::from(data[0]) << 16) | (u32::from(data[1]) << 8) | u32::from(data[2]);
                        if uspq == 0 {
                            return Err(SmfError::MalformedFile("zero tempo".into()));
                        }
                        events.push((tick, TrackEvent::Tempo(uspq)));
                    }
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                let len = reader.vlq()? as usize;
                reader.bytes(len, "sysex payload")?;
            }
            _ => {
                let kind = status & 0xf0;
                let channel = status & 0x0f;
                match kind {
                    0x80 => {
                        let pitch = reader.u8("note-off pitch")?;
                        reader.u8("note-off velocity")?;
                        events.push((tick, TrackEvent::NoteOff { channel, pitch }));
                    }
                    0x90 => {
                        let pitch = reader.u8("note-on pitch")?;
                        let velocity = reader.u8("note-on velocity")?;
                        let ev = if velocity == 0 {
                            TrackEvent::NoteOff { channel, pitch }
                        } else {
                            TrackEvent::NoteOn { channel, pitch }
                        };
                        events.push((tick, ev));
                    }
                    0xa0 | 0xb0 | 0xe0 => {
                        reader.bytes(2, "channel message")?;
                    }
                    0xc0 | 0xd0 => {
                        reader.bytes(1, "channel message")?;
                    }
                    _ => {
                        return Err(SmfError::MalformedFile(format!(
                            "unexpected status byte 0x{status:02x}"
                        )))
                    }
                }
            }
        }
    }
}

/// Parses a format 0 or 1 Standard MIDI File into an absolute-time note
/// stream. Overlapping same-pitch notes on one channel resolve last-on-wins;
/// dangling note-ons are truncated at end of track and counted.
pub fn read_smf(bytes: &[u8]) -> Result<SmfRead, SmfError> {
    let mut reader = Reader::new(bytes);
    if reader.bytes(4, "header chunk id")? != b"MThd" {
        return Err(SmfError::MalformedFile("missing MThd header".into()));
    }
    let header_len = reader.u32("header length")?;
    if header_len < 6 {
        return Err(SmfError::MalformedFile("header shorter than 6 bytes".into()));
    }
    let format = reader.u16("format")?;
    let ntrks = reader.u16("track count")?;
    let division = reader.u16("division")?;
    reader.bytes(header_len as usize - 6, "header padding")?;
    if format > 1 {
        return Err(SmfError::UnsupportedFormat(format!("format {format}")));
    }
    if division & 0x8000 != 0 {
        return Err(SmfError::UnsupportedFormat("SMPTE division".into()));
    }
    if division == 0 {
        return Err(SmfError::MalformedFile("zero ticks per quarter".into()));
    }

    let mut tracks = Vec::new();
    let mut parsed = 0u16;
    while parsed < ntrks && reader.remaining() > 0 {
        let chunk_id = reader.bytes(4, "chunk id")?;
        let chunk_len = reader.u32("chunk length")? as usize;
        if chunk_id == b"MTrk" {
            let body = reader.bytes(chunk_len, "track body")?;
            tracks.push(parse_track(&mut Reader::new(body))?);
            parsed += 1;
        } else {
            // alien chunk: skip per the SMF spec
            reader.bytes(chunk_len, "alien chunk")?;
        }
    }

    let tempo_changes: Vec<(u64, u32)> = tracks
        .iter()
        .flat_map(|(events, _)| events.iter())
        .filter_map(|&(tick, ev)| match ev {
            TrackEvent::Tempo(uspq) => Some((tick, uspq)),
            _ => None,
        })
        .collect();
    let tempo_map = TempoMap::new(tempo_changes, division);

    let mut notes = Vec::new();
    let mut dangling = 0usize;
    for (events, end_tick) in &tracks {
        // active note-ons keyed by (channel, pitch)
        let mut active: Vec<Option<u64>> = vec![None; 16 * 128];
        let close = |on_tick: u64, off_tick: u64, pitch: u8, notes: &mut Vec<NoteEvent>| {
            if off_tick <= on_tick || !(PITCH_MIN..=PITCH_MAX).contains(&pitch) {
                return;
            }
            let onset = tempo_map.tick_to_seconds(on_tick);
            let end = tempo_map.tick_to_seconds(off_tick);
            if end > onset {
                notes.push(NoteEvent { onset, duration: end - onset, pitch });
            }
        };
        for &(tick, ev) in events {
            match ev {
                TrackEvent::NoteOn { channel, pitch } => {
                    let slot = usize::from(channel) * 128 + usize::from(pitch);
                    if let Some(on_tick) = active[slot].take() {
                        // second onset terminates the first
                        close(on_tick, tick, pitch, &mut notes);
                    }
                    active[slot] = Some(tick);
                }
                TrackEvent::NoteOff { channel, pitch } => {
                    let slot = usize::from(channel) * 128 + usize::from(pitch);
                    if let Some(on_tick) = active[slot].take() {
                        close(on_tick, tick, pitch, &mut notes);
                    }
                }
                TrackEvent::Tempo(_) => {}
            }
        }
        for (slot, entry) in active.iter().enumerate() {
            if let Some(on_tick) = entry {
                dangling += 1;
                close(*on_tick, *end_tick, (slot % 128) as u8, &mut notes);
            }
        }
    }

    Ok(SmfRead {
        notes: NoteSequence::from_notes(notes),
        dangling_note_ons: dangling,
    })
}

// ---------------------------------------------------------------------------
// Writing

fn push_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut stack = [0u8; 4];
    let mut n = 0;
    loop {
        stack[n] = (value & 0x7f) as u8;
        value >>= 7;
        n += 1;
        if value == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        out.push(stack[i] | if i > 0 { 0x80 } else { 0 });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum WriteEventKind {
    // variant order doubles as the same-tick emission order: metas first,
    // then note-offs so back-to-back repeated pitches never overlap
    Tempo(u32),
    TimeSig(u8),
    NoteOff(u8),
    NoteOn(u8),
}

/// Renders a note stream as a format 0 SMF. The framework supplies the tick
/// grid: each beat is one quarter note, tempo events follow the observed beat
/// spacing (deduplicated while constant), and a time signature event is
/// emitted whenever the beats-per-measure count changes.
pub fn write_smf(notes: &NoteSequence, framework: &BeatFramework) -> Vec<u8> {
    let beats = framework.beats();
    let time_to_tick = |t: f64| -> u64 {
        let pos = framework.time_to_beat_position(t);
        (pos * f64::from(WRITE_PPQ)).round().max(0.0) as u64
    };

    let mut events: Vec<(u64, WriteEventKind)> = Vec::new();

    // Tempo per beat interval; the interval after the last beat repeats.
    let mut prev_uspq = 0u32;
    for k in 0..beats.len() - 1 {
        let interval = beats[k + 1].time - beats[k].time;
        let uspq = (interval * 1e6).round().clamp(1.0, 0xff_ff_ff as f64) as u32;
        if uspq != prev_uspq {
            events.push((u64::from(WRITE_PPQ) * k as u64, WriteEventKind::Tempo(uspq)));
            prev_uspq = uspq;
        }
    }

    // Time signature per measure, deduplicated while constant.
    let measures = build_measures(framework).expect("validated framework");
    let mut prev_sig = 0usize;
    for m in &measures {
        if m.beats_in_measure != prev_sig {
            events.push((time_to_tick(m.start), WriteEventKind::TimeSig(m.beats_in_measure as u8)));
            prev_sig = m.beats_in_measure;
        }
    }

    let mut end_tick = 0u64;
    for note in notes {
        let on = time_to_tick(note.onset);
        let off = time_to_tick(note.end()).max(on + 1);
        events.push((on, WriteEventKind::NoteOn(note.pitch)));
        events.push((off, WriteEventKind::NoteOff(note.pitch)));
        end_tick = end_tick.max(off);
    }

    events.sort();

    let mut track = Vec::new();
    let mut tick = 0u64;
    for (at, kind) in events {
        push_vlq(&mut track, (at - tick) as u32);
        tick = at;
        match kind {
            WriteEventKind::Tempo(uspq) => {
                track.extend_from_slice(&[0xff, 0x51, 0x03]);
                track.extend_from_slice(&uspq.to_be_bytes()[1..]);
            }
            WriteEventKind::TimeSig(nn) => {
                // nn/4 meter: denominator power 2, 24 clocks/click, 8 32nds/quarter
                track.extend_from_slice(&[0xff, 0x58, 0x04, nn, 0x02, 0x18, 0x08]);
            }
            WriteEventKind::NoteOn(pitch) => {
                track.extend_from_slice(&[0x90, pitch, WRITE_VELOCITY]);
            }
            WriteEventKind::NoteOff(pitch) => {
                track.extend_from_slice(&[0x80, pitch, 0]);
            }
        }
    }
    push_vlq(&mut track, 0);
    track.extend_from_slice(&[0xff, 0x2f, 0x00]);

    let mut out = Vec::with_capacity(track.len() + 22);
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&WRITE_PPQ.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beat::Beat;

    /// Minimal hand-rolled SMF builder for reader tests.
    fn smf_bytes(format: u16, division: u16, tracks: &[Vec<u8>]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"MThd");
        out.extend_from_slice(&6u32.to_be_bytes());
        out.extend_from_slice(&format.to_be_bytes());
        out.extend_from_slice(&(tracks.len() as u16).to_be_bytes());
        out.extend_from_slice(&division.to_be_bytes());
        for t in tracks {
            out.extend_from_slice(b"MTrk");
            out.extend_from_slice(&(t.len() as u32).to_be_bytes());
            out.extend_from_slice(t);
        }
        out
    }

    fn end_of_track(track: &mut Vec<u8>) {
        track.extend_from_slice(&[0x00, 0xff, 0x2f, 0x00]);
    }

    #[test]
    fn single_note_at_default_tempo() {
        // note-on pitch 60 at tick 0, note-off at tick 480, PPQ 480
        let mut t = vec![0x00, 0x90, 60, 100];
        t.extend_from_slice(&[0x83, 0x60, 0x80, 60, 0]); // delta 480
        end_of_track(&mut t);
        let read = read_smf(&smf_bytes(0, 480, &[t])).unwrap();
        assert_eq!(read.dangling_note_ons, 0);
        assert_eq!(read.notes.len(), 1);
        let n = read.notes.notes()[0];
        assert_eq!(n.pitch, 60);
        assert!((n.onset - 0.0).abs() < 1e-9);
        assert!((n.duration - 0.5).abs() < 1e-9);
    }

    #[test]
    fn empty_track_list_gives_empty_sequence() {
        let read = read_smf(&smf_bytes(0, 480, &[])).unwrap();
        assert!(read.notes.is_empty());
    }

    #[test]
    fn tempo_change_splits_note_duration() {
        // 120 BPM for beat 0, 60 BPM from beat 1; note spans beats 0..2.
        // Piecewise tempo map oracle: 0.5 s + 1.0 s = 1.5 s.
        let mut t = vec![
            0x00, 0xff, 0x51, 0x03, 0x07, 0xa1, 0x20, // 500000 uspq at tick 0
            0x00, 0x90, 60, 100,
        ];
        t.extend_from_slice(&[0x83, 0x60]); // delta 480
        t.extend_from_slice(&[0xff, 0x51, 0x03, 0x0f, 0x42, 0x40]); // 1000000 uspq
        t.extend_from_slice(&[0x83, 0x60, 0x80, 60, 0]); // delta 480, note off at tick 960
        end_of_track(&mut t);
        let read = read_smf(&smf_bytes(0, 480, &[t])).unwrap();
        let n = read.notes.notes()[0];
        assert!((n.duration - 1.5).abs() < 1e-9, "duration {}", n.duration);
    }

    #[test]
    fn format_two_rejected() {
        let err = read_smf(&smf_bytes(2, 480, &[])).unwrap_err();
        assert!(matches!(err, SmfError::UnsupportedFormat(_)));
    }

    #[test]
    fn truncated_header_rejected() {
        assert!(matches!(
            read_smf(b"MThd\x00\x00"),
            Err(SmfError::MalformedFile(_))
        ));
        assert!(matches!(read_smf(b"RIFF"), Err(SmfError::MalformedFile(_))));
    }

    #[test]
    fn dangling_note_on_truncates_at_end_of_track() {
        let mut t = vec![0x00, 0x90, 60, 100];
        // end-of-track arrives 480 ticks after the (unclosed) note-on
        t.extend_from_slice(&[0x83, 0x60, 0xff, 0x2f, 0x00]);
        let read = read_smf(&smf_bytes(0, 480, &[t])).unwrap();
        assert_eq!(read.dangling_note_ons, 1);
        assert_eq!(read.notes.len(), 1);
        assert!((read.notes.notes()[0].duration - 0.5).abs() < 1e-9);
    }

    #[test]
    fn overlapping_same_pitch_last_on_wins() {
        let mut t = vec![0x00, 0x90, 60, 100]; // on at 0
        t.extend_from_slice(&[0x83, 0x60, 0x90, 60, 100]); // on again at 480
        t.extend_from_slice(&[0x83, 0x60, 0x80, 60, 0]); // off at 960
        end_of_track(&mut t);
        let read = read_smf(&smf_bytes(0, 480, &[t])).unwrap();
        assert_eq!(read.notes.len(), 2);
        let d: Vec<f64> = read.notes.iter().map(|n| n.duration).collect();
        assert!((d[0] - 0.5).abs() < 1e-9 && (d[1] - 0.5).abs() < 1e-9);
        assert_eq!(read.dangling_note_ons, 0);
    }

    #[test]
    fn out_of_range_pitches_dropped() {
        let mut t = vec![0x00, 0x90, 15, 100];
        t.extend_from_slice(&[0x00, 0x90, 60, 100]);
        t.extend_from_slice(&[0x83, 0x60, 0x80, 15, 0]);
        t.extend_from_slice(&[0x00, 0x80, 60, 0]);
        end_of_track(&mut t);
        let read = read_smf(&smf_bytes(0, 480, &[t])).unwrap();
        assert_eq!(read.notes.len(), 1);
        assert_eq!(read.notes.notes()[0].pitch, 60);
    }

    #[test]
    fn running_status_supported() {
        let mut t = vec![0x00, 0x90, 60, 100];
        t.extend_from_slice(&[0x00, 64, 100]); // running status note-on
        t.extend_from_slice(&[0x83, 0x60, 60, 0]); // running status off (vel 0)
        t.extend_from_slice(&[0x00, 64, 0]);
        end_of_track(&mut t);
        let read = read_smf(&smf_bytes(0, 480, &[t])).unwrap();
        assert_eq!(read.notes.len(), 2);
    }

    #[test]
    fn constant_framework_writes_single_tempo_event() {
        let fw = BeatFramework::synthetic(120.0, 4, 2).unwrap();
        let bytes = write_smf(&NoteSequence::empty(), &fw);
        let tempo_events = bytes
            .windows(3)
            .filter(|w| w == &[0xff, 0x51, 0x03])
            .count();
        assert_eq!(tempo_events, 1);
        // 120 BPM -> 500000 uspq
        let at = bytes.windows(3).position(|w| w == [0xff, 0x51, 0x03]).unwrap();
        let uspq = (u32::from(bytes[at + 3]) << 16)
            | (u32::from(bytes[at + 4]) << 8)
            | u32::from(bytes[at + 5]);
        assert_eq!(uspq, 500_000);
    }

    #[test]
    fn empty_sequence_round_trips_to_empty() {
        let fw = BeatFramework::synthetic(120.0, 4, 2).unwrap();
        let read = read_smf(&write_smf(&NoteSequence::empty(), &fw)).unwrap();
        assert!(read.notes.is_empty());
    }

    #[test]
    fn write_read_round_trip_constant_tempo() {
        let fw = BeatFramework::synthetic(120.0, 4, 4).unwrap();
        let notes = NoteSequence::from_notes(vec![
            NoteEvent::new(0.0, 0.5, 60).unwrap(),
            NoteEvent::new(0.25, 1.0, 64).unwrap(),
            NoteEvent::new(3.75, 0.125, 100).unwrap(),
        ]);
        let read = read_smf(&write_smf(&notes, &fw)).unwrap();
        assert!(read.notes.approx_eq(&notes, 1e-3), "{:?}", read.notes);
    }

    #[test]
    fn write_read_round_trip_with_tempo_ramp() {
        // accelerating beats: interval shrinks from 0.5 s toward 0.3 s
        let mut beats = Vec::new();
        let mut t = 0.0;
        for k in 0..16 {
            beats.push(Beat { time: t, downbeat: k % 4 == 0 });
            t += 0.5 - 0.0125 * k as f64;
        }
        let fw = BeatFramework::new(beats).unwrap();
        let notes = NoteSequence::from_notes(vec![
            NoteEvent::new(0.1, 0.7, 55).unwrap(),
            NoteEvent::new(1.33, 2.0, 72).unwrap(),
            NoteEvent::new(4.0, 0.3, 88).unwrap(),
        ]);
        let read = read_smf(&write_smf(&notes, &fw)).unwrap();
        assert!(read.notes.approx_eq(&notes, 1e-3), "{:?}", read.notes);
    }
}
