//! Core note-stream data model.
//!
//! [`NoteSequence`] is the universal intermediate between MIDI files, token
//! sequences, chroma features, and metrics: a flat list of pitched events with
//! absolute timing in seconds.

use thiserror::Error;

/// Lowest pitch on an 88-key piano (A0).
pub const PITCH_MIN: u8 = 21;
/// Highest pitch on an 88-key piano (C8).
pub const PITCH_MAX: u8 = 108;

#[derive(Debug, Error, PartialEq)]
pub enum NoteError {
    #[error("note onset must be finite and non-negative, got {0}")]
    InvalidOnset(f64),
    #[error("note duration must be finite and positive, got {0}")]
    InvalidDuration(f64),
    #[error("pitch {0} outside the 88-key range [{PITCH_MIN}, {PITCH_MAX}]")]
    PitchOutOfRange(u8),
}

/// A single note with absolute timing in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoteEvent {
    pub onset: f64,
    pub duration: f64,
    pub pitch: u8,
}

impl NoteEvent {
    pub fn new(onset: f64, duration: f64, pitch: u8) -> Result<Self, NoteError> {
        if !onset.is_finite() || onset < 0.0 {
            return Err(NoteError::InvalidOnset(onset));
        }
        if !duration.is_finite() || duration <= 0.0 {
            return Err(NoteError::InvalidDuration(duration));
        }
        if !(PITCH_MIN..=PITCH_MAX).contains(&pitch) {
            return Err(NoteError::PitchOutOfRange(pitch));
        }
        Ok(Self { onset, duration, pitch })
    }

    /// Time at which the note stops sounding.
    pub fn end(&self) -> f64 {
        self.onset + self.duration
    }
}

/// An ordered note stream, sorted by (onset, pitch). Ties are allowed (chords).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NoteSequence {
    notes: Vec<NoteEvent>,
}

impl NoteSequence {
    pub fn empty() -> Self {
        Self { notes: Vec::new() }
    }

    /// Builds a sequence from notes in any order; sorts into canonical order.
    pub fn from_notes(mut notes: Vec<NoteEvent>) -> Self {
        notes.sort_by(|a, b| {
            a.onset
                .total_cmp(&b.onset)
                .then_with(|| a.pitch.cmp(&b.pitch))
                .then_with(|| a.duration.total_cmp(&b.duration))
        });
        Self { notes }
    }

    pub fn notes(&self) -> &[NoteEvent] {
        &self.notes
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    /// End time of the last-sounding note, or 0.0 for an empty sequence.
    pub fn span(&self) -> f64 {
        self.notes.iter().map(|n| n.end()).fold(0.0, f64::max)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, NoteEvent> {
        self.notes.iter()
    }

    /// True when `other` matches note-for-note within `tol` seconds of onset
    /// and duration (pitches must match exactly).
    pub fn approx_eq(&self, other: &NoteSequence, tol: f64) -> bool {
        self.notes.len() == other.notes.len()
            && self.notes.iter().zip(other.notes.iter()).all(|(a, b)| {
                a.pitch == b.pitch
                    && (a.onset - b.onset).abs() <= tol
                    && (a.duration - b.duration).abs() <= tol
            })
    }
}

impl<'a> IntoIterator for &'a NoteSequence {
    type Item = &'a NoteEvent;
    type IntoIter = std::slice::Iter<'a, NoteEvent>;

    fn into_iter(self) -> Self::IntoIter {
        self.notes.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn note_event_validation() {
        assert!(NoteEvent::new(0.0, 0.5, 60).is_ok());
        assert_eq!(
            NoteEvent::new(-0.1, 0.5, 60),
            Err(NoteError::InvalidOnset(-0.1))
        );
        assert_eq!(
            NoteEvent::new(0.0, 0.0, 60),
            Err(NoteError::InvalidDuration(0.0))
        );
        assert_eq!(NoteEvent::new(0.0, 0.5, 20), Err(NoteError::PitchOutOfRange(20)));
        assert_eq!(NoteEvent::new(0.0, 0.5, 109), Err(NoteError::PitchOutOfRange(109)));
        assert!(NoteEvent::new(0.0, 0.5, 21).is_ok());
        assert!(NoteEvent::new(0.0, 0.5, 108).is_ok());
    }

    #[test]
    fn from_notes_sorts_by_onset_then_pitch() {
        let seq = NoteSequence::from_notes(vec![
            NoteEvent::new(1.0, 0.5, 60).unwrap(),
            NoteEvent::new(0.0, 0.5, 64).unwrap(),
            NoteEvent::new(0.0, 0.5, 60).unwrap(),
        ]);
        let pitches: Vec<u8> = seq.iter().map(|n| n.pitch).collect();
        let onsets: Vec<f64> = seq.iter().map(|n| n.onset).collect();
        assert_eq!(pitches, vec![60, 64, 60]);
        assert_eq!(onsets, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn span_of_empty_is_zero() {
        assert_eq!(NoteSequence::empty().span(), 0.0);
    }
}
