//! The minimal beat-anchored token vocabulary and its text format.
//!
//! Five token classes: bar delimiters, sixteenth-note positions within a
//! measure, note pitches over the 88-key range, durations drawn from a table
//! of ten sixteenth-note counts, and grace ornaments one semitone above or
//! below the note they prefix. Tempo, chord, and velocity tokens are
//! deliberately absent: the beat framework already owns timing, and dropping
//! the rest keeps sequences short.
//!
//! Fixed integer ids (151 total):
//!
//! ```text
//! Pad = 0, BarBOS = 1, BarEOS = 2,
//! Pos_0..Pos_47 = 3..50,
//! Note_21..Note_108 = 51..138,
//! Dur (table order) = 139..148,
//! GraceUp = 149, GraceDown = 150
//! ```

use crate::note::{PITCH_MAX, PITCH_MIN};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Total vocabulary size.
pub const VOCAB_SIZE: u16 = 151;
/// Number of position values (12 beats x 4 slots).
pub const POS_COUNT: u16 = 48;
/// Number of pitch values (88 keys).
pub const NOTE_COUNT: u16 = 88;

const ID_PAD: u16 = 0;
const ID_BAR_BOS: u16 = 1;
const ID_BAR_EOS: u16 = 2;
const ID_POS_BASE: u16 = 3;
const ID_NOTE_BASE: u16 = ID_POS_BASE + POS_COUNT; // 51
const ID_DUR_BASE: u16 = ID_NOTE_BASE + NOTE_COUNT; // 139
const ID_GRACE_UP: u16 = ID_DUR_BASE + DurationTable::LEN as u16; // 149
const ID_GRACE_DOWN: u16 = ID_GRACE_UP + 1; // 150

#[derive(Debug, Error, PartialEq)]
pub enum VocabError {
    #[error("token id {0} outside the vocabulary")]
    UnknownId(u16),
    #[error("position {0} outside [0, 47]")]
    BadPosition(u8),
    #[error("pitch {0} outside [{PITCH_MIN}, {PITCH_MAX}]")]
    BadPitch(u8),
    #[error("{0} sixteenths is not an allowed duration value")]
    BadDuration(u32),
    #[error("unrecognized token spelling `{0}`")]
    BadSpelling(String),
}

/// The ten allowed duration values, in sixteenth-note units.
///
/// The default table covers sixteenth through double-whole plus dotted
/// variants: `{1, 2, 3, 4, 6, 8, 12, 16, 24, 32}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DurationTable {
    values: [u32; Self::LEN],
}

impl DurationTable {
    pub const LEN: usize = 10;

    pub fn new(values: [u32; Self::LEN]) -> Result<Self, VocabError> {
        for w in values.windows(2) {
            if w[0] >= w[1] {
                return Err(VocabError::BadDuration(w[1]));
            }
        }
        if values[0] == 0 {
            return Err(VocabError::BadDuration(0));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[u32; Self::LEN] {
        &self.values
    }

    pub fn index_of(&self, sixteenths: u32) -> Option<usize> {
        self.values.iter().position(|&v| v == sixteenths)
    }

    pub fn contains(&self, sixteenths: u32) -> bool {
        self.index_of(sixteenths).is_some()
    }

    /// Snaps a raw sixteenth count to the nearest allowed value; exact ties
    /// resolve toward the shorter duration.
    pub fn snap(&self, count: u32) -> u32 {
        let mut best = self.values[0];
        let mut best_err = u32::MAX;
        for &v in &self.values {
            let err = count.abs_diff(v);
            if err < best_err {
                best = v;
                best_err = err;
            }
        }
        best
    }
}

impl Default for DurationTable {
    fn default() -> Self {
        Self { values: [1, 2, 3, 4, 6, 8, 12, 16, 24, 32] }
    }
}

/// One vocabulary token. `Pos` holds a slot offset in `[0, 47]`, `Note` a
/// MIDI pitch in `[21, 108]`, and `Dur` a sixteenth count from the duration
/// table; [`token_id`] rejects values outside those ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Token {
    Pad,
    BarBos,
    BarEos,
    Pos(u8),
    Note(u8),
    Dur(u32),
    GraceUp,
    GraceDown,
}

/// Integer id of a token; total over the 151-token vocabulary.
pub fn token_id(t: Token, table: &DurationTable) -> Result<u16, VocabError> {
    match t {
        Token::Pad => Ok(ID_PAD),
        Token::BarBos => Ok(ID_BAR_BOS),
        Token::BarEos => Ok(ID_BAR_EOS),
        Token::Pos(v) => {
            if u16::from(v) < POS_COUNT {
                Ok(ID_POS_BASE + u16::from(v))
            } else {
                Err(VocabError::BadPosition(v))
            }
        }
        Token::Note(p) => {
            if (PITCH_MIN..=PITCH_MAX).contains(&p) {
                Ok(ID_NOTE_BASE + u16::from(p - PITCH_MIN))
            } else {
                Err(VocabError::BadPitch(p))
            }
        }
        Token::Dur(v) => table
            .index_of(v)
            .map(|i| ID_DUR_BASE + i as u16)
            .ok_or(VocabError::BadDuration(v)),
        Token::GraceUp => Ok(ID_GRACE_UP),
        Token::GraceDown => Ok(ID_GRACE_DOWN),
    }
}

/// Token for an integer id; inverse of [`token_id`].
pub fn id_token(id: u16, table: &DurationTable) -> Result<Token, VocabError> {
    match id {
        ID_PAD => Ok(Token::Pad),
        ID_BAR_BOS => Ok(Token::BarBos),
        ID_BAR_EOS => Ok(Token::BarEos),
        _ if (ID_POS_BASE..ID_NOTE_BASE).contains(&id) => Ok(Token::Pos((id - ID_POS_BASE) as u8)),
        _ if (ID_NOTE_BASE..ID_DUR_BASE).contains(&id) => {
            Ok(Token::Note((id - ID_NOTE_BASE) as u8 + PITCH_MIN))
        }
        _ if (ID_DUR_BASE..ID_GRACE_UP).contains(&id) => {
            Ok(Token::Dur(table.values()[(id - ID_DUR_BASE) as usize]))
        }
        ID_GRACE_UP => Ok(Token::GraceUp),
        ID_GRACE_DOWN => Ok(Token::GraceDown),
        _ => Err(VocabError::UnknownId(id)),
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Pad => write!(f, "Pad"),
            Token::BarBos => write!(f, "BarBOS"),
            Token::BarEos => write!(f, "BarEOS"),
            Token::Pos(v) => write!(f, "Pos_{v}"),
            Token::Note(p) => write!(f, "Note_{p}"),
            Token::Dur(v) => write!(f, "Dur_{v}"),
            Token::GraceUp => write!(f, "GraceUp"),
            Token::GraceDown => write!(f, "GraceDown"),
        }
    }
}

impl FromStr for Token {
    type Err = VocabError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || VocabError::BadSpelling(s.to_string());
        match s {
            "Pad" => return Ok(Token::Pad),
            "BarBOS" => return Ok(Token::BarBos),
            "BarEOS" => return Ok(Token::BarEos),
            "GraceUp" => return Ok(Token::GraceUp),
            "GraceDown" => return Ok(Token::GraceDown),
            _ => {}
        }
        if let Some(v) = s.strip_prefix("Pos_") {
            return v.parse().map(Token::Pos).map_err(|_| bad());
        }
        if let Some(v) = s.strip_prefix("Note_") {
            return v.parse().map(Token::Note).map_err(|_| bad());
        }
        if let Some(v) = s.strip_prefix("Dur_") {
            return v.parse().map(Token::Dur).map_err(|_| bad());
        }
        Err(bad())
    }
}

/// Renders one bar as a space-separated line.
pub fn bar_to_line(bar: &[Token]) -> String {
    bar.iter()
        .map(Token::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Parses one space-separated line into a bar.
pub fn line_to_bar(line: &str) -> Result<Vec<Token>, VocabError> {
    line.split_whitespace().map(Token::from_str).collect()
}
