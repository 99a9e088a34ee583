//! Beat-anchored encoding and decoding between note streams and per-bar token
//! sequences.
//!
//! Encoding quantizes each onset onto the measure grid and each duration onto
//! the allowed sixteenth-count table. Decoding is the inverse: positions map
//! back to exact slot-boundary times and durations to the seconds spanned by
//! that many slots, so a score that already sits on the grid round-trips
//! within float noise.
//!
//! Per-bar grammar:
//!
//! ```text
//! BarBOS ( Pos (GraceUp|GraceDown)? Note Dur ( (GraceUp|GraceDown)? Note Dur )* )* BarEOS
//! ```
//!
//! with non-decreasing positions and, within one position, notes in ascending
//! pitch order. A grace token immediately precedes the note it ornaments and
//! names the ornament's offset from that note (GraceUp = one semitone above).

use crate::beat::{position_to_time, quantize_duration_slots, quantize_time, GridPosition, Measure, SlotWalker};
use crate::note::{NoteEvent, NoteSequence, PITCH_MAX, PITCH_MIN};
use crate::token::{DurationTable, Token};
use thiserror::Error;

/// Rendered length of a grace ornament, and the largest offset by which it
/// precedes its main note (shrinks to half a slot on narrow grids).
pub const GRACE_SECONDS: f64 = 0.060;

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("bar {bar}: {detail}")]
    GrammarViolation { bar: usize, detail: String },
    #[error("bar {bar}: position {pos} out of range ({slots} slots)")]
    PositionOutOfRange { bar: usize, pos: u8, slots: usize },
    #[error("{bars} bars for {measures} measures")]
    TooManyBars { bars: usize, measures: usize },
}

#[derive(Debug, Clone, Copy)]
enum Grace {
    None,
    Up,
    Down,
}

#[derive(Debug, Clone, Copy)]
struct Group {
    pos: u8,
    grace: Grace,
    pitch: u8,
    dur: u32,
}

/// Encodes a note stream into one token sequence per measure.
///
/// Each note lands on its nearest grid position; one `Pos` token is emitted
/// per distinct occupied position and notes at equal positions appear in
/// ascending pitch order. Notes whose quantized duration is zero become grace
/// candidates: if a main note one semitone away sits at the same position the
/// candidate turns into a grace token prefixed to that note's group,
/// otherwise it is kept as a regular note with the minimum duration.
pub fn encode(
    notes: &NoteSequence,
    measures: &[Measure],
    table: &DurationTable,
) -> Vec<Vec<Token>> {
    #[derive(Debug)]
    struct Quantized {
        at: GridPosition,
        pitch: u8,
        slots: u32,
    }

    let mut per_measure: Vec<Vec<Quantized>> = (0..measures.len()).map(|_| Vec::new()).collect();
    for note in notes {
        let at = quantize_time(note.onset, measures);
        let slots = quantize_duration_slots(note.duration, at, measures);
        per_measure[at.measure_index].push(Quantized { at, pitch: note.pitch, slots });
    }

    let mut bars = Vec::with_capacity(measures.len());
    for quantized in &mut per_measure {
        quantized.sort_by_key(|q| (q.at.pos, q.pitch, q.slots));

        // Mains first, then attach grace candidates.
        let mut groups: Vec<Group> = quantized
            .iter()
            .filter(|q| q.slots > 0)
            .map(|q| Group {
                pos: q.at.pos,
                grace: Grace::None,
                pitch: q.pitch,
                dur: table.snap(q.slots),
            })
            .collect();
        for cand in quantized.iter().filter(|q| q.slots == 0) {
            let host = groups.iter_mut().find(|g| {
                g.pos == cand.at.pos
                    && matches!(g.grace, Grace::None)
                    && g.pitch + 1 == cand.pitch
            });
            if let Some(g) = host {
                g.grace = Grace::Up;
                continue;
            }
            let host = groups.iter_mut().find(|g| {
                g.pos == cand.at.pos
                    && matches!(g.grace, Grace::None)
                    && g.pitch == cand.pitch + 1
            });
            if let Some(g) = host {
                g.grace = Grace::Down;
                continue;
            }
            // no qualifying neighbor: keep as a minimum-duration note
            groups.push(Group {
                pos: cand.at.pos,
                grace: Grace::None,
                pitch: cand.pitch,
                dur: table.values()[0],
            });
        }
        groups.sort_by_key(|g| (g.pos, g.pitch, g.dur));

        let mut bar = Vec::with_capacity(2 + groups.len() * 3);
        bar.push(Token::BarBos);
        let mut current_pos = None;
        for g in &groups {
            if current_pos != Some(g.pos) {
                bar.push(Token::Pos(g.pos));
                current_pos = Some(g.pos);
            }
            match g.grace {
                Grace::Up => bar.push(Token::GraceUp),
                Grace::Down => bar.push(Token::GraceDown),
                Grace::None => {}
            }
            bar.push(Token::Note(g.pitch));
            bar.push(Token::Dur(g.dur));
        }
        bar.push(Token::BarEos);
        bars.push(bar);
    }
    bars
}

/// Parses one bar against the grammar, returning its note groups.
fn parse_bar(bar_index: usize, tokens: &[Token], table: &DurationTable) -> Result<Vec<Group>, DecodeError> {
    let violation = |detail: &str| DecodeError::GrammarViolation {
        bar: bar_index,
        detail: detail.to_string(),
    };
    let mut iter = tokens.iter().copied().peekable();
    if iter.next() != Some(Token::BarBos) {
        return Err(violation("bar must start with BarBOS"));
    }

    let mut groups = Vec::new();
    let mut current_pos: Option<u8> = None;
    loop {
        match iter.next() {
            Some(Token::BarEos) => break,
            Some(Token::Pos(v)) => {
                if let Some(prev) = current_pos {
                    if v < prev {
                        return Err(violation(&format!("position decreases ({prev} -> {v})")));
                    }
                }
                current_pos = Some(v);
                if !matches!(
                    iter.peek(),
                    Some(Token::Note(_)) | Some(Token::GraceUp) | Some(Token::GraceDown)
                ) {
                    return Err(violation("Pos without a following note group"));
                }
            }
            Some(t @ (Token::GraceUp | Token::GraceDown | Token::Note(_))) => {
                let pos = current_pos.ok_or_else(|| violation("note group before any Pos"))?;
                let (grace, pitch) = match t {
                    Token::Note(p) => (Grace::None, p),
                    grace_tok => {
                        let grace = if grace_tok == Token::GraceUp { Grace::Up } else { Grace::Down };
                        match iter.next() {
                            Some(Token::Note(p)) => (grace, p),
                            _ => return Err(violation("dangling grace token")),
                        }
                    }
                };
                let dur = match iter.next() {
                    Some(Token::Dur(v)) if table.contains(v) => v,
                    Some(Token::Dur(v)) => {
                        return Err(violation(&format!("duration {v} not in the table")))
                    }
                    _ => return Err(violation("Note without a following Dur")),
                };
                if !(PITCH_MIN..=PITCH_MAX).contains(&pitch) {
                    return Err(violation(&format!("pitch {pitch} out of range")));
                }
                groups.push(Group { pos, grace, pitch, dur });
            }
            Some(t) => return Err(violation(&format!("unexpected token {t}"))),
            None => return Err(violation("bar must end with BarEOS")),
        }
    }
    if iter.next().is_some() {
        return Err(violation("tokens after BarEOS"));
    }
    Ok(groups)
}

/// Checks one bar against the grammar without decoding it.
pub fn validate_bar(tokens: &[Token], table: &DurationTable) -> Result<(), DecodeError> {
    parse_bar(0, tokens, table).map(|_| ())
}

/// Decodes per-bar token sequences back into a note stream.
///
/// Bar `i` renders against measure `i`; there may be at most as many bars as
/// measures (trailing measures stay silent). Durations span slots starting at
/// the note's position, crossing measure boundaries and extrapolating past
/// the grid at the final slot width. A grace renders as a short neighbor note
/// just before its main note, clamped to the measure start; a grace whose
/// pitch would leave the 88-key range is dropped.
pub fn decode(
    bars: &[Vec<Token>],
    measures: &[Measure],
    table: &DurationTable,
) -> Result<NoteSequence, DecodeError> {
    if bars.len() > measures.len() {
        return Err(DecodeError::TooManyBars { bars: bars.len(), measures: measures.len() });
    }
    let mut notes: Vec<NoteEvent> = Vec::new();
    for (bar_index, bar) in bars.iter().enumerate() {
        let measure = &measures[bar_index];
        for g in parse_bar(bar_index, bar, table)? {
            if usize::from(g.pos) >= measure.slot_count() {
                return Err(DecodeError::PositionOutOfRange {
                    bar: bar_index,
                    pos: g.pos,
                    slots: measure.slot_count(),
                });
            }
            let at = GridPosition::new(bar_index, g.pos);
            let onset = position_to_time(at, measures).expect("validated position");
            let mut walker = SlotWalker::new(measures, at);
            let duration: f64 = (0..g.dur).map(|_| walker.next_width()).sum();
            notes.push(NoteEvent { onset, duration, pitch: g.pitch });

            let grace_pitch = match g.grace {
                Grace::None => continue,
                Grace::Up => g.pitch.checked_add(1),
                Grace::Down => g.pitch.checked_sub(1),
            };
            let Some(grace_pitch) = grace_pitch.filter(|p| (PITCH_MIN..=PITCH_MAX).contains(p))
            else {
                continue;
            };
            let offset = GRACE_SECONDS.min(measure.slot_width(g.pos as usize) / 2.0);
            let grace_onset = (onset - offset).max(measure.start);
            notes.push(NoteEvent {
                onset: grace_onset,
                duration: GRACE_SECONDS,
                pitch: grace_pitch,
            });
        }
    }
    Ok(NoteSequence::from_notes(notes))
}
