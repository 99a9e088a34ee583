//! Shared generators for property and oracle tests.

use coverkit_core::beat::{build_measures, position_to_time, span_seconds, Measure};
use coverkit_core::note::{NoteEvent, NoteSequence};
use coverkit_core::token::DurationTable;
use coverkit_core::{Beat, BeatFramework, GridPosition};
use proptest::prelude::*;

/// Framework with randomized meter and per-beat spacing (tempo changes
/// everywhere), beat spacing within the given range in seconds.
pub fn framework_strategy(
    bars: std::ops::Range<usize>,
    spacing: std::ops::Range<f64>,
) -> impl Strategy<Value = BeatFramework> {
    (bars, 3usize..=6).prop_flat_map(move |(n_bars, meter)| {
        let n_beats = n_bars * meter;
        proptest::collection::vec(spacing.clone(), n_beats)
            .prop_map(move |intervals| {
                let mut t = 0.0;
                let beats = intervals
                    .iter()
                    .enumerate()
                    .map(|(k, dt)| {
                        let b = Beat { time: t, downbeat: k % meter == 0 };
                        t += dt;
                        b
                    })
                    .collect();
                BeatFramework::new(beats).unwrap()
            })
    })
}

/// Note sitting exactly on the grid: onset on a slot boundary, duration an
/// allowed sixteenth count.
pub fn on_grid_notes(measures: &[Measure], table: &DurationTable, picks: &[(usize, usize, usize, u8)]) -> NoteSequence {
    let notes = picks
        .iter()
        .map(|&(m, pos, dur_idx, pitch)| {
            let m = m % measures.len();
            let pos = (pos % measures[m].slot_count()) as u8;
            let at = GridPosition::new(m, pos);
            let onset = position_to_time(at, measures).unwrap();
            let count = table.values()[dur_idx % DurationTable::LEN];
            let duration = span_seconds(at, count, measures);
            NoteEvent::new(onset, duration, 21 + pitch % 88).unwrap()
        })
        .collect();
    NoteSequence::from_notes(notes)
}

/// Random free-timed note cloud covering roughly the framework span.
pub fn note_cloud_strategy(span: f64, max_notes: usize) -> impl Strategy<Value = NoteSequence> {
    proptest::collection::vec(
        (0.0..span, 0.005f64..4.0, 21u8..=108),
        0..max_notes,
    )
    .prop_map(|raw| {
        NoteSequence::from_notes(
            raw.into_iter()
                .map(|(onset, duration, pitch)| NoteEvent::new(onset, duration, pitch).unwrap())
                .collect(),
        )
    })
}

pub fn measures_of(fw: &BeatFramework) -> Vec<Measure> {
    build_measures(fw).unwrap()
}
