//! Rhythmic framework: timestamped beats/downbeats, derived measures, and the
//! sixteenth-note quantization grid.
//!
//! The framework is the immutable rhythmic ground truth for the whole
//! pipeline. Tokenization quantizes onto its slot grid and de-tokenization
//! restores absolute timing from it. Beat annotations are consumed as a JSON
//! file (`[{"time": 0.0, "downbeat": true}, ...]`, sorted by time), so any
//! beat tracker that writes that format can drive the pipeline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Quarter-beat subdivisions: each beat interval splits into 4 sixteenth slots.
pub const SLOTS_PER_BEAT: usize = 4;
/// Beats per measure are capped so the position vocabulary stays at 48.
pub const MAX_BEATS_PER_MEASURE: usize = 12;
/// Largest grid position: `4 * MAX_BEATS_PER_MEASURE - 1`.
pub const POS_MAX: u8 = (SLOTS_PER_BEAT * MAX_BEATS_PER_MEASURE - 1) as u8;

#[derive(Debug, Error, PartialEq)]
pub enum BeatError {
    #[error("beat times must be finite, non-negative, and strictly increasing (index {0})")]
    NonMonotoneBeats(usize),
    #[error("a framework needs at least 2 beats, got {0}")]
    TooFewBeats(usize),
    #[error("a framework needs at least one downbeat")]
    NoDownbeat,
    #[error("position {pos} out of range for measure {measure} ({slots} slots)")]
    PositionOutOfRange { measure: usize, pos: u8, slots: usize },
    #[error("measure index {0} out of range ({1} measures)")]
    MeasureOutOfRange(usize, usize),
}

/// One annotated beat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beat {
    pub time: f64,
    pub downbeat: bool,
}

/// Timestamped beats with downbeat flags. Times are strictly increasing,
/// with at least 2 beats and at least 1 downbeat. The first beat need not be
/// a downbeat (anacrusis is allowed).
#[derive(Debug, Clone, PartialEq)]
pub struct BeatFramework {
    beats: Vec<Beat>,
}

impl BeatFramework {
    pub fn new(beats: Vec<Beat>) -> Result<Self, BeatError> {
        if beats.len() < 2 {
            return Err(BeatError::TooFewBeats(beats.len()));
        }
        let mut prev = -1.0_f64;
        for (i, b) in beats.iter().enumerate() {
            if !b.time.is_finite() || b.time < 0.0 || b.time <= prev {
                return Err(BeatError::NonMonotoneBeats(i));
            }
            prev = b.time;
        }
        if !beats.iter().any(|b| b.downbeat) {
            return Err(BeatError::NoDownbeat);
        }
        Ok(Self { beats })
    }

    /// Constant-tempo framework: `bars` measures of `beats_per_bar` beats at
    /// the given BPM, first beat at t = 0. Test/demo fixture generator.
    pub fn synthetic(bpm: f64, beats_per_bar: usize, bars: usize) -> Result<Self, BeatError> {
        if bars == 0 || beats_per_bar == 0 || !(bpm.is_finite() && bpm > 0.0) {
            return Err(BeatError::TooFewBeats(0));
        }
        let spacing = 60.0 / bpm;
        let beats = (0..bars * beats_per_bar)
            .map(|k| Beat {
                time: k as f64 * spacing,
                downbeat: k % beats_per_bar == 0,
            })
            .collect();
        Self::new(beats)
    }

    pub fn beats(&self) -> &[Beat] {
        &self.beats
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, BeatJsonError> {
        let beats: Vec<Beat> = serde_json::from_slice(bytes)?;
        Ok(Self::new(beats)?)
    }

    pub fn to_json(&self) -> Vec<u8> {
        // serde_json cannot fail on this shape
        serde_json::to_vec_pretty(&self.beats).expect("beat serialization")
    }

    /// Fractional beat index of an absolute time, extrapolating before the
    /// first and after the last beat at the adjacent observed interval.
    pub fn time_to_beat_position(&self, t: f64) -> f64 {
        let beats = &self.beats;
        let n = beats.len();
        if t < beats[0].time {
            let step = beats[1].time - beats[0].time;
            return (t - beats[0].time) / step;
        }
        if t >= beats[n - 1].time {
            let step = beats[n - 1].time - beats[n - 2].time;
            return (n - 1) as f64 + (t - beats[n - 1].time) / step;
        }
        let k = match beats.binary_search_by(|b| b.time.total_cmp(&t)) {
            Ok(i) => return i as f64,
            Err(i) => i - 1,
        };
        let step = beats[k + 1].time - beats[k].time;
        k as f64 + (t - beats[k].time) / step
    }
}

#[derive(Debug, Error)]
pub enum BeatJsonError {
    #[error("invalid beat annotation JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Beat(#[from] BeatError),
}

/// One measure of the derived grid. `slot_boundaries` holds
/// `4 * beats_in_measure + 1` strictly increasing times; the first equals
/// `start` and the last equals `end` (= the next measure's start).
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    pub index: usize,
    pub start: f64,
    pub end: f64,
    pub beats_in_measure: usize,
    pub slot_boundaries: Vec<f64>,
    /// True for a pickup (anacrusis) measure preceding the first downbeat.
    pub is_pickup: bool,
    /// True for the extrapolated measure appended after the last downbeat.
    pub is_synthetic: bool,
}

impl Measure {
    pub fn slot_count(&self) -> usize {
        SLOTS_PER_BEAT * self.beats_in_measure
    }

    /// Width of slot `pos` in seconds.
    pub fn slot_width(&self, pos: usize) -> f64 {
        self.slot_boundaries[pos + 1] - self.slot_boundaries[pos]
    }
}

/// A slot-boundary index on the measure grid: `pos` counts sixteenth slots
/// from the start of the measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridPosition {
    pub measure_index: usize,
    pub pos: u8,
}

impl GridPosition {
    pub fn new(measure_index: usize, pos: u8) -> Self {
        Self { measure_index, pos }
    }
}

fn subdivide(beat_times: &[f64], out: &mut Vec<f64>) {
    // 4 equal slots per beat interval; the caller appends the final boundary.
    for w in beat_times.windows(2) {
        let (a, b) = (w[0], w[1]);
        for j in 0..SLOTS_PER_BEAT {
            out.push(a + (b - a) * j as f64 / SLOTS_PER_BEAT as f64);
        }
    }
}

/// Derives the measure grid from a framework.
///
/// One measure per consecutive downbeat pair, each beat interval split into 4
/// equal slots. Beats before the first downbeat form a pickup measure. One
/// trailing measure is appended after the last downbeat, extending the
/// observed trailing beats by the last observed inter-beat interval, so notes
/// past the final downbeat still have a home on the grid.
pub fn build_measures(framework: &BeatFramework) -> Result<Vec<Measure>, BeatError> {
    let beats = framework.beats();
    let downbeat_idx: Vec<usize> = beats
        .iter()
        .enumerate()
        .filter_map(|(i, b)| b.downbeat.then_some(i))
        .collect();
    if downbeat_idx.is_empty() {
        return Err(BeatError::NoDownbeat);
    }

    let mut measures = Vec::new();
    let push = |beat_times: &[f64], is_pickup: bool, is_synthetic: bool, measures: &mut Vec<Measure>| {
        let bim = beat_times.len() - 1;
        let mut bounds = Vec::with_capacity(SLOTS_PER_BEAT * bim + 1);
        subdivide(beat_times, &mut bounds);
        bounds.push(*beat_times.last().unwrap());
        measures.push(Measure {
            index: measures.len(),
            start: beat_times[0],
            end: *beat_times.last().unwrap(),
            beats_in_measure: bim,
            slot_boundaries: bounds,
            is_pickup,
            is_synthetic,
        });
    };
    // A downbeat span longer than the cap splits into several grid measures
    // so the grid stays gap-free and positions stay under 48.
    let push_chunked = |times: &[f64], is_pickup: bool, measures: &mut Vec<Measure>| {
        let mut count = 0;
        for chunk in chunk_intervals(times, MAX_BEATS_PER_MEASURE) {
            push(chunk, is_pickup, false, measures);
            count = chunk.len() - 1;
        }
        count
    };

    // Pickup: beats strictly before the first downbeat, ending at it.
    let first_db = downbeat_idx[0];
    if first_db > 0 {
        let times: Vec<f64> = beats[..=first_db].iter().map(|b| b.time).collect();
        push_chunked(&times, true, &mut measures);
    }

    // Regular measures between consecutive downbeats.
    let mut prev_count = 0usize;
    for pair in downbeat_idx.windows(2) {
        let times: Vec<f64> = beats[pair[0]..=pair[1]].iter().map(|b| b.time).collect();
        prev_count = push_chunked(&times, false, &mut measures);
    }

    // Trailing measure from the last downbeat: observed beats, then
    // extrapolation at the last observed interval. Interval count matches the
    // previous measure's, always at least one interval past the observed beats.
    let last_db = *downbeat_idx.last().unwrap();
    let mut times: Vec<f64> = beats[last_db..].iter().map(|b| b.time).collect();
    let last_interval = {
        let n = beats.len();
        beats[n - 1].time - beats[n - 2].time
    };
    let observed = times.len() - 1;
    let partial = observed % MAX_BEATS_PER_MEASURE;
    let target = (observed - partial)
        + prev_count.max(partial + 1).clamp(1, MAX_BEATS_PER_MEASURE);
    while times.len() < target + 1 {
        times.push(times.last().unwrap() + last_interval);
    }
    for chunk in chunk_intervals(&times, MAX_BEATS_PER_MEASURE) {
        push(chunk, false, true, &mut measures);
    }

    Ok(measures)
}

/// Splits `times` (n+1 boundary times for n intervals) into consecutive
/// overlapping windows of at most `cap` intervals each.
fn chunk_intervals(times: &[f64], cap: usize) -> impl Iterator<Item = &[f64]> {
    let n = times.len() - 1;
    (0..n.div_ceil(cap)).map(move |i| {
        let lo = i * cap;
        let hi = ((i + 1) * cap).min(n);
        &times[lo..=hi]
    })
}

/// Grid position of the slot boundary nearest to `t`, searching globally over
/// all boundaries. A boundary shared by two measures resolves to the later
/// measure at pos 0; exact midpoints between boundaries resolve to the later
/// boundary. Times before the grid clamp to (0, 0) and times at or past its
/// end clamp into the final slot of the trailing measure.
pub fn quantize_time(t: f64, measures: &[Measure]) -> GridPosition {
    debug_assert!(!measures.is_empty());
    let first = &measures[0];
    if t <= first.start {
        return GridPosition::new(0, 0);
    }
    let last = measures.last().unwrap();
    if t >= last.end {
        return GridPosition::new(last.index, (last.slot_count() - 1) as u8);
    }

    // Locate the measure whose [start, end) contains t.
    let mi = measures
        .partition_point(|m| m.end <= t)
        .min(measures.len() - 1);
    let m = &measures[mi];
    let bounds = &m.slot_boundaries;
    let j = bounds.partition_point(|&b| b <= t); // first boundary > t, in 1..=slots
    let (lo, hi) = (bounds[j - 1], bounds[j]);
    let pos = if t - lo < hi - t { j - 1 } else { j };
    if pos == m.slot_count() {
        // Promoted to the measure's end boundary.
        if mi + 1 < measures.len() {
            GridPosition::new(mi + 1, 0)
        } else {
            GridPosition::new(mi, (m.slot_count() - 1) as u8)
        }
    } else {
        GridPosition::new(mi, pos as u8)
    }
}

/// Exact slot-boundary time for a grid position; inverse of [`quantize_time`]
/// on the grid.
pub fn position_to_time(p: GridPosition, measures: &[Measure]) -> Result<f64, BeatError> {
    let m = measures
        .get(p.measure_index)
        .ok_or(BeatError::MeasureOutOfRange(p.measure_index, measures.len()))?;
    if p.pos as usize >= m.slot_count() {
        return Err(BeatError::PositionOutOfRange {
            measure: p.measure_index,
            pos: p.pos,
            slots: m.slot_count(),
        });
    }
    Ok(m.slot_boundaries[p.pos as usize])
}

/// Walks slot widths forward from `at`, crossing measure boundaries. Past the
/// end of the grid the final slot width repeats.
#[derive(Debug, Clone)]
pub struct SlotWalker<'a> {
    measures: &'a [Measure],
    measure: usize,
    pos: usize,
}

impl<'a> SlotWalker<'a> {
    pub fn new(measures: &'a [Measure], at: GridPosition) -> Self {
        Self {
            measures,
            measure: at.measure_index,
            pos: at.pos as usize,
        }
    }

    pub fn next_width(&mut self) -> f64 {
        let last = self.measures.len() - 1;
        if self.measure > last {
            let m = &self.measures[last];
            return m.slot_width(m.slot_count() - 1);
        }
        let m = &self.measures[self.measure];
        let w = m.slot_width(self.pos);
        self.pos += 1;
        if self.pos == m.slot_count() {
            self.pos = 0;
            self.measure += 1;
        }
        w
    }
}

/// Seconds spanned by `count` slots starting at `at`.
pub fn span_seconds(at: GridPosition, count: u32, measures: &[Measure]) -> f64 {
    let mut walker = SlotWalker::new(measures, at);
    (0..count).map(|_| walker.next_width()).sum()
}

/// Number of slots (integral + fractional) that `d` seconds cover starting at
/// `at`. The walk is capped once the count can no longer influence snapping.
fn slots_spanned(d: f64, at: GridPosition, measures: &[Measure]) -> f64 {
    const WALK_CAP: usize = 40;
    let mut walker = SlotWalker::new(measures, at);
    let mut remaining = d;
    for k in 0..WALK_CAP {
        let w = walker.next_width();
        if remaining <= w {
            return k as f64 + remaining / w;
        }
        remaining -= w;
    }
    WALK_CAP as f64
}

/// Quantizes a duration to a sixteenth-slot count at the given grid position,
/// before snapping to an allowed duration value. Counts the slots actually
/// spanned (so tempo changes under the note are honored), rounding half-up.
/// A result of 0 (duration under half the first slot) signals grace-note
/// candidacy to the caller.
pub fn quantize_duration_slots(d: f64, at: GridPosition, measures: &[Measure]) -> u32 {
    slots_spanned(d, at, measures).round() as u32
}
