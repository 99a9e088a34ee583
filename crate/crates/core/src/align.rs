//! Symbolic alignment between a source and its cover.
//!
//! Both sides render to pitch-class activity features on a fixed hop, a
//! cosine-cost DTW produces the warp path, and the path drives three
//! consumers: the WP-std pair-filtering statistic, measure-boundary mapping
//! for weakly aligning the cover against the source's grid, and the
//! regression-based deviation metric in [`crate::metrics`].

use crate::beat::Measure;
use crate::note::NoteSequence;
use thiserror::Error;

/// Default feature hop in seconds.
pub const DEFAULT_HOP: f64 = 0.1;
/// Pairs are rejected when their lengths differ by more than this.
pub const MAX_LENGTH_DIFF: f64 = 30.0;
/// Pairs are rejected when WP-std exceeds this.
pub const MAX_WP_STD: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum AlignError {
    #[error("cannot align empty feature matrices")]
    EmptyInput,
    #[error("measure boundary at {time:.3}s maps to frame {frame} beyond the feature span ({frames} frames)")]
    BoundaryOutOfRange { time: f64, frame: usize, frames: usize },
}

/// Pitch-class activity per frame. Frames are L2-normalized; all-zero frames
/// (silence) stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    frames: Vec<[f64; 12]>,
    hop: f64,
}

impl FeatureMatrix {
    /// Wraps precomputed frames, for alternative feature front-ends.
    pub fn from_frames(frames: Vec<[f64; 12]>, hop: f64) -> Self {
        assert!(hop > 0.0, "hop must be positive");
        Self { frames, hop }
    }

    pub fn frames(&self) -> &[[f64; 12]] {
        &self.frames
    }

    pub fn hop(&self) -> f64 {
        self.hop
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Renders a note stream to chroma features. Frame `f` covers
/// `[f*hop, (f+1)*hop)`; each cell accumulates the sounding time of notes at
/// that pitch class within the frame, then the frame is L2-normalized.
pub fn chroma_features(notes: &NoteSequence, hop: f64) -> FeatureMatrix {
    chroma_features_with_span(notes, hop, notes.span())
}

/// Same as [`chroma_features`] but covering at least `span` seconds, so a
/// measure grid extending past the last note still maps inside the matrix.
pub fn chroma_features_with_span(notes: &NoteSequence, hop: f64, span: f64) -> FeatureMatrix {
    assert!(hop > 0.0, "hop must be positive");
    let span = span.max(notes.span());
    let n_frames = (span / hop).ceil() as usize;
    let mut frames = vec![[0.0f64; 12]; n_frames];
    for note in notes {
        let pc = usize::from(note.pitch % 12);
        let first = (note.onset / hop).floor() as usize;
        let last = ((note.end() / hop).ceil() as usize).min(n_frames);
        for (f, frame) in frames.iter_mut().enumerate().take(last).skip(first) {
            let lo = (f as f64) * hop;
            let hi = lo + hop;
            let overlap = note.end().min(hi) - note.onset.max(lo);
            if overlap > 0.0 {
                frame[pc] += overlap;
            }
        }
    }
    for frame in &mut frames {
        let norm = frame.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in frame.iter_mut() {
                *v /= norm;
            }
        }
    }
    FeatureMatrix { frames, hop }
}

/// Cost between two frames: `1 - cosine`. A zero frame against a nonzero one
/// costs 1; two zero frames cost 0.
fn frame_cost(a: &[f64; 12], b: &[f64; 12]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    match (na > 0.0, nb > 0.0) {
        (true, true) => 1.0 - dot / (na * nb),
        (false, false) => 0.0,
        _ => 1.0,
    }
}

/// A monotone warp path from `(0, 0)` to `(N-1, M-1)` over the step set
/// `{(1,0), (0,1), (1,1)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpPath {
    pub pairs: Vec<(usize, usize)>,
}

impl WarpPath {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Classic dynamic-programming DTW, returning the optimal path and its total
/// cost. `band` optionally restricts |i - j| to a Sakoe-Chiba radius.
pub fn dtw(a: &FeatureMatrix, b: &FeatureMatrix, band: Option<usize>) -> Result<(WarpPath, f64), AlignError> {
    if a.is_empty() || b.is_empty() {
        return Err(AlignError::EmptyInput);
    }
    let (n, m) = (a.len(), b.len());
    let inside = |i: usize, j: usize| match band {
        None => true,
        Some(r) => {
            // the band is widened so the corners stay reachable
            let center = (i as f64) * (m as f64 - 1.0) / ((n as f64 - 1.0).max(1.0));
            (j as f64 - center).abs() <= r as f64
        }
    };

    let mut cumulative = vec![f64::INFINITY; n * m];
    // backpointer: 0 none, 1 diagonal, 2 up (i-1), 3 left (j-1)
    let mut back = vec![0u8; n * m];
    for i in 0..n {
        for j in 0..m {
            if !inside(i, j) {
                continue;
            }
            let local = frame_cost(&a.frames[i], &b.frames[j]);
            let idx = i * m + j;
            if i == 0 && j == 0 {
                cumulative[idx] = local;
                continue;
            }
            // tie preference: diagonal, then up, then left
            let mut best = f64::INFINITY;
            let mut from = 0u8;
            if i > 0 && j > 0 && cumulative[idx - m - 1] < best {
                best = cumulative[idx - m - 1];
                from = 1;
            }
            if i > 0 && cumulative[idx - m] < best {
                best = cumulative[idx - m];
                from = 2;
            }
            if j > 0 && cumulative[idx - 1] < best {
                best = cumulative[idx - 1];
                from = 3;
            }
            if from != 0 {
                cumulative[idx] = best + local;
                back[idx] = from;
            }
        }
    }

    let mut pairs = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n - 1, m - 1);
    loop {
        pairs.push((i, j));
        match back[i * m + j] {
            0 => break,
            1 => {
                i -= 1;
                j -= 1;
            }
            2 => i -= 1,
            3 => j -= 1,
            _ => unreachable!(),
        }
    }
    pairs.reverse();
    debug_assert_eq!(pairs[0], (0, 0));
    Ok((WarpPath { pairs }, cumulative[n * m - 1]))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Deviation of the path from a unit-slope alignment, in seconds: the
/// standard deviation of `j - i` residuals around their median, scaled by
/// the hop. A constant offset (cover starts late) contributes nothing.
pub fn wp_std(path: &WarpPath, hop: f64) -> f64 {
    let mut diffs: Vec<f64> = path.pairs.iter().map(|&(i, j)| j as f64 - i as f64).collect();
    let med = median(&mut diffs);
    let residuals: Vec<f64> = diffs.iter().map(|d| d - med).collect();
    std_dev(&residuals) * hop
}

/// Maps source-side measure boundaries through the warp path to cover-side
/// times: a boundary's source frame maps to the median cover frame over the
/// path pairs at that source frame (robust to path plateaus). The result is
/// forced strictly increasing by clamping each boundary at least one hop
/// past its predecessor.
pub fn map_measures(
    source_measures: &[Measure],
    path: &WarpPath,
    hop: f64,
) -> Result<Vec<f64>, AlignError> {
    let n_frames = path.pairs.last().map_or(0, |&(i, _)| i + 1);
    let mut boundaries: Vec<f64> = source_measures.iter().map(|m| m.start).collect();
    if let Some(last) = source_measures.last() {
        boundaries.push(last.end);
    }

    let mut mapped = Vec::with_capacity(boundaries.len());
    let mut prev: Option<f64> = None;
    for time in boundaries {
        let frame = (time / hop).round() as usize;
        if frame >= n_frames {
            return Err(AlignError::BoundaryOutOfRange { time, frame, frames: n_frames });
        }
        let mut js: Vec<f64> = path
            .pairs
            .iter()
            .filter(|&&(i, _)| i == frame)
            .map(|&(_, j)| j as f64)
            .collect();
        let mut t = median(&mut js) * hop;
        if let Some(p) = prev {
            t = t.max(p + hop);
        }
        mapped.push(t);
        prev = Some(t);
    }
    Ok(mapped)
}

/// Why a pair was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    LengthDifference,
    WpStd,
}

/// Outcome of pair filtering, carrying both measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterReport {
    pub keep: bool,
    pub reasons: Vec<RejectReason>,
    pub length_diff: f64,
    pub wp_std: Option<f64>,
}

/// Accepts or rejects a source/cover pair: rejected when the lengths differ
/// by more than 30 seconds or the WP-std exceeds 1.0 s. WP-std is undefined
/// (and not held against the pair) when either side renders no frames.
pub fn filter_pair(source: &NoteSequence, cover: &NoteSequence, hop: f64) -> FilterReport {
    let length_diff = (source.span() - cover.span()).abs();
    let wp = {
        let fa = chroma_features(source, hop);
        let fb = chroma_features(cover, hop);
        dtw(&fa, &fb, None).ok().map(|(path, _)| wp_std(&path, hop))
    };
    let mut reasons = Vec::new();
    if length_diff > MAX_LENGTH_DIFF {
        reasons.push(RejectReason::LengthDifference);
    }
    if wp.is_some_and(|w| w > MAX_WP_STD) {
        reasons.push(RejectReason::WpStd);
    }
    FilterReport { keep: reasons.is_empty(), reasons, length_diff, wp_std: wp }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::note::NoteEvent;

    fn note(onset: f64, duration: f64, pitch: u8) -> NoteEvent {
        NoteEvent::new(onset, duration, pitch).unwrap()
    }

    #[test]
    fn chroma_full_frame_note() {
        let notes = NoteSequence::from_notes(vec![note(0.0, 0.1, 60)]);
        let f = chroma_features(&notes, 0.1);
        assert_eq!(f.len(), 1);
        assert!((f.frames()[0][0] - 1.0).abs() < 1e-12);
        assert!(f.frames()[0][1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn chroma_empty_sequence() {
        let f = chroma_features(&NoteSequence::empty(), 0.1);
        assert!(f.is_empty());
    }

    #[test]
    fn chroma_two_simultaneous_pitch_classes() {
        // pc 0 and pc 7, both sounding the whole frame
        let notes = NoteSequence::from_notes(vec![note(0.0, 0.1, 60), note(0.0, 0.1, 67)]);
        let f = chroma_features(&notes, 0.1);
        let v = f.frames()[0];
        assert!((v[0] - v[7]).abs() < 1e-12);
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_frames_left_zero() {
        let notes = NoteSequence::from_notes(vec![note(0.25, 0.05, 60)]);
        let f = chroma_features(&notes, 0.1);
        assert_eq!(f.len(), 3);
        assert!(f.frames()[0].iter().all(|&v| v == 0.0));
        assert!(f.frames()[1].iter().all(|&v| v == 0.0));
    }

    fn toy_features(pcs: &[usize]) -> FeatureMatrix {
        let frames = pcs
            .iter()
            .map(|&pc| {
                let mut f = [0.0; 12];
                f[pc] = 1.0;
                f
            })
            .collect();
        FeatureMatrix::from_frames(frames, 0.1)
    }

    #[test]
    fn dtw_identity_is_diagonal_and_free() {
        let a = toy_features(&[0, 3, 7, 2, 5]);
        let (path, cost) = dtw(&a, &a, None).unwrap();
        assert_eq!(cost, 0.0);
        let expect: Vec<(usize, usize)> = (0..5).map(|i| (i, i)).collect();
        assert_eq!(path.pairs, expect);
    }

    #[test]
    fn dtw_single_frame_against_repeats() {
        let a = toy_features(&[4]);
        let b = toy_features(&[4, 4, 4]);
        let (path, cost) = dtw(&a, &b, None).unwrap();
        assert_eq!(cost, 0.0);
        assert_eq!(path.pairs, vec![(0, 0), (0, 1), (0, 2)]);
    }

    #[test]
    fn dtw_empty_input_errors() {
        let a = toy_features(&[0]);
        let empty = FeatureMatrix::from_frames(vec![], 0.1);
        assert_eq!(dtw(&a, &empty, None).unwrap_err(), AlignError::EmptyInput);
    }

    #[test]
    fn dtw_path_invariants() {
        let a = toy_features(&[0, 1, 2, 3, 4, 5, 0, 2]);
        let b = toy_features(&[0, 0, 1, 3, 3, 4, 5, 0, 0, 2]);
        let (path, _) = dtw(&a, &b, None).unwrap();
        assert_eq!(*path.pairs.first().unwrap(), (0, 0));
        assert_eq!(*path.pairs.last().unwrap(), (7, 9));
        for w in path.pairs.windows(2) {
            let di = w[1].0 as i64 - w[0].0 as i64;
            let dj = w[1].1 as i64 - w[0].1 as i64;
            assert!(matches!((di, dj), (0, 1) | (1, 0) | (1, 1)));
        }
    }

    #[test]
    fn wp_std_diagonal_and_offset_paths_are_zero() {
        let diagonal = WarpPath { pairs: (0..50).map(|i| (i, i)).collect() };
        assert_eq!(wp_std(&diagonal, 0.1), 0.0);
        let offset = WarpPath { pairs: (0..50).map(|i| (i, i + 7)).collect() };
        assert_eq!(wp_std(&offset, 0.1), 0.0);
    }

    #[test]
    fn wp_std_grows_with_stretch() {
        // analytic 2x-stretch staircase: (i, 2i) and (i, 2i+1)
        let mut pairs = Vec::new();
        for i in 0..100 {
            pairs.push((i, 2 * i));
            pairs.push((i, 2 * i + 1));
        }
        let v = wp_std(&WarpPath { pairs }, 0.1);
        assert!(v > 1.0, "wp_std {v}");
    }

    #[test]
    fn filter_identical_pair_keeps() {
        let notes = NoteSequence::from_notes(vec![note(0.0, 1.0, 60), note(1.0, 1.0, 64)]);
        let r = filter_pair(&notes, &notes, 0.1);
        assert!(r.keep);
        assert_eq!(r.length_diff, 0.0);
        assert_eq!(r.wp_std, Some(0.0));
    }

    #[test]
    fn filter_rejects_long_cover() {
        let source = NoteSequence::from_notes(vec![note(0.0, 1.0, 60)]);
        let cover = NoteSequence::from_notes(vec![note(0.0, 32.0, 60)]);
        let r = filter_pair(&source, &cover, 0.1);
        assert!(!r.keep);
        assert!(r.reasons.contains(&RejectReason::LengthDifference));
        assert!((r.length_diff - 31.0).abs() < 1e-9);
    }

    #[test]
    fn filter_rejects_high_wp_std() {
        // cover is a 2x stretch: wp_std blows past 1.0 s
        let source = NoteSequence::from_notes(
            (0..120).map(|i| note(i as f64 * 0.5, 0.4, 40 + (i % 40) as u8)).collect(),
        );
        let cover = NoteSequence::from_notes(
            (0..120).map(|i| note(i as f64, 0.8, 40 + (i % 40) as u8)).collect(),
        );
        let r = filter_pair(&source, &cover, 0.1);
        assert!(!r.keep);
        assert!(r.reasons.contains(&RejectReason::WpStd), "{r:?}");
    }
}
