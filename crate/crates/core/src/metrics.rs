//! Objective evaluation metrics.
//!
//! Three complementary measurements of a generated cover:
//!
//! * **WPD** (warp path deviation) — structural similarity to the source:
//!   the standard deviation of residuals from a least-squares line fitted to
//!   the DTW warp path. The regression absorbs global tempo differences, so
//!   uniform stretches score near zero while structural misalignments
//!   (repeated or missing sections) bend the path and score high.
//! * **RGC** (rhythmic grid coherence) — timing jitter: the mean normalized
//!   deviation of inter-onset intervals from the grid of a base unit chosen
//!   from the most frequent IOI. Zero means every interval is an exact
//!   multiple of the unit.
//! * **IPE** (IOI pattern entropy) — rhythmic variety: the Shannon entropy
//!   of overlapping n-grams over the IOI stream after clustering log-IOIs
//!   into discrete symbols. Constant rhythm scores zero; patternless rhythm
//!   approaches `n * log2(k)` bits.
//!
//! All parameters are recorded in every report so results can be reproduced
//! byte for byte.

use crate::align::{dtw, AlignError, FeatureMatrix, WarpPath};
use crate::note::NoteSequence;
use thiserror::Error;

/// IOI histogram resolution for base-unit selection: 10 ms bins anchored at
/// zero, i.e. 100 bins per second.
const HIST_BINS_PER_S: f64 = 100.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error("warp path has {0} pairs; need at least 3 to fit a line")]
    DegeneratePath(usize),
    #[error("need at least {need} onset events, got {got}")]
    InsufficientOnsets { need: usize, got: usize },
}

/// Tunable metric parameters, kept in every report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricParams {
    /// Feature hop for WPD, seconds.
    pub hop: f64,
    /// Number of k-means symbols for IPE.
    pub kmeans_k: usize,
    /// N-gram length for IPE.
    pub ngram_n: usize,
    /// Onsets closer than this merge into one event, seconds.
    pub ioi_merge: f64,
    /// IOIs above this are discarded for RGC, seconds.
    pub ioi_cap: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self { hop: 0.1, kmeans_k: 8, ngram_n: 4, ioi_merge: 0.025, ioi_cap: 2.0 }
    }
}

/// One evaluated pair. `None` marks a metric whose preconditions the input
/// could not meet (too few onsets, degenerate path).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub wpd: Option<f64>,
    pub rgc: Option<f64>,
    pub ipe: Option<f64>,
    /// Base tempo unit chosen by RGC, seconds.
    pub tau: Option<f64>,
    pub params: MetricParams,
}

// ---------------------------------------------------------------------------
// IOI extraction

/// Distinct onset event times: onsets within `merge` seconds of the current
/// event collapse into it (chords count once).
pub fn onset_events(notes: &NoteSequence, merge: f64) -> Vec<f64> {
    let mut events: Vec<f64> = Vec::new();
    for note in notes {
        match events.last() {
            Some(&t) if note.onset - t < merge => {}
            _ => events.push(note.onset),
        }
    }
    events
}

/// Inter-onset intervals of the merged event stream. All values are at least
/// the merge threshold.
pub fn ioi_sequence(notes: &NoteSequence, merge: f64) -> Vec<f64> {
    onset_events(notes, merge)
        .windows(2)
        .map(|w| w[1] - w[0])
        .collect()
}

// ---------------------------------------------------------------------------
// WPD

/// Standard deviation, in seconds, of the residuals from a least-squares
/// line `j ~ a*i + b` fitted over the DTW warp path of the two feature
/// matrices.
pub fn wpd(source: &FeatureMatrix, cover: &FeatureMatrix) -> Result<f64, MetricError> {
    let (path, _) = dtw(source, cover, None)?;
    wpd_of_path(&path, source.hop())
}

/// WPD of an already-computed warp path.
pub fn wpd_of_path(path: &WarpPath, hop: f64) -> Result<f64, MetricError> {
    let n = path.pairs.len();
    if n < 3 {
        return Err(MetricError::DegeneratePath(n));
    }
    let nf = n as f64;
    let (mut si, mut sj, mut sii, mut sij) = (0.0, 0.0, 0.0, 0.0);
    for &(i, j) in &path.pairs {
        let (x, y) = (i as f64, j as f64);
        si += x;
        sj += y;
        sii += x * x;
        sij += x * y;
    }
    let denom = nf * sii - si * si;
    let (a, b) = if denom.abs() < f64::EPSILON {
        (0.0, sj / nf)
    } else {
        let a = (nf * sij - si * sj) / denom;
        (a, (sj - a * si) / nf)
    };
    let var = path
        .pairs
        .iter()
        .map(|&(i, j)| {
            let r = j as f64 - (a * i as f64 + b);
            r * r
        })
        .sum::<f64>()
        / nf;
    Ok(var.sqrt() * hop)
}

// ---------------------------------------------------------------------------
// RGC

/// Base tempo unit: the center of the most populated 10 ms histogram bin
/// over the retained IOIs, ties resolving to the smallest bin.
fn base_unit(iois: &[f64]) -> f64 {
    let mut counts: Vec<(usize, usize)> = Vec::new(); // (bin, count), bins sparse
    for &v in iois {
        // multiply rather than divide by 0.01 so dyadic values land exactly
        let bin = (v * HIST_BINS_PER_S).floor() as usize;
        match counts.iter_mut().find(|(b, _)| *b == bin) {
            Some((_, c)) => *c += 1,
            None => counts.push((bin, 1)),
        }
    }
    let best = counts
        .iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .expect("nonempty IOIs");
    // center expressed as an integer ratio keeps e.g. 0.125 exact
    (2 * best.0 + 1) as f64 / (2.0 * HIST_BINS_PER_S)
}

/// Rhythmic grid coherence with the unit it settled on.
///
/// Needs at least 3 distinct onset events. IOIs above the cap are discarded;
/// each retained interval contributes `|v - tau*round(v/tau)| / tau` with the
/// multiple floored at 1, so an interval shorter than half the unit still
/// measures against the unit itself.
pub fn rgc(notes: &NoteSequence, params: &MetricParams) -> Result<(f64, f64), MetricError> {
    let events = onset_events(notes, params.ioi_merge);
    if events.len() < 3 {
        return Err(MetricError::InsufficientOnsets { need: 3, got: events.len() });
    }
    let iois: Vec<f64> = events
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&v| v <= params.ioi_cap)
        .collect();
    if iois.is_empty() {
        return Err(MetricError::InsufficientOnsets { need: 3, got: 1 });
    }
    let tau = base_unit(&iois);
    let mean_dev = iois
        .iter()
        .map(|&v| {
            let steps = (v / tau).round().max(1.0);
            (v - tau * steps).abs() / tau
        })
        .sum::<f64>()
        / iois.len() as f64;
    Ok((mean_dev, tau))
}

// ---------------------------------------------------------------------------
// IPE

/// Deterministic 1-D k-means: farthest-point initialization seeded from the
/// smallest value, Lloyd iterations until convergence (or 100 rounds).
/// Returns the assignment, relabeled so symbol order follows center order.
fn kmeans_1d(values: &[f64], k: usize) -> Vec<usize> {
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let k = k.min(distinct.len()).max(1);

    // farthest-point init from the smallest value
    let mut centers = vec![distinct[0]];
    while centers.len() < k {
        let next = distinct
            .iter()
            .copied()
            .max_by(|&x, &y| {
                let dx = centers.iter().map(|c| (x - c).abs()).fold(f64::INFINITY, f64::min);
                let dy = centers.iter().map(|c| (y - c).abs()).fold(f64::INFINITY, f64::min);
                dx.total_cmp(&dy).then(y.total_cmp(&x)) // tie: smaller value
            })
            .unwrap();
        centers.push(next);
    }
    centers.sort_by(f64::total_cmp);

    let assign = |centers: &[f64], v: f64| -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c_idx, &c) in centers.iter().enumerate() {
            let d = (v - c).abs();
            if d < best_d {
                best_d = d;
                best = c_idx;
            }
        }
        best
    };

    let mut assignment: Vec<usize> = values.iter().map(|&v| assign(&centers, v)).collect();
    for _ in 0..100 {
        let mut sums = vec![0.0; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (&v, &a) in values.iter().zip(&assignment) {
            sums[a] += v;
            counts[a] += 1;
        }
        for (c_idx, center) in centers.iter_mut().enumerate() {
            if counts[c_idx] > 0 {
                *center = sums[c_idx] / counts[c_idx] as f64;
            }
        }
        centers.sort_by(f64::total_cmp);
        let next: Vec<usize> = values.iter().map(|&v| assign(&centers, v)).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    assignment
}

/// IOI pattern entropy in bits.
///
/// Log-domain IOIs cluster into at most `k` symbols (fewer when the stream
/// has fewer distinct values); overlapping n-grams of the symbol stream form
/// an empirical distribution whose base-2 Shannon entropy is returned. Needs
/// at least `n` intervals.
pub fn ipe(notes: &NoteSequence, params: &MetricParams) -> Result<f64, MetricError> {
    let iois = ioi_sequence(notes, params.ioi_merge);
    let n = params.ngram_n;
    if iois.len() < n {
        return Err(MetricError::InsufficientOnsets { need: n + 1, got: iois.len() + 1 });
    }
    let logs: Vec<f64> = iois.iter().map(|v| v.ln()).collect();
    let symbols = kmeans_1d(&logs, params.kmeans_k);

    let mut counts: std::collections::HashMap<&[usize], usize> = std::collections::HashMap::new();
    for gram in symbols.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    let total = (symbols.len() - n + 1) as f64;
    let entropy = counts
        .values()
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    Ok(entropy)
}

/// Symbol stream used by IPE; exposed for scale-invariance checks.
pub fn ipe_symbols(notes: &NoteSequence, params: &MetricParams) -> Vec<usize> {
    let iois = ioi_sequence(notes, params.ioi_merge);
    let logs: Vec<f64> = iois.iter().map(|v| v.ln()).collect();
    if logs.is_empty() {
        return Vec::new();
    }
    kmeans_1d(&logs, params.kmeans_k)
}

// ---------------------------------------------------------------------------
// Evaluation

/// Runs all three metrics on a pair. WPD needs both sides; RGC and IPE
/// measure the cover alone. A metric whose preconditions fail reports as
/// `None` rather than failing the whole evaluation.
pub fn evaluate(source: &NoteSequence, cover: &NoteSequence, params: MetricParams) -> MetricReport {
    let source_features = crate::align::chroma_features(source, params.hop);
    let cover_features = crate::align::chroma_features(cover, params.hop);
    let wpd = wpd(&source_features, &cover_features).ok();
    let (rgc_val, tau) = match rgc(cover, &params) {
        Ok((v, t)) => (Some(v), Some(t)),
        Err(_) => (None, None),
    };
    let ipe_val = ipe(cover, &params).ok();
    MetricReport { wpd, rgc: rgc_val, ipe: ipe_val, tau, params }
}
