//! Relative style attributes for bar pairs and their discretization.
//!
//! For a source bar X and a target bar Y, three ratios describe how the
//! arrangement transforms texture: polyphony (notes per occupied position),
//! rhythmic intensity (occupied positions per slot), and sustain (mean note
//! duration). Ratios are tempo- and meter-agnostic and make the identity
//! case exactly 1. Each ratio is discretized into five equal-mass bins fitted
//! on the corpus distribution, so bin 2 is the corpus median — the neutral
//! "default" style.

use crate::token::Token;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of bins per attribute.
pub const BIN_COUNT: usize = 5;
/// Interior quantile edges per attribute.
pub const EDGE_COUNT: usize = BIN_COUNT - 1;
/// Bin assigned when an attribute is undefined (the median bin).
pub const DEFAULT_BIN: u8 = 2;

#[derive(Debug, Error, PartialEq)]
pub enum StyleError {
    #[error("{attr}: need at least {need} defined values to fit bins, got {got}")]
    InsufficientData { attr: &'static str, need: usize, got: usize },
}

/// Per-bar counts underlying the three attributes. Grace tokens are ornaments,
/// not texture, and are excluded from every count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarStats {
    pub note_count: usize,
    pub unique_positions: usize,
    pub slot_count: usize,
    pub mean_duration_sixteenths: f64,
}

/// Counts one grammatical bar. `slot_count` comes from the measure the bar
/// renders against (4 x beats in measure).
pub fn bar_stats(bar: &[Token], slot_count: usize) -> BarStats {
    let mut note_count = 0usize;
    let mut unique_positions = 0usize;
    let mut dur_sum = 0u64;
    for t in bar {
        match t {
            Token::Note(_) => note_count += 1,
            Token::Pos(_) => unique_positions += 1,
            Token::Dur(v) => dur_sum += u64::from(*v),
            _ => {}
        }
    }
    let mean_duration_sixteenths = if note_count == 0 {
        0.0
    } else {
        dur_sum as f64 / note_count as f64
    };
    BarStats { note_count, unique_positions, slot_count, mean_duration_sixteenths }
}

/// The three relative attributes of a bar pair. `None` marks an undefined
/// value (the ratio's denominator bar quantity was zero); undefined is a
/// value here, not an error.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StyleAttributes {
    pub rel_polyphony: Option<f64>,
    pub rel_rhythm_intensity: Option<f64>,
    pub rel_sustain: Option<f64>,
}

/// Computes the relative attributes of a bar pair: each value is
/// `attr(y) / attr(x)`, undefined when either bar is empty.
pub fn relative_attributes(x: &BarStats, y: &BarStats) -> StyleAttributes {
    if x.note_count == 0 || y.note_count == 0 {
        return StyleAttributes::default();
    }
    let polyphony = |b: &BarStats| b.note_count as f64 / b.unique_positions as f64;
    let intensity = |b: &BarStats| b.unique_positions as f64 / b.slot_count as f64;
    StyleAttributes {
        rel_polyphony: Some(polyphony(y) / polyphony(x)),
        rel_rhythm_intensity: Some(intensity(y) / intensity(x)),
        rel_sustain: Some(y.mean_duration_sixteenths / x.mean_duration_sixteenths),
    }
}

/// Fitted interior quantile edges, one set per attribute. Persisted as JSON
/// alongside any dataset build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinEdges {
    pub polyphony: [f64; EDGE_COUNT],
    pub rhythm: [f64; EDGE_COUNT],
    pub sustain: [f64; EDGE_COUNT],
}

/// Nearest-rank percentile of a sorted slice: the value at 1-based rank
/// `ceil(p/100 * n)`.
fn nearest_rank(sorted: &[f64], percentile: f64) -> f64 {
    let n = sorted.len();
    let rank = (percentile / 100.0 * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

fn fit_one(
    attr: &'static str,
    values: impl Iterator<Item = Option<f64>>,
) -> Result<[f64; EDGE_COUNT], StyleError> {
    let mut defined: Vec<f64> = values.flatten().collect();
    if defined.len() < BIN_COUNT {
        return Err(StyleError::InsufficientData {
            attr,
            need: BIN_COUNT,
            got: defined.len(),
        });
    }
    defined.sort_by(f64::total_cmp);
    let mut edges = [0.0; EDGE_COUNT];
    for (i, edge) in edges.iter_mut().enumerate() {
        *edge = nearest_rank(&defined, 20.0 * (i + 1) as f64);
    }
    Ok(edges)
}

/// Fits the 20/40/60/80-percentile edges of each attribute over a corpus,
/// skipping undefined values. Needs at least five defined values per
/// attribute.
pub fn fit_bins(corpus: &[StyleAttributes]) -> Result<BinEdges, StyleError> {
    Ok(BinEdges {
        polyphony: fit_one("polyphony", corpus.iter().map(|a| a.rel_polyphony))?,
        rhythm: fit_one("rhythm", corpus.iter().map(|a| a.rel_rhythm_intensity))?,
        sustain: fit_one("sustain", corpus.iter().map(|a| a.rel_sustain))?,
    })
}

/// Discretized style of a bar pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleBins {
    pub polyphony_bin: u8,
    pub rhythm_bin: u8,
    pub sustain_bin: u8,
}

impl StyleBins {
    /// Neutral style: all attributes at the median bin.
    pub fn default_style() -> Self {
        Self {
            polyphony_bin: DEFAULT_BIN,
            rhythm_bin: DEFAULT_BIN,
            sustain_bin: DEFAULT_BIN,
        }
    }

    pub fn as_array(self) -> [u8; 3] {
        [self.polyphony_bin, self.rhythm_bin, self.sustain_bin]
    }
}

/// Bin of one value: the number of edges strictly below it, so ties fall to
/// the lower bin. Undefined values take the median bin.
fn bin_of(value: Option<f64>, edges: &[f64; EDGE_COUNT]) -> u8 {
    match value {
        None => DEFAULT_BIN,
        Some(v) => edges.iter().filter(|&&e| e < v).count() as u8,
    }
}

pub fn assign_bins(a: &StyleAttributes, edges: &BinEdges) -> StyleBins {
    StyleBins {
        polyphony_bin: bin_of(a.rel_polyphony, &edges.polyphony),
        rhythm_bin: bin_of(a.rel_rhythm_intensity, &edges.rhythm),
        sustain_bin: bin_of(a.rel_sustain, &edges.sustain),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(notes: usize, positions: usize, slots: usize, mean_dur: f64) -> BarStats {
        BarStats {
            note_count: notes,
            unique_positions: positions,
            slot_count: slots,
            mean_duration_sixteenths: mean_dur,
        }
    }

    #[test]
    fn bar_stats_counts() {
        let bar = vec![
            Token::BarBos,
            Token::Pos(0),
            Token::Note(60),
            Token::Dur(4),
            Token::Note(64),
            Token::Dur(4),
            Token::BarEos,
        ];
        let s = bar_stats(&bar, 16);
        assert_eq!(s.note_count, 2);
        assert_eq!(s.unique_positions, 1);
        assert_eq!(s.slot_count, 16);
        assert!((s.mean_duration_sixteenths - 4.0).abs() < 1e-12);
    }

    #[test]
    fn empty_bar_stats() {
        let s = bar_stats(&[Token::BarBos, Token::BarEos], 16);
        assert_eq!(s, stats(0, 0, 16, 0.0));
    }

    #[test]
    fn grace_tokens_excluded() {
        let bar = vec![
            Token::BarBos,
            Token::Pos(0),
            Token::GraceUp,
            Token::Note(60),
            Token::Dur(4),
            Token::BarEos,
        ];
        let s = bar_stats(&bar, 16);
        assert_eq!(s.note_count, 1);
    }

    #[test]
    fn polyphony_ratio() {
        let x = stats(4, 4, 16, 2.0);
        let y = stats(8, 4, 16, 2.0);
        let a = relative_attributes(&x, &y);
        assert_eq!(a.rel_polyphony, Some(2.0));
    }

    #[test]
    fn identity_pair_is_all_ones() {
        let x = stats(5, 3, 16, 2.5);
        let a = relative_attributes(&x, &x);
        assert_eq!(a.rel_polyphony, Some(1.0));
        assert_eq!(a.rel_rhythm_intensity, Some(1.0));
        assert_eq!(a.rel_sustain, Some(1.0));
    }

    #[test]
    fn intensity_ratio() {
        let x = stats(4, 4, 16, 1.0);
        let y = stats(8, 8, 16, 1.0);
        let a = relative_attributes(&x, &y);
        assert_eq!(a.rel_rhythm_intensity, Some(2.0));
    }

    #[test]
    fn empty_bars_make_attributes_undefined() {
        let x = stats(0, 0, 16, 0.0);
        let y = stats(4, 2, 16, 2.0);
        assert_eq!(relative_attributes(&x, &y), StyleAttributes::default());
        assert_eq!(relative_attributes(&y, &x), StyleAttributes::default());
    }

    fn corpus_of(values: &[f64]) -> Vec<StyleAttributes> {
        values
            .iter()
            .map(|&v| StyleAttributes {
                rel_polyphony: Some(v),
                rel_rhythm_intensity: Some(v),
                rel_sustain: Some(v),
            })
            .collect()
    }

    #[test]
    fn fit_bins_nearest_rank_small() {
        let edges = fit_bins(&corpus_of(&[1.25, 0.5, 2.0, 0.8, 1.0])).unwrap();
        assert_eq!(edges.polyphony, [0.5, 0.8, 1.0, 1.25]);
    }

    #[test]
    fn fit_bins_uniform_grid() {
        let values: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        let edges = fit_bins(&corpus_of(&values)).unwrap();
        // brute-force percentile check on 1..100
        assert_eq!(edges.polyphony, [20.0, 40.0, 60.0, 80.0]);
    }

    #[test]
    fn fit_bins_degenerate_distribution() {
        let edges = fit_bins(&corpus_of(&[3.0; 6])).unwrap();
        assert_eq!(edges.polyphony, [3.0; 4]);
        // every value ties with every edge and falls to the lowest bin
        let bins = assign_bins(
            &StyleAttributes {
                rel_polyphony: Some(3.0),
                rel_rhythm_intensity: Some(3.0),
                rel_sustain: Some(3.0),
            },
            &edges,
        );
        assert_eq!(bins.polyphony_bin, 0);
    }

    #[test]
    fn fit_bins_insufficient_data() {
        assert!(matches!(
            fit_bins(&corpus_of(&[1.0, 2.0, 3.0, 4.0])),
            Err(StyleError::InsufficientData { .. })
        ));
        // undefined values do not count toward the minimum
        let mut corpus = corpus_of(&[1.0, 2.0, 3.0, 4.0]);
        corpus.push(StyleAttributes::default());
        assert!(fit_bins(&corpus).is_err());
    }

    #[test]
    fn assign_bins_edge_rules() {
        let edges = BinEdges {
            polyphony: [0.5, 0.8, 1.0, 1.25],
            rhythm: [0.5, 0.8, 1.0, 1.25],
            sustain: [0.5, 0.8, 1.0, 1.25],
        };
        let attrs = |v: f64| StyleAttributes {
            rel_polyphony: Some(v),
            rel_rhythm_intensity: Some(v),
            rel_sustain: Some(v),
        };
        // below all edges
        assert_eq!(assign_bins(&attrs(0.1), &edges).polyphony_bin, 0);
        // equal to edge index 2: strictly-less rule keeps it in bin 2
        assert_eq!(assign_bins(&attrs(1.0), &edges).polyphony_bin, 2);
        // above all edges
        assert_eq!(assign_bins(&attrs(9.0), &edges).polyphony_bin, 4);
        // undefined maps to the median bin
        assert_eq!(assign_bins(&StyleAttributes::default(), &edges).polyphony_bin, DEFAULT_BIN);
    }

    #[test]
    fn refit_occupancy_balanced_within_one() {
        // distinct values: occupancy of each bin differs by at most 1
        for n in [5usize, 7, 23, 100] {
            let values: Vec<f64> = (0..n).map(|i| (i as f64) * 0.37 + 0.1).collect();
            let corpus = corpus_of(&values);
            let edges = fit_bins(&corpus).unwrap();
            let mut occupancy = [0usize; BIN_COUNT];
            for a in &corpus {
                occupancy[assign_bins(a, &edges).polyphony_bin as usize] += 1;
            }
            let (lo, hi) = (occupancy.iter().min().unwrap(), occupancy.iter().max().unwrap());
            assert!(hi - lo <= 1, "n={n}: occupancy {occupancy:?}");
        }
    }
}
