//! Deterministic toolkit for building and evaluating symbolic piano-cover
//! datasets.
//!
//! The pipeline runs entirely on note streams and a beat annotation file:
//!
//! 1. [`smf`] reads Standard MIDI Files into absolute-time [`note`] streams
//!    and renders them back.
//! 2. [`beat`] turns beat/downbeat annotations into a measure grid with
//!    sixteenth-note slots.
//! 3. [`codec`] encodes note streams onto that grid as compact per-bar token
//!    sequences ([`token`]) and decodes them back to absolute time.
//! 4. [`align`] warps a cover against its source with DTW for pair filtering
//!    and measure-level weak alignment.
//! 5. [`style`] extracts relative bar-pair style attributes and bins them;
//!    [`mix`] interleaves bar pairs into capped training windows and exports
//!    the JSONL corpus.
//! 6. [`metrics`] scores covers with warp-path deviation, rhythmic grid
//!    coherence, and IOI pattern entropy.
//!
//! Everything is pure and deterministic: the same inputs always produce
//! byte-identical outputs.

pub mod align;
pub mod beat;
pub mod codec;
pub mod metrics;
pub mod mix;
pub mod note;
pub mod smf;
pub mod style;
pub mod token;

pub use align::{chroma_features, dtw, filter_pair, map_measures, wp_std, FeatureMatrix, WarpPath};
pub use beat::{build_measures, position_to_time, quantize_time, Beat, BeatFramework, GridPosition, Measure};
pub use codec::{decode, encode, validate_bar};
pub use metrics::{evaluate, ipe, rgc, wpd, MetricParams, MetricReport};
pub use mix::{export_corpus, interleave, training_windows, BuildStats, ClassId, MixedSequence};
pub use note::{NoteEvent, NoteSequence};
pub use smf::{read_smf, write_smf, SmfRead};
pub use style::{assign_bins, bar_stats, fit_bins, relative_attributes, BarStats, BinEdges, StyleAttributes, StyleBins};
pub use token::{bar_to_line, id_token, line_to_bar, token_id, DurationTable, Token};
