//! Bar-wise mixed training sequences.
//!
//! Feature bars X and target bars Y interleave as `[X_1, Y_1, X_2, Y_2, ...]`
//! with a parallel class-id stream telling the two sources apart. A training
//! window exists per target bar: up to four preceding interleaved bar pairs
//! of context, then `X_i`, then `Y_i`, with the loss mask set exactly on the
//! final target bar. Every token carries the style bin ids of its own bar
//! pair. Windows are capped at 1024 tokens by dropping whole context pairs
//! from the front; a window whose own pair does not fit is skipped and
//! reported.

use crate::style::StyleBins;
use crate::token::{token_id, DurationTable, Token, VocabError};
use serde::Serialize;
use std::io::{self, Write};

/// Maximum training-window length in tokens.
pub const MAX_WINDOW_TOKENS: usize = 1024;
/// Number of preceding bar pairs given as context.
pub const CONTEXT_PAIRS: usize = 4;

/// Provenance of a token within a mixed sequence. Serializes as 0 / 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ClassId {
    Src = 0,
    Tgt = 1,
}

impl Serialize for ClassId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(*self as u8)
    }
}

/// One training window: four parallel streams of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedSequence {
    pub song_id: String,
    pub target_index: usize,
    pub token_ids: Vec<u16>,
    pub class_ids: Vec<ClassId>,
    pub style_ids: Vec<[u8; 3]>,
    pub loss_mask: Vec<u8>,
}

impl MixedSequence {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

/// Counters reported by a window build.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BuildStats {
    pub windows_emitted: usize,
    pub windows_skipped: usize,
    pub windows_truncated: usize,
    pub context_pairs_dropped: usize,
}

const EMPTY_BAR: [Token; 2] = [Token::BarBos, Token::BarEos];

fn pad_bars<'a>(bars: &'a [Vec<Token>], len: usize) -> Vec<&'a [Token]> {
    (0..len)
        .map(|i| bars.get(i).map_or(&EMPTY_BAR[..], Vec::as_slice))
        .collect()
}

/// Interleaves feature and target bars into one stream with per-token class
/// ids. The shorter side is padded with empty bars.
pub fn interleave(
    x_bars: &[Vec<Token>],
    y_bars: &[Vec<Token>],
    table: &DurationTable,
) -> Result<(Vec<u16>, Vec<ClassId>), VocabError> {
    let len = x_bars.len().max(y_bars.len());
    let xs = pad_bars(x_bars, len);
    let ys = pad_bars(y_bars, len);
    let mut tokens = Vec::new();
    let mut classes = Vec::new();
    for (x, y) in xs.iter().zip(ys.iter()) {
        for &t in *x {
            tokens.push(token_id(t, table)?);
            classes.push(ClassId::Src);
        }
        for &t in *y {
            tokens.push(token_id(t, table)?);
            classes.push(ClassId::Tgt);
        }
    }
    Ok((tokens, classes))
}

/// Builds one training window per target bar index.
///
/// `bins` carries the style of each bar pair and must cover
/// `max(x_bars, y_bars)` pairs (missing entries fall back to the neutral
/// style).
pub fn training_windows(
    song_id: &str,
    x_bars: &[Vec<Token>],
    y_bars: &[Vec<Token>],
    bins: &[StyleBins],
    table: &DurationTable,
) -> Result<(Vec<MixedSequence>, BuildStats), VocabError> {
    let len = x_bars.len().max(y_bars.len());
    let xs = pad_bars(x_bars, len);
    let ys = pad_bars(y_bars, len);
    let bin_of = |i: usize| bins.get(i).copied().unwrap_or_else(StyleBins::default_style);

    let mut windows = Vec::with_capacity(len);
    let mut stats = BuildStats::default();
    for target in 0..len {
        let own_len = xs[target].len() + ys[target].len();
        if own_len > MAX_WINDOW_TOKENS {
            stats.windows_skipped += 1;
            continue;
        }

        // Keep as many of the preceding pairs as fit, dropping oldest first.
        let mut first = target.saturating_sub(CONTEXT_PAIRS);
        let pair_len = |i: usize| xs[i].len() + ys[i].len();
        let mut total = own_len + (first..target).map(pair_len).sum::<usize>();
        let full_context = first;
        while total > MAX_WINDOW_TOKENS {
            total -= pair_len(first);
            first += 1;
        }
        if first != full_context {
            stats.windows_truncated += 1;
            stats.context_pairs_dropped += first - full_context;
        }

        let mut w = MixedSequence {
            song_id: song_id.to_string(),
            target_index: target,
            token_ids: Vec::with_capacity(total),
            class_ids: Vec::with_capacity(total),
            style_ids: Vec::with_capacity(total),
            loss_mask: Vec::with_capacity(total),
        };
        for i in first..=target {
            let style = bin_of(i).as_array();
            for &t in xs[i] {
                w.token_ids.push(token_id(t, table)?);
                w.class_ids.push(ClassId::Src);
                w.style_ids.push(style);
                w.loss_mask.push(0);
            }
            for &t in ys[i] {
                w.token_ids.push(token_id(t, table)?);
                w.class_ids.push(ClassId::Tgt);
                w.style_ids.push(style);
                w.loss_mask.push(if i == target { 1 } else { 0 });
            }
        }
        debug_assert_eq!(w.len(), total);
        stats.windows_emitted += 1;
        windows.push(w);
    }
    Ok((windows, stats))
}

#[derive(Serialize)]
struct WindowLine<'a> {
    tokens: &'a [u16],
    class: &'a [ClassId],
    style: &'a [[u8; 3]],
    loss: &'a [u8],
}

/// Writes windows as JSONL, one window per line, ordered by
/// `(song id, target index)`. Re-exporting the same inputs produces a
/// byte-identical stream.
pub fn export_corpus<W: Write>(windows: &[MixedSequence], out: &mut W) -> io::Result<()> {
    let mut order: Vec<usize> = (0..windows.len()).collect();
    order.sort_by(|&a, &b| {
        (&windows[a].song_id, windows[a].target_index)
            .cmp(&(&windows[b].song_id, windows[b].target_index))
    });
    for i in order {
        let w = &windows[i];
        let line = WindowLine {
            tokens: &w.token_ids,
            class: &w.class_ids,
            style: &w.style_ids,
            loss: &w.loss_mask,
        };
        serde_json::to_writer(&mut *out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
