//! Word boundaries and their mapping onto embedding frames.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

/// Consecutive words may overlap by this much.
pub const OVERLAP_SLACK_S: f64 = 1e-3;
/// The last word may end this far past the recording duration.
pub const END_SLACK_S: f64 = 0.05;

// Decimal boundaries like 0.8 s / 0.02 s land a hair under the integer frame.
const FRAME_ROUNDING: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpanError {
    #[error("word {index}: boundaries not monotone")]
    NonMonotoneBoundaries { index: usize },
    #[error("word {index} ends at {end_s}s, past the {duration_s}s recording")]
    OutOfRange {
        index: usize,
        end_s: f64,
        duration_s: f64,
    },
    #[error("no word maps to at least one frame")]
    AllSpansEmpty,
    #[error("frame stride must be positive")]
    BadStride,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AlignedWord {
    pub token: String,
    pub start_s: f64,
    pub end_s: f64,
}

/// Validated, time-ordered word boundaries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WordAlignment {
    entries: Vec<AlignedWord>,
}

impl WordAlignment {
    pub fn new(entries: Vec<AlignedWord>, duration_s: f64) -> Result<Self, SpanError> {
        for (index, w) in entries.iter().enumerate() {
            if !(w.start_s >= 0.0 && w.start_s < w.end_s && w.end_s.is_finite()) {
                return Err(SpanError::NonMonotoneBoundaries { index });
            }
            if index > 0 {
                let prev = &entries[index - 1];
                if w.start_s < prev.start_s || prev.end_s > w.start_s + OVERLAP_SLACK_S {
                    return Err(SpanError::NonMonotoneBoundaries { index });
                }
            }
        }
        if let Some(last) = entries.last() {
            if last.end_s > duration_s + END_SLACK_S {
                return Err(SpanError::OutOfRange {
                    index: entries.len() - 1,
                    end_s: last.end_s,
                    duration_s,
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[AlignedWord] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Half-open frame interval pooled into one word vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WordSpan {
    pub word_index: usize,
    pub start: usize,
    pub end: usize,
}

impl WordSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// `floor((t − offset) / stride)` clamped to `[0, frames]`.
pub fn frame_of(t: f64, frames: usize, stride_s: f64, offset_s: f64) -> usize {
    let x = libm::floor((t - offset_s) / stride_s + FRAME_ROUNDING);
    if x <= 0.0 {
        0
    } else if x >= frames as f64 {
        frames
    } else {
        x as usize
    }
}

/// Maps words onto frames, each word absorbing the pause that follows it.
///
/// Word `i` covers `[frame(start_i), frame(start_{i+1}))`; the last word runs
/// to the final frame. Words that land on zero frames are folded into a
/// neighbour, so the result always partitions `[frame(start_0), frames)`.
pub fn word_spans(
    alignment: &WordAlignment,
    frames: usize,
    stride_s: f64,
    offset_s: f64,
) -> Result<Vec<WordSpan>, SpanError> {
    if !(stride_s > 0.0) {
        return Err(SpanError::BadStride);
    }
    let starts: Vec<usize> = alignment
        .entries()
        .iter()
        .map(|w| frame_of(w.start_s, frames, stride_s, offset_s))
        .collect();
    let mut spans = Vec::with_capacity(starts.len());
    for (i, &start) in starts.iter().enumerate() {
        let end = starts.get(i + 1).copied().unwrap_or(frames);
        // An empty span sits on its neighbour's boundary, so dropping it
        // leaves the previous (or, for the first word, next) span covering it.
        if end > start {
            spans.push(WordSpan {
                word_index: i,
                start,
                end,
            });
        }
    }
    if spans.is_empty() {
        return Err(SpanError::AllSpansEmpty);
    }
    Ok(spans)
}
