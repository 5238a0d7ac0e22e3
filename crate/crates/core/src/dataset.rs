use alloc::string::String;
use alloc::vec::Vec;

use crate::matrix::Matrix;
use crate::spans::WordSpan;
use crate::targets::RatingPair;

/// One training or evaluation example: layer-combined frames and a target in [0, 1].
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub frames: &'a Matrix,
    pub spans: Option<&'a [WordSpan]>,
    pub target: f64,
}

/// A rated recording as consumed by cross-validation.
#[derive(Debug, Clone)]
pub struct CvRecord {
    pub recording_id: String,
    pub speaker_id: String,
    pub ratings: RatingPair,
    /// `frames × dim`, already layer-combined.
    pub frames: Matrix,
    pub spans: Option<Vec<WordSpan>>,
}

impl CvRecord {
    pub fn sample(&self, target: f64) -> Sample<'_> {
        Sample {
            frames: &self.frames,
            spans: self.spans.as_deref(),
            target,
        }
    }
}
