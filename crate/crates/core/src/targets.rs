//! Two-rater target construction.
//!
//! Each rater is z-scored with that rater's own training-split statistics,
//! the two z-scores are averaged, and the average is min-max rescaled into
//! [0, 1] using the training split's range. Records outside the training
//! split reuse the same affine map and are clamped.

use alloc::vec::Vec;

use thiserror::Error;

use crate::metrics::mean_std;

pub const RATING_MIN: f64 = 0.0;
pub const RATING_MAX: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TargetError {
    #[error("rating {value} outside [0, 5]")]
    OutOfRange { value: f64 },
    #[error("ratings and mask differ in length ({ratings} vs {mask})")]
    MaskLength { ratings: usize, mask: usize },
    #[error("need at least 2 training records, got {0}")]
    TooFewTraining(usize),
    #[error("rater {rater} has zero variance over the training records")]
    ZeroVariance { rater: u8 },
    #[error("combined training targets are constant")]
    ConstantTargets,
}

/// Comprehensibility ratings from the two raters, each on the 0–5 rubric.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RatingPair {
    pub rater1: f64,
    pub rater2: f64,
}

impl RatingPair {
    pub fn new(rater1: f64, rater2: f64) -> Result<Self, TargetError> {
        for value in [rater1, rater2] {
            if !(RATING_MIN..=RATING_MAX).contains(&value) {
                return Err(TargetError::OutOfRange { value });
            }
        }
        Ok(Self { rater1, rater2 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TargetScore {
    pub combined_z: f64,
    pub train_target: f64,
}

/// The affine maps fitted on a training split.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TargetScaler {
    pub mean1: f64,
    pub std1: f64,
    pub mean2: f64,
    pub std2: f64,
    pub min_z: f64,
    pub max_z: f64,
}

impl TargetScaler {
    pub fn fit(ratings: &[RatingPair], train_mask: &[bool]) -> Result<Self, TargetError> {
        if ratings.len() != train_mask.len() {
            return Err(TargetError::MaskLength {
                ratings: ratings.len(),
                mask: train_mask.len(),
            });
        }
        let train: Vec<RatingPair> = ratings
            .iter()
            .zip(train_mask)
            .filter(|(_, &m)| m)
            .map(|(r, _)| *r)
            .collect();
        if train.len() < 2 {
            return Err(TargetError::TooFewTraining(train.len()));
        }
        let r1: Vec<f64> = train.iter().map(|r| r.rater1).collect();
        let r2: Vec<f64> = train.iter().map(|r| r.rater2).collect();
        let (mean1, std1) = mean_std(&r1);
        let (mean2, std2) = mean_std(&r2);
        // Ratings live on a 0..5 scale, so anything below this is a constant rater.
        if std1 <= 1e-12 {
            return Err(TargetError::ZeroVariance { rater: 1 });
        }
        if std2 <= 1e-12 {
            return Err(TargetError::ZeroVariance { rater: 2 });
        }
        let mut scaler = Self {
            mean1,
            std1,
            mean2,
            std2,
            min_z: f64::INFINITY,
            max_z: f64::NEG_INFINITY,
        };
        for r in &train {
            let z = scaler.combined_z(r);
            scaler.min_z = scaler.min_z.min(z);
            scaler.max_z = scaler.max_z.max(z);
        }
        if scaler.max_z - scaler.min_z <= 1e-12 {
            return Err(TargetError::ConstantTargets);
        }
        Ok(scaler)
    }

    pub fn combined_z(&self, r: &RatingPair) -> f64 {
        let z1 = (r.rater1 - self.mean1) / self.std1;
        let z2 = (r.rater2 - self.mean2) / self.std2;
        (z1 + z2) / 2.0
    }

    pub fn score(&self, r: &RatingPair) -> TargetScore {
        let combined_z = self.combined_z(r);
        let t = (combined_z - self.min_z) / (self.max_z - self.min_z);
        TargetScore {
            combined_z,
            train_target: t.clamp(0.0, 1.0),
        }
    }
}

/// Builds targets for every record using statistics of the masked records only.
pub fn build_targets(
    ratings: &[RatingPair],
    train_mask: &[bool],
) -> Result<Vec<TargetScore>, TargetError> {
    let scaler = TargetScaler::fit(ratings, train_mask)?;
    Ok(ratings.iter().map(|r| scaler.score(r)).collect())
}
