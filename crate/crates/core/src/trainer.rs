//! Mini-batch training against the concordance loss, and the
//! speaker-independent cross-validation protocol built on it.
//!
//! The loss is a set-level quantity: each mini-batch's predictions are
//! scored jointly with [`metrics::ccl_with_gradient`] and the per-prediction
//! gradients are pushed back through each recording's own forward pass.
//! Recordings keep their native length; nothing is padded.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::dataset::{CvRecord, Sample};
use crate::folds::FoldAssignment;
use crate::head::{HeadConfig, HeadError, HeadModel};
use crate::metrics::{self, MetricError, MetricReport};
use crate::optim::Adam;
use crate::rng;
use crate::targets::{TargetError, TargetScaler};

pub const MIN_BATCH: usize = 4;
const RESHUFFLE_ATTEMPTS: u64 = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(&'static str),
    #[error("need at least {need} training recordings, got {got}")]
    TooFewTraining { got: usize, need: usize },
    #[error("need at least 2 validation recordings, got {0}")]
    TooFewValidation(usize),
    #[error("epoch {epoch}: every shuffle produced a batch with constant targets")]
    DegenerateBatch { epoch: usize },
    #[error("speaker {0} has no fold")]
    UnassignedSpeaker(String),
    #[error("cross-validation needs at least 3 populated folds, got {0}")]
    TooFewFolds(usize),
    #[error("fold {0} has no recordings")]
    EmptyFold(usize),
    #[error(transparent)]
    Head(#[from] HeadError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Target(#[from] TargetError),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    /// Epochs without a validation CCC improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            max_epochs: 100,
            learning_rate: 1e-3,
            patience: 10,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size < MIN_BATCH {
            return Err(TrainError::InvalidConfig("batch_size must be at least 4"));
        }
        if self.patience == 0 {
            return Err(TrainError::InvalidConfig("patience must be at least 1"));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(TrainError::InvalidConfig("learning_rate must be non-negative"));
        }
        for b in [self.beta1, self.beta2] {
            if !(b > 0.0 && b < 1.0) {
                return Err(TrainError::InvalidConfig("moment decays must be in (0, 1)"));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(TrainError::InvalidConfig("epsilon must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochStats {
    pub epoch: usize,
    pub train_ccl: f64,
    pub val_ccc: f64,
    /// `None` when the predictions are constant.
    pub val_pearson: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_ccc: f64,
    /// Filled in by callers that have a clock.
    pub wall_time_s: Option<f64>,
}

/// Eval-mode scores.
pub fn predict(model: &HeadModel, samples: &[Sample<'_>]) -> Result<Vec<f64>, HeadError> {
    samples
        .iter()
        .map(|s| model.score(s.frames, s.spans))
        .collect()
}

fn batches(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(batch_size).collect();
    // A short tail cannot carry a correlation; it joins the previous batch.
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < MIN_BATCH) {
        out.pop();
        let n = out.len();
        let start = (n - 1) * batch_size;
        out[n - 1] = &order[start..];
    }
    out
}

fn epoch_order(
    n: usize,
    samples: &[Sample<'_>],
    config: &TrainConfig,
    epoch: usize,
) -> Result<Vec<usize>, TrainError> {
    for attempt in 0..RESHUFFLE_ATTEMPTS {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(config.seed, &[0x5B0F, epoch as u64, attempt]));
        let degenerate = batches(&order, config.batch_size).iter().any(|b| {
            let first = samples[b[0]].target;
            b.iter().all(|&i| samples[i].target == first)
        });
        if !degenerate {
            return Ok(order);
        }
    }
    Err(TrainError::DegenerateBatch { epoch })
}

/// Trains with early stopping and returns the best-validation-CCC parameters.
pub fn train(
    mut model: HeadModel,
    train_set: &[Sample<'_>],
    val_set: &[Sample<'_>],
    config: &TrainConfig,
) -> Result<(HeadModel, TrainReport), TrainError> {
    config.validate()?;
    if train_set.len() < 2 * config.batch_size {
        return Err(TrainError::TooFewTraining {
            got: train_set.len(),
            need: 2 * config.batch_size,
        });
    }
    if val_set.len() < 2 {
        return Err(TrainError::TooFewValidation(val_set.len()));
    }

    let val_targets: Vec<f64> = val_set.iter().map(|s| s.target).collect();
    let mut opt = Adam::new(
        model.params.len(),
        config.learning_rate,
        (config.beta1, config.beta2),
        config.epsilon,
    );
    let mut report = TrainReport {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_ccc: f64::NEG_INFINITY,
        wall_time_s: None,
    };
    let mut best_params = model.params.clone();
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        let order = epoch_order(train_set.len(), train_set, config, epoch)?;
        let mut loss_sum = 0.0;
        let mut n_batches = 0usize;
        for (step, batch) in batches(&order, config.batch_size).into_iter().enumerate() {
            let mut caches = Vec::with_capacity(batch.len());
            let mut preds = Vec::with_capacity(batch.len());
            let mut targets = Vec::with_capacity(batch.len());
            for (pos, &i) in batch.iter().enumerate() {
                let s = &train_set[i];
                let seed = rng::derive(config.seed, &[0xD0, epoch as u64, step as u64, pos as u64]);
                let cache = model.forward(s.frames, s.spans, true, seed)?;
                preds.push(cache.score);
                targets.push(s.target);
                caches.push(cache);
            }
            let (loss, d_pred) = metrics::ccl_with_gradient(&preds, &targets)?;
            let mut grads = model.params.zeros_like();
            for (cache, &g) in caches.iter().zip(&d_pred) {
                model.accumulate_gradients(cache, g, &mut grads)?;
            }
            opt.step(&mut model.params, &grads);
            loss_sum += loss;
            n_batches += 1;
        }

        let val_pred = predict(&model, val_set)?;
        let val_ccc = metrics::ccc(&val_pred, &val_targets)?;
        let val_pearson = metrics::pearson(&val_pred, &val_targets).ok();
        report.epochs.push(EpochStats {
            epoch,
            train_ccl: loss_sum / n_batches as f64,
            val_ccc,
            val_pearson,
        });
        if val_ccc > report.best_val_ccc {
            report.best_val_ccc = val_ccc;
            report.best_epoch = epoch;
            best_params = model.params.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    model.params = best_params;
    Ok((model, report))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Prediction {
    pub recording_id: String,
    pub fold: usize,
    pub score: f64,
    pub target: f64,
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub test_fold: usize,
    pub val_fold: usize,
    pub n_train: usize,
    pub model: HeadModel,
    pub report: TrainReport,
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FoldResult {
    pub test_fold: usize,
    pub val_fold: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub best_epoch: usize,
    pub best_val_ccc: f64,
    pub test: MetricReport,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub pooled: MetricReport,
    /// Every recording exactly once, sorted by recording id.
    pub predictions: Vec<Prediction>,
}

/// Fold membership per record, in the order of `records`.
fn fold_index(records: &[CvRecord], folds: &FoldAssignment) -> Result<Vec<usize>, TrainError> {
    records
        .iter()
        .map(|r| {
            folds
                .fold_of(&r.speaker_id)
                .ok_or_else(|| TrainError::UnassignedSpeaker(r.speaker_id.clone()))
        })
        .collect()
}

/// Number of folds taking part in cross-validation, after validating them.
pub fn cv_fold_count(records: &[CvRecord], folds: &FoldAssignment) -> Result<usize, TrainError> {
    let idx = fold_index(records, folds)?;
    let k = folds.n_folds();
    if k < 3 {
        return Err(TrainError::TooFewFolds(k));
    }
    for f in 0..k {
        if !idx.contains(&f) {
            return Err(TrainError::EmptyFold(f));
        }
    }
    Ok(k)
}

/// Trains and tests one rotation: test fold `test_fold`, validation fold
/// `test_fold + 1 (mod k)`, the rest for training.
///
/// Records are processed in recording-id order so the outcome does not
/// depend on how the caller ordered them.
pub fn cv_fold(
    records: &[CvRecord],
    folds: &FoldAssignment,
    head: &HeadConfig,
    config: &TrainConfig,
    test_fold: usize,
) -> Result<FoldOutcome, TrainError> {
    let k = cv_fold_count(records, folds)?;
    let val_fold = (test_fold + 1) % k;
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].recording_id.cmp(&records[b].recording_id));
    let records: Vec<&CvRecord> = order.iter().map(|&i| &records[i]).collect();
    let fold_of: Vec<usize> = records
        .iter()
        .map(|r| folds.fold_of(&r.speaker_id).expect("checked above"))
        .collect();

    let ratings: Vec<_> = records.iter().map(|r| r.ratings).collect();
    let mask: Vec<bool> = fold_of.iter().map(|&f| f != test_fold && f != val_fold).collect();
    let scaler = TargetScaler::fit(&ratings, &mask)?;
    let targets: Vec<f64> = ratings.iter().map(|r| scaler.score(r).train_target).collect();

    let pick = |want: &dyn Fn(usize) -> bool| -> Vec<usize> {
        (0..records.len()).filter(|&i| want(fold_of[i])).collect()
    };
    let train_idx = pick(&|f| f != test_fold && f != val_fold);
    let val_idx = pick(&|f| f == val_fold);
    let test_idx = pick(&|f| f == test_fold);
    let samples = |idx: &[usize]| -> Vec<Sample<'_>> {
        idx.iter().map(|&i| records[i].sample(targets[i])).collect()
    };

    let fold_cfg = TrainConfig {
        seed: rng::derive(config.seed, &[0xC5, test_fold as u64]),
        ..config.clone()
    };
    let model = HeadModel::init(head.clone(), fold_cfg.seed)?;
    let (model, report) = train(model, &samples(&train_idx), &samples(&val_idx), &fold_cfg)?;
    let scores = predict(&model, &samples(&test_idx))?;
    let predictions = test_idx
        .iter()
        .zip(scores)
        .map(|(&i, score)| Prediction {
            recording_id: records[i].recording_id.clone(),
            fold: test_fold,
            score,
            target: targets[i],
        })
        .collect();
    Ok(FoldOutcome {
        test_fold,
        val_fold,
        n_train: train_idx.len(),
        model,
        report,
        predictions,
    })
}

/// Collects per-fold outcomes (any order) into per-fold and pooled metrics.
pub fn assemble(outcomes: Vec<FoldOutcome>, n_val: &[usize]) -> Result<CvReport, TrainError> {
    let mut outcomes = outcomes;
    outcomes.sort_by_key(|o| o.test_fold);
    let mut folds = Vec::with_capacity(outcomes.len());
    let mut pooled = Vec::new();
    for o in outcomes {
        let pred: Vec<f64> = o.predictions.iter().map(|p| p.score).collect();
        let tgt: Vec<f64> = o.predictions.iter().map(|p| p.target).collect();
        folds.push(FoldResult {
            test_fold: o.test_fold,
            val_fold: o.val_fold,
            n_train: o.n_train,
            n_val: n_val.get(o.val_fold).copied().unwrap_or(0),
            n_test: o.predictions.len(),
            best_epoch: o.report.best_epoch,
            best_val_ccc: o.report.best_val_ccc,
            test: MetricReport::compute(&pred, &tgt)?,
        });
        pooled.extend(o.predictions);
    }
    pooled.sort_by(|a, b| a.recording_id.cmp(&b.recording_id));
    let pred: Vec<f64> = pooled.iter().map(|p| p.score).collect();
    let tgt: Vec<f64> = pooled.iter().map(|p| p.target).collect();
    Ok(CvReport {
        folds,
        pooled: MetricReport::compute(&pred, &tgt)?,
        predictions: pooled,
    })
}

/// Recording count per fold.
pub fn fold_sizes(records: &[CvRecord], folds: &FoldAssignment) -> Result<Vec<usize>, TrainError> {
    let k = cv_fold_count(records, folds)?;
    let mut sizes = alloc::vec![0; k];
    for f in fold_index(records, folds)? {
        sizes[f] += 1;
    }
    Ok(sizes)
}

/// Runs every rotation sequentially and pools the test predictions.
pub fn cross_validate(
    records: &[CvRecord],
    folds: &FoldAssignment,
    head: &HeadConfig,
    config: &TrainConfig,
) -> Result<CvReport, TrainError> {
    let k = cv_fold_count(records, folds)?;
    let outcomes = (0..k)
        .map(|f| cv_fold(records, folds, head, config, f))
        .collect::<Result<Vec<_>, _>>()?;
    assemble(outcomes, &fold_sizes(records, folds)?)
}
