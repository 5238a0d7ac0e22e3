//! Oral reading fluency scoring from frozen self-supervised speech embeddings.
//!
//! This crate holds the allocation-only algorithmic core: correlation metrics
//! and the concordance loss, rater target construction, speaker-independent
//! fold balancing, transformer layer weighting, the two regression heads with
//! hand-written backpropagation, the trainer, and the correlation probe.
//!
//! Nothing here touches the filesystem; see the `fluency` crate for file
//! formats and the command-line driver.

#![no_std]
// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dataset;
pub mod folds;
pub mod head;
pub mod layers;
pub mod matrix;
pub mod metrics;
pub mod optim;
pub mod probe;
mod rng;
pub mod spans;
pub mod targets;
pub mod trainer;

pub use dataset::{CvRecord, Sample};
pub use folds::{make_folds, FoldAssignment, FoldError};
pub use head::{
    Architecture, FcStackConfig, ForwardCache, HeadConfig, HeadError, HeadGradients, HeadModel,
};
pub use layers::{combine, resolve_weights, EmbeddingTensor, LayerError, LayerScheme};
pub use matrix::Matrix;
pub use metrics::{ccc, ccl, ccl_gradient, pearson, zscore, MetricError, MetricReport};
pub use probe::{
    extract_point_embeddings, probe_feature, probe_report, probe_split, EmbeddingMatrix,
    FeatureTable, ProbeError, ProbeOutcome, ProbeResult, ProbeSplit,
};
pub use spans::{word_spans, SpanError, WordAlignment, WordSpan};
pub use targets::{build_targets, RatingPair, TargetError, TargetScaler, TargetScore};
pub use trainer::{cross_validate, predict, train, CvReport, TrainConfig, TrainError, TrainReport};
