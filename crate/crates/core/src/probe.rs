//! Correlation probes of pooled and bottleneck embeddings.
//!
//! For a feature `y` and an embedding matrix `X` (one row per dimension, one
//! column per recording), the probe picks the dimension whose Pearson
//! correlation with `y` is highest on a speaker-disjoint training split, then
//! reports that dimension's correlation on the held-out split. Running it on
//! the pooled backbone embedding (C) and on the trained head's bottleneck (B)
//! gives a per-feature retention ratio `P_b / P_c`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::dataset::Sample;
use crate::head::{HeadError, HeadModel};
use crate::metrics::{self, MetricError};
use crate::rng;

/// |P_c| below this makes the ratio unreliable.
pub const UNSTABLE_PC: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProbeError {
    #[error("need at least 2 speakers, got {0}")]
    TooFewSpeakers(usize),
    #[error("every embedding dimension is constant on the train split")]
    AllRowsConstant,
    #[error("feature is constant on the train split")]
    ConstantFeature,
    #[error("selected dimension or feature is constant on the test split")]
    ConstantOnTest,
    #[error("column mismatch: {0}")]
    ColumnMisalignment(String),
    #[error("split index {0} outside the matrix")]
    BadSplit(usize),
    #[error(transparent)]
    Head(#[from] HeadError),
}

/// `dim × n` matrix; column `j` belongs to `recording_ids[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f64>,
    pub recording_ids: Vec<String>,
}

impl EmbeddingMatrix {
    /// Builds from per-recording column vectors.
    pub fn from_columns(
        recording_ids: Vec<String>,
        columns: &[Vec<f64>],
    ) -> Result<Self, ProbeError> {
        if recording_ids.len() != columns.len() {
            return Err(ProbeError::ColumnMisalignment(alloc::format!(
                "{} ids for {} columns",
                recording_ids.len(),
                columns.len()
            )));
        }
        let dim = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != dim) {
            return Err(ProbeError::ColumnMisalignment("ragged columns".into()));
        }
        let n = columns.len();
        let mut data = alloc::vec![0.0; dim * n];
        for (j, col) in columns.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                data[i * n + j] = *v;
            }
        }
        Ok(Self {
            dim,
            data,
            recording_ids,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.recording_ids.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.dim).map(|i| self.row(i)[j]).collect()
    }
}

/// Hand-crafted feature values, columns aligned with the embedding matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub recording_ids: Vec<String>,
    pub features: Vec<(String, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Speaker-disjoint split with roughly `train_ratio` of the recordings in train.
///
/// Speakers are visited in a seeded random order; each goes to train if that
/// brings the train count closer to the target, otherwise to test.
pub fn probe_split<S: AsRef<str>>(
    speakers: &[S],
    train_ratio: f64,
    seed: u64,
) -> Result<ProbeSplit, ProbeError> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (j, s) in speakers.iter().enumerate() {
        groups.entry(s.as_ref()).or_default().push(j);
    }
    if groups.len() < 2 {
        return Err(ProbeError::TooFewSpeakers(groups.len()));
    }
    let mut order: Vec<Vec<usize>> = groups.into_values().collect();
    order.shuffle(&mut rng::stream(seed, &[0x9B0E]));

    let target = train_ratio * speakers.len() as f64;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for cols in &order {
        let now = train.len() as f64;
        let with = now + cols.len() as f64;
        if libm::fabs(with - target) < libm::fabs(now - target) {
            train.extend_from_slice(cols);
        } else {
            test.extend_from_slice(cols);
        }
    }
    // Keep both sides populated: move the smallest group across if needed.
    if train.is_empty() || test.is_empty() {
        let smallest = order.iter().min_by_key(|c| c.len()).expect("two groups");
        let (from, to) = if train.is_empty() {
            (&mut test, &mut train)
        } else {
            (&mut train, &mut test)
        };
        from.retain(|j| !smallest.contains(j));
        to.extend_from_slice(smallest);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(ProbeSplit { train, test })
}

fn gather(values: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&j| values[j]).collect()
}

/// Returns `(k, P)`: the 1-based selected dimension and its test Pearson.
///
/// Selection uses signed correlation unless `absolute` is set; ties go to the
/// lowest index. Rows constant on the train split are skipped.
pub fn probe_feature(
    x: &EmbeddingMatrix,
    y: &[f64],
    split: &ProbeSplit,
    absolute: bool,
) -> Result<(usize, f64), ProbeError> {
    if y.len() != x.n() {
        return Err(ProbeError::ColumnMisalignment(alloc::format!(
            "feature has {} values for {} columns",
            y.len(),
            x.n()
        )));
    }
    if let Some(&j) = split.train.iter().chain(&split.test).find(|&&j| j >= x.n()) {
        return Err(ProbeError::BadSplit(j));
    }
    let y_train = gather(y, &split.train);
    if metrics::zscore(&y_train).is_err() {
        return Err(ProbeError::ConstantFeature);
    }
    let mut best: Option<(usize, f64)> = None;
    for i in 0..x.dim() {
        let r = match metrics::pearson(&gather(x.row(i), &split.train), &y_train) {
            Ok(r) => r,
            Err(MetricError::ZeroVariance) => continue,
            Err(_) => return Err(ProbeError::ConstantFeature),
        };
        let key = if absolute { libm::fabs(r) } else { r };
        if best.is_none_or(|(_, b)| key > b) {
            best = Some((i, key));
        }
    }
    let (k, _) = best.ok_or(ProbeError::AllRowsConstant)?;
    let p = metrics::pearson(&gather(x.row(k), &split.test), &gather(y, &split.test))
        .map_err(|_| ProbeError::ConstantOnTest)?;
    Ok((k + 1, p))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProbeResult {
    pub feature: String,
    pub k_c: usize,
    pub k_b: usize,
    pub p_c: f64,
    pub p_b: f64,
    pub ratio: f64,
    /// Set when |P_c| is too small for the ratio to mean much.
    pub unstable: bool,
}

/// A feature's probe result or the reason it could not be probed.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOutcome {
    pub feature: String,
    pub result: Result<ProbeResult, ProbeError>,
}

fn check_alignment(m: &EmbeddingMatrix, ids: &[String], which: &str) -> Result<(), ProbeError> {
    if m.recording_ids != ids {
        return Err(ProbeError::ColumnMisalignment(alloc::format!(
            "{which} columns do not match the feature rows"
        )));
    }
    Ok(())
}

/// One outcome per feature: successes sorted by ratio descending, then failures
/// in table order.
pub fn probe_report(
    x_c: &EmbeddingMatrix,
    x_b: &EmbeddingMatrix,
    features: &FeatureTable,
    split: &ProbeSplit,
    absolute: bool,
) -> Result<Vec<ProbeOutcome>, ProbeError> {
    check_alignment(x_c, &features.recording_ids, "C")?;
    check_alignment(x_b, &features.recording_ids, "B")?;
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (name, y) in &features.features {
        let result = probe_feature(x_c, y, split, absolute).and_then(|(k_c, p_c)| {
            let (k_b, p_b) = probe_feature(x_b, y, split, absolute)?;
            Ok(ProbeResult {
                feature: name.clone(),
                k_c,
                k_b,
                p_c,
                p_b,
                ratio: p_b / p_c,
                unstable: libm::fabs(p_c) < UNSTABLE_PC,
            })
        });
        match result {
            Ok(r) => ok.push(r),
            Err(e) => failed.push(ProbeOutcome {
                feature: name.clone(),
                result: Err(e),
            }),
        }
    }
    ok.sort_by(|a: &ProbeResult, b| b.ratio.total_cmp(&a.ratio));
    let mut out: Vec<ProbeOutcome> = ok
        .into_iter()
        .map(|r| ProbeOutcome {
            feature: r.feature.clone(),
            result: Ok(r),
        })
        .collect();
    out.extend(failed);
    Ok(out)
}

/// Probe points for each sample: C is the time-mean of the (layer-combined)
/// frames, B is the head's last hidden activation in eval mode.
pub fn extract_point_embeddings(
    model: &HeadModel,
    samples: &[Sample<'_>],
    recording_ids: Vec<String>,
) -> Result<(EmbeddingMatrix, EmbeddingMatrix), ProbeError> {
    let mut c_cols = Vec::with_capacity(samples.len());
    let mut b_cols = Vec::with_capacity(samples.len());
    for s in samples {
        if s.frames.rows() == 0 {
            return Err(HeadError::EmptyInput.into());
        }
        c_cols.push(s.frames.mean_rows(0, s.frames.rows()));
        b_cols.push(model.bottleneck(s.frames, s.spans)?);
    }
    let x_c = EmbeddingMatrix::from_columns(recording_ids.clone(), &c_cols)?;
    let x_b = EmbeddingMatrix::from_columns(recording_ids, &b_cols)?;
    Ok((x_c, x_b))
}
