//! Orchestration shared by the CLI and tests.

use fluency_core::dataset::CvRecord;
use fluency_core::folds::{make_folds, FoldAssignment};
use fluency_core::head::HeadConfig;
use fluency_core::trainer::{assemble, cv_fold, cv_fold_count, fold_sizes, CvReport, TrainConfig};
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::Result;

/// Speaker-balanced folds over the whole dataset.
pub fn build_folds(data: &Dataset, n_folds: usize, seed: u64) -> Result<FoldAssignment> {
    let z = data.combined_z()?;
    let pairs: Vec<(&str, f64)> = data.speaker_ids().into_iter().zip(z).collect();
    Ok(make_folds(&pairs, n_folds, seed)?)
}

/// Per-fold (fold, speakers, recordings, mean combined z).
pub fn fold_summary(data: &Dataset, folds: &FoldAssignment) -> Result<Vec<(usize, usize, usize, f64)>> {
    let z = data.combined_z()?;
    let k = folds.n_folds();
    let mut rows: Vec<(usize, usize, usize, f64)> =
        (0..k).map(|f| (f, folds.speakers_in(f).count(), 0, 0.0)).collect();
    for (r, z) in data.records.iter().zip(z) {
        if let Some(f) = folds.fold_of(&r.speaker_id) {
            rows[f].2 += 1;
            rows[f].3 += z;
        }
    }
    for row in &mut rows {
        if row.2 > 0 {
            row.3 /= row.2 as f64;
        }
    }
    Ok(rows)
}

/// Cross-validation with the rotations run on the rayon pool. The result
/// does not depend on the number of threads.
pub fn cross_validate_parallel(
    records: &[CvRecord],
    folds: &FoldAssignment,
    head: &HeadConfig,
    config: &TrainConfig,
) -> Result<CvReport> {
    let k = cv_fold_count(records, folds)?;
    let outcomes = (0..k)
        .into_par_iter()
        .map(|f| cv_fold(records, folds, head, config, f))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble(outcomes, &fold_sizes(records, folds)?)?)
}
