//! Loading a manifest's recordings into layer-combined, trainable records.

use fluency_core::dataset::CvRecord;
use fluency_core::layers::{combine, resolve_weights, LayerScheme};
use fluency_core::spans::word_spans;
use fluency_core::targets::TargetScaler;
use rayon::prelude::*;

use crate::alignment::parse_alignment;
use crate::error::{Error, Result};
use crate::fleb::read_embedding;
use crate::manifest::Manifest;

#[derive(Debug, Clone)]
pub struct Dataset {
    /// In manifest order.
    pub records: Vec<CvRecord>,
    pub layers: usize,
    pub dim: usize,
    pub layer_weights: Vec<f64>,
}

impl Dataset {
    pub fn recording_ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.recording_id.clone()).collect()
    }

    pub fn speaker_ids(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.speaker_id.as_str()).collect()
    }

    /// Combined rater z-scores using statistics over the whole dataset; this is
    /// what fold balancing looks at.
    pub fn combined_z(&self) -> Result<Vec<f64>> {
        let ratings: Vec<_> = self.records.iter().map(|r| r.ratings).collect();
        let scaler = TargetScaler::fit(&ratings, &vec![true; ratings.len()])?;
        Ok(ratings.iter().map(|r| scaler.combined_z(r)).collect())
    }
}

/// Reads every embedding (in parallel), combines layers with `scheme`, and
/// maps alignments to frame spans when `with_spans` is set.
///
/// All files must share the same layer count and dimension.
pub fn load_dataset(manifest: &Manifest, scheme: LayerScheme, with_spans: bool) -> Result<Dataset> {
    let loaded: Vec<(CvRecord, usize)> = manifest
        .records
        .par_iter()
        .map(|rec| {
            let path = manifest.embedding_path(rec);
            let tensor =
                read_embedding(&path).map_err(|source| Error::Embedding { path, source })?;
            let weights = resolve_weights(scheme, tensor.layers())?;
            let frames = combine(&tensor, &weights)?;
            let spans = if with_spans {
                let path = manifest.alignment_path(rec).ok_or_else(|| {
                    Error::Dataset(format!("recording {} has no alignment_path", rec.recording_id))
                })?;
                let alignment = parse_alignment(&path, rec.duration_s)
                    .map_err(|source| Error::Alignment { path, source })?;
                let spans = word_spans(
                    &alignment,
                    tensor.frames(),
                    f64::from(tensor.frame_stride_s),
                    f64::from(tensor.frame_offset_s),
                )
                .map_err(|source| Error::Spans {
                    id: rec.recording_id.clone(),
                    source,
                })?;
                Some(spans)
            } else {
                None
            };
            let record = CvRecord {
                recording_id: rec.recording_id.clone(),
                speaker_id: rec.speaker_id.clone(),
                ratings: rec.ratings(),
                frames,
                spans,
            };
            Ok((record, tensor.layers()))
        })
        .collect::<Result<_>>()?;

    let Some((first, layers)) = loaded.first() else {
        return Err(Error::Dataset("manifest has no recordings".into()));
    };
    let (layers, dim) = (*layers, first.frames.cols());
    for (r, l) in &loaded {
        if *l != layers || r.frames.cols() != dim {
            return Err(Error::Dataset(format!(
                "recording {} has {} layers of width {}, expected {layers} of width {dim}",
                r.recording_id,
                l,
                r.frames.cols()
            )));
        }
    }
    Ok(Dataset {
        records: loaded.into_iter().map(|(r, _)| r).collect(),
        layers,
        dim,
        layer_weights: resolve_weights(scheme, layers)?,
    })
}
