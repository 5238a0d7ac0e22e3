//! Synthetic corpora with a planted score, for end-to-end checks.
//!
//! Every recording's score is `sigmoid(gain · ⟨w, mean_t x⟩ + bias)`, where
//! `mean_t x` is the time mean of its frames and `w` is a fixed unit vector on
//! the first `signal_dims` dimensions. Layers differ only outside those
//! dimensions, so any convex layer weighting sees the same score. Both
//! raters report affine maps of the score.

use std::fs;
use std::path::{Path, PathBuf};

use fluency_core::layers::{EmbeddingTensor, DEFAULT_FRAME_STRIDE_S};
use fluency_core::spans::{AlignedWord, WordAlignment};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::alignment::write_alignment;
use crate::error::{Error, Result};
use crate::fleb::write_embedding;
use crate::manifest::{write_manifest, ManifestRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub recordings: usize,
    pub speakers: usize,
    pub layers: usize,
    pub dim: usize,
    pub signal_dims: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    /// Per-frame noise around each recording's mean vector.
    pub frame_noise: f64,
    pub gain: f64,
    pub bias: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            recordings: 200,
            speakers: 20,
            layers: 6,
            dim: 64,
            signal_dims: 8,
            min_frames: 10,
            max_frames: 30,
            frame_noise: 0.5,
            gain: 1.5,
            bias: 0.0,
            seed: 0,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// A generated recording before it is written out.
#[derive(Debug, Clone)]
pub struct SynthRecording {
    pub recording_id: String,
    pub speaker_id: String,
    pub tensor: EmbeddingTensor,
    pub alignment: WordAlignment,
    pub duration_s: f64,
    pub score: f64,
    /// ⟨w, time mean⟩, the planted feature.
    pub latent: f64,
}

pub fn planted_direction(cfg: &SynthConfig) -> Vec<f64> {
    let norm = (cfg.signal_dims as f64).sqrt();
    (0..cfg.dim)
        .map(|i| if i < cfg.signal_dims { 1.0 / norm } else { 0.0 })
        .collect()
}

pub fn synthesize(cfg: &SynthConfig) -> Vec<SynthRecording> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let w = planted_direction(cfg);
    let speaker_level: Vec<f64> = (0..cfg.speakers)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let stride = f64::from(DEFAULT_FRAME_STRIDE_S);
    (0..cfg.recordings)
        .map(|r| {
            let spk = r % cfg.speakers;
            let t = rng.gen_range(cfg.min_frames..=cfg.max_frames);
            let level = speaker_level[spk] + 0.7 * rng.sample::<f64, _>(StandardNormal);
            let mean: Vec<f64> = w
                .iter()
                .map(|&wi| level * wi + 0.5 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let base: Vec<f32> = (0..t * cfg.dim)
                .map(|i| {
                    (mean[i % cfg.dim] + cfg.frame_noise * rng.sample::<f64, _>(StandardNormal))
                        as f32
                })
                .collect();
            let mut values = Vec::with_capacity(cfg.layers * base.len());
            for _ in 0..cfg.layers {
                for (i, &v) in base.iter().enumerate() {
                    let d = i % cfg.dim;
                    let jitter = if d < cfg.signal_dims {
                        0.0
                    } else {
                        0.3 * rng.sample::<f64, _>(StandardNormal)
                    };
                    values.push((f64::from(v) + jitter) as f32);
                }
            }
            let tensor = EmbeddingTensor::new(cfg.layers, t, cfg.dim, values).expect("finite");
            let latent = time_mean_projection(&base, t, cfg.dim, &w);
            let score = sigmoid(cfg.gain * latent + cfg.bias);

            let duration_s = t as f64 * stride;
            let n_words = (t / 4).max(1);
            let words = (0..n_words)
                .map(|i| {
                    let start = (4 * i) as f64 * stride;
                    AlignedWord {
                        token: format!("w{i}"),
                        start_s: start,
                        end_s: (start + 3.0 * stride).min(duration_s),
                    }
                })
                .collect();
            SynthRecording {
                recording_id: format!("rec{r:04}"),
                speaker_id: format!("spk{spk:02}"),
                tensor,
                alignment: WordAlignment::new(words, duration_s).expect("valid alignment"),
                duration_s,
                score,
                latent,
            }
        })
        .collect()
}

fn time_mean_projection(frames: &[f32], t: usize, dim: usize, w: &[f64]) -> f64 {
    let mut mean = vec![0.0; dim];
    for (i, &v) in frames.iter().enumerate() {
        mean[i % dim] += f64::from(v);
    }
    mean.iter().zip(w).map(|(m, wi)| m / t as f64 * wi).sum()
}

/// Rater 1 reports `5·score`, rater 2 `0.5 + 4·score`.
pub fn ratings(score: f64) -> (f64, f64) {
    (5.0 * score, 0.5 + 4.0 * score)
}

/// Writes FLEB files, alignments, `manifest.jsonl` and `features.csv` under
/// `dir` and returns the manifest path. The feature table holds the planted
/// latent, the duration and a pure-noise column.
pub fn write_corpus(dir: &Path, cfg: &SynthConfig) -> Result<PathBuf> {
    let out = |path: PathBuf| move |source| Error::Output { path, source };
    fs::create_dir_all(dir.join("emb")).map_err(out(dir.join("emb")))?;
    fs::create_dir_all(dir.join("align")).map_err(out(dir.join("align")))?;
    let recs = synthesize(cfg);
    let mut rows = Vec::with_capacity(recs.len());
    let mut csv = String::from("recording_id,latent,duration_s,noise\n");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xFEA7);
    for r in &recs {
        let emb = format!("emb/{}.fleb", r.recording_id);
        let ali = format!("align/{}.tsv", r.recording_id);
        write_embedding(&dir.join(&emb), &r.tensor).map_err(|source| Error::Embedding {
            path: dir.join(&emb),
            source,
        })?;
        write_alignment(&dir.join(&ali), &r.alignment).map_err(out(dir.join(&ali)))?;
        let (rater1, rater2) = ratings(r.score);
        rows.push(ManifestRecord {
            recording_id: r.recording_id.clone(),
            speaker_id: r.speaker_id.clone(),
            text_id: format!("text{}", rows.len() % 7),
            duration_s: r.duration_s,
            rater1,
            rater2,
            embedding_path: emb,
            alignment_path: Some(ali),
        });
        let noise: f64 = rng.sample(StandardNormal);
        csv.push_str(&format!("{},{},{},{}\n", r.recording_id, r.latent, r.duration_s, noise));
    }
    let manifest = dir.join("manifest.jsonl");
    write_manifest(&manifest, &rows).map_err(out(manifest.clone()))?;
    fs::write(dir.join("features.csv"), csv).map_err(out(dir.join("features.csv")))?;
    Ok(manifest)
}
