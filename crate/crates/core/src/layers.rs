//! Fixed convex combinations of transformer-layer outputs.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LayerError {
    #[error("layer {k} out of range 1..={layers}")]
    LayerIndexOutOfRange { k: usize, layers: usize },
    #[error("sigma must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("layer count must be positive")]
    NoLayers,
    #[error("{weights} weights for a {layers}-layer tensor")]
    DimensionMismatch { weights: usize, layers: usize },
    #[error("tensor shape {layers}x{frames}x{dim} does not match {len} values")]
    BadShape {
        layers: usize,
        frames: usize,
        dim: usize,
        len: usize,
    },
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
}

/// Per-recording hidden states, `layers × frames × dim`, layer-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTensor {
    layers: usize,
    frames: usize,
    dim: usize,
    values: Vec<f32>,
    pub frame_stride_s: f32,
    pub frame_offset_s: f32,
}

pub const DEFAULT_FRAME_STRIDE_S: f32 = 0.020;

impl EmbeddingTensor {
    pub fn new(
        layers: usize,
        frames: usize,
        dim: usize,
        values: Vec<f32>,
    ) -> Result<Self, LayerError> {
        if layers == 0 || frames == 0 || dim == 0 || values.len() != layers * frames * dim {
            return Err(LayerError::BadShape {
                layers,
                frames,
                dim,
                len: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(LayerError::NonFinite(i));
        }
        Ok(Self {
            layers,
            frames,
            dim,
            values,
            frame_stride_s: DEFAULT_FRAME_STRIDE_S,
            frame_offset_s: 0.0,
        })
    }

    pub fn with_timing(mut self, stride_s: f32, offset_s: f32) -> Self {
        self.frame_stride_s = stride_s;
        self.frame_offset_s = offset_s;
        self
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, layer: usize, frame: usize, d: usize) -> f32 {
        self.values[(layer * self.frames + frame) * self.dim + d]
    }

    /// One layer as a `frames × dim` slice, 0-based.
    pub fn layer(&self, layer: usize) -> &[f32] {
        let n = self.frames * self.dim;
        &self.values[layer * n..(layer + 1) * n]
    }
}

/// How the layer stack is collapsed into one frame sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "scheme", rename_all = "lowercase"))]
pub enum LayerScheme {
    /// One layer, 1-based.
    Single { k: usize },
    Mean,
    /// Centred between the middle layers; `None` means `layers / 6`.
    Gaussian { sigma: Option<f64> },
}

impl LayerScheme {
    pub fn default_sigma(layers: usize) -> f64 {
        layers as f64 / 6.0
    }
}

/// Weights for each of `layers` layers; non-negative and summing to 1.
pub fn resolve_weights(scheme: LayerScheme, layers: usize) -> Result<Vec<f64>, LayerError> {
    if layers == 0 {
        return Err(LayerError::NoLayers);
    }
    match scheme {
        LayerScheme::Single { k } => {
            if k == 0 || k > layers {
                return Err(LayerError::LayerIndexOutOfRange { k, layers });
            }
            let mut w = vec![0.0; layers];
            w[k - 1] = 1.0;
            Ok(w)
        }
        LayerScheme::Mean => Ok(vec![1.0 / layers as f64; layers]),
        LayerScheme::Gaussian { sigma } => {
            let sigma = sigma.unwrap_or_else(|| LayerScheme::default_sigma(layers));
            if !(sigma > 0.0) || !sigma.is_finite() {
                return Err(LayerError::NonPositiveSigma(sigma));
            }
            // 1-based layer i sits at offset (2i − L − 1)/2 from the centre (L+1)/2;
            // working in integers keeps w_i and w_{L+1−i} bit-identical.
            let two_var = 2.0 * sigma * sigma;
            let mut w: Vec<f64> = (1..=layers)
                .map(|i| {
                    let d = (2 * i as i64 - layers as i64 - 1) as f64 / 2.0;
                    libm::exp(-(d * d) / two_var)
                })
                .collect();
            let total: f64 = pairwise_sum(&w);
            for v in &mut w {
                *v /= total;
            }
            Ok(w)
        }
    }
}

// Sums symmetric pairs first so the total does not depend on summation direction.
fn pairwise_sum(w: &[f64]) -> f64 {
    let n = w.len();
    let mut total = 0.0;
    for i in 0..n / 2 {
        total += w[i] + w[n - 1 - i];
    }
    if n % 2 == 1 {
        total += w[n / 2];
    }
    total
}

/// Weighted sum over layers, widened to `f64`: `out[t, d] = Σ_i w_i · x[i, t, d]`.
pub fn combine(tensor: &EmbeddingTensor, weights: &[f64]) -> Result<Matrix, LayerError> {
    if weights.len() != tensor.layers() {
        return Err(LayerError::DimensionMismatch {
            weights: weights.len(),
            layers: tensor.layers(),
        });
    }
    let (t, d) = (tensor.frames(), tensor.dim());
    let mut out = Matrix::zeros(t, d);
    // One-hot: copy rather than multiply so the selected layer comes out untouched.
    if let Some(k) = one_hot(weights) {
        for (o, &v) in out.as_mut_slice().iter_mut().zip(tensor.layer(k)) {
            *o = f64::from(v);
        }
        return Ok(out);
    }
    for (i, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (o, &v) in out.as_mut_slice().iter_mut().zip(tensor.layer(i)) {
            *o += w * f64::from(v);
        }
    }
    Ok(out)
}

fn one_hot(weights: &[f64]) -> Option<usize> {
    let mut hit = None;
    for (i, &w) in weights.iter().enumerate() {
        if w == 1.0 && hit.is_none() {
            hit = Some(i);
        } else if w != 0.0 {
            return None;
        }
    }
    hit
}
