//! Regression heads over frame embeddings.
//!
//! Both heads are built from fully connected layers, each followed by a
//! PReLU with one learnable slope and inverted dropout, and end in a single
//! sigmoid output unit.
//!
//! * Vanilla: frame-wise pre-pool stack → mean over frames → post-pool stack → sigmoid.
//! * Aligned: mean over the frames of each word span → pre-pool stack per word →
//!   mean over words → post-pool stack → sigmoid.
//!
//! Forward passes return a [`ForwardCache`] consumed by [`HeadModel::backward`].

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::matrix::{axpy, dot, Matrix};
use crate::rng;
use crate::spans::WordSpan;

/// Largest `f64` strictly below one.
const SCORE_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HeadError {
    #[error("expected input dim {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("input has no frames")]
    EmptyInput,
    #[error("no non-empty word spans")]
    AllSpansEmpty,
    #[error("span {index} is empty, overlapping, unordered or beyond the last frame")]
    BadSpan { index: usize },
    #[error("aligned head requires word spans")]
    MissingSpans,
    #[error("forward cache does not match this model")]
    StaleCache,
    #[error("invalid head config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Architecture {
    Vanilla,
    Aligned,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FcStackConfig {
    /// Output width of each hidden layer, in order. Empty means identity.
    pub widths: Vec<usize>,
    pub dropout_p: f64,
    pub prelu_init: f64,
}

impl FcStackConfig {
    pub fn new(widths: Vec<usize>) -> Self {
        Self {
            widths,
            dropout_p: 0.2,
            prelu_init: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HeadConfig {
    pub architecture: Architecture,
    pub input_dim: usize,
    pub pre_pool: FcStackConfig,
    /// Hidden layers after pooling; the sigmoid output unit is appended.
    pub post_pool: FcStackConfig,
    pub learnable_prelu: bool,
}

impl HeadConfig {
    /// One 256-wide layer before pooling and `[128, 64, 4]` after it.
    pub fn new(architecture: Architecture, input_dim: usize) -> Self {
        Self {
            architecture,
            input_dim,
            pre_pool: FcStackConfig::new(vec![256]),
            post_pool: FcStackConfig::new(vec![128, 64, 4]),
            learnable_prelu: true,
        }
    }

    pub fn validate(&self) -> Result<(), HeadError> {
        if self.input_dim == 0 {
            return Err(HeadError::InvalidConfig("input_dim must be positive"));
        }
        for stack in [&self.pre_pool, &self.post_pool] {
            if stack.widths.contains(&0) {
                return Err(HeadError::InvalidConfig("zero-width layer"));
            }
            if !(0.0..1.0).contains(&stack.dropout_p) {
                return Err(HeadError::InvalidConfig("dropout_p must be in [0, 1)"));
            }
            if !stack.prelu_init.is_finite() {
                return Err(HeadError::InvalidConfig("prelu_init must be finite"));
            }
        }
        Ok(())
    }

    pub fn pooled_dim(&self) -> usize {
        self.pre_pool.widths.last().copied().unwrap_or(self.input_dim)
    }

    pub fn bottleneck_dim(&self) -> usize {
        self.post_pool.widths.last().copied().unwrap_or_else(|| self.pooled_dim())
    }
}

/// Fully connected layer with a scalar PReLU slope.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out × in`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub slope: f64,
}

impl Dense {
    fn zeros_like(&self) -> Self {
        Self {
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: vec![0.0; self.bias.len()],
            slope: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub pre: Vec<Dense>,
    pub post: Vec<Dense>,
    pub out_weight: Vec<f64>,
    pub out_bias: f64,
}

/// Gradients share the parameter layout.
pub type HeadGradients = HeadParams;

impl HeadParams {
    pub fn zeros_like(&self) -> Self {
        Self {
            pre: self.pre.iter().map(Dense::zeros_like).collect(),
            post: self.post.iter().map(Dense::zeros_like).collect(),
            out_weight: vec![0.0; self.out_weight.len()],
            out_bias: 0.0,
        }
    }

    /// Every parameter tensor in checkpoint order: per pre-pool layer
    /// (weight, bias, slope), then per post-pool layer, then the output
    /// weight and bias.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in self.pre.iter().chain(&self.post) {
            out.push(l.weight.as_slice());
            out.push(l.bias.as_slice());
            out.push(core::slice::from_ref(&l.slope));
        }
        out.push(self.out_weight.as_slice());
        out.push(core::slice::from_ref(&self.out_bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in self.pre.iter_mut().chain(self.post.iter_mut()) {
            out.push(l.weight.as_mut_slice());
            out.push(l.bias.as_mut_slice());
            out.push(core::slice::from_mut(&mut l.slope));
        }
        out.push(self.out_weight.as_mut_slice());
        out.push(core::slice::from_mut(&mut self.out_bias));
        out
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    /// Returns false if `flat` has the wrong length.
    pub fn set_flat(&mut self, flat: &[f64]) -> bool {
        if flat.len() != self.len() {
            return false;
        }
        let mut at = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[at..at + t.len()]);
            at += t.len();
        }
        true
    }

    pub fn add_assign(&mut self, other: &HeadParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadModel {
    pub config: HeadConfig,
    pub params: HeadParams,
    pub seed: u64,
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Matrix,
    pre_act: Matrix,
    /// Per-element dropout scale (0 or 1/(1−p)); `None` when dropout is off.
    mask: Option<Matrix>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    frames: usize,
    input_dim: usize,
    spans: Option<Vec<WordSpan>>,
    pre: Vec<LayerCache>,
    pooled_rows: usize,
    post: Vec<LayerCache>,
    hidden: Vec<f64>,
    logit: f64,
    pub score: f64,
}

impl ForwardCache {
    /// Final hidden activation (the bottleneck) fed to the output unit.
    pub fn bottleneck(&self) -> &[f64] {
        &self.hidden
    }

    pub fn logit(&self) -> f64 {
        self.logit
    }
}

fn init_dense(fan_in: usize, fan_out: usize, prelu_init: f64, seed: u64, id: u64) -> Dense {
    let mut rng = rng::stream(seed, &[0x1A7E, id]);
    let bound = 1.0 / libm::sqrt(fan_in as f64);
    let w = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Dense {
        weight: Matrix::from_vec(fan_out, fan_in, w),
        bias: vec![0.0; fan_out],
        slope: prelu_init,
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// σ(z)·σ(−z), computed without cancellation.
#[inline]
fn sigmoid_slope(z: f64) -> f64 {
    let e = libm::exp(-libm::fabs(z));
    e / ((1.0 + e) * (1.0 + e))
}

impl HeadModel {
    /// Fan-in scaled uniform weights, zero biases, slopes at `prelu_init`.
    pub fn init(config: HeadConfig, seed: u64) -> Result<Self, HeadError> {
        config.validate()?;
        let mut id = 0u64;
        let mut build = |stack: &FcStackConfig, mut fan_in: usize| {
            let mut layers = Vec::with_capacity(stack.widths.len());
            for &w in &stack.widths {
                layers.push(init_dense(fan_in, w, stack.prelu_init, seed, id));
                id += 1;
                fan_in = w;
            }
            (layers, fan_in)
        };
        let (pre, pooled) = build(&config.pre_pool, config.input_dim);
        let (post, last) = build(&config.post_pool, pooled);
        let out = init_dense(last, 1, 0.0, seed, id);
        Ok(Self {
            params: HeadParams {
                pre,
                post,
                out_weight: out.weight.into_vec(),
                out_bias: 0.0,
            },
            config,
            seed,
        })
    }

    fn check_dim(&self, frames: &Matrix) -> Result<(), HeadError> {
        if frames.cols() != self.config.input_dim {
            return Err(HeadError::DimensionMismatch {
                expected: self.config.input_dim,
                got: frames.cols(),
            });
        }
        if frames.rows() == 0 {
            return Err(HeadError::EmptyInput);
        }
        Ok(())
    }

    /// Dispatches on the configured architecture.
    pub fn forward(
        &self,
        frames: &Matrix,
        spans: Option<&[WordSpan]>,
        train: bool,
        dropout_seed: u64,
    ) -> Result<ForwardCache, HeadError> {
        match self.config.architecture {
            Architecture::Vanilla => self.forward_vanilla(frames, train, dropout_seed),
            Architecture::Aligned => self.forward_aligned(
                frames,
                spans.ok_or(HeadError::MissingSpans)?,
                train,
                dropout_seed,
            ),
        }
    }

    /// Eval-mode score.
    pub fn score(&self, frames: &Matrix, spans: Option<&[WordSpan]>) -> Result<f64, HeadError> {
        Ok(self.forward(frames, spans, false, 0)?.score)
    }

    pub fn forward_vanilla(
        &self,
        frames: &Matrix,
        train: bool,
        dropout_seed: u64,
    ) -> Result<ForwardCache, HeadError> {
        self.check_dim(frames)?;
        Ok(self.forward_rows(frames.clone(), frames.rows(), None, train, dropout_seed))
    }

    pub fn forward_aligned(
        &self,
        frames: &Matrix,
        spans: &[WordSpan],
        train: bool,
        dropout_seed: u64,
    ) -> Result<ForwardCache, HeadError> {
        self.check_dim(frames)?;
        if spans.is_empty() {
            return Err(HeadError::AllSpansEmpty);
        }
        let mut prev_end = 0;
        for (index, s) in spans.iter().enumerate() {
            if s.is_empty() || s.start < prev_end || s.end > frames.rows() {
                return Err(HeadError::BadSpan { index });
            }
            prev_end = s.end;
        }
        let words: Vec<Vec<f64>> = spans
            .iter()
            .map(|s| frames.mean_rows(s.start, s.end))
            .collect();
        Ok(self.forward_rows(
            Matrix::from_rows(&words),
            frames.rows(),
            Some(spans.to_vec()),
            train,
            dropout_seed,
        ))
    }

    fn forward_rows(
        &self,
        rows: Matrix,
        frames: usize,
        spans: Option<Vec<WordSpan>>,
        train: bool,
        dropout_seed: u64,
    ) -> ForwardCache {
        let cfg = &self.config;
        let mut layer_id = 0u64;
        let mut run_stack = |layers: &[Dense], p: f64, mut h: Matrix| {
            let mut caches = Vec::with_capacity(layers.len());
            for layer in layers {
                let (out, cache) = dense_forward(layer, h, p, train, dropout_seed, layer_id);
                layer_id += 1;
                caches.push(cache);
                h = out;
            }
            (h, caches)
        };

        let (h, pre) = run_stack(&self.params.pre, cfg.pre_pool.dropout_p, rows);
        let pooled_rows = h.rows();
        let pooled = h.mean_rows(0, pooled_rows);
        let (h, post) = run_stack(
            &self.params.post,
            cfg.post_pool.dropout_p,
            Matrix::from_vec(1, pooled.len(), pooled),
        );
        let hidden = h.into_vec();
        let logit = dot(&self.params.out_weight, &hidden) + self.params.out_bias;
        let score = sigmoid(logit).clamp(f64::MIN_POSITIVE, SCORE_MAX);
        ForwardCache {
            frames,
            input_dim: cfg.input_dim,
            spans,
            pre,
            pooled_rows,
            post,
            hidden,
            logit,
            score,
        }
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<(), HeadError> {
        let p = &self.params;
        let layers_match = |layers: &[Dense], caches: &[LayerCache]| {
            layers.len() == caches.len()
                && layers.iter().zip(caches).all(|(l, c)| {
                    l.weight.cols() == c.input.cols() && l.weight.rows() == c.pre_act.cols()
                })
        };
        if cache.input_dim != self.config.input_dim
            || cache.hidden.len() != p.out_weight.len()
            || !layers_match(&p.pre, &cache.pre)
            || !layers_match(&p.post, &cache.post)
        {
            return Err(HeadError::StaleCache);
        }
        Ok(())
    }

    /// Parameter gradients and the gradient with respect to the input frames.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        upstream: f64,
    ) -> Result<(HeadGradients, Matrix), HeadError> {
        let mut grads = self.params.zeros_like();
        let input = self.backward_into(cache, upstream, &mut grads, true)?;
        Ok((grads, input.expect("input gradient requested")))
    }

    /// Adds parameter gradients into `grads` without forming the input gradient.
    pub fn accumulate_gradients(
        &self,
        cache: &ForwardCache,
        upstream: f64,
        grads: &mut HeadGradients,
    ) -> Result<(), HeadError> {
        self.backward_into(cache, upstream, grads, false).map(|_| ())
    }

    fn backward_into(
        &self,
        cache: &ForwardCache,
        upstream: f64,
        grads: &mut HeadGradients,
        want_input: bool,
    ) -> Result<Option<Matrix>, HeadError> {
        self.check_cache(cache)?;
        let p = &self.params;
        let learn_slope = self.config.learnable_prelu;

        let d_logit = upstream * sigmoid_slope(cache.logit);
        axpy(d_logit, &cache.hidden, &mut grads.out_weight);
        grads.out_bias += d_logit;
        let mut d_h = Matrix::from_vec(
            1,
            p.out_weight.len(),
            p.out_weight.iter().map(|w| d_logit * w).collect(),
        );

        for (i, (layer, c)) in p.post.iter().zip(&cache.post).enumerate().rev() {
            d_h = dense_backward(layer, c, d_h, &mut grads.post[i], learn_slope, true)
                .expect("input gradient requested");
        }

        // Mean pooling spreads the gradient evenly over the pooled rows.
        let pooled_grad = d_h.row(0).to_vec();
        let scale = 1.0 / cache.pooled_rows as f64;
        let mut d_rows = Matrix::zeros(cache.pooled_rows, pooled_grad.len());
        for r in 0..cache.pooled_rows {
            for (o, g) in d_rows.row_mut(r).iter_mut().zip(&pooled_grad) {
                *o = g * scale;
            }
        }

        for (i, (layer, c)) in p.pre.iter().zip(&cache.pre).enumerate().rev() {
            let need_input = i > 0 || want_input;
            match dense_backward(layer, c, d_rows, &mut grads.pre[i], learn_slope, need_input) {
                Some(d) => d_rows = d,
                None => return Ok(None),
            }
        }
        if !want_input {
            return Ok(None);
        }

        let d_frames = match &cache.spans {
            None => d_rows,
            Some(spans) => {
                let mut d = Matrix::zeros(cache.frames, cache.input_dim);
                for (w, s) in spans.iter().enumerate() {
                    let share = 1.0 / s.len() as f64;
                    for t in s.start..s.end {
                        axpy(share, d_rows.row(w), d.row_mut(t));
                    }
                }
                d
            }
        };
        Ok(Some(d_frames))
    }

    /// Eval-mode activations of the last hidden layer.
    pub fn bottleneck(
        &self,
        frames: &Matrix,
        spans: Option<&[WordSpan]>,
    ) -> Result<Vec<f64>, HeadError> {
        Ok(self.forward(frames, spans, false, 0)?.hidden)
    }
}

fn dense_forward(
    layer: &Dense,
    input: Matrix,
    p: f64,
    train: bool,
    dropout_seed: u64,
    layer_id: u64,
) -> (Matrix, LayerCache) {
    let mut pre_act = input.matmul_transposed(&layer.weight);
    for r in 0..pre_act.rows() {
        for (z, b) in pre_act.row_mut(r).iter_mut().zip(&layer.bias) {
            *z += b;
        }
    }
    let mut out = pre_act.clone();
    for v in out.as_mut_slice() {
        if *v <= 0.0 {
            *v *= layer.slope;
        }
    }
    let mask = if train && p > 0.0 {
        let mut rng = rng::stream(dropout_seed, &[0xD20F, layer_id]);
        let keep = 1.0 / (1.0 - p);
        let mut m = Matrix::zeros(out.rows(), out.cols());
        for (mv, v) in m.as_mut_slice().iter_mut().zip(out.as_mut_slice()) {
            *mv = if rng.gen::<f64>() >= p { keep } else { 0.0 };
            *v *= *mv;
        }
        Some(m)
    } else {
        None
    };
    (
        out,
        LayerCache {
            input,
            pre_act,
            mask,
        },
    )
}

fn dense_backward(
    layer: &Dense,
    cache: &LayerCache,
    mut d_out: Matrix,
    grad: &mut Dense,
    learn_slope: bool,
    need_input: bool,
) -> Option<Matrix> {
    if let Some(mask) = &cache.mask {
        for (d, m) in d_out.as_mut_slice().iter_mut().zip(mask.as_slice()) {
            *d *= m;
        }
    }
    // PReLU: dz = d·1 for z > 0, d·a otherwise; da = Σ d·z over z ≤ 0.
    let mut d_slope = 0.0;
    for (d, &z) in d_out.as_mut_slice().iter_mut().zip(cache.pre_act.as_slice()) {
        if z <= 0.0 {
            d_slope += *d * z;
            *d *= layer.slope;
        }
    }
    if learn_slope {
        grad.slope += d_slope;
    }
    let d_pre = d_out;
    for r in 0..d_pre.rows() {
        let x = cache.input.row(r);
        for (o, &g) in d_pre.row(r).iter().enumerate() {
            if g != 0.0 {
                axpy(g, x, grad.weight.row_mut(o));
            }
            grad.bias[o] += g;
        }
    }
    if !need_input {
        return None;
    }
    let mut d_in = Matrix::zeros(cache.input.rows(), cache.input.cols());
    for r in 0..d_pre.rows() {
        let dst = d_in.row_mut(r);
        for (o, &g) in d_pre.row(r).iter().enumerate() {
            if g != 0.0 {
                axpy(g, layer.weight.row(o), dst);
            }
        }
    }
    Some(d_in)
}
