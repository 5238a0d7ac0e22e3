//! Correlation measures and the concordance correlation loss.
//!
//! CCC uses population (1/n) moments throughout:
//!
//! ```text
//! CCC = 2·cov(x, y) / (var(x) + var(y) + (mean(x) − mean(y))²)
//! ```
//!
//! The metric path reports degenerate inputs as errors. The training path
//! ([`ccl_with_gradient`]) adds a small guard to the denominator instead so a
//! batch can never produce a division by zero.

use alloc::vec::Vec;

use thiserror::Error;

/// Denominator guard used by the training loss.
pub const LOSS_GUARD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least 2 values, got {0}")]
    TooShort(usize),
    #[error("input has zero variance")]
    ZeroVariance,
    #[error("degenerate CCC denominator (both inputs constant and equal)")]
    DegenerateDenominator,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
}

/// Pearson and CCC of a prediction/target pairing.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricReport {
    pub pearson: f64,
    pub ccc: f64,
    pub n: usize,
}

impl MetricReport {
    pub fn compute(pred: &[f64], target: &[f64]) -> Result<Self, MetricError> {
        Ok(Self {
            pearson: pearson(pred, target)?,
            ccc: ccc(pred, target)?,
            n: pred.len(),
        })
    }
}

struct Moments {
    n: f64,
    mean_x: f64,
    mean_y: f64,
    /// Centered sums, not yet divided by n.
    sxx: f64,
    syy: f64,
    sxy: f64,
    scale_x: f64,
    scale_y: f64,
}

fn check(x: &[f64], y: &[f64]) -> Result<(), MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(MetricError::TooShort(x.len()));
    }
    if let Some(i) = x.iter().zip(y).position(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(MetricError::NonFinite(i));
    }
    Ok(())
}

fn moments(x: &[f64], y: &[f64]) -> Moments {
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    let (mut scale_x, mut scale_y) = (0.0f64, 0.0f64);
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
        scale_x = scale_x.max(libm::fabs(a));
        scale_y = scale_y.max(libm::fabs(b));
    }
    Moments {
        n,
        mean_x,
        mean_y,
        sxx,
        syy,
        sxy,
        scale_x,
        scale_y,
    }
}

/// Variances at or below this are rounding noise of a constant vector.
fn negligible(var: f64, scale: f64) -> bool {
    let tol = 4.0 * f64::EPSILON * scale;
    var <= tol * tol
}

/// Sample Pearson correlation, clamped to [-1, 1].
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    check(x, y)?;
    let m = moments(x, y);
    if negligible(m.sxx / m.n, m.scale_x) || negligible(m.syy / m.n, m.scale_y) {
        return Err(MetricError::ZeroVariance);
    }
    let r = m.sxy / libm::sqrt(m.sxx * m.syy);
    Ok(r.clamp(-1.0, 1.0))
}

/// Lin's concordance correlation coefficient with population moments.
pub fn ccc(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    check(x, y)?;
    let m = moments(x, y);
    let shift = m.mean_x - m.mean_y;
    let denom = m.sxx / m.n + m.syy / m.n + shift * shift;
    if negligible(denom, m.scale_x.max(m.scale_y)) {
        return Err(MetricError::DegenerateDenominator);
    }
    Ok((2.0 * (m.sxy / m.n) / denom).clamp(-1.0, 1.0))
}

/// Concordance correlation loss, `1 − ccc(pred, target)`.
pub fn ccl(pred: &[f64], target: &[f64]) -> Result<f64, MetricError> {
    Ok(1.0 - ccc(pred, target)?)
}

/// Exact gradient of `1 − CCC` with respect to each prediction.
pub fn ccl_gradient(pred: &[f64], target: &[f64]) -> Result<Vec<f64>, MetricError> {
    check(pred, target)?;
    let m = moments(pred, target);
    let shift = m.mean_x - m.mean_y;
    let denom = m.sxx / m.n + m.syy / m.n + shift * shift;
    if negligible(denom, m.scale_x.max(m.scale_y)) {
        return Err(MetricError::DegenerateDenominator);
    }
    Ok(gradient_from(&m, pred, target, denom))
}

/// Loss and gradient with [`LOSS_GUARD`] added to the CCC denominator.
///
/// The trainer calls this on every mini-batch; it is the only place the
/// guard is applied.
pub fn ccl_with_gradient(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>), MetricError> {
    check(pred, target)?;
    let m = moments(pred, target);
    let shift = m.mean_x - m.mean_y;
    let denom = m.sxx / m.n + m.syy / m.n + shift * shift + LOSS_GUARD;
    let loss = 1.0 - 2.0 * (m.sxy / m.n) / denom;
    Ok((loss, gradient_from(&m, pred, target, denom)))
}

// d/dx_i of N/D with N = 2·sxy/n and D = sxx/n + syy/n + (mx − my)²:
//   dN = 2·dy_i/n,   dD = 2·dx_i/n + 2·(mx − my)/n
fn gradient_from(m: &Moments, pred: &[f64], target: &[f64], denom: f64) -> Vec<f64> {
    let num = 2.0 * m.sxy / m.n;
    let shift = m.mean_x - m.mean_y;
    pred.iter()
        .zip(target)
        .map(|(&p, &t)| {
            let dx = p - m.mean_x;
            let dy = t - m.mean_y;
            let d_num = 2.0 * dy / m.n;
            let d_den = 2.0 * (dx + shift) / m.n;
            -(d_num * denom - num * d_den) / (denom * denom)
        })
        .collect()
}

/// Standardizes to mean 0 and population standard deviation 1.
pub fn zscore(values: &[f64]) -> Result<Vec<f64>, MetricError> {
    if values.len() < 2 {
        return Err(MetricError::TooShort(values.len()));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite(i));
    }
    let (mean, std) = mean_std(values);
    let scale = values.iter().fold(0.0f64, |s, v| s.max(libm::fabs(*v)));
    if negligible(std * std, scale) {
        return Err(MetricError::ZeroVariance);
    }
    Ok(values.iter().map(|v| (v - mean) / std).collect())
}

/// Mean and population standard deviation.
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}
