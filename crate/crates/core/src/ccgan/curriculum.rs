//! Per-batch instance weights.
//!
//! Weights are computed from plain values, off any tape, so they enter the
//! losses as constants.

use ndarray::Array2;

use crate::autodiff::{softmax_rows, Matrix, LOG_EPS};
use crate::error::{Error, Result};
use crate::nn::MlpParams;

/// Nonnegative weights over one batch that sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchWeights(Vec<f64>);

impl BatchWeights {
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Dimension("weights over an empty batch".into()));
        }
        Ok(Self(vec![1.0 / n as f64; n]))
    }

    /// Softmax over the batch of per-sample scores.
    pub fn softmax(scores: &[f64]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Dimension("weights over an empty batch".into()));
        }
        if !scores.iter().all(|s| s.is_finite()) {
            return Err(Error::Numeric("non-finite curriculum score".into()));
        }
        let row = Array2::from_shape_vec((1, scores.len()), scores.to_vec()).expect("1 x n");
        Ok(Self(softmax_rows(&row).into_raw_vec_and_offset().0))
    }

    /// Validates and wraps explicit weights.
    pub fn from_vec(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::Dimension("weights over an empty batch".into()));
        }
        let sum: f64 = w.iter().sum();
        if w.iter().any(|v| v.is_nan() || *v < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Contract(format!(
                "weights must be nonnegative and sum to 1 (sum {sum})"
            )));
        }
        Ok(Self(w))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `n x 1` column for use as a tape constant.
    pub fn column(&self) -> Matrix {
        Array2::from_shape_vec((self.0.len(), 1), self.0.clone()).expect("n x 1")
    }
}

/// `softmax` over the batch of the selection network's pre-sigmoid scores.
pub fn model_based_weights(h: &MlpParams, generated: &Matrix) -> Result<BatchWeights> {
    if generated.nrows() == 0 {
        return Err(Error::Dimension("weights over an empty batch".into()));
    }
    let scores = h.logits_values(generated)?;
    BatchWeights::softmax(&scores.column(0).to_vec())
}

/// `softmax(log D_t(x))` over the batch, i.e. discriminator probabilities
/// normalized by their sum.
pub fn model_free_weights(d_t: &MlpParams, generated: &Matrix) -> Result<BatchWeights> {
    if generated.nrows() == 0 {
        return Err(Error::Dimension("weights over an empty batch".into()));
    }
    let probs = d_t.forward_values(generated)?;
    let logs: Vec<f64> = probs.column(0).iter().map(|p| p.max(LOG_EPS).ln()).collect();
    BatchWeights::softmax(&logs)
}
