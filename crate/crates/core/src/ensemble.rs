//! The two-tier fusion math: stable sigmoid, intra-family averaging,
//! softmax-normalized fusion weights, the fused prediction, binary
//! cross-entropy, and the closed-form gradient of the loss with respect
//! to the fusion logits.
//!
//! The gradient uses the full softmax Jacobian. Writing `alpha =
//! softmax(w)` and `y = sum_i alpha_i p_i`, summing the per-weight chain
//! (`d alpha_i / d w_i = alpha_i (1 - alpha_i)`, `d alpha_i / d w_j =
//! -alpha_i alpha_j` for `i != j`) collapses to
//!
//! ```text
//! dL/dw_j = dL/dy * alpha_j * (p_j - y)
//! ```
//!
//! which is what end-to-end backpropagation computes. Finite-difference
//! tests arbitrate correctness.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{BinaryLabel, Logit, Probability};

/// Clamp applied inside the cross-entropy so a saturated base learner
/// cannot produce log(0); perturbs losses by well under 1e-6.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error("expected a non-empty score vector")]
    EmptyInput,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("fusion weight is not finite: {0}")]
    NonFiniteWeight(f64),
}

/// Numerically stable logistic function, sign-split so `exp` never
/// overflows for |z| up to the f64 range.
pub fn sigmoid(z: Logit) -> Probability {
    let z = z.value();
    let value = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    Probability::clamped(value)
}

/// Tier-1 fusion: arithmetic mean of one family's instance scores.
pub fn average_instances(scores: &[Probability]) -> Result<Probability, EnsembleError> {
    if scores.is_empty() {
        return Err(EnsembleError::EmptyInput);
    }
    let sum: f64 = scores.iter().map(|p| p.value()).sum();
    Ok(Probability::clamped(sum / scores.len() as f64))
}

/// Softmax over the fusion logits, computed max-shifted so unconstrained
/// weights can drift to large magnitudes without overflow. Output entries
/// are strictly positive and sum to 1 within 1e-12.
pub fn softmax_weights(w: &[f64]) -> Vec<Probability> {
    if w.is_empty() {
        return Vec::new();
    }
    let max = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = w.iter().map(|wi| (wi - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter()
        .map(|e| Probability::clamped(e / z))
        .collect()
}

/// Tier-2 fusion: convex combination of the family predictions, so the
/// result stays inside `[min(p), max(p)]`.
pub fn fuse(
    alpha: &[Probability],
    preds: &FamilyPredictions,
) -> Result<Probability, EnsembleError> {
    if alpha.len() != preds.len() {
        return Err(EnsembleError::LengthMismatch {
            expected: alpha.len(),
            got: preds.len(),
        });
    }
    if alpha.is_empty() {
        return Err(EnsembleError::EmptyInput);
    }
    let y = alpha
        .iter()
        .zip(preds.as_slice())
        .map(|(a, p)| a.value() * p.value())
        .sum();
    Ok(Probability::clamped(y))
}

/// Binary cross-entropy of a fused prediction against a 0/1 target, with
/// the prediction clamped to `[BCE_EPS, 1 - BCE_EPS]`.
pub fn bce_loss(y: Probability, target: BinaryLabel) -> f64 {
    let y = y.value().clamp(BCE_EPS, 1.0 - BCE_EPS);
    let t = target.as_f64();
    -(t * y.ln() + (1.0 - t) * (1.0 - y).ln())
}

/// Derivative of `bce_loss` with respect to the prediction, using the same
/// clamp as the loss.
pub fn bce_grad_y(y: Probability, target: BinaryLabel) -> f64 {
    let y = y.value().clamp(BCE_EPS, 1.0 - BCE_EPS);
    let t = target.as_f64();
    (y - t) / (y * (1.0 - y))
}

/// Gradient of the loss with respect to the fusion logits, given the
/// upstream derivative `dL/dy`. See the module docs for the closed form.
pub fn fusion_gradient(
    w: &[f64],
    preds: &FamilyPredictions,
    dl_dy: f64,
) -> Result<FusionGradient, EnsembleError> {
    if w.len() != preds.len() {
        return Err(EnsembleError::LengthMismatch {
            expected: w.len(),
            got: preds.len(),
        });
    }
    if w.is_empty() {
        return Err(EnsembleError::EmptyInput);
    }
    let alpha = softmax_weights(w);
    let y = fuse(&alpha, preds)?.value();
    let d_w = alpha
        .iter()
        .zip(preds.as_slice())
        .map(|(a, p)| dl_dy * a.value() * (p.value() - y))
        .collect();
    Ok(FusionGradient { d_w, d_y: dl_dy })
}

/// The learnable fusion logits `w`. The softmax image `alpha` is derived
/// on demand, so positivity and sum-to-one hold by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    w: Vec<f64>,
}

impl FusionWeights {
    pub fn new(w: Vec<f64>) -> Result<Self, EnsembleError> {
        if w.is_empty() {
            return Err(EnsembleError::EmptyInput);
        }
        if let Some(&bad) = w.iter().find(|v| !v.is_finite()) {
            return Err(EnsembleError::NonFiniteWeight(bad));
        }
        Ok(FusionWeights { w })
    }

    /// Uniform initialization `w = [1/A, ..., 1/A]`; softmax shift
    /// invariance maps any constant vector to `alpha = [1/A, ..., 1/A]`.
    pub fn uniform(families: usize) -> Self {
        assert!(families > 0, "ensemble needs at least one family");
        FusionWeights {
            w: vec![1.0 / families as f64; families],
        }
    }

    pub fn logits(&self) -> &[f64] {
        &self.w
    }

    pub fn alpha(&self) -> Vec<Probability> {
        softmax_weights(&self.w)
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// One tier-1 prediction per family, in family order.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyPredictions {
    scores: Vec<Probability>,
}

impl FamilyPredictions {
    pub fn new(scores: Vec<Probability>) -> Self {
        FamilyPredictions { scores }
    }

    pub fn as_slice(&self) -> &[Probability] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn get(&self, idx: usize) -> Option<Probability> {
        self.scores.get(idx).copied()
    }
}

/// Gradient of the loss through the fusion layer.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionGradient {
    /// dL/dw per family; components sum to 0 (softmax shift invariance).
    pub d_w: Vec<f64>,
    /// The upstream dL/dy the chain was evaluated with.
    pub d_y: f64,
}

/// A precomputed fusion training row: family predictions plus target.
#[derive(Debug, Clone)]
pub struct FusionSample {
    pub preds: FamilyPredictions,
    pub label: BinaryLabel,
}
