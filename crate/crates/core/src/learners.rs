//! Base-learner contract plus its two implementations: a small trainable
//! feed-forward scorer for desk-scale end-to-end runs, and a strict
//! cached-prediction table for scores produced by real backbones.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{FamilyId, Logit, Probability};

#[derive(Debug, Error, PartialEq)]
pub enum LearnerError {
    #[error("bad layer shape: {0}")]
    BadShape(String),
    #[error("input dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("parameter vector length mismatch: expected {expected}, got {got}")]
    ParamMismatch { expected: usize, got: usize },
    #[error("no cached prediction for sample '{sample_id}', family {family}, instance {slot}")]
    MissingPrediction {
        sample_id: String,
        family: usize,
        slot: usize,
    },
    #[error(
        "duplicate cached prediction for sample '{sample_id}', family {family}, instance {slot}"
    )]
    DuplicateKey {
        sample_id: String,
        family: usize,
        slot: usize,
    },
}

/// Anything that can score a feature vector into a raw logit. Scoring must
/// be deterministic given fixed parameters and input.
pub trait BaseLearner {
    fn score(&self, features: &[f64]) -> Result<Logit, LearnerError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DenseLayer {
    inputs: usize,
    outputs: usize,
    /// Row-major `[outputs x inputs]`.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl DenseLayer {
    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let z: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum();
            out.push(z + self.biases[o]);
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// Feed-forward scorer: affine layers with ReLU on hidden activations and
/// an identity single-logit output. Stands in for the CNN backbones at
/// desk scale while keeping gradients exactly checkable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLearner {
    layer_sizes: Vec<usize>,
    layers: Vec<DenseLayer>,
    init_seed: u64,
}

impl ReferenceLearner {
    /// Initializes parameters from a seeded uniform distribution scaled by
    /// `1/sqrt(fan_in)`, so identical `(sizes, seed)` pairs are bit-identical
    /// and distinct seeds give distinct parameters.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self, LearnerError> {
        if layer_sizes.len() < 2 {
            return Err(LearnerError::BadShape(format!(
                "need at least input and output sizes, got {layer_sizes:?}"
            )));
        }
        if *layer_sizes.last().unwrap() != 1 {
            return Err(LearnerError::BadShape(format!(
                "output dimension must be 1, got {}",
                layer_sizes.last().unwrap()
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(LearnerError::BadShape("zero-width layer".to_string()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(layer_sizes.len() - 1);
        for pair in layer_sizes.windows(2) {
            let (inputs, outputs) = (pair[0], pair[1]);
            let bound = 1.0 / (inputs as f64).sqrt();
            let weights = (0..inputs * outputs)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            let biases = (0..outputs)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            layers.push(DenseLayer {
                inputs,
                outputs,
                weights,
                biases,
            });
        }
        Ok(ReferenceLearner {
            layer_sizes: layer_sizes.to_vec(),
            layers,
            init_seed: seed,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    /// Forward pass to the single output logit.
    pub fn forward(&self, x: &[f64]) -> Result<Logit, LearnerError> {
        let (_, logit) = self.forward_trace(x)?;
        Ok(Logit::new(logit).expect("finite parameters produce a finite logit"))
    }

    /// Forward pass keeping post-activation values per layer for backprop.
    /// Returns (activations per layer including the input, final logit).
    fn forward_trace(&self, x: &[f64]) -> Result<(Vec<Vec<f64>>, f64), LearnerError> {
        if x.len() != self.input_dim() {
            return Err(LearnerError::DimMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        let mut buf = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate() {
            layer.apply(activations.last().unwrap(), &mut buf);
            let last = idx + 1 == self.layers.len();
            if !last {
                for v in buf.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            activations.push(buf.clone());
        }
        let logit = activations.last().unwrap()[0];
        Ok((activations, logit))
    }

    /// Exact reverse-mode gradient of the logit times the upstream
    /// derivative, flattened in the same order as [`Self::params`].
    pub fn backward(&self, x: &[f64], dl_dlogit: f64) -> Result<Vec<f64>, LearnerError> {
        let (activations, _) = self.forward_trace(x)?;
        let mut grads = vec![0.0; self.param_count()];
        // delta starts at the single output and walks backwards
        let mut delta = vec![dl_dlogit];
        let mut offset = self.param_count();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let input = &activations[idx];
            let output = &activations[idx + 1];
            offset -= layer.param_count();
            let (w_grads, b_grads) =
                grads[offset..offset + layer.param_count()].split_at_mut(layer.weights.len());
            for (o, &d) in delta.iter().enumerate().take(layer.outputs) {
                b_grads[o] = d;
                for (i, &x_i) in input.iter().enumerate() {
                    w_grads[o * layer.inputs + i] = d * x_i;
                }
            }
            if idx > 0 {
                let mut next = vec![0.0; layer.inputs];
                for i in 0..layer.inputs {
                    let mut acc = 0.0;
                    for (o, &d) in delta.iter().enumerate() {
                        acc += d * layer.weights[o * layer.inputs + i];
                    }
                    // ReLU gate of the previous layer's post-activation
                    next[i] = if input[i] > 0.0 { acc } else { 0.0 };
                }
                let _ = output;
                delta = next;
            }
        }
        Ok(grads)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.biases);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), LearnerError> {
        if params.len() != self.param_count() {
            return Err(LearnerError::ParamMismatch {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let w_len = layer.weights.len();
            layer
                .weights
                .copy_from_slice(&params[offset..offset + w_len]);
            offset += w_len;
            let b_len = layer.biases.len();
            layer
                .biases
                .copy_from_slice(&params[offset..offset + b_len]);
            offset += b_len;
        }
        Ok(())
    }
}

impl BaseLearner for ReferenceLearner {
    fn score(&self, features: &[f64]) -> Result<Logit, LearnerError> {
        self.forward(features)
    }
}

/// Sigmoid scores produced offline by frozen backbones, keyed by
/// `(sample_id, family, instance slot)`. Lookups of absent keys are errors,
/// never silent defaults, and duplicate inserts are rejected at load time.
#[derive(Debug, Clone)]
pub struct CachedPredictor {
    table: HashMap<(String, usize, usize), Probability>,
    provenance: PathBuf,
}

impl CachedPredictor {
    pub fn new(provenance: impl AsRef<Path>) -> Self {
        CachedPredictor {
            table: HashMap::new(),
            provenance: provenance.as_ref().to_path_buf(),
        }
    }

    pub fn insert(
        &mut self,
        sample_id: &str,
        family: FamilyId,
        slot: usize,
        score: Probability,
    ) -> Result<(), LearnerError> {
        let key = (sample_id.to_string(), family.0, slot);
        if self.table.contains_key(&key) {
            return Err(LearnerError::DuplicateKey {
                sample_id: sample_id.to_string(),
                family: family.0,
                slot,
            });
        }
        self.table.insert(key, score);
        Ok(())
    }

    pub fn lookup(
        &self,
        sample_id: &str,
        family: FamilyId,
        slot: usize,
    ) -> Result<Probability, LearnerError> {
        self.table
            .get(&(sample_id.to_string(), family.0, slot))
            .copied()
            .ok_or_else(|| LearnerError::MissingPrediction {
                sample_id: sample_id.to_string(),
                family: family.0,
                slot,
            })
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn provenance(&self) -> &Path {
        &self.provenance
    }
}
