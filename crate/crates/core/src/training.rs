//! Two-phase training orchestration. Phase 1 trains every instance of
//! every family independently on its own feature view. Phase 2 freezes
//! the instances, precomputes their family predictions once per sample
//! (they are constant while frozen), and learns only the fusion logits
//! end-to-end.
//!
//! Both phases share the same recipe: mini-batches in a seeded shuffled
//! order, gradient accumulation, AdamW under the cosine schedule stepped
//! per epoch, early stopping on validation loss, and best-validation
//! parameter selection.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::LabeledSample;
use crate::domain::{
    mix_seed, BinaryLabel, DomainError, EnsembleConfig, FamilyId, FeatureLayout, InstanceId,
    Probability,
};
use crate::ensemble::{
    average_instances, bce_grad_y, bce_loss, fuse, fusion_gradient, sigmoid, EnsembleError,
    FamilyPredictions, FusionSample, FusionWeights,
};
use crate::learners::{LearnerError, ReferenceLearner};
use crate::optimizer::{
    AdamW, AdamWConfig, CosineConfig, CosineSchedule, EarlyStopConfig, EarlyStopping,
    GradAccumulator, OptimError,
};

const FUSION_SHUFFLE_SALT: u64 = 0xF051_0A0A;
const INSTANCE_SHUFFLE_SALT: u64 = 0x1257_AFFE;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training and validation data must be non-empty")]
    EmptyData,
    #[error("bad training config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

/// The full recipe for one training phase. Defaults carry the recipe's
/// hyperparameters: batch 32, accumulation 2, AdamW lr 1e-4 / wd 1e-5,
/// cosine warm restarts with t0 = 3 epochs, early stopping 7 / 0.001 / 10.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub accumulation_steps: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub optimizer: AdamWConfig,
    pub schedule: CosineConfig,
    pub early_stop: EarlyStopConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            batch_size: 32,
            accumulation_steps: 2,
            max_epochs: 40,
            seed: 0,
            optimizer: AdamWConfig::default(),
            schedule: CosineConfig::default(),
            early_stop: EarlyStopConfig::default(),
        }
    }
}

impl TrainingConfig {
    /// Defaults for phase-1 base-instance training.
    pub fn base_defaults() -> Self {
        TrainingConfig::default()
    }

    /// Defaults for phase-2 fusion training. The fusion logits move about
    /// lr per optimizer step, so reaching a concentrated softmax from the
    /// uniform start takes a few hundred epochs; early stopping trims the
    /// tail.
    pub fn fusion_defaults() -> Self {
        TrainingConfig {
            max_epochs: 300,
            ..TrainingConfig::default()
        }
    }

    /// `max_epochs == 0` is the documented degenerate no-training config;
    /// any positive value must leave early stopping room to act.
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::BadConfig(
                "batch_size must be at least 1".into(),
            ));
        }
        if self.accumulation_steps == 0 {
            return Err(TrainError::BadConfig(
                "accumulation_steps must be at least 1".into(),
            ));
        }
        if self.max_epochs > 0 && self.max_epochs < self.early_stop.min_epochs {
            return Err(TrainError::BadConfig(format!(
                "max_epochs {} is below early-stopping min_epochs {}",
                self.max_epochs, self.early_stop.min_epochs
            )));
        }
        if self.optimizer.lr <= 0.0 {
            return Err(TrainError::BadConfig(format!(
                "learning rate must be positive, got {}",
                self.optimizer.lr
            )));
        }
        Ok(())
    }
}

/// Per-epoch trace of one training run. Alpha columns are present only
/// for fusion training.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub warnings: Vec<String>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

impl TrainHistory {
    /// History CSV: `epoch,train_loss,val_loss,lr[,alpha_0..alpha_{A-1}]`.
    /// Warnings ride along as leading `#` comment lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for w in &self.warnings {
            out.push_str(&format!("# warning: {w}\n"));
        }
        let alpha_cols = self.epochs.first().map_or(0, |e| e.alpha.len());
        out.push_str("epoch,train_loss,val_loss,lr");
        for i in 0..alpha_cols {
            out.push_str(&format!(",alpha_{i}"));
        }
        out.push('\n');
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{}",
                e.epoch, e.train_loss, e.val_loss, e.lr
            ));
            for a in &e.alpha {
                out.push_str(&format!(",{a}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Everything phase 1 produces: trained learners plus their traces,
/// indexed `[family][slot]`.
#[derive(Debug, Clone)]
pub struct BaseTrainOutcome {
    pub learners: Vec<Vec<ReferenceLearner>>,
    pub histories: Vec<Vec<TrainHistory>>,
}

/// Phase-2 result: the learned fusion logits and their trajectory.
#[derive(Debug, Clone)]
pub struct FusionOutcome {
    pub weights: FusionWeights,
    pub history: TrainHistory,
}

/// A feature view paired with its target, the unit the single-learner
/// loop consumes.
struct Example<'a> {
    features: &'a [f64],
    label: BinaryLabel,
}

/// Phase 1: independently trains every instance of every family on the
/// family's feature block, keeping best-validation parameters.
pub fn train_base_instances(
    ensemble: &EnsembleConfig,
    layout: &FeatureLayout,
    hidden_layers: &[usize],
    train: &[LabeledSample],
    val: &[LabeledSample],
    cfg: &TrainingConfig,
) -> Result<BaseTrainOutcome, TrainError> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(TrainError::EmptyData);
    }
    if layout.families() != ensemble.families() {
        return Err(TrainError::BadConfig(format!(
            "layout has {} families, ensemble expects {}",
            layout.families(),
            ensemble.families()
        )));
    }
    let mut sizes = Vec::with_capacity(hidden_layers.len() + 2);
    sizes.push(layout.width());
    sizes.extend_from_slice(hidden_layers);
    sizes.push(1);

    let mut learners = Vec::with_capacity(ensemble.families());
    let mut histories = Vec::with_capacity(ensemble.families());
    for family in ensemble.family_ids() {
        let train_view = family_examples(layout, family, train)?;
        let val_view = family_examples(layout, family, val)?;
        let mut family_learners = Vec::with_capacity(ensemble.instances_per_family());
        let mut family_histories = Vec::with_capacity(ensemble.instances_per_family());
        for slot in 0..ensemble.instances_per_family() {
            let seed = ensemble.seed_for(InstanceId { family, slot });
            let mut learner = ReferenceLearner::init(&sizes, seed)?;
            let shuffle_seed = mix_seed(cfg.seed, mix_seed(seed, INSTANCE_SHUFFLE_SALT));
            let history =
                train_single_learner(&mut learner, &train_view, &val_view, cfg, shuffle_seed)?;
            family_learners.push(learner);
            family_histories.push(history);
        }
        learners.push(family_learners);
        histories.push(family_histories);
    }
    Ok(BaseTrainOutcome {
        learners,
        histories,
    })
}

fn family_examples<'a>(
    layout: &FeatureLayout,
    family: FamilyId,
    samples: &'a [LabeledSample],
) -> Result<Vec<Example<'a>>, TrainError> {
    samples
        .iter()
        .map(|s| {
            Ok(Example {
                features: layout.family_slice(family, &s.features)?,
                label: s.label,
            })
        })
        .collect()
}

fn train_single_learner(
    learner: &mut ReferenceLearner,
    train: &[Example<'_>],
    val: &[Example<'_>],
    cfg: &TrainingConfig,
    shuffle_seed: u64,
) -> Result<TrainHistory, TrainError> {
    let mut history = TrainHistory::default();
    if cfg.max_epochs == 0 {
        history
            .warnings
            .push("max_epochs is 0; parameters left at initialization".to_string());
        return Ok(history);
    }
    let dim = learner.param_count();
    let mut optimizer = AdamW::new(cfg.optimizer, dim);
    let mut schedule = CosineSchedule::new(cfg.schedule, cfg.optimizer.lr)?;
    let mut stopper = EarlyStopping::new(cfg.early_stop);
    let mut accumulator = GradAccumulator::new(cfg.accumulation_steps, dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    let mut best_params = learner.params();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut batch_grad = vec![0.0; dim];

    for epoch in 1..=cfg.max_epochs {
        let lr = schedule.lr();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            batch_grad.iter_mut().for_each(|g| *g = 0.0);
            for &idx in batch {
                let ex = &train[idx];
                let y = sigmoid(learner.forward(ex.features)?);
                loss_sum += bce_loss(y, ex.label);
                let dl_dz = bce_grad_y(y, ex.label) * y.value() * (1.0 - y.value());
                let grad = learner.backward(ex.features, dl_dz)?;
                for (b, g) in batch_grad.iter_mut().zip(&grad) {
                    *b += g;
                }
            }
            let scale = batch.len() as f64;
            batch_grad.iter_mut().for_each(|g| *g /= scale);
            if let Some(mean) = accumulator.push(&batch_grad)? {
                apply_learner_step(learner, &mut optimizer, &mean, lr)?;
            }
        }
        if let Some(mean) = accumulator.flush() {
            apply_learner_step(learner, &mut optimizer, &mean, lr)?;
        }
        let val_loss = learner_loss(learner, val)?;
        history.epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_loss,
            lr,
            alpha: Vec::new(),
        });
        let decision = stopper.update(epoch, val_loss);
        if decision.improved {
            best_params = learner.params();
        }
        if decision.stop {
            break;
        }
        schedule.advance_epoch();
    }
    learner.set_params(&best_params)?;
    history.best_epoch = stopper.best_epoch();
    history.best_val_loss = stopper.best_loss();
    Ok(history)
}

fn apply_learner_step(
    learner: &mut ReferenceLearner,
    optimizer: &mut AdamW,
    grad: &[f64],
    lr: f64,
) -> Result<(), TrainError> {
    let mut params = learner.params();
    optimizer.step(&mut params, grad, lr)?;
    learner.set_params(&params)?;
    Ok(())
}

fn learner_loss(learner: &ReferenceLearner, examples: &[Example<'_>]) -> Result<f64, TrainError> {
    let mut sum = 0.0;
    for ex in examples {
        let y = sigmoid(learner.forward(ex.features)?);
        sum += bce_loss(y, ex.label);
    }
    Ok(sum / examples.len() as f64)
}

/// Tier-1 prediction: mean of one family's instance sigmoid scores on the
/// family's feature view.
pub fn predict_family(
    learners: &[ReferenceLearner],
    block: &[f64],
) -> Result<Probability, TrainError> {
    let scores = learners
        .iter()
        .map(|l| Ok(sigmoid(l.forward(block)?)))
        .collect::<Result<Vec<_>, TrainError>>()?;
    Ok(average_instances(&scores)?)
}

/// Precomputes the per-sample family prediction vectors that phase 2
/// trains against. With frozen learners these are constant, so computing
/// them once is mathematically identical to re-running the learners per
/// batch.
pub fn family_prediction_rows(
    learners: &[Vec<ReferenceLearner>],
    layout: &FeatureLayout,
    samples: &[LabeledSample],
) -> Result<Vec<FusionSample>, TrainError> {
    samples
        .iter()
        .map(|s| {
            let preds = (0..learners.len())
                .map(|f| {
                    let block = layout.family_slice(FamilyId(f), &s.features)?;
                    predict_family(&learners[f], block)
                })
                .collect::<Result<Vec<_>, TrainError>>()?;
            Ok(FusionSample {
                preds: FamilyPredictions::new(preds),
                label: s.label,
            })
        })
        .collect()
}

/// Phase 2: learns the fusion logits against frozen family predictions,
/// starting from the uniform vector, keeping the best-validation weights
/// and recording the alpha trajectory per epoch.
pub fn train_fusion(
    train_rows: &[FusionSample],
    val_rows: &[FusionSample],
    families: usize,
    cfg: &TrainingConfig,
) -> Result<FusionOutcome, TrainError> {
    cfg.validate()?;
    if train_rows.is_empty() || val_rows.is_empty() {
        return Err(TrainError::EmptyData);
    }
    for row in train_rows.iter().chain(val_rows) {
        if row.preds.len() != families {
            return Err(TrainError::Ensemble(EnsembleError::LengthMismatch {
                expected: families,
                got: row.preds.len(),
            }));
        }
    }
    let mut weights = FusionWeights::uniform(families);
    let mut history = TrainHistory::default();
    if cfg.max_epochs == 0 {
        history
            .warnings
            .push("max_epochs is 0; fusion weights left at uniform initialization".to_string());
        return Ok(FusionOutcome { weights, history });
    }
    let mut w = weights.logits().to_vec();
    let mut optimizer = AdamW::new(cfg.optimizer, families);
    let mut schedule = CosineSchedule::new(cfg.schedule, cfg.optimizer.lr)?;
    let mut stopper = EarlyStopping::new(cfg.early_stop);
    let mut accumulator = GradAccumulator::new(cfg.accumulation_steps, families)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, FUSION_SHUFFLE_SALT));
    let mut best_w = w.clone();
    let mut order: Vec<usize> = (0..train_rows.len()).collect();
    let mut batch_grad = vec![0.0; families];

    for epoch in 1..=cfg.max_epochs {
        let lr = schedule.lr();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            batch_grad.iter_mut().for_each(|g| *g = 0.0);
            let alpha = crate::ensemble::softmax_weights(&w);
            for &idx in batch {
                let row = &train_rows[idx];
                let y = fuse(&alpha, &row.preds)?;
                loss_sum += bce_loss(y, row.label);
                let grad = fusion_gradient(&w, &row.preds, bce_grad_y(y, row.label))?;
                for (b, g) in batch_grad.iter_mut().zip(&grad.d_w) {
                    *b += g;
                }
            }
            let scale = batch.len() as f64;
            batch_grad.iter_mut().for_each(|g| *g /= scale);
            if let Some(mean) = accumulator.push(&batch_grad)? {
                optimizer.step(&mut w, &mean, lr)?;
            }
        }
        if let Some(mean) = accumulator.flush() {
            optimizer.step(&mut w, &mean, lr)?;
        }
        let val_loss = fusion_loss(&w, val_rows)?;
        let alpha_now: Vec<f64> = crate::ensemble::softmax_weights(&w)
            .iter()
            .map(|a| a.value())
            .collect();
        history.epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / train_rows.len() as f64,
            val_loss,
            lr,
            alpha: alpha_now,
        });
        let decision = stopper.update(epoch, val_loss);
        if decision.improved {
            best_w = w.clone();
        }
        if decision.stop {
            break;
        }
        schedule.advance_epoch();
    }
    weights = FusionWeights::new(best_w)?;
    history.best_epoch = stopper.best_epoch();
    history.best_val_loss = stopper.best_loss();
    Ok(FusionOutcome { weights, history })
}

/// Mean BCE of the fused prediction over a row set for given logits.
pub fn fusion_loss(w: &[f64], rows: &[FusionSample]) -> Result<f64, TrainError> {
    let alpha = crate::ensemble::softmax_weights(w);
    let mut sum = 0.0;
    for row in rows {
        let y = fuse(&alpha, &row.preds)?;
        sum += bce_loss(y, row.label);
    }
    Ok(sum / rows.len() as f64)
}

/// A complete two-phase artifact: frozen learners plus learned fusion.
#[derive(Debug, Clone)]
pub struct TrainedEnsemble {
    pub ensemble: EnsembleConfig,
    pub layout: FeatureLayout,
    pub learners: Vec<Vec<ReferenceLearner>>,
    pub fusion: FusionWeights,
}

impl TrainedEnsemble {
    pub fn family_predictions(&self, features: &[f64]) -> Result<FamilyPredictions, TrainError> {
        let preds = (0..self.learners.len())
            .map(|f| {
                let block = self.layout.family_slice(FamilyId(f), features)?;
                predict_family(&self.learners[f], block)
            })
            .collect::<Result<Vec<_>, TrainError>>()?;
        Ok(FamilyPredictions::new(preds))
    }

    /// Final prediction `y = fuse(softmax(w), p(x))`.
    pub fn predict(&self, features: &[f64]) -> Result<Probability, TrainError> {
        let preds = self.family_predictions(features)?;
        Ok(fuse(&self.fusion.alpha(), &preds)?)
    }

    /// Prediction under explicit mixture weights (e.g. the uniform
    /// fixed-weight baseline).
    pub fn predict_with_alpha(
        &self,
        alpha: &[Probability],
        features: &[f64],
    ) -> Result<Probability, TrainError> {
        let preds = self.family_predictions(features)?;
        Ok(fuse(alpha, &preds)?)
    }

    /// SHA-256 over the exact bit patterns of every learner parameter,
    /// for frozen-base checks.
    pub fn parameter_fingerprint(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        for family in &self.learners {
            for learner in family {
                for p in learner.params() {
                    hasher.update(p.to_bits().to_le_bytes());
                }
            }
        }
        hasher.finalize().into()
    }
}
