//! Two-tier adaptive weighted ensemble for binary real/fake scoring.
//!
//! Tier 1 averages the sigmoid scores of independently seeded instances
//! within each architecture family; tier 2 fuses the family predictions
//! with softmax-normalized weights learned by backpropagation while the
//! base learners stay frozen. The crate also carries the full training
//! recipe (AdamW, cosine warm restarts, gradient accumulation, early
//! stopping), the five-metric evaluation harness with its table and
//! performance-matrix outputs, a strict cached-prediction file format for
//! scores from real backbones, and a synthetic generator for desk-scale
//! reproductions of the intra- and cross-dataset phenomena.

pub mod data;
pub mod domain;
pub mod ensemble;
pub mod learners;
pub mod metrics;
pub mod optimizer;
pub mod training;

pub use domain::{
    BinaryLabel, DomainError, EnsembleConfig, FamilyId, FeatureLayout, InstanceId, Logit,
    Probability,
};
pub use ensemble::{
    average_instances, bce_grad_y, bce_loss, fuse, fusion_gradient, sigmoid, softmax_weights,
    EnsembleError, FamilyPredictions, FusionGradient, FusionSample, FusionWeights,
};
pub use learners::{BaseLearner, CachedPredictor, LearnerError, ReferenceLearner};
pub use metrics::{
    format_percent, MatrixCell, MatrixKey, MetricsError, MetricsReport, MetricsTable,
    PerformanceMatrix, ScoredSet,
};
pub use training::{
    family_prediction_rows, predict_family, train_base_instances, train_fusion, BaseTrainOutcome,
    FusionOutcome, TrainError, TrainHistory, TrainedEnsemble, TrainingConfig,
};
