//! Core value types shared by every other module: bounded probabilities,
//! finite logits, family/instance identifiers, binary labels, and the
//! ensemble shape configuration.
//!
//! Everything here is an immutable value; all reals are `f64` so that
//! gradient checks against finite differences can hold at ~1e-6 relative
//! tolerance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from constructing domain values.
#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("probability out of range: {0}")]
    OutOfRange(f64),
    #[error("value is not finite: {0}")]
    NotFinite(f64),
    #[error("label must be 0 (real) or 1 (fake), got {0}")]
    BadLabel(i64),
    #[error("ensemble needs at least one family and one instance per family")]
    EmptySensemble,
    #[error("expected {expected} instance seeds, got {got}")]
    SeedCountMismatch { expected: usize, got: usize },
    #[error("instance seeds must be pairwise distinct (seed {0} repeats)")]
    DuplicateSeeds(u64),
    #[error("expected {expected} family names, got {got}")]
    NameCountMismatch { expected: usize, got: usize },
    #[error("feature vector has {got} entries, layout expects {expected}")]
    LayoutMismatch { expected: usize, got: usize },
}

/// A sigmoid score or fused prediction, guaranteed to lie in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self, DomainError> {
        if value.is_nan() || !(0.0..=1.0).contains(&value) {
            return Err(DomainError::OutOfRange(value));
        }
        Ok(Probability(value))
    }

    /// For internal math whose result is in `[0, 1]` up to float dust
    /// (convex combinations, stable sigmoid). Panics on NaN.
    pub(crate) fn clamped(value: f64) -> Self {
        assert!(!value.is_nan(), "probability math produced NaN");
        Probability(value.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = DomainError;
    fn try_from(value: f64) -> Result<Self, DomainError> {
        Probability::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

/// A raw model output before the sigmoid. Always finite.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Logit(f64);

impl Logit {
    pub fn new(value: f64) -> Result<Self, DomainError> {
        if !value.is_finite() {
            return Err(DomainError::NotFinite(value));
        }
        Ok(Logit(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Index of an architecture family within an ensemble configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FamilyId(pub usize);

/// One trained copy of a family, identified by its slot within the family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InstanceId {
    pub family: FamilyId,
    pub slot: usize,
}

/// Binary classification target. Fake is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinaryLabel {
    Real,
    Fake,
}

impl BinaryLabel {
    pub fn from_int(value: i64) -> Result<Self, DomainError> {
        match value {
            0 => Ok(BinaryLabel::Real),
            1 => Ok(BinaryLabel::Fake),
            other => Err(DomainError::BadLabel(other)),
        }
    }

    pub fn as_int(self) -> i64 {
        match self {
            BinaryLabel::Real => 0,
            BinaryLabel::Fake => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        self.as_int() as f64
    }

    pub fn is_fake(self) -> bool {
        self == BinaryLabel::Fake
    }
}

/// Default family display names for the three-family configuration.
const DEFAULT_FAMILY_NAMES: [&str; 3] = ["Xception", "Res2Net101", "EfficientNetB7"];

/// Shape of the two-tier ensemble: `families` architecture families, each
/// with `instances_per_family` independently seeded instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    families: usize,
    instances_per_family: usize,
    seeds: Vec<u64>,
    family_names: Vec<String>,
}

impl EnsembleConfig {
    /// Builds a configuration with one distinct seed per instance,
    /// family-major order (`seeds[f * M + m]` for instance `(f, m)`).
    pub fn new(
        families: usize,
        instances_per_family: usize,
        seeds: Vec<u64>,
    ) -> Result<Self, DomainError> {
        let names = default_family_names(families);
        Self::with_names(families, instances_per_family, seeds, names)
    }

    pub fn with_names(
        families: usize,
        instances_per_family: usize,
        seeds: Vec<u64>,
        family_names: Vec<String>,
    ) -> Result<Self, DomainError> {
        if families == 0 || instances_per_family == 0 {
            return Err(DomainError::EmptySensemble);
        }
        let expected = families * instances_per_family;
        if seeds.len() != expected {
            return Err(DomainError::SeedCountMismatch {
                expected,
                got: seeds.len(),
            });
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        for pair in sorted.windows(2) {
            if pair[0] == pair[1] {
                return Err(DomainError::DuplicateSeeds(pair[0]));
            }
        }
        if family_names.len() != families {
            return Err(DomainError::NameCountMismatch {
                expected: families,
                got: family_names.len(),
            });
        }
        Ok(EnsembleConfig {
            families,
            instances_per_family,
            seeds,
            family_names,
        })
    }

    pub fn families(&self) -> usize {
        self.families
    }

    pub fn instances_per_family(&self) -> usize {
        self.instances_per_family
    }

    pub fn seed_for(&self, instance: InstanceId) -> u64 {
        self.seeds[instance.family.0 * self.instances_per_family + instance.slot]
    }

    pub fn family_name(&self, family: FamilyId) -> &str {
        &self.family_names[family.0]
    }

    pub fn family_names(&self) -> &[String] {
        &self.family_names
    }

    pub fn family_ids(&self) -> impl Iterator<Item = FamilyId> {
        (0..self.families).map(FamilyId)
    }

    pub fn instance_ids(&self) -> impl Iterator<Item = InstanceId> + '_ {
        self.family_ids().flat_map(move |family| {
            (0..self.instances_per_family).map(move |slot| InstanceId { family, slot })
        })
    }
}

pub fn default_family_names(families: usize) -> Vec<String> {
    if families == DEFAULT_FAMILY_NAMES.len() {
        DEFAULT_FAMILY_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..families).map(|i| format!("Family{i}")).collect()
    }
}

/// Maps a flat feature vector onto per-family views: family `f` sees the
/// contiguous block `[f * width, (f + 1) * width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    families: usize,
    width: usize,
}

impl FeatureLayout {
    pub fn uniform(families: usize, width: usize) -> Self {
        FeatureLayout { families, width }
    }

    pub fn families(&self) -> usize {
        self.families
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn total_dim(&self) -> usize {
        self.families * self.width
    }

    pub fn family_slice<'a>(
        &self,
        family: FamilyId,
        features: &'a [f64],
    ) -> Result<&'a [f64], DomainError> {
        if features.len() != self.total_dim() {
            return Err(DomainError::LayoutMismatch {
                expected: self.total_dim(),
                got: features.len(),
            });
        }
        let start = family.0 * self.width;
        Ok(&features[start..start + self.width])
    }
}

/// Splitmix64-style seed derivation so each consumer of a global seed gets
/// an independent, reproducible stream.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
