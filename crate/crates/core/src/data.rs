//! Data plumbing: the prediction-record CSV format and its strict loader,
//! the synthetic feature generator behind the desk-scale experiments,
//! deterministic split assignment, and label-preserving augmentation.
//!
//! # Synthetic generator
//!
//! Each sample draws a label and a per-sample nuisance polarity `h` shared
//! by all families. Family `f`'s feature block then carries a coherent
//! sign: the true label sign with probability `r_f` (its reliability),
//! otherwise the nuisance sign `-s*h`. Gaussian noise of scale
//! `sigma_inst` is added per component.
//!
//! With `r = 0` the block sign is independent of the label, so nothing is
//! learnable; with `r = 1` and zero noise the data is separable. A family
//! scored by a calibrated learner lands near AUC `(1 + r) / 2`. Because
//! the nuisance polarity is shared, families with low reliability are
//! *coherently* misleading, which is what makes uniform fusion degrade
//! under a reliability shift while learned weights hold up.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{mix_seed, BinaryLabel, FamilyId, FeatureLayout, Probability};
use crate::ensemble::{average_instances, FamilyPredictions, FusionSample};
use crate::learners::CachedPredictor;

/// Amplitude of the coherent block signal; noise scales relative to it.
const SIGNAL_AMPLITUDE: f64 = 1.0;

const SHIFT_SEED_SALT: u64 = 0x5347_4654;
const AUGMENT_SEED_SALT: u64 = 0x4155_4721;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("duplicate prediction key at row {row}: {key}")]
    DuplicateKey { row: usize, key: String },
    #[error(
        "non-rectangular predictions in dataset '{dataset}': sample '{sample_id}' is missing family '{family}' instance {instance}"
    )]
    NonRectangular {
        dataset: String,
        sample_id: String,
        family: String,
        instance: u32,
    },
    #[error("score out of range at row {row}: {value}")]
    ScoreOutOfRange { row: usize, value: f64 },
    #[error("row {row} contradicts earlier split/label for sample '{sample_id}'")]
    ConflictingMetadata { row: usize, sample_id: String },
    #[error("bad synthetic spec: {0}")]
    BadSpec(String),
    #[error("bad split ratios: {0}")]
    BadRatios(String),
    #[error("field '{0}' would corrupt the CSV (contains a comma, quote, or newline)")]
    InvalidField(String),
    #[error("unknown sample '{0}'")]
    UnknownSample(String),
    #[error("unknown dataset '{0}' (available: {1})")]
    UnknownDataset(String, String),
    #[error(transparent)]
    Learner(#[from] crate::learners::LearnerError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One desk-scale training unit: a feature vector with its binary label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub id: String,
    pub features: Vec<f64>,
    pub label: BinaryLabel,
}

/// Which split a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Configuration of the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Feature components visible to each family.
    pub features_per_family: usize,
    /// Per-family reliability in [0, 1].
    pub reliabilities: Vec<f64>,
    /// Gaussian noise scale on every feature component.
    pub sigma_inst: f64,
    /// Fraction of fake labels.
    pub class_balance: f64,
    /// Reliability overrides for the shifted companion dataset.
    pub shift_reliabilities: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_train: 5000,
            n_val: 1000,
            n_test: 1000,
            features_per_family: 4,
            reliabilities: vec![0.9, 0.7, 0.5],
            sigma_inst: 0.5,
            class_balance: 0.5,
            shift_reliabilities: None,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.reliabilities.is_empty() {
            return Err(DataError::BadSpec("no families configured".to_string()));
        }
        if self.features_per_family == 0 {
            return Err(DataError::BadSpec(
                "features_per_family must be at least 1".to_string(),
            ));
        }
        for &r in &self.reliabilities {
            if !(0.0..=1.0).contains(&r) {
                return Err(DataError::BadSpec(format!(
                    "reliability {r} outside [0, 1]"
                )));
            }
        }
        if let Some(shift) = &self.shift_reliabilities {
            if shift.len() != self.reliabilities.len() {
                return Err(DataError::BadSpec(format!(
                    "shift profile has {} families, base has {}",
                    shift.len(),
                    self.reliabilities.len()
                )));
            }
            for &r in shift {
                if !(0.0..=1.0).contains(&r) {
                    return Err(DataError::BadSpec(format!(
                        "shift reliability {r} outside [0, 1]"
                    )));
                }
            }
        }
        if self.sigma_inst < 0.0 || !self.sigma_inst.is_finite() {
            return Err(DataError::BadSpec(format!(
                "sigma_inst must be finite and non-negative, got {}",
                self.sigma_inst
            )));
        }
        if !(0.0..=1.0).contains(&self.class_balance) {
            return Err(DataError::BadSpec(format!(
                "class_balance {} outside [0, 1]",
                self.class_balance
            )));
        }
        Ok(())
    }

    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout::uniform(self.reliabilities.len(), self.features_per_family)
    }
}

/// A generated dataset with its ground-truth family informativeness
/// (the AUC a calibrated scorer of family f approaches, `(1 + r_f) / 2`).
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub name: String,
    pub layout: FeatureLayout,
    pub train: Vec<LabeledSample>,
    pub val: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
    pub family_informativeness: Vec<f64>,
}

impl SyntheticDataset {
    pub fn split(&self, split: Split) -> &[LabeledSample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Primary dataset plus the optional reliability-shifted companion.
#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub primary: SyntheticDataset,
    pub shifted: Option<SyntheticDataset>,
}

/// Generates the labeled feature dataset(s) described by the spec,
/// deterministically under its seed.
pub fn generate_synthetic(
    spec: &SyntheticSpec,
    primary_name: &str,
    shifted_name: &str,
) -> Result<GeneratedData, DataError> {
    spec.validate()?;
    let primary = generate_one(spec, &spec.reliabilities, spec.seed, primary_name);
    let shifted = spec.shift_reliabilities.as_ref().map(|shift| {
        generate_one(
            spec,
            shift,
            mix_seed(spec.seed, SHIFT_SEED_SALT),
            shifted_name,
        )
    });
    Ok(GeneratedData { primary, shifted })
}

fn generate_one(
    spec: &SyntheticSpec,
    reliabilities: &[f64],
    seed: u64,
    name: &str,
) -> SyntheticDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = spec.layout();
    let mut make_split = |split: Split, n: usize| -> Vec<LabeledSample> {
        (0..n)
            .map(|i| {
                let label = if rng.random_bool(spec.class_balance) {
                    BinaryLabel::Fake
                } else {
                    BinaryLabel::Real
                };
                let s = if label.is_fake() { 1.0 } else { -1.0 };
                let h = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let mut features = Vec::with_capacity(layout.total_dim());
                for &r in reliabilities {
                    let c = if rng.random_bool(r) { s } else { -s * h };
                    for _ in 0..spec.features_per_family {
                        let z: f64 = rng.sample(StandardNormal);
                        features.push(c * SIGNAL_AMPLITUDE + spec.sigma_inst * z);
                    }
                }
                LabeledSample {
                    id: format!("{name}-{split}-{i:05}"),
                    features,
                    label,
                }
            })
            .collect()
    };
    let train = make_split(Split::Train, spec.n_train);
    let val = make_split(Split::Val, spec.n_val);
    let test = make_split(Split::Test, spec.n_test);
    SyntheticDataset {
        name: name.to_string(),
        layout,
        train,
        val,
        test,
        family_informativeness: reliabilities.iter().map(|r| (1.0 + r) / 2.0).collect(),
    }
}

/// Expands a training split by `fraction` with label-preserving feature
/// jitter. Returns the original samples followed by the jittered copies.
pub fn augment_train_split(
    samples: &[LabeledSample],
    fraction: f64,
    jitter_std: f64,
    seed: u64,
) -> Result<Vec<LabeledSample>, DataError> {
    if !(0.0..=10.0).contains(&fraction) {
        return Err(DataError::BadSpec(format!(
            "augmentation fraction {fraction} outside [0, 10]"
        )));
    }
    if jitter_std < 0.0 || !jitter_std.is_finite() {
        return Err(DataError::BadSpec(format!(
            "jitter std must be finite and non-negative, got {jitter_std}"
        )));
    }
    let mut out = samples.to_vec();
    if samples.is_empty() {
        return Ok(out);
    }
    let extra = (samples.len() as f64 * fraction).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, AUGMENT_SEED_SALT));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    for i in 0..extra {
        let src = &samples[order[i % samples.len()]];
        let features = src
            .features
            .iter()
            .map(|&v| {
                let z: f64 = rng.sample(StandardNormal);
                v + jitter_std * z
            })
            .collect();
        out.push(LabeledSample {
            id: format!("{}-aug{i:04}", src.id),
            features,
            label: src.label,
        });
    }
    Ok(out)
}

/// Train/val/test proportions. Entries may be zero but must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<(), DataError> {
        for v in [self.train, self.val, self.test] {
            if !(0.0..=1.0).contains(&v) {
                return Err(DataError::BadRatios(format!("ratio {v} outside [0, 1]")));
            }
        }
        let sum = self.train + self.val + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DataError::BadRatios(format!("ratios sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Deterministic hash-based split assignment; each sample's split is a
/// pure function of (sample_id, seed), independent of enumeration order.
#[derive(Debug, Clone)]
pub struct SplitAssignment {
    map: BTreeMap<String, Split>,
    pub ratios: SplitRatios,
    pub seed: u64,
}

impl SplitAssignment {
    pub fn split_of(&self, sample_id: &str) -> Option<Split> {
        self.map.get(sample_id).copied()
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for split in self.map.values() {
            match split {
                Split::Train => c.0 += 1,
                Split::Val => c.1 += 1,
                Split::Test => c.2 += 1,
            }
        }
        c
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

pub fn assign_splits(
    sample_ids: &[String],
    ratios: SplitRatios,
    seed: u64,
) -> Result<SplitAssignment, DataError> {
    ratios.validate()?;
    let mut map = BTreeMap::new();
    for id in sample_ids {
        map.insert(id.clone(), split_for(id, ratios, seed));
    }
    Ok(SplitAssignment { map, ratios, seed })
}

fn split_for(sample_id: &str, ratios: SplitRatios, seed: u64) -> Split {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(sample_id.as_bytes());
    let digest = hasher.finalize();
    let raw = u64::from_be_bytes(digest[..8].try_into().unwrap());
    let u = raw as f64 / u64::MAX as f64;
    if u < ratios.train {
        Split::Train
    } else if u < ratios.train + ratios.val {
        Split::Val
    } else {
        Split::Test
    }
}

/// One row of the prediction-record CSV: a single base-learner sigmoid
/// score, keyed by (sample, family, instance, dataset, split).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub dataset: String,
    pub split: Split,
    pub family: String,
    pub instance: u32,
    pub score: Probability,
    pub label: BinaryLabel,
}

pub const PREDICTION_HEADER: &str = "sample_id,dataset,split,family,instance,score,label";

fn check_field(value: &str) -> Result<(), DataError> {
    if value.contains(',') || value.contains('"') || value.contains('\n') || value.contains('\r') {
        return Err(DataError::InvalidField(value.to_string()));
    }
    Ok(())
}

/// Writes records in the canonical format: UTF-8, header row, scores as
/// shortest exact decimal so a reload reproduces every value bit-exactly.
pub fn write_prediction_records(
    path: impl AsRef<Path>,
    records: &[PredictionRecord],
) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut out = String::with_capacity(records.len() * 48 + PREDICTION_HEADER.len() + 1);
    out.push_str(PREDICTION_HEADER);
    out.push('\n');
    for r in records {
        check_field(&r.sample_id)?;
        check_field(&r.dataset)?;
        check_field(&r.family)?;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.sample_id,
            r.dataset,
            r.split,
            r.family,
            r.instance,
            r.score.value(),
            r.label.as_int()
        ));
    }
    write_atomic(path, out.as_bytes())
}

/// Writes via a rename so partially written files never survive.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(io_err(path))?;
        }
    }
    let tmp = path.with_extension("tmp-write");
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Everything loaded from one prediction-record file, grouped by dataset.
#[derive(Debug, Clone)]
pub struct PredictionStore {
    datasets: BTreeMap<String, DatasetPredictions>,
    pub provenance: PathBuf,
}

impl PredictionStore {
    pub fn dataset(&self, name: &str) -> Result<&DatasetPredictions, DataError> {
        self.datasets.get(name).ok_or_else(|| {
            DataError::UnknownDataset(name.to_string(), self.dataset_names().join(", "))
        })
    }

    pub fn dataset_names(&self) -> Vec<String> {
        self.datasets.keys().cloned().collect()
    }

    pub fn datasets(&self) -> impl Iterator<Item = &DatasetPredictions> {
        self.datasets.values()
    }
}

/// Per-sample metadata carried by the record file.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMeta {
    pub sample_id: String,
    pub split: Split,
    pub label: BinaryLabel,
}

/// One dataset's worth of cached predictions, rectangular over the
/// observed (family, instance) pairs.
#[derive(Debug, Clone)]
pub struct DatasetPredictions {
    name: String,
    family_names: Vec<String>,
    instances: Vec<Vec<u32>>,
    samples: Vec<SampleMeta>,
    cache: CachedPredictor,
}

impl DatasetPredictions {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Family names in first-appearance order.
    pub fn family_names(&self) -> &[String] {
        &self.family_names
    }

    pub fn family_count(&self) -> usize {
        self.family_names.len()
    }

    /// Observed instance tags of one family, ascending.
    pub fn instance_tags(&self, family: FamilyId) -> &[u32] {
        &self.instances[family.0]
    }

    pub fn samples(&self, split: Option<Split>) -> Vec<&SampleMeta> {
        self.samples
            .iter()
            .filter(|m| split.is_none_or(|s| m.split == s))
            .collect()
    }

    pub fn cache(&self) -> &CachedPredictor {
        &self.cache
    }

    /// Tier-1 prediction of one family: mean of its cached instance scores.
    pub fn family_prediction(
        &self,
        sample_id: &str,
        family: FamilyId,
    ) -> Result<Probability, DataError> {
        let scores: Vec<Probability> = self.instances[family.0]
            .iter()
            .map(|&tag| self.cache.lookup(sample_id, family, tag as usize))
            .collect::<Result<_, _>>()?;
        Ok(average_instances(&scores).expect("rectangular families are non-empty"))
    }

    pub fn family_predictions(&self, sample_id: &str) -> Result<FamilyPredictions, DataError> {
        let scores = (0..self.family_count())
            .map(|f| self.family_prediction(sample_id, FamilyId(f)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FamilyPredictions::new(scores))
    }

    /// Fusion training/evaluation rows for one split.
    pub fn fusion_rows(&self, split: Split) -> Result<Vec<FusionSample>, DataError> {
        self.samples(Some(split))
            .into_iter()
            .map(|meta| {
                Ok(FusionSample {
                    preds: self.family_predictions(&meta.sample_id)?,
                    label: meta.label,
                })
            })
            .collect()
    }
}

/// Strict loader: any violated invariant aborts with the offending row.
pub fn load_prediction_records(path: impl AsRef<Path>) -> Result<PredictionStore, DataError> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| DataError::Parse {
            row: 0,
            message: format!("{e}"),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| DataError::Parse {
            row: 0,
            message: format!("{e}"),
        })?
        .clone();
    let expected: Vec<&str> = PREDICTION_HEADER.split(',').collect();
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(DataError::Parse {
            row: 0,
            message: format!(
                "header must be '{PREDICTION_HEADER}', got '{}'",
                got.join(",")
            ),
        });
    }

    struct Building {
        name: String,
        family_names: Vec<String>,
        family_index: HashMap<String, usize>,
        instances: Vec<BTreeSet<u32>>,
        samples: Vec<SampleMeta>,
        sample_index: HashMap<String, usize>,
        cache: CachedPredictor,
    }

    let mut building: BTreeMap<String, Building> = BTreeMap::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| DataError::Parse {
            row,
            message: format!("{e}"),
        })?;
        if record.len() != 7 {
            return Err(DataError::Parse {
                row,
                message: format!("expected 7 fields, got {}", record.len()),
            });
        }
        let field = |i: usize| record.get(i).unwrap().trim();
        let sample_id = field(0).to_string();
        let dataset = field(1).to_string();
        if sample_id.is_empty() || dataset.is_empty() {
            return Err(DataError::Parse {
                row,
                message: "empty sample_id or dataset".to_string(),
            });
        }
        let split = Split::parse(field(2)).ok_or_else(|| DataError::Parse {
            row,
            message: format!("split must be train/val/test, got '{}'", field(2)),
        })?;
        let family = field(3).to_string();
        let instance: u32 = field(4).parse().map_err(|_| DataError::Parse {
            row,
            message: format!(
                "instance must be a non-negative integer, got '{}'",
                field(4)
            ),
        })?;
        let raw_score: f64 = field(5).parse().map_err(|_| DataError::Parse {
            row,
            message: format!("score must be a decimal, got '{}'", field(5)),
        })?;
        let score = Probability::new(raw_score).map_err(|_| DataError::ScoreOutOfRange {
            row,
            value: raw_score,
        })?;
        let label_raw: i64 = field(6).parse().map_err(|_| DataError::Parse {
            row,
            message: format!("label must be 0 or 1, got '{}'", field(6)),
        })?;
        let label = BinaryLabel::from_int(label_raw).map_err(|_| DataError::Parse {
            row,
            message: format!("label must be 0 or 1, got {label_raw}"),
        })?;

        let entry = building.entry(dataset.clone()).or_insert_with(|| Building {
            name: dataset.clone(),
            family_names: Vec::new(),
            family_index: HashMap::new(),
            instances: Vec::new(),
            samples: Vec::new(),
            sample_index: HashMap::new(),
            cache: CachedPredictor::new(path),
        });
        let family_idx = match entry.family_index.get(&family) {
            Some(&i) => i,
            None => {
                let i = entry.family_names.len();
                entry.family_names.push(family.clone());
                entry.family_index.insert(family.clone(), i);
                entry.instances.push(BTreeSet::new());
                i
            }
        };
        entry.instances[family_idx].insert(instance);
        match entry.sample_index.get(&sample_id) {
            Some(&i) => {
                let meta = &entry.samples[i];
                if meta.split != split || meta.label != label {
                    return Err(DataError::ConflictingMetadata { row, sample_id });
                }
            }
            None => {
                entry
                    .sample_index
                    .insert(sample_id.clone(), entry.samples.len());
                entry.samples.push(SampleMeta {
                    sample_id: sample_id.clone(),
                    split,
                    label,
                });
            }
        }
        entry
            .cache
            .insert(&sample_id, FamilyId(family_idx), instance as usize, score)
            .map_err(|_| DataError::DuplicateKey {
                row,
                key: format!("({sample_id}, {family}, {instance})"),
            })?;
    }

    // rectangularity: every observed (family, instance) pair must exist
    // for every sample within its dataset
    let mut datasets = BTreeMap::new();
    for (name, b) in building {
        for meta in &b.samples {
            for (f, tags) in b.instances.iter().enumerate() {
                for &tag in tags {
                    if b.cache
                        .lookup(&meta.sample_id, FamilyId(f), tag as usize)
                        .is_err()
                    {
                        return Err(DataError::NonRectangular {
                            dataset: name.clone(),
                            sample_id: meta.sample_id.clone(),
                            family: b.family_names[f].clone(),
                            instance: tag,
                        });
                    }
                }
            }
        }
        datasets.insert(
            name,
            DatasetPredictions {
                name: b.name,
                family_names: b.family_names,
                instances: b
                    .instances
                    .into_iter()
                    .map(|s| s.into_iter().collect())
                    .collect(),
                samples: b.samples,
                cache: b.cache,
            },
        );
    }
    Ok(PredictionStore {
        datasets,
        provenance: path.to_path_buf(),
    })
}

/// Writes the feature file: one row per sample, the id followed by the
/// feature components as exact shortest decimals.
pub fn write_features_csv(
    path: impl AsRef<Path>,
    samples: &[LabeledSample],
) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut out = String::new();
    for s in samples {
        check_field(&s.id)?;
        out.push_str(&s.id);
        for v in &s.features {
            out.push(',');
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_features_csv(path: impl AsRef<Path>) -> Result<Vec<(String, Vec<f64>)>, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let row = idx + 1;
        let mut fields = line.split(',');
        let id = fields
            .next()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| DataError::Parse {
                row,
                message: "missing sample id".to_string(),
            })?
            .to_string();
        let features = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| DataError::Parse {
                    row,
                    message: format!("bad feature value '{f}'"),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        out.push((id, features));
    }
    Ok(out)
}

const SAMPLES_HEADER: &str = "sample_id,dataset,split,label";

/// Writes the per-sample manifest (id, dataset, split, label).
pub fn write_samples_csv(
    path: impl AsRef<Path>,
    dataset: &str,
    rows: &[(String, Split, BinaryLabel)],
) -> Result<(), DataError> {
    let path = path.as_ref();
    check_field(dataset)?;
    let mut out = String::from(SAMPLES_HEADER);
    out.push('\n');
    for (id, split, label) in rows {
        check_field(id)?;
        out.push_str(&format!(
            "{},{},{},{}\n",
            id,
            dataset,
            split,
            label.as_int()
        ));
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_samples_csv(
    path: impl AsRef<Path>,
) -> Result<Vec<(String, String, Split, BinaryLabel)>, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == SAMPLES_HEADER => {}
        other => {
            return Err(DataError::Parse {
                row: 0,
                message: format!(
                    "samples manifest must start with '{SAMPLES_HEADER}', got '{}'",
                    other.map(|(_, l)| l).unwrap_or("")
                ),
            })
        }
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let row = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(DataError::Parse {
                row,
                message: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let split = Split::parse(fields[2]).ok_or_else(|| DataError::Parse {
            row,
            message: format!("bad split '{}'", fields[2]),
        })?;
        let label_raw: i64 = fields[3].parse().map_err(|_| DataError::Parse {
            row,
            message: format!("bad label '{}'", fields[3]),
        })?;
        let label = BinaryLabel::from_int(label_raw).map_err(|_| DataError::Parse {
            row,
            message: format!("bad label '{}'", fields[3]),
        })?;
        out.push((fields[0].to_string(), fields[1].to_string(), split, label));
    }
    Ok(out)
}

/// Persists a dataset as `features.csv` + `samples.csv` under `dir`.
pub fn save_dataset(dir: impl AsRef<Path>, dataset: &SyntheticDataset) -> Result<(), DataError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut all = Vec::new();
    let mut manifest = Vec::new();
    for split in [Split::Train, Split::Val, Split::Test] {
        for s in dataset.split(split) {
            all.push(s.clone());
            manifest.push((s.id.clone(), split, s.label));
        }
    }
    write_features_csv(dir.join("features.csv"), &all)?;
    write_samples_csv(dir.join("samples.csv"), &dataset.name, &manifest)
}

/// Loads a dataset saved by [`save_dataset`], checking the feature width
/// against the expected layout.
pub fn load_dataset(
    dir: impl AsRef<Path>,
    name: &str,
    layout: FeatureLayout,
) -> Result<SyntheticDataset, DataError> {
    let dir = dir.as_ref();
    let features = read_features_csv(dir.join("features.csv"))?;
    let manifest = read_samples_csv(dir.join("samples.csv"))?;
    let by_id: HashMap<&str, &Vec<f64>> = features.iter().map(|(id, f)| (id.as_str(), f)).collect();
    let mut dataset = SyntheticDataset {
        name: name.to_string(),
        layout,
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        family_informativeness: Vec::new(),
    };
    for (row, (id, _ds, split, label)) in manifest.iter().enumerate() {
        let features = by_id
            .get(id.as_str())
            .ok_or_else(|| DataError::UnknownSample(id.clone()))?;
        if features.len() != layout.total_dim() {
            return Err(DataError::Parse {
                row: row + 1,
                message: format!(
                    "sample '{}' has {} features, layout expects {}",
                    id,
                    features.len(),
                    layout.total_dim()
                ),
            });
        }
        let sample = LabeledSample {
            id: id.clone(),
            features: (*features).clone(),
            label: *label,
        };
        match split {
            Split::Train => dataset.train.push(sample),
            Split::Val => dataset.val.push(sample),
            Split::Test => dataset.test.push(sample),
        }
    }
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn prob(v: f64) -> Probability {
        Probability::new(v).unwrap()
    }

    fn record(
        sample: &str,
        dataset: &str,
        split: Split,
        family: &str,
        instance: u32,
        score: f64,
        label: i64,
    ) -> PredictionRecord {
        PredictionRecord {
            sample_id: sample.to_string(),
            dataset: dataset.to_string(),
            split,
            family: family.to_string(),
            instance,
            score: prob(score),
            label: BinaryLabel::from_int(label).unwrap(),
        }
    }

    #[test]
    fn records_round_trip_exactly() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("records.csv");
        let records = vec![
            record(
                "s1",
                "d1",
                Split::Train,
                "Xception",
                0,
                0.123456789012345,
                1,
            ),
            record("s2", "d1", Split::Test, "Xception", 0, 0.7, 0),
        ];
        write_prediction_records(&path, &records).unwrap();
        let store = load_prediction_records(&path).unwrap();
        let d1 = store.dataset("d1").unwrap();
        assert_eq!(d1.cache().len(), 2);
        assert_eq!(
            d1.cache().lookup("s1", FamilyId(0), 0).unwrap().value(),
            0.123456789012345
        );
        assert_eq!(d1.family_names(), &["Xception".to_string()]);
    }

    #[test]
    fn loader_rejects_duplicates_with_row_number() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("records.csv");
        let text =
            format!("{PREDICTION_HEADER}\ns1,d1,train,fam,0,0.5,1\ns1,d1,train,fam,0,0.6,1\n");
        fs::write(&path, text).unwrap();
        match load_prediction_records(&path).unwrap_err() {
            DataError::DuplicateKey { row, .. } => assert_eq!(row, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn loader_rejects_out_of_range_scores() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("records.csv");
        fs::write(
            &path,
            format!("{PREDICTION_HEADER}\ns1,d1,train,fam,0,1.2,1\n"),
        )
        .unwrap();
        match load_prediction_records(&path).unwrap_err() {
            DataError::ScoreOutOfRange { row, value } => {
                assert_eq!(row, 1);
                assert_eq!(value, 1.2);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn loader_rejects_non_rectangular_files() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("records.csv");
        let text = format!(
            "{PREDICTION_HEADER}\n\
             s1,d1,train,famA,0,0.5,1\n\
             s1,d1,train,famB,0,0.5,1\n\
             s2,d1,train,famA,0,0.4,0\n"
        );
        fs::write(&path, text).unwrap();
        match load_prediction_records(&path).unwrap_err() {
            DataError::NonRectangular {
                sample_id, family, ..
            } => {
                assert_eq!(sample_id, "s2");
                assert_eq!(family, "famB");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn loader_rejects_conflicting_sample_metadata() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("records.csv");
        let text = format!(
            "{PREDICTION_HEADER}\n\
             s1,d1,train,famA,0,0.5,1\n\
             s1,d1,val,famA,1,0.5,1\n"
        );
        fs::write(&path, text).unwrap();
        assert!(matches!(
            load_prediction_records(&path).unwrap_err(),
            DataError::ConflictingMetadata { row: 2, .. }
        ));
    }

    #[test]
    fn tier_one_average_from_cache() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("records.csv");
        let records = vec![
            record("s1", "d1", Split::Test, "famA", 0, 0.2, 1),
            record("s1", "d1", Split::Test, "famA", 1, 0.4, 1),
            record("s1", "d1", Split::Test, "famA", 2, 0.6, 1),
        ];
        write_prediction_records(&path, &records).unwrap();
        let store = load_prediction_records(&path).unwrap();
        let d1 = store.dataset("d1").unwrap();
        let p = d1.family_prediction("s1", FamilyId(0)).unwrap();
        assert!((p.value() - 0.4).abs() < 1e-15);
        let rows = d1.fusion_rows(Split::Test).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].preds.len(), 1);
    }

    #[test]
    fn generator_is_deterministic_and_balanced() {
        let spec = SyntheticSpec {
            n_train: 2000,
            n_val: 100,
            n_test: 100,
            seed: 9,
            ..SyntheticSpec::default()
        };
        let a = generate_synthetic(&spec, "d1", "d2").unwrap();
        let b = generate_synthetic(&spec, "d1", "d2").unwrap();
        assert_eq!(a.primary.train, b.primary.train);
        assert!(a.shifted.is_none());
        let fake_fraction = a.primary.train.iter().filter(|s| s.label.is_fake()).count() as f64
            / a.primary.train.len() as f64;
        assert!(
            (0.45..=0.55).contains(&fake_fraction),
            "fake fraction {fake_fraction}"
        );
        assert_eq!(a.primary.family_informativeness, vec![0.95, 0.85, 0.75]);
    }

    #[test]
    fn generator_emits_shifted_companion() {
        let spec = SyntheticSpec {
            n_train: 50,
            n_val: 10,
            n_test: 10,
            shift_reliabilities: Some(vec![0.9, 0.2, 0.2]),
            ..SyntheticSpec::default()
        };
        let data = generate_synthetic(&spec, "d1", "d2").unwrap();
        let shifted = data.shifted.unwrap();
        assert_eq!(shifted.name, "d2");
        assert_ne!(shifted.train[0].features, data.primary.train[0].features);
    }

    #[test]
    fn generator_rejects_bad_specs() {
        let spec = SyntheticSpec {
            reliabilities: vec![1.5],
            ..SyntheticSpec::default()
        };
        assert!(matches!(
            generate_synthetic(&spec, "d1", "d2").unwrap_err(),
            DataError::BadSpec(_)
        ));
        let spec = SyntheticSpec {
            shift_reliabilities: Some(vec![0.5]),
            ..SyntheticSpec::default()
        };
        assert!(generate_synthetic(&spec, "d1", "d2").is_err());
    }

    #[test]
    fn augmentation_expands_and_preserves_labels() {
        let spec = SyntheticSpec {
            n_train: 100,
            n_val: 1,
            n_test: 1,
            ..SyntheticSpec::default()
        };
        let data = generate_synthetic(&spec, "d1", "d2").unwrap();
        let expanded = augment_train_split(&data.primary.train, 0.3, 0.1, 7).unwrap();
        assert_eq!(expanded.len(), 130);
        for aug in &expanded[100..] {
            let src_id = aug.id.split("-aug").next().unwrap();
            let src = expanded[..100].iter().find(|s| s.id == src_id).unwrap();
            assert_eq!(aug.label, src.label);
            assert_ne!(aug.features, src.features);
        }
        let again = augment_train_split(&data.primary.train, 0.3, 0.1, 7).unwrap();
        assert_eq!(expanded, again);
    }

    #[test]
    fn split_assignment_degenerate_ratios() {
        let ids: Vec<String> = (0..50).map(|i| format!("s{i}")).collect();
        let ratios = SplitRatios {
            train: 1.0,
            val: 0.0,
            test: 0.0,
        };
        let assign = assign_splits(&ids, ratios, 3).unwrap();
        assert_eq!(assign.counts(), (50, 0, 0));
    }

    #[test]
    fn split_assignment_matches_ratios_at_scale() {
        let ids: Vec<String> = (0..10_000).map(|i| format!("sample-{i}")).collect();
        let assign = assign_splits(&ids, SplitRatios::default(), 42).unwrap();
        let (train, _, _) = assign.counts();
        let fraction = train as f64 / ids.len() as f64;
        assert!(
            (0.68..=0.72).contains(&fraction),
            "train fraction {fraction}"
        );
    }

    #[test]
    fn split_assignment_is_order_independent() {
        let ids: Vec<String> = (0..200).map(|i| format!("s{i}")).collect();
        let mut reversed = ids.clone();
        reversed.reverse();
        let a = assign_splits(&ids, SplitRatios::default(), 1).unwrap();
        let b = assign_splits(&reversed, SplitRatios::default(), 1).unwrap();
        for id in &ids {
            assert_eq!(a.split_of(id), b.split_of(id));
        }
    }

    #[test]
    fn split_assignment_rejects_bad_ratios() {
        let ratios = SplitRatios {
            train: 0.5,
            val: 0.2,
            test: 0.2,
        };
        assert!(matches!(
            assign_splits(&[], ratios, 0).unwrap_err(),
            DataError::BadRatios(_)
        ));
    }

    #[test]
    fn dataset_save_load_round_trip() {
        let dir = tempdir().unwrap();
        let spec = SyntheticSpec {
            n_train: 30,
            n_val: 10,
            n_test: 10,
            ..SyntheticSpec::default()
        };
        let data = generate_synthetic(&spec, "d1", "d2").unwrap();
        save_dataset(dir.path().join("d1"), &data.primary).unwrap();
        let loaded = load_dataset(dir.path().join("d1"), "d1", spec.layout()).unwrap();
        assert_eq!(loaded.train, data.primary.train);
        assert_eq!(loaded.val, data.primary.val);
        assert_eq!(loaded.test, data.primary.test);
    }
}
