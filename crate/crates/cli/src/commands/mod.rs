//! Command implementations. Each command reads its inputs from files the
//! previous stage wrote, writes its own outputs plus a baked config
//! snapshot, and never mutates upstream files.

mod evaluate;
mod report;
mod synth;
mod train;

pub use evaluate::{cross_eval, evaluate};
pub use report::report;
pub use synth::synth_data;
pub use train::{train, Phase};

use anyhow::{bail, Context, Result};

use tierfuse::data::{
    augment_train_split, load_dataset, load_prediction_records, PredictionStore, Split,
    SyntheticDataset,
};
use tierfuse::domain::FamilyId;
use tierfuse::{
    predict_family, BinaryLabel, FusionWeights, Probability, ScoredSet, TrainedEnsemble,
};

use crate::artifacts::{load_fusion, load_learners};
use crate::config::RunConfig;
use crate::layout::RunLayout;

pub struct Ctx {
    pub config: RunConfig,
    pub layout: RunLayout,
}

impl Ctx {
    pub fn new(config: RunConfig) -> Self {
        let layout = RunLayout::new(&config.out_dir);
        Ctx { config, layout }
    }

    /// The dataset phase-1/phase-2 train against.
    pub fn train_dataset(&self) -> &str {
        &self.config.synthetic.dataset_name
    }

    pub fn cache_store(&self) -> Result<Option<PredictionStore>> {
        match &self.config.cache.prediction_records {
            Some(path) => {
                let store = load_prediction_records(path)
                    .with_context(|| format!("loading prediction records {}", path.display()))?;
                Ok(Some(store))
            }
            None => Ok(None),
        }
    }

    pub fn load_dataset(&self, name: &str) -> Result<SyntheticDataset> {
        let dir = self.layout.dataset_dir(name);
        if !dir.is_dir() {
            let available = self.layout.available_datasets();
            if available.is_empty() {
                bail!(
                    "dataset '{name}' not found under {}; run `synth-data` first",
                    self.layout.data_root().display()
                );
            }
            bail!(
                "dataset '{name}' not found; available datasets: {}",
                available.join(", ")
            );
        }
        let layout = tierfuse::FeatureLayout::uniform(
            self.config.ensemble.families,
            self.config.synthetic.features_per_family,
        );
        load_dataset(&dir, name, layout).with_context(|| format!("loading dataset '{name}'"))
    }

    /// Training split with augmentation applied when enabled.
    pub fn effective_train_split(
        &self,
        dataset: &SyntheticDataset,
    ) -> Result<Vec<tierfuse::data::LabeledSample>> {
        if self.config.augment.enabled {
            Ok(augment_train_split(
                &dataset.train,
                self.config.augment.fraction,
                self.config.augment.jitter_std,
                self.config.seed,
            )?)
        } else {
            Ok(dataset.train.to_vec())
        }
    }

    /// Reassembles the trained two-phase artifact for `train_ds`.
    pub fn load_trained_ensemble(&self, train_ds: &str) -> Result<(TrainedEnsemble, Vec<String>)> {
        let ensemble = self.config.ensemble_config()?;
        let tag = self.config.augment_tag();
        let learners = load_learners(&self.layout, train_ds, tag, &ensemble)?;
        let fusion = load_fusion(&self.layout, train_ds, tag)?;
        let weights = FusionWeights::new(fusion.w.clone())
            .context("fusion artifact holds invalid weights")?;
        let names = self.config.family_names();
        let layout = tierfuse::FeatureLayout::uniform(
            self.config.ensemble.families,
            self.config.synthetic.features_per_family,
        );
        Ok((
            TrainedEnsemble {
                ensemble,
                layout,
                learners,
                fusion: weights,
            },
            names,
        ))
    }
}

/// Scored rows for an evaluation table: one per family (tier-1 baseline)
/// plus the fused ensemble row, in that order.
pub fn scored_rows_from_ensemble(
    trained: &TrainedEnsemble,
    family_names: &[String],
    samples: &[tierfuse::data::LabeledSample],
) -> Result<Vec<(String, ScoredSet)>> {
    if samples.is_empty() {
        bail!("evaluation split is empty");
    }
    let mut rows = Vec::with_capacity(family_names.len() + 1);
    for (f, name) in family_names.iter().enumerate() {
        let pairs: Vec<(Probability, BinaryLabel)> = samples
            .iter()
            .map(|s| {
                let block = trained.layout.family_slice(FamilyId(f), &s.features)?;
                Ok((predict_family(&trained.learners[f], block)?, s.label))
            })
            .collect::<Result<_>>()?;
        rows.push((name.clone(), ScoredSet::new(pairs)?));
    }
    let fused: Vec<(Probability, BinaryLabel)> = samples
        .iter()
        .map(|s| Ok((trained.predict(&s.features)?, s.label)))
        .collect::<Result<_>>()?;
    rows.push(("Ensemble".to_string(), ScoredSet::new(fused)?));
    Ok(rows)
}

/// The same rows computed from cached backbone scores.
pub fn scored_rows_from_cache(
    store: &PredictionStore,
    dataset: &str,
    split: Split,
    fusion: &FusionWeights,
) -> Result<Vec<(String, ScoredSet)>> {
    let ds = store.dataset(dataset)?;
    if fusion.len() != ds.family_count() {
        bail!(
            "fusion artifact has {} families but dataset '{dataset}' in the cache has {}",
            fusion.len(),
            ds.family_count()
        );
    }
    let metas = ds.samples(Some(split));
    if metas.is_empty() {
        bail!("dataset '{dataset}' has no samples in the {split} split");
    }
    let alpha = fusion.alpha();
    let mut rows = Vec::with_capacity(ds.family_count() + 1);
    for (f, name) in ds.family_names().iter().enumerate() {
        let pairs: Vec<(Probability, BinaryLabel)> = metas
            .iter()
            .map(|m| Ok((ds.family_prediction(&m.sample_id, FamilyId(f))?, m.label)))
            .collect::<Result<_>>()?;
        rows.push((name.clone(), ScoredSet::new(pairs)?));
    }
    let fused: Vec<(Probability, BinaryLabel)> = metas
        .iter()
        .map(|m| {
            let preds = ds.family_predictions(&m.sample_id)?;
            Ok((tierfuse::fuse(&alpha, &preds)?, m.label))
        })
        .collect::<Result<_>>()?;
    rows.push(("Ensemble".to_string(), ScoredSet::new(fused)?));
    Ok(rows)
}
