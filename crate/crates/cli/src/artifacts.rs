//! Model artifact persistence: reference learners and fusion weights as
//! JSON (serde_json prints f64 via shortest-round-trip decimals, so a
//! reload is bit-exact), training histories as CSV.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use tierfuse::data::write_atomic;
use tierfuse::domain::EnsembleConfig;
use tierfuse::{FusionWeights, ReferenceLearner, TrainHistory};

use crate::config::RunConfig;
use crate::layout::RunLayout;

/// Serialized fusion artifact; alpha is stored alongside the logits for
/// inspection but the logits are authoritative.
#[derive(Debug, Serialize, Deserialize)]
pub struct FusionArtifact {
    pub w: Vec<f64>,
    pub alpha: Vec<f64>,
    pub family_names: Vec<String>,
}

pub fn save_learners(
    layout: &RunLayout,
    dataset: &str,
    aug_tag: &str,
    learners: &[Vec<ReferenceLearner>],
    histories: &[Vec<TrainHistory>],
) -> Result<()> {
    for (f, family) in learners.iter().enumerate() {
        for (m, learner) in family.iter().enumerate() {
            let path = layout.learner_file(dataset, aug_tag, f, m);
            let json = serde_json::to_string_pretty(learner)?;
            write_atomic(&path, json.as_bytes())
                .with_context(|| format!("writing {}", path.display()))?;
            let history_path = layout.learner_history_file(dataset, aug_tag, f, m);
            write_atomic(&history_path, histories[f][m].to_csv().as_bytes())
                .with_context(|| format!("writing {}", history_path.display()))?;
        }
    }
    Ok(())
}

pub fn load_learners(
    layout: &RunLayout,
    dataset: &str,
    aug_tag: &str,
    ensemble: &EnsembleConfig,
) -> Result<Vec<Vec<ReferenceLearner>>> {
    let base_dir = layout.base_dir(dataset, aug_tag);
    if !base_dir.is_dir() {
        bail!(
            "missing base artifacts: {} does not exist; run `train --phase base` first \
             or point [cache] prediction_records at a prediction CSV",
            base_dir.display()
        );
    }
    let mut out = Vec::with_capacity(ensemble.families());
    for f in 0..ensemble.families() {
        let mut family = Vec::with_capacity(ensemble.instances_per_family());
        for m in 0..ensemble.instances_per_family() {
            let path = layout.learner_file(dataset, aug_tag, f, m);
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("missing base artifact {}", path.display()))?;
            let learner: ReferenceLearner = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            family.push(learner);
        }
        out.push(family);
    }
    Ok(out)
}

pub fn save_fusion(
    layout: &RunLayout,
    dataset: &str,
    aug_tag: &str,
    weights: &FusionWeights,
    family_names: &[String],
    history: &TrainHistory,
) -> Result<()> {
    let artifact = FusionArtifact {
        w: weights.logits().to_vec(),
        alpha: weights.alpha().iter().map(|a| a.value()).collect(),
        family_names: family_names.to_vec(),
    };
    let path = layout.fusion_weights_file(dataset, aug_tag);
    write_atomic(&path, serde_json::to_string_pretty(&artifact)?.as_bytes())
        .with_context(|| format!("writing {}", path.display()))?;
    let history_path = layout.fusion_history_file(dataset, aug_tag);
    write_atomic(&history_path, history.to_csv().as_bytes())
        .with_context(|| format!("writing {}", history_path.display()))?;
    Ok(())
}

pub fn load_fusion(layout: &RunLayout, dataset: &str, aug_tag: &str) -> Result<FusionArtifact> {
    let path = layout.fusion_weights_file(dataset, aug_tag);
    if !path.is_file() {
        bail!(
            "missing fusion artifacts: {} does not exist; run `train --phase fusion` first",
            path.display()
        );
    }
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Writes the baked config snapshot for one command.
pub fn write_snapshot(layout: &RunLayout, command: &str, config: &RunConfig) -> Result<()> {
    let path = layout.snapshot(command, config.augment_tag());
    let text = config.baked().to_toml()?;
    write_atomic(&path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Writes a text file with the shared atomic-rename path handling.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
