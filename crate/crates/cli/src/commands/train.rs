use anyhow::{bail, Context, Result};
use clap::ValueEnum;

use tierfuse::data::Split;
use tierfuse::{family_prediction_rows, train_base_instances, train_fusion};

use crate::artifacts::{load_learners, save_fusion, save_learners, write_snapshot};

use super::Ctx;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Phase {
    /// Phase 1: independently train every family instance.
    Base,
    /// Phase 2: freeze the instances and learn the fusion weights.
    Fusion,
}

pub fn train(ctx: &Ctx, phase: Phase) -> Result<()> {
    match phase {
        Phase::Base => train_base(ctx),
        Phase::Fusion => train_fusion_phase(ctx),
    }
}

fn train_base(ctx: &Ctx) -> Result<()> {
    if ctx.config.cache.prediction_records.is_some() {
        bail!(
            "phase base trains reference learners from features; with [cache] \
             prediction_records set the base scores are already provided — run \
             `train --phase fusion` directly"
        );
    }
    let name = ctx.train_dataset().to_string();
    let dataset = ctx.load_dataset(&name)?;
    let train_split = ctx.effective_train_split(&dataset)?;
    let ensemble = ctx.config.ensemble_config()?;
    let cfg = ctx.config.base_training();
    let outcome = train_base_instances(
        &ensemble,
        &dataset.layout,
        &ctx.config.learner.hidden_layers,
        &train_split,
        &dataset.val,
        &cfg,
    )
    .context("phase-1 training")?;

    let tag = ctx.config.augment_tag();
    save_learners(
        &ctx.layout,
        &name,
        tag,
        &outcome.learners,
        &outcome.histories,
    )?;
    for (f, histories) in outcome.histories.iter().enumerate() {
        for (m, h) in histories.iter().enumerate() {
            let epochs = h.epochs.len();
            println!(
                "trained {} instance {m}: {epochs} epochs, best val loss {:.6} at epoch {}",
                ensemble.family_name(tierfuse::FamilyId(f)),
                h.best_val_loss,
                h.best_epoch
            );
        }
    }
    println!(
        "wrote base artifacts to {}",
        ctx.layout.base_dir(&name, tag).display()
    );
    write_snapshot(&ctx.layout, "train-base", &ctx.config)?;
    Ok(())
}

fn train_fusion_phase(ctx: &Ctx) -> Result<()> {
    let name = ctx.train_dataset().to_string();
    let tag = ctx.config.augment_tag();
    let cfg = ctx.config.fusion_training();

    let (train_rows, val_rows, families, family_names) = match ctx.cache_store()? {
        Some(store) => {
            if ctx.config.augment.enabled {
                println!(
                    "note: augmentation applies to feature training; cached scores are used as-is"
                );
            }
            let ds = store
                .dataset(&name)
                .with_context(|| format!("the prediction cache has no dataset named '{name}'"))?;
            let train_rows = ds.fusion_rows(Split::Train)?;
            let val_rows = ds.fusion_rows(Split::Val)?;
            (
                train_rows,
                val_rows,
                ds.family_count(),
                ds.family_names().to_vec(),
            )
        }
        None => {
            let dataset = ctx.load_dataset(&name)?;
            let ensemble = ctx.config.ensemble_config()?;
            let learners = load_learners(&ctx.layout, &name, tag, &ensemble)?;
            let train_split = ctx.effective_train_split(&dataset)?;
            let train_rows = family_prediction_rows(&learners, &dataset.layout, &train_split)?;
            let val_rows = family_prediction_rows(&learners, &dataset.layout, &dataset.val)?;
            (
                train_rows,
                val_rows,
                ensemble.families(),
                ctx.config.family_names(),
            )
        }
    };

    let outcome =
        train_fusion(&train_rows, &val_rows, families, &cfg).context("phase-2 training")?;
    let alpha: Vec<f64> = outcome.weights.alpha().iter().map(|a| a.value()).collect();
    save_fusion(
        &ctx.layout,
        &name,
        tag,
        &outcome.weights,
        &family_names,
        &outcome.history,
    )?;
    println!(
        "learned fusion weights on '{name}': alpha = [{}] after {} epochs (best val loss {:.6})",
        alpha
            .iter()
            .zip(&family_names)
            .map(|(a, n)| format!("{n}: {a:.4}"))
            .collect::<Vec<_>>()
            .join(", "),
        outcome.history.epochs.len(),
        outcome.history.best_val_loss
    );
    println!(
        "wrote fusion artifacts to {}",
        ctx.layout.fusion_dir(&name, tag).display()
    );
    write_snapshot(&ctx.layout, "train-fusion", &ctx.config)?;
    Ok(())
}
