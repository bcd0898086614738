use anyhow::{Context, Result};

use tierfuse::data::Split;
use tierfuse::{FusionWeights, MetricsTable, ScoredSet};

use crate::artifacts::{load_fusion, write_snapshot, write_text};

use super::{scored_rows_from_cache, scored_rows_from_ensemble, Ctx};

fn aug_caption(tag: &str) -> &'static str {
    if tag == "aug" {
        "With Augmentation"
    } else {
        "Without Augmentation"
    }
}

/// Builds the per-family + ensemble rows for `eval_ds` using artifacts
/// trained on `train_ds`.
fn evaluation_rows(ctx: &Ctx, train_ds: &str, eval_ds: &str) -> Result<Vec<(String, ScoredSet)>> {
    match ctx.cache_store()? {
        Some(store) => {
            let artifact = load_fusion(&ctx.layout, train_ds, ctx.config.augment_tag())?;
            let weights =
                FusionWeights::new(artifact.w).context("fusion artifact holds invalid weights")?;
            scored_rows_from_cache(&store, eval_ds, Split::Test, &weights)
        }
        None => {
            let (trained, names) = ctx.load_trained_ensemble(train_ds)?;
            let dataset = ctx.load_dataset(eval_ds)?;
            scored_rows_from_ensemble(&trained, &names, &dataset.test)
        }
    }
}

pub fn evaluate(ctx: &Ctx, dataset: Option<String>) -> Result<()> {
    let train_ds = ctx.train_dataset().to_string();
    let eval_ds = dataset.unwrap_or_else(|| train_ds.clone());
    let tag = ctx.config.augment_tag();
    let rows = evaluation_rows(ctx, &train_ds, &eval_ds)?;
    let title = format!(
        "Intra-dataset evaluation: trained on {train_ds}, test split of {eval_ds} ({})",
        aug_caption(tag)
    );
    let table = MetricsTable::compute(&title, &rows, ctx.config.metrics.threshold)?;
    let md_path = ctx.layout.evaluate_table(&train_ds, &eval_ds, tag, "md");
    let csv_path = ctx.layout.evaluate_table(&train_ds, &eval_ds, tag, "csv");
    write_text(&md_path, &table.to_markdown())?;
    write_text(&csv_path, &table.to_csv())?;
    print!("{}", table.to_markdown());
    println!("wrote {} and {}", md_path.display(), csv_path.display());
    write_snapshot(&ctx.layout, "evaluate", &ctx.config)?;
    Ok(())
}

pub fn cross_eval(ctx: &Ctx, dataset: Option<String>) -> Result<()> {
    let train_ds = ctx.train_dataset().to_string();
    let eval_ds = dataset.unwrap_or_else(|| ctx.config.synthetic.shifted_name.clone());
    let tag = ctx.config.augment_tag();

    emit_direction(ctx, &train_ds, &eval_ds, tag)?;

    // reverse direction when artifacts trained on the eval dataset exist
    if eval_ds != train_ds {
        if ctx.layout.fusion_weights_file(&eval_ds, tag).is_file() {
            emit_direction(ctx, &eval_ds, &train_ds, tag)?;
        } else {
            println!(
                "note: no artifacts trained on '{eval_ds}'; emitted the {train_ds} -> {eval_ds} \
                 direction only"
            );
        }
    }
    write_snapshot(&ctx.layout, "cross-eval", &ctx.config)?;
    Ok(())
}

fn emit_direction(ctx: &Ctx, train_ds: &str, eval_ds: &str, tag: &str) -> Result<()> {
    let rows = evaluation_rows(ctx, train_ds, eval_ds)?;
    let title = format!(
        "Cross-dataset evaluation: trained on {train_ds}, test split of {eval_ds} ({})",
        aug_caption(tag)
    );
    let table = MetricsTable::compute(&title, &rows, ctx.config.metrics.threshold)?;
    let md_path = ctx.layout.cross_eval_table(train_ds, eval_ds, tag, "md");
    let csv_path = ctx.layout.cross_eval_table(train_ds, eval_ds, tag, "csv");
    write_text(&md_path, &table.to_markdown())?;
    write_text(&csv_path, &table.to_csv())?;
    print!("{}", table.to_markdown());
    println!("wrote {} and {}", md_path.display(), csv_path.display());

    // supplement: the fixed uniform-weight fusion against the learned one
    let uniform_rows = uniform_comparison_rows(ctx, train_ds, eval_ds, &rows)?;
    let sup_title = format!(
        "Uniform fixed-weight fusion vs learned fusion: trained on {train_ds}, evaluated on {eval_ds} ({})",
        aug_caption(tag)
    );
    let sup = MetricsTable::compute(&sup_title, &uniform_rows, ctx.config.metrics.threshold)?;
    let sup_md = ctx
        .layout
        .uniform_baseline_table(train_ds, eval_ds, tag, "md");
    let sup_csv = ctx
        .layout
        .uniform_baseline_table(train_ds, eval_ds, tag, "csv");
    write_text(&sup_md, &sup.to_markdown())?;
    write_text(&sup_csv, &sup.to_csv())?;
    println!("wrote {} and {}", sup_md.display(), sup_csv.display());
    Ok(())
}

/// Rows for the uniform-baseline supplement: the uniform fusion scored
/// fresh, next to the already-computed learned ensemble row.
fn uniform_comparison_rows(
    ctx: &Ctx,
    train_ds: &str,
    eval_ds: &str,
    rows: &[(String, ScoredSet)],
) -> Result<Vec<(String, ScoredSet)>> {
    let families = rows.len() - 1;
    let uniform = FusionWeights::uniform(families);
    let uniform_set = match ctx.cache_store()? {
        Some(store) => {
            let computed = scored_rows_from_cache(&store, eval_ds, Split::Test, &uniform)?;
            computed.into_iter().last().unwrap().1
        }
        None => {
            let (mut trained, names) = ctx.load_trained_ensemble(train_ds)?;
            trained.fusion = uniform;
            let dataset = ctx.load_dataset(eval_ds)?;
            let computed = scored_rows_from_ensemble(&trained, &names, &dataset.test)?;
            computed.into_iter().last().unwrap().1
        }
    };
    let learned_set = rows.last().unwrap().1.clone();
    Ok(vec![
        ("UniformFusion".to_string(), uniform_set),
        ("Ensemble".to_string(), learned_set),
    ])
}
