use anyhow::{Context, Result};

use tierfuse::data::{generate_synthetic, save_dataset};

use crate::artifacts::write_snapshot;

use super::Ctx;

pub fn synth_data(ctx: &Ctx) -> Result<()> {
    let spec = ctx.config.synthetic_spec();
    let data = generate_synthetic(
        &spec,
        &ctx.config.synthetic.dataset_name,
        &ctx.config.synthetic.shifted_name,
    )
    .context("generating synthetic data")?;

    let dir = ctx.layout.dataset_dir(&data.primary.name);
    save_dataset(&dir, &data.primary)?;
    println!(
        "wrote dataset '{}' ({} train / {} val / {} test) to {}",
        data.primary.name,
        data.primary.train.len(),
        data.primary.val.len(),
        data.primary.test.len(),
        dir.display()
    );
    if let Some(shifted) = &data.shifted {
        let dir = ctx.layout.dataset_dir(&shifted.name);
        save_dataset(&dir, shifted)?;
        println!(
            "wrote shifted dataset '{}' (reliabilities {:?}) to {}",
            shifted.name,
            spec.shift_reliabilities.as_ref().unwrap(),
            dir.display()
        );
    }
    write_snapshot(&ctx.layout, "synth-data", &ctx.config)?;
    Ok(())
}
