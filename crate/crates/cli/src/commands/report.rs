use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};

use tierfuse::{MatrixCell, MatrixKey, PerformanceMatrix};

use crate::artifacts::{write_snapshot, write_text};

use super::Ctx;

/// Assembles every table produced by `evaluate` / `cross-eval`, the
/// performance matrix over them, and the fusion-weight trajectories into
/// a single report bundle.
pub fn report(ctx: &Ctx) -> Result<()> {
    let reports_dir = ctx.layout.reports_dir();
    let tables = collect_tables(&reports_dir)?;
    if tables.is_empty() {
        bail!(
            "nothing to report: no files matching evaluate_*.csv or cross_eval_*.csv under {}; \
             run `evaluate` or `cross-eval` first",
            reports_dir.display()
        );
    }

    let report_dir = ctx.layout.report_dir();
    let mut md = String::from("# Run report\n\n## Evaluation tables\n\n");
    for table in &tables {
        let md_path = table.csv_path.with_extension("md");
        if let Ok(text) = std::fs::read_to_string(&md_path) {
            md.push_str(&text);
            md.push('\n');
        }
    }
    // uniform-baseline supplements ride along when present
    let mut supplements: Vec<_> = std::fs::read_dir(&reports_dir)
        .map_err(|e| anyhow::anyhow!("reading {}: {e}", reports_dir.display()))?
        .flatten()
        .map(|e| e.path())
        .filter(|p| {
            p.extension().is_some_and(|x| x == "md")
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("uniform_vs_learned_"))
        })
        .collect();
    supplements.sort();
    if !supplements.is_empty() {
        md.push_str("## Fixed-weight baseline comparisons\n\n");
        for path in supplements {
            md.push_str(&std::fs::read_to_string(&path)?);
            md.push('\n');
        }
    }

    let matrix = build_matrix(&tables)?;
    let matrix_csv = matrix.to_csv()?;
    let matrix_svg = matrix.to_svg()?;
    write_text(&report_dir.join("performance_matrix.csv"), &matrix_csv)?;
    write_text(&report_dir.join("performance_matrix.svg"), &matrix_svg)?;
    md.push_str("## Performance matrix\n\n");
    md.push_str("See `performance_matrix.csv` and `performance_matrix.svg`.\n\n");

    let trajectories = alpha_trajectories(ctx, &report_dir)?;
    if !trajectories.is_empty() {
        md.push_str("## Fusion weight trajectories\n\n");
        for name in &trajectories {
            let _ = writeln!(md, "- `{name}`");
        }
        md.push('\n');
    }

    write_text(&report_dir.join("report.md"), &md)?;
    println!(
        "assembled report with {} tables, a {}-cell performance matrix, and {} trajectory plot(s) \
         into {}",
        tables.len(),
        matrix_csv.lines().count().saturating_sub(1),
        trajectories.len(),
        report_dir.display()
    );
    write_snapshot(&ctx.layout, "report", &ctx.config)?;
    Ok(())
}

struct TableFile {
    csv_path: std::path::PathBuf,
    /// Dataset axis label: the eval tag, or `train->eval` for transfers.
    dataset_label: String,
    aug_tag: String,
    rows: Vec<(String, MatrixCell)>,
}

fn collect_tables(dir: &Path) -> Result<Vec<TableFile>> {
    let mut out = Vec::new();
    let entries = match std::fs::read_dir(dir) {
        Ok(entries) => entries,
        Err(_) => return Ok(out),
    };
    let mut paths: Vec<_> = entries.flatten().map(|e| e.path()).collect();
    paths.sort();
    for path in paths {
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if !name.ends_with(".csv") {
            continue;
        }
        let stem = name.trim_end_matches(".csv");
        let parsed = if let Some(rest) = stem.strip_prefix("evaluate_") {
            parse_stem(rest, "_on_").map(|(_, eval, tag)| (eval, tag))
        } else if let Some(rest) = stem.strip_prefix("cross_eval_") {
            parse_stem(rest, "_to_").map(|(train, eval, tag)| (format!("{train}->{eval}"), tag))
        } else {
            None
        };
        let Some((dataset_label, aug_tag)) = parsed else {
            continue;
        };
        let rows =
            parse_table_csv(&path).with_context(|| format!("parsing table {}", path.display()))?;
        out.push(TableFile {
            csv_path: path,
            dataset_label,
            aug_tag,
            rows,
        });
    }
    Ok(out)
}

/// Splits `train<sep>eval_tag` where the tag is the final `_` segment.
fn parse_stem(rest: &str, sep: &str) -> Option<(String, String, String)> {
    let (train, eval_and_tag) = rest.split_once(sep)?;
    let (eval, tag) = eval_and_tag.rsplit_once('_')?;
    Some((train.to_string(), eval.to_string(), tag.to_string()))
}

fn parse_table_csv(path: &Path) -> Result<Vec<(String, MatrixCell)>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some("model,auc,accuracy,precision,recall,f1") => {}
        other => bail!("unexpected table header {other:?}"),
    }
    let mut rows = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            bail!("bad table row '{line}'");
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| anyhow::anyhow!("bad metric value '{s}'"))
        };
        rows.push((
            fields[0].to_string(),
            MatrixCell {
                auc: parse(fields[1])?,
                accuracy: parse(fields[2])?,
                f1: parse(fields[5])?,
            },
        ));
    }
    Ok(rows)
}

fn build_matrix(tables: &[TableFile]) -> Result<PerformanceMatrix> {
    let mut models = BTreeSet::new();
    let mut datasets = BTreeSet::new();
    let mut augs = BTreeSet::new();
    for t in tables {
        datasets.insert(t.dataset_label.clone());
        augs.insert(t.aug_tag.clone());
        for (model, _) in &t.rows {
            models.insert(model.clone());
        }
    }
    let mut matrix = PerformanceMatrix::new(
        models.into_iter().collect(),
        datasets.into_iter().collect(),
        augs.into_iter().collect(),
    );
    for t in tables {
        for (model, cell) in &t.rows {
            matrix.set_values(
                MatrixKey {
                    model: model.clone(),
                    dataset: t.dataset_label.clone(),
                    augmentation: t.aug_tag.clone(),
                },
                *cell,
            );
        }
    }
    Ok(matrix)
}

/// Renders one alpha-trajectory SVG per fusion history found under
/// `models/`; returns the written file names.
fn alpha_trajectories(ctx: &Ctx, report_dir: &Path) -> Result<Vec<String>> {
    let models_root = ctx.layout.root.join("models");
    let mut written = Vec::new();
    let entries = match std::fs::read_dir(&models_root) {
        Ok(entries) => entries,
        Err(_) => return Ok(written),
    };
    let mut dirs: Vec<_> = entries.flatten().map(|e| e.path()).collect();
    dirs.sort();
    for dir in dirs {
        let history_path = dir.join("fusion").join("history.csv");
        if !history_path.is_file() {
            continue;
        }
        let model_tag = dir.file_name().and_then(|n| n.to_str()).unwrap_or("model");
        let family_names = read_family_names(&dir.join("fusion").join("weights.json"));
        let svg = trajectory_svg(&history_path, &family_names)
            .with_context(|| format!("plotting {}", history_path.display()))?;
        let file_name = format!("alpha_{model_tag}.svg");
        write_text(&report_dir.join(&file_name), &svg)?;
        written.push(file_name);
    }
    Ok(written)
}

fn read_family_names(weights_path: &Path) -> Vec<String> {
    std::fs::read_to_string(weights_path)
        .ok()
        .and_then(|text| serde_json::from_str::<crate::artifacts::FusionArtifact>(&text).ok())
        .map(|a| a.family_names)
        .unwrap_or_default()
}

const TRAJECTORY_COLORS: [&str; 6] = [
    "#1a237e", "#e65100", "#2e7d32", "#6a1b9a", "#c62828", "#00838f",
];

fn trajectory_svg(history_path: &Path, family_names: &[String]) -> Result<String> {
    let text = std::fs::read_to_string(history_path)?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap_or_default();
    let alpha_cols = header
        .split(',')
        .filter(|c| c.starts_with("alpha_"))
        .count();
    if alpha_cols == 0 {
        bail!("history has no alpha columns");
    }
    let mut series: Vec<Vec<f64>> = vec![Vec::new(); alpha_cols];
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 + alpha_cols {
            bail!("bad history row '{line}'");
        }
        for (i, value) in fields[4..].iter().enumerate() {
            series[i].push(value.parse::<f64>()?);
        }
    }
    let epochs = series[0].len().max(1);

    let (width, height) = (640.0, 320.0);
    let (left, right, top, bottom) = (50.0, 150.0, 20.0, 40.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;
    let x_of = |i: usize| left + plot_w * i as f64 / (epochs.max(2) - 1) as f64;
    let y_of = |a: f64| top + plot_h * (1.0 - a);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="monospace" font-size="12">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{width}" height="{height}" fill="white"/>"#
    );
    // axes with quarter gridlines
    for q in 0..=4 {
        let a = q as f64 / 4.0;
        let y = y_of(a);
        let _ = writeln!(
            out,
            r##"<line x1="{left}" y1="{y}" x2="{:.1}" y2="{y}" stroke="#dddddd"/>"##,
            left + plot_w
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{a:.2}</text>"#,
            left - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">epoch (1..{epochs})</text>"#,
        left + plot_w / 2.0,
        height - 10.0
    );
    for (i, values) in series.iter().enumerate() {
        let color = TRAJECTORY_COLORS[i % TRAJECTORY_COLORS.len()];
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(e, &a)| format!("{:.2},{:.2}", x_of(e), y_of(a)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let label = family_names
            .get(i)
            .cloned()
            .unwrap_or_else(|| format!("alpha_{i}"));
        let y = top + 14.0 * (i as f64 + 1.0);
        let _ = writeln!(
            out,
            r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{color}"/>"#,
            left + plot_w + 10.0,
            y - 9.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}">{label}</text>"#,
            left + plot_w + 24.0,
            y
        );
    }
    let _ = writeln!(out, "</svg>");
    Ok(out)
}
