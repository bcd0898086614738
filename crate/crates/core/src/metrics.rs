//! The five evaluation metrics (AUC, Accuracy, Precision, Recall, F1),
//! table assembly in the comparison-table layout, and the model x dataset
//! performance matrix with its CSV and SVG renderings.
//!
//! AUC is computed two independent ways: `auc` counts concordant
//! (positive, negative) pairs through tie-averaged ranks, and
//! `auc_trapezoidal` integrates the ROC curve. The two must agree to
//! 1e-12 and serve as each other's oracle.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::domain::{BinaryLabel, Probability};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("scored set must be non-empty")]
    EmptyInput,
    #[error("AUC needs at least one sample of each class")]
    DegenerateClasses,
    #[error("performance matrix is missing cells: {}", missing.join(", "))]
    IncompleteGrid { missing: Vec<String> },
}

/// Scores paired with ground-truth labels, the input to every metric.
#[derive(Debug, Clone)]
pub struct ScoredSet {
    pairs: Vec<(Probability, BinaryLabel)>,
}

impl ScoredSet {
    pub fn new(pairs: Vec<(Probability, BinaryLabel)>) -> Result<Self, MetricsError> {
        if pairs.is_empty() {
            return Err(MetricsError::EmptyInput);
        }
        Ok(ScoredSet { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.pairs.iter().filter(|(_, l)| l.is_fake()).count()
    }

    pub fn pairs(&self) -> &[(Probability, BinaryLabel)] {
        &self.pairs
    }

    /// Mann-Whitney AUC: the fraction of (positive, negative) pairs where
    /// the positive outscores the negative, ties counted one half.
    /// Computed via tie-averaged ranks, O(n log n).
    pub fn auc(&self) -> Result<Probability, MetricsError> {
        let n_pos = self.positives();
        let n_neg = self.len() - n_pos;
        if n_pos == 0 || n_neg == 0 {
            return Err(MetricsError::DegenerateClasses);
        }
        let mut order: Vec<usize> = (0..self.pairs.len()).collect();
        order.sort_by(|&a, &b| {
            self.pairs[a]
                .0
                .partial_cmp(&self.pairs[b].0)
                .expect("probabilities are never NaN")
        });
        let mut rank_sum_pos = 0.0;
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len() && self.pairs[order[j + 1]].0 == self.pairs[order[i]].0 {
                j += 1;
            }
            // average 1-based rank over the tie group [i, j]
            let avg_rank = (i + j) as f64 / 2.0 + 1.0;
            for &idx in &order[i..=j] {
                if self.pairs[idx].1.is_fake() {
                    rank_sum_pos += avg_rank;
                }
            }
            i = j + 1;
        }
        let n_pos_f = n_pos as f64;
        let u = rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0;
        Ok(Probability::clamped(u / (n_pos_f * n_neg as f64)))
    }

    /// Trapezoidal area under the ROC curve, emitting one point per
    /// distinct score so ties form diagonal segments.
    pub fn auc_trapezoidal(&self) -> Result<Probability, MetricsError> {
        let n_pos = self.positives();
        let n_neg = self.len() - n_pos;
        if n_pos == 0 || n_neg == 0 {
            return Err(MetricsError::DegenerateClasses);
        }
        let mut order: Vec<usize> = (0..self.pairs.len()).collect();
        order.sort_by(|&a, &b| {
            self.pairs[b]
                .0
                .partial_cmp(&self.pairs[a].0)
                .expect("probabilities are never NaN")
        });
        let mut area = 0.0;
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut prev_tp = 0usize;
        let mut prev_fp = 0usize;
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len() && self.pairs[order[j + 1]].0 == self.pairs[order[i]].0 {
                j += 1;
            }
            for &idx in &order[i..=j] {
                if self.pairs[idx].1.is_fake() {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
            area += (fp - prev_fp) as f64 * (tp + prev_tp) as f64 / 2.0;
            prev_tp = tp;
            prev_fp = fp;
            i = j + 1;
        }
        Ok(Probability::clamped(area / (n_pos as f64 * n_neg as f64)))
    }

    /// Thresholded confusion counts and the derived metrics. A score at or
    /// above the threshold classifies as fake (the positive class).
    pub fn confusion(&self, threshold: f64) -> ConfusionReport {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut tn = 0usize;
        let mut fn_ = 0usize;
        for (score, label) in &self.pairs {
            let predicted_fake = score.value() >= threshold;
            match (predicted_fake, label.is_fake()) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
        let total = (tp + fp + tn + fn_) as f64;
        let accuracy = (tp + tn) as f64 / total;
        let precision_degenerate = tp + fp == 0;
        let recall_degenerate = tp + fn_ == 0;
        let precision = if precision_degenerate {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if recall_degenerate {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        ConfusionReport {
            counts: ConfusionCounts { tp, fp, tn, fn_ },
            threshold,
            accuracy: Probability::clamped(accuracy),
            precision: Probability::clamped(precision),
            recall: Probability::clamped(recall),
            f1: Probability::clamped(f1),
            precision_degenerate,
            recall_degenerate,
        }
    }
}

/// Raw confusion-matrix counts; they always sum to the set size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Threshold metrics with degenerate-denominator flags (a zero denominator
/// yields 0, flagged rather than silently hidden).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionReport {
    pub counts: ConfusionCounts,
    pub threshold: f64,
    pub accuracy: Probability,
    pub precision: Probability,
    pub recall: Probability,
    pub f1: Probability,
    pub precision_degenerate: bool,
    pub recall_degenerate: bool,
}

/// One table cell: the five metrics of a single (model, eval-set) pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub auc: Probability,
    pub accuracy: Probability,
    pub precision: Probability,
    pub recall: Probability,
    pub f1: Probability,
    pub threshold: f64,
    pub counts: ConfusionCounts,
}

impl MetricsReport {
    pub fn compute(set: &ScoredSet, threshold: f64) -> Result<Self, MetricsError> {
        let auc = set.auc()?;
        let conf = set.confusion(threshold);
        Ok(MetricsReport {
            auc,
            accuracy: conf.accuracy,
            precision: conf.precision,
            recall: conf.recall,
            f1: conf.f1,
            threshold,
            counts: conf.counts,
        })
    }

    fn metric_values(&self) -> [f64; 5] {
        [
            self.auc.value(),
            self.accuracy.value(),
            self.precision.value(),
            self.recall.value(),
            self.f1.value(),
        ]
    }
}

/// Column order shared by every table and CSV.
pub const METRIC_COLUMNS: [&str; 5] = ["AUC", "Accuracy", "Precision", "Recall", "F1"];

/// Formats a unit-interval value as a percentage with two decimals,
/// round-half-even.
pub fn format_percent(x: f64) -> String {
    let scaled = (x * 10_000.0).round_ties_even().max(0.0) as i64;
    format!("{}.{:02}%", scaled / 100, scaled % 100)
}

/// An evaluation table: one row per model, five metric columns.
#[derive(Debug, Clone)]
pub struct MetricsTable {
    pub title: String,
    pub rows: Vec<(String, MetricsReport)>,
}

impl MetricsTable {
    /// Builds the table by scoring each named model's set at the given
    /// threshold.
    pub fn compute(
        title: &str,
        rows: &[(String, ScoredSet)],
        threshold: f64,
    ) -> Result<Self, MetricsError> {
        let mut out = Vec::with_capacity(rows.len());
        for (name, set) in rows {
            out.push((name.clone(), MetricsReport::compute(set, threshold)?));
        }
        Ok(MetricsTable {
            title: title.to_string(),
            rows: out,
        })
    }

    /// Markdown rendering with percent-formatted cells.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "### {}", self.title);
        let _ = writeln!(out);
        let _ = writeln!(out, "| Model | {} |", METRIC_COLUMNS.join(" | "));
        let _ = writeln!(out, "|---|---|---|---|---|---|");
        for (name, report) in &self.rows {
            let cells: Vec<String> = report
                .metric_values()
                .iter()
                .map(|&v| format_percent(v))
                .collect();
            let _ = writeln!(out, "| {} | {} |", name, cells.join(" | "));
        }
        out
    }

    /// CSV twin with full-precision values.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,auc,accuracy,precision,recall,f1\n");
        for (name, report) in &self.rows {
            let v = report.metric_values();
            let _ = writeln!(out, "{},{},{},{},{},{}", name, v[0], v[1], v[2], v[3], v[4]);
        }
        out
    }
}

/// Key of one performance-matrix cell.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct MatrixKey {
    pub model: String,
    pub dataset: String,
    pub augmentation: String,
}

impl MatrixKey {
    fn label(&self) -> String {
        format!("{}/{}/{}", self.model, self.dataset, self.augmentation)
    }
}

/// The three metrics Figure-style matrices track per cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixCell {
    pub auc: f64,
    pub accuracy: f64,
    pub f1: f64,
}

/// Model x dataset x augmentation grid of reports, rendered as a CSV grid
/// and an SVG heatmap over AUC, Accuracy, and F1.
#[derive(Debug, Clone)]
pub struct PerformanceMatrix {
    models: Vec<String>,
    datasets: Vec<String>,
    augmentations: Vec<String>,
    cells: BTreeMap<MatrixKey, MatrixCell>,
}

const MATRIX_METRICS: [&str; 3] = ["AUC", "Accuracy", "F1"];

impl PerformanceMatrix {
    pub fn new(models: Vec<String>, datasets: Vec<String>, augmentations: Vec<String>) -> Self {
        PerformanceMatrix {
            models,
            datasets,
            augmentations,
            cells: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, key: MatrixKey, report: &MetricsReport) {
        self.cells.insert(
            key,
            MatrixCell {
                auc: report.auc.value(),
                accuracy: report.accuracy.value(),
                f1: report.f1.value(),
            },
        );
    }

    /// Setter for cells reconstructed from table CSVs, where only the
    /// metric values survive.
    pub fn set_values(&mut self, key: MatrixKey, cell: MatrixCell) {
        self.cells.insert(key, cell);
    }

    fn keys(&self) -> Vec<MatrixKey> {
        let mut keys = Vec::new();
        for model in &self.models {
            for dataset in &self.datasets {
                for augmentation in &self.augmentations {
                    keys.push(MatrixKey {
                        model: model.clone(),
                        dataset: dataset.clone(),
                        augmentation: augmentation.clone(),
                    });
                }
            }
        }
        keys
    }

    fn complete_cells(&self) -> Result<Vec<(MatrixKey, MatrixCell)>, MetricsError> {
        let keys = self.keys();
        let missing: Vec<String> = keys
            .iter()
            .filter(|k| !self.cells.contains_key(k))
            .map(|k| k.label())
            .collect();
        if !missing.is_empty() {
            return Err(MetricsError::IncompleteGrid { missing });
        }
        Ok(keys
            .into_iter()
            .map(|k| (k.clone(), self.cells[&k]))
            .collect())
    }

    /// One row per (model, dataset, augmentation) with the three matrix
    /// metrics as columns.
    pub fn to_csv(&self) -> Result<String, MetricsError> {
        let cells = self.complete_cells()?;
        let mut out = String::from("model,dataset,augmentation,auc,accuracy,f1\n");
        for (key, cell) in cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                key.model, key.dataset, key.augmentation, cell.auc, cell.accuracy, cell.f1
            );
        }
        Ok(out)
    }

    /// Heatmap with one row per grid entry and one column per metric,
    /// shaded dark blue (low) to yellow (high).
    pub fn to_svg(&self) -> Result<String, MetricsError> {
        let cells = self.complete_cells()?;
        let cell_w = 90;
        let cell_h = 28;
        let label_w = 260;
        let header_h = 30;
        let width = label_w + cell_w * MATRIX_METRICS.len();
        let height = header_h + cell_h * cells.len();
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="monospace" font-size="12">"#
        );
        let _ = writeln!(
            out,
            r#"<rect width="{width}" height="{height}" fill="white"/>"#
        );
        for (c, metric) in MATRIX_METRICS.iter().enumerate() {
            let x = label_w + c * cell_w + cell_w / 2;
            let _ = writeln!(
                out,
                r#"<text x="{x}" y="20" text-anchor="middle" font-weight="bold">{metric}</text>"#
            );
        }
        for (r, (key, cell)) in cells.iter().enumerate() {
            let y = header_h + r * cell_h;
            let _ = writeln!(
                out,
                r#"<text x="4" y="{}" dominant-baseline="middle">{}</text>"#,
                y + cell_h / 2,
                key.label()
            );
            let values = [cell.auc, cell.accuracy, cell.f1];
            for (c, &v) in values.iter().enumerate() {
                let x = label_w + c * cell_w;
                let (fill, text_color) = heat_color(v);
                let _ = writeln!(
                    out,
                    r#"<rect x="{x}" y="{y}" width="{cell_w}" height="{cell_h}" fill="{fill}" stroke="white"/>"#
                );
                let _ = writeln!(
                    out,
                    r#"<text x="{}" y="{}" text-anchor="middle" dominant-baseline="middle" fill="{text_color}">{}</text>"#,
                    x + cell_w / 2,
                    y + cell_h / 2,
                    format_percent(v)
                );
            }
        }
        let _ = writeln!(out, "</svg>");
        Ok(out)
    }
}

/// Linear dark-blue-to-yellow gradient over [0, 1].
fn heat_color(v: f64) -> (String, &'static str) {
    let v = v.clamp(0.0, 1.0);
    let lo = (26.0, 35.0, 126.0);
    let hi = (253.0, 216.0, 53.0);
    let r = (lo.0 + (hi.0 - lo.0) * v) as u8;
    let g = (lo.1 + (hi.1 - lo.1) * v) as u8;
    let b = (lo.2 + (hi.2 - lo.2) * v) as u8;
    let text = if v < 0.55 { "white" } else { "black" };
    (format!("#{r:02x}{g:02x}{b:02x}"), text)
}
