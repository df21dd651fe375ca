//! Results CSV: one row per run plus `mean` and `std` rows per report.

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::StrategyReport;
use crate::error::{Error, Result};

pub const COLUMNS: [&str; 7] = ["model", "strategy", "scope", "k_or_scale", "run_index", "iou", "dice"];

/// Known row labels in table order; unknown labels follow alphabetically.
const MODEL_ORDER: [&str; 4] = ["unet", "autoencoder", "zero_shot", "finetuned"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunLabel {
    Run(u64),
    Mean,
    Std,
}

impl fmt::Display for RunLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunLabel::Run(i) => write!(f, "{i}"),
            RunLabel::Mean => f.write_str("mean"),
            RunLabel::Std => f.write_str("std"),
        }
    }
}

impl FromStr for RunLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(RunLabel::Mean),
            "std" => Ok(RunLabel::Std),
            other => other
                .parse()
                .map(RunLabel::Run)
                .map_err(|_| Error::Manifest(format!("bad run_index `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub strategy: String,
    pub scope: String,
    pub k_or_scale: String,
    pub run_index: String,
    pub iou: f64,
    pub dice: f64,
}

impl ResultRow {
    pub fn run_label(&self) -> Result<RunLabel> {
        self.run_index.parse()
    }
}

fn model_rank(label: &str) -> usize {
    MODEL_ORDER.iter().position(|m| *m == label).unwrap_or(MODEL_ORDER.len())
}

fn compare_reports(a: &StrategyReport, b: &StrategyReport) -> Ordering {
    let strategy_key = |r: &StrategyReport| r.strategy.map(|s| s.order_key());
    model_rank(&a.model)
        .cmp(&model_rank(&b.model))
        .then_with(|| a.model.cmp(&b.model))
        .then_with(|| {
            strategy_key(a)
                .partial_cmp(&strategy_key(b))
                .unwrap_or(Ordering::Equal)
        })
}

/// Rows for `reports` in table order: prompt-free models, then zero-shot,
/// then fine-tuned; within a model, image-level points by `k`, boxes by
/// scale, per-block points by `k`.
pub fn result_rows(reports: &[StrategyReport]) -> Vec<ResultRow> {
    let mut sorted: Vec<&StrategyReport> = reports.iter().collect();
    sorted.sort_by(|a, b| compare_reports(a, b));
    let mut rows = Vec::new();
    for r in sorted {
        let (strategy, scope, k_or_scale) = match &r.strategy {
            Some(s) => (s.table_label(), s.scope().as_str().to_string(), s.k_or_scale()),
            None => ("none".to_string(), "none".to_string(), String::new()),
        };
        let row = |run: RunLabel, iou: f64, dice: f64| ResultRow {
            model: r.model.clone(),
            strategy: strategy.clone(),
            scope: scope.clone(),
            k_or_scale: k_or_scale.clone(),
            run_index: run.to_string(),
            iou,
            dice,
        };
        for (i, p) in r.per_run.iter().enumerate() {
            rows.push(row(RunLabel::Run(i as u64), p.iou, p.dice));
        }
        rows.push(row(RunLabel::Mean, r.mean.iou, r.mean.dice));
        rows.push(row(RunLabel::Std, r.std.iou, r.std.dice));
    }
    rows
}

pub fn emit_results_table(reports: &[StrategyReport], path: &Path) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::Config("no reports to write".into()));
    }
    crate::corpus::imaging::ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    for row in result_rows(reports) {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn parse_results_table(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().ne(COLUMNS.iter().copied()) {
        return Err(Error::Manifest(format!("unexpected results header {headers:?}")));
    }
    r.deserialize().map(|row| Ok(row?)).collect()
}
