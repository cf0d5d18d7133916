//! Evaluation reports, ablation tables and plot-ready curve CSVs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::gazetteer::Gazetteer;
use super::metrics::{compute_level_metrics, count_answers, Counts, Level, LevelMetrics};
use super::threshold::{threshold_accuracy, ThresholdAccuracy};
use super::{EvalError, GroundTruth};
use crate::locatability::CurveBin;
use crate::prediction::{FailureCause, PredictionRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub country: LevelMetrics,
    pub city: LevelMetrics,
    /// Empty when the ground truth carries no coordinates.
    pub threshold_accuracy: Vec<ThresholdAccuracy>,
    pub counts: Counts,
}

/// Scores predictions at both levels and, when every ground-truth item has
/// coordinates, at each distance threshold.
pub fn evaluate(
    preds: &[PredictionRecord],
    truth: &[GroundTruth],
    g: &Gazetteer,
    thresholds_km: &[f64],
) -> Result<EvalReport, EvalError> {
    let normalizer = g.normalizer();
    let country = compute_level_metrics(preds, truth, Level::Country, normalizer)?;
    let city = compute_level_metrics(preds, truth, Level::City, normalizer)?;
    let counts = count_answers(preds, truth)?;
    let threshold_accuracy = if !truth.is_empty() && truth.iter().all(|t| t.position().is_some()) {
        threshold_accuracy(preds, truth, g, thresholds_km)?
    } else {
        Vec::new()
    };
    Ok(EvalReport {
        country,
        city,
        threshold_accuracy,
        counts,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into())
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<8} {:>9} {:>9} {:>9}", "level", "accuracy", "recall", "f1");
        for (name, m) in [("country", &self.country), ("city", &self.city)] {
            let _ = writeln!(
                out,
                "{:<8} {:>9} {:>9.4} {:>9.4}",
                name,
                fmt_opt(m.accuracy),
                m.recall,
                m.f1
            );
        }
        if !self.threshold_accuracy.is_empty() {
            out.push('\n');
            let _ = writeln!(out, "{:<14} {:>9}", "threshold_km", "fraction");
            for t in &self.threshold_accuracy {
                let _ = writeln!(out, "{:<14} {:>9.4}", t.threshold_km, t.fraction);
            }
        }
        out.push('\n');
        let _ = write!(out, "total={} effective={}", self.counts.total, self.counts.effective);
        for cause in FailureCause::ALL {
            let _ = write!(
                out,
                " {}={}",
                cause,
                self.counts.failures.get(&cause).copied().unwrap_or(0)
            );
        }
        out.push('\n');
        out
    }

    /// Long-format CSV: `metric,value`.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (name, m) in [("country", &self.country), ("city", &self.city)] {
            let acc = m.accuracy.map(|a| a.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{name}_accuracy,{acc}");
            let _ = writeln!(out, "{name}_recall,{}", m.recall);
            let _ = writeln!(out, "{name}_f1,{}", m.f1);
        }
        for t in &self.threshold_accuracy {
            let _ = writeln!(out, "within_{}km,{}", t.threshold_km, t.fraction);
        }
        let _ = writeln!(out, "total,{}", self.counts.total);
        let _ = writeln!(out, "effective,{}", self.counts.effective);
        for cause in FailureCause::ALL {
            let _ = writeln!(
                out,
                "{cause},{}",
                self.counts.failures.get(&cause).copied().unwrap_or(0)
            );
        }
        out
    }
}

/// One named row of an ablation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub name: String,
    pub country: LevelMetrics,
    pub city: LevelMetrics,
}

impl AblationRun {
    pub fn from_report(name: impl Into<String>, report: &EvalReport) -> Self {
        Self {
            name: name.into(),
            country: report.country,
            city: report.city,
        }
    }
}

pub const ABLATION_COLUMNS: [&str; 6] = [
    "country_accuracy",
    "country_recall",
    "country_f1",
    "city_accuracy",
    "city_recall",
    "city_f1",
];

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub runs: Vec<AblationRun>,
    /// `best[row][col]`: the cell holds the column maximum (ties all marked).
    pub best: Vec<[bool; 6]>,
}

impl AblationTable {
    fn cells(run: &AblationRun) -> [Option<f64>; 6] {
        [
            run.country.accuracy,
            Some(run.country.recall),
            Some(run.country.f1),
            run.city.accuracy,
            Some(run.city.recall),
            Some(run.city.f1),
        ]
    }

    /// Aligned plain text; best values carry a trailing `*`.
    pub fn render_text(&self) -> String {
        let name_width = self
            .runs
            .iter()
            .map(|r| r.name.chars().count())
            .max()
            .unwrap_or(0)
            .max(3);
        let col_width = ABLATION_COLUMNS.iter().map(|c| c.len()).max().unwrap_or(0);
        let mut out = String::new();
        let _ = write!(out, "{:<name_width$}", "run");
        for c in ABLATION_COLUMNS {
            let _ = write!(out, "  {c:>col_width$}");
        }
        out.push('\n');
        for (run, best) in self.runs.iter().zip(&self.best) {
            let _ = write!(out, "{:<name_width$}", run.name);
            for (v, b) in Self::cells(run).iter().zip(best) {
                let cell = format!("{}{}", fmt_opt(*v), if *b { "*" } else { " " });
                let _ = write!(out, "  {cell:>col_width$}");
            }
            out.push('\n');
        }
        out
    }

    /// CSV with full-precision values and a `best` column listing the
    /// columns where the row holds the maximum.
    pub fn render_csv(&self) -> String {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let mut header = vec!["run"];
        header.extend(ABLATION_COLUMNS);
        header.push("best");
        writer.write_record(&header).expect("in-memory csv");
        for (run, best) in self.runs.iter().zip(&self.best) {
            let mut row = vec![run.name.clone()];
            row.extend(
                Self::cells(run)
                    .iter()
                    .map(|v| v.map(|v| v.to_string()).unwrap_or_default()),
            );
            let marked: Vec<&str> = ABLATION_COLUMNS
                .iter()
                .zip(best)
                .filter(|(_, b)| **b)
                .map(|(c, _)| *c)
                .collect();
            row.push(marked.join(";"));
            writer.write_record(&row).expect("in-memory csv");
        }
        String::from_utf8(writer.into_inner().expect("in-memory csv")).expect("utf8")
    }
}

/// Tabulates named runs and marks the best value in each column.
pub fn ablation_report(runs: Vec<AblationRun>) -> Result<AblationTable, EvalError> {
    if runs.is_empty() {
        return Err(EvalError::NoRuns);
    }
    let cells: Vec<[Option<f64>; 6]> = runs.iter().map(AblationTable::cells).collect();
    let mut best = vec![[false; 6]; runs.len()];
    for col in 0..6 {
        let max = cells.iter().filter_map(|c| c[col]).fold(f64::NEG_INFINITY, f64::max);
        for (row, c) in cells.iter().enumerate() {
            best[row][col] = c[col].is_some_and(|v| v == max);
        }
    }
    Ok(AblationTable { runs, best })
}

/// `bin_center,mean_score,count` with an empty mean for unpopulated bins.
pub fn curve_csv(bins: &[CurveBin]) -> String {
    let mut out = String::from("bin_center,mean_score,count\n");
    for b in bins {
        let mean = b.mean_score.map(|m| m.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{}", b.bin_center, mean, b.count);
    }
    out
}

/// One point of the training-mix curve: share of highly locatable images
/// in the dataset variant and the resulting accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionPoint {
    pub high_fraction: f64,
    pub country_accuracy: Option<f64>,
    pub city_accuracy: Option<f64>,
}

pub fn proportion_csv(points: &[ProportionPoint]) -> String {
    let mut out = String::from("high_fraction,country_accuracy,city_accuracy\n");
    for p in points {
        let f = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{}",
            p.high_fraction,
            f(p.country_accuracy),
            f(p.city_accuracy)
        );
    }
    out
}
