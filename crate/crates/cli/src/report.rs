//! Detection report files and the printed table.
//!
//! The report holds no timings and echoes paths exactly as given, so two
//! runs with the same inputs write byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use dpn_core::eval::DetectionReport;
use dpn_core::measures::Measure;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub auroc: f64,
    pub aupr: f64,
}

/// Everything needed to interpret and repeat an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub task: String,
    pub source: String,
    pub model: String,
    pub data: String,
    pub ood: Option<String>,
    pub samples: Option<usize>,
    pub balance: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub positives: usize,
    pub negatives: usize,
    pub error_rate: Option<f64>,
    /// Keyed by measure; `null` where the source does not provide the
    /// measure or it was not requested.
    pub metrics: BTreeMap<String, Option<MetricPair>>,
}

impl EvalReport {
    pub fn new(config: EvalConfig, report: &DetectionReport) -> Self {
        let metrics = Measure::ALL
            .iter()
            .map(|&m| {
                let pair = report.get(m).map(|r| MetricPair {
                    auroc: r.auroc,
                    aupr: r.aupr,
                });
                (m.key().to_string(), pair)
            })
            .collect();
        Self {
            config,
            positives: report.positives,
            negatives: report.negatives,
            error_rate: report.error_rate,
            metrics,
        }
    }

    pub fn metric(&self, measure: Measure) -> Option<MetricPair> {
        self.metrics.get(measure.key()).copied().flatten()
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serialises");
        text.push('\n');
        text
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_json()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::parse(path, e))
    }

    /// Table in percent, `-` for missing measures.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} detection, source {}: {} positives, {} negatives",
            self.config.task, self.config.source, self.positives, self.negatives
        );
        if let Some(rate) = self.error_rate {
            let _ = writeln!(out, "error rate {:.2}%", 100.0 * rate);
        }
        let _ = writeln!(out, "{:<8}{:>8}{:>8}", "", "AUROC", "AUPR");
        for m in Measure::ALL {
            match self.metric(m) {
                Some(p) => {
                    let _ = writeln!(
                        out,
                        "{:<8}{:>8.1}{:>8.1}",
                        m.label(),
                        100.0 * p.auroc,
                        100.0 * p.aupr
                    );
                }
                None => {
                    let _ = writeln!(out, "{:<8}{:>8}{:>8}", m.label(), "-", "-");
                }
            }
        }
        out
    }
}
