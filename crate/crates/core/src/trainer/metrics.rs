use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossReport;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: u64,
    /// Flat `phase.term` → value view of `reports`.
    pub losses: BTreeMap<String, f64>,
    pub reports: Vec<LossReport>,
    /// Largest |∂ loss_cond / ∂ θ_GA| seen in the translator update.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gating_max_abs_grad: Option<f64>,
    /// Set when the step was discarded for a non-finite loss.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event: Option<String>,
    pub unix_ms: u64,
    pub step_seconds: f64,
    /// SHA-256 prefix of the first generated frame of the step.
    pub sample_digest: String,
}

impl MetricsRecord {
    pub(crate) fn push_report(&mut self, phase: &str, report: LossReport) {
        for (k, v) in &report.term_breakdown {
            self.losses.insert(format!("{phase}.{}.{k}", report.name), *v);
        }
        self.losses
            .insert(format!("{phase}.{}", report.name), report.value);
        self.reports.push(report);
    }

    pub fn all_finite(&self) -> bool {
        self.losses.values().all(|v| v.is_finite())
    }
}

/// Append-only JSON-lines log, flushed after every record.
pub struct MetricsLog {
    path: PathBuf,
    file: File,
}

impl MetricsLog {
    pub fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn append(&mut self, record: &MetricsRecord) -> Result<()> {
        let mut line = serde_json::to_string(record).expect("metrics serialize");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::io(format!("writing {}", self.path.display()), e))
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| Error::Config(format!("bad metrics line: {e}")))
        })
        .collect()
}
