//! CSV rows and the JSON sidecar.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::stats::{MeanCi, Status, CI_METHOD};

/// One aggregated point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub experiment: String,
    pub b: usize,
    pub t: usize,
    pub epsilon: f64,
    pub rho_or_budget: String,
    pub strategy: String,
    pub trials: usize,
    pub metric_name: String,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
    pub ci_method: String,
}

/// Shared coordinates of the rows of one sweep point.
#[derive(Debug, Clone)]
pub struct Point {
    pub experiment: String,
    pub b: usize,
    pub t: usize,
    pub epsilon: f64,
    pub rho_or_budget: String,
    pub strategy: String,
    pub seed: u64,
}

impl Point {
    pub fn row(&self, metric: &str, v: MeanCi) -> Row {
        Row {
            experiment: self.experiment.clone(),
            b: self.b,
            t: self.t,
            epsilon: self.epsilon,
            rho_or_budget: self.rho_or_budget.clone(),
            strategy: self.strategy.clone(),
            trials: v.n,
            metric_name: metric.to_string(),
            mean: v.mean,
            ci_low: v.ci_low,
            ci_high: v.ci_high,
            seed: self.seed,
            ci_method: CI_METHOD.to_string(),
        }
    }

    pub fn exact(&self, metric: &str, value: f64) -> Row {
        let mut r = self.row(metric, MeanCi::exact(value));
        r.ci_method = "exact".to_string();
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, status: Status, detail: impl Into<String>) -> Self {
        Check {
            name: name.to_string(),
            status,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub rows: Vec<Row>,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn status(&self) -> Status {
        Status::combine(self.checks.iter().map(|c| c.status))
    }

    /// Rows whose metric name matches.
    pub fn metric<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Row> + 'a {
        self.rows.iter().filter(move |r| r.metric_name == name)
    }

    pub fn csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.into_inner()
            .map_err(|e| HarnessError::Runtime(format!("csv flush: {e}")))
    }

    pub fn sidecar(&self, config: &ExperimentConfig) -> serde_json::Value {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            software: &'static str,
            version: &'static str,
            ci_method: &'static str,
            experiment: &'a str,
            config: &'a BTreeMap<String, String>,
            status: Status,
            checks: &'a [Check],
        }
        serde_json::to_value(Sidecar {
            software: "treecast",
            version: env!("CARGO_PKG_VERSION"),
            ci_method: CI_METHOD,
            experiment: &config.id,
            config: &config.raw,
            status: self.status(),
            checks: &self.checks,
        })
        .expect("sidecar serializes")
    }

    /// Writes `path` and the sidecar next to it; returns the sidecar path.
    pub fn write(&self, path: &Path, config: &ExperimentConfig) -> Result<PathBuf> {
        let io = |p: &Path| {
            let p = p.display().to_string();
            move |source| HarnessError::Io { path: p, source }
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io(dir))?;
        }
        std::fs::write(path, self.csv_bytes()?).map_err(io(path))?;
        let side = path.with_extension("json");
        let text = serde_json::to_string_pretty(&self.sidecar(config))?;
        std::fs::write(&side, text + "\n").map_err(io(&side))?;
        Ok(side)
    }
}
