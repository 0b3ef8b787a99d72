//! Check records, the suite report and its JSON / CSV forms.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::config::ToolkitConfig;
use crate::error::{CliError, CliResult};
use crate::suite::Metric;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub passed: bool,
    /// Value of the metric closest to its bound.
    pub max_residual: Option<f64>,
    pub tolerance: Option<f64>,
    pub samples: usize,
    pub wall_time: f64,
    pub time_budget: f64,
    pub metrics: Vec<Metric>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub toolkit_version: String,
    pub config_digest: String,
    pub seed: u64,
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<CheckRecord>,
    /// Declared checks absent from an `all` run.
    pub missing: Vec<String>,
}

pub const CSV_HEADER: [&str; 7] = [
    "name",
    "passed",
    "max_residual",
    "tolerance",
    "samples",
    "wall_time",
    "error",
];

impl CheckReport {
    pub fn new(cfg: &ToolkitConfig, suite: String, checks: Vec<CheckRecord>, missing: Vec<String>) -> Self {
        let passed = missing.is_empty() && !checks.is_empty() && checks.iter().all(|c| c.passed);
        Self {
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest: cfg.digest(),
            seed: cfg.seed(),
            suite,
            passed,
            checks,
            missing,
        }
    }

    pub fn check(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn value(&self, timings: bool) -> Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if !timings {
            if let Some(Value::Array(checks)) = v.get_mut("checks") {
                for c in checks {
                    if let Value::Object(m) = c {
                        m.remove("wall_time");
                    }
                }
            }
        }
        v
    }

    /// Pretty JSON with sorted keys.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.value(true)).expect("value serializes")
    }

    /// [`Self::to_json`] without wall-clock fields, for comparing runs.
    pub fn to_json_without_timings(&self) -> String {
        serde_json::to_string_pretty(&self.value(false)).expect("value serializes")
    }

    /// One row per check.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for c in &self.checks {
            w.write_record([
                c.name.clone(),
                c.passed.to_string(),
                opt(c.max_residual),
                opt(c.tolerance),
                c.samples.to_string(),
                format!("{:.6}", c.wall_time),
                c.error.clone().unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Io {
                path: dir.display().to_string(),
                message: e.to_string(),
            })?;
        }
    }
    std::fs::write(path, contents).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
