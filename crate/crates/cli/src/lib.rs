//! Configuration, check suite and reports for the `kecone` command.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod report;
pub mod suite;

pub use config::{load_config, SampleCounts, ToolkitConfig};
pub use error::{CliError, CliResult};
pub use report::{CheckRecord, CheckReport};
pub use suite::{run_suite, Selector, SuiteRun, CHECK_NAMES};

use std::path::{Path, PathBuf};

/// Writes the JSON report to `out`, the CSV summary and any artifacts next
/// to it; returns every path written.
pub fn emit(run: &SuiteRun, cfg: &ToolkitConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
    let csv = cfg
        .out_csv
        .as_ref()
        .map(PathBuf::from)
        .unwrap_or_else(|| out.with_extension("csv"));
    report::write_file(out, &run.report.to_json())?;
    report::write_file(&csv, &run.report.to_csv())?;
    let mut written = vec![out.to_path_buf(), csv];
    for (name, body) in &run.artifacts {
        let path = match (&cfg.out_probe_csv, name.as_str()) {
            (Some(p), "probe_flat.csv") => PathBuf::from(p),
            (Some(p), "probe_perturbed.csv") => PathBuf::from(p).with_extension("perturbed.csv"),
            _ => dir.join(name),
        };
        report::write_file(&path, body)?;
        written.push(path);
    }
    Ok(written)
}
