//! Report rows and file emission.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::Task;
use crate::error::{Error, Result};
use crate::gfa::{Domain, Family, IfaChoice};

use super::{ExperimentConfig, SweepParam};

/// One aggregated line: a (sweep value, method) pair with replication
/// means and unbiased standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub task: Task,
    pub family: Family,
    pub domain: Domain,
    pub ifa: IfaChoice,
    pub sweep_name: SweepParam,
    pub sweep_value: f64,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub risk_mean: f64,
    pub risk_std: f64,
    pub score_noisy_mean: f64,
    pub score_noisy_std: f64,
    pub score_relevant_mean: f64,
    pub score_relevant_std: f64,
    /// Max across replications of the per-model identity diagnostic.
    pub identity_max_diff: f64,
}

/// Aggregated experiment output; `rows` has one entry per
/// (sweep value, method) in sweep-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

const CSV_HEADER: &str = "dataset,task,family,domain,ifa,sweep_name,sweep_value,auc_mean,auc_std,risk_mean,risk_std,score_noisy_mean,score_noisy_std,score_relevant_mean,score_relevant_std,identity_max_diff";

/// Write the report as CSV (fixed column order, see `CSV_HEADER`) or as a
/// JSON document that re-parses to an equal report.
pub fn emit_report(
    report: &ExperimentReport,
    format: ReportFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    match format {
        ReportFormat::Json => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            serde_json::to_writer_pretty(BufWriter::new(file), report)?;
            Ok(())
        }
        ReportFormat::Csv => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = BufWriter::new(file);
            writeln!(w, "{CSV_HEADER}").map_err(|e| Error::io(path, e))?;
            for r in &report.rows {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.dataset,
                    r.task.label(),
                    r.family.label(),
                    r.domain.label(),
                    r.ifa.label(),
                    r.sweep_name.label(),
                    r.sweep_value,
                    r.auc_mean,
                    r.auc_std,
                    r.risk_mean,
                    r.risk_std,
                    r.score_noisy_mean,
                    r.score_noisy_std,
                    r.score_relevant_mean,
                    r.score_relevant_std,
                    r.identity_max_diff,
                )
                .map_err(|e| Error::io(path, e))?;
            }
            Ok(())
        }
    }
}

fn write_series(
    path: &Path,
    header: &str,
    lines: impl Iterator<Item = String>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{header}").map_err(|e| Error::io(path, e))?;
    for line in lines {
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn method_key(r: &ReportRow) -> String {
    format!("{},{},{}", r.family.label(), r.ifa.label(), r.domain.label())
}

/// Emit the five figure-ready series files into `dir`: `auc.csv`,
/// `score-noisy.csv`, `score-relevant.csv` (per sweep value and method),
/// and `risk.csv`, `identity-error.csv` (per sweep value). Returns the
/// written paths.
pub fn emit_series(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    type RowStat = fn(&ReportRow) -> (f64, f64);
    let per_method_files: [(&str, RowStat); 3] = [
        ("auc.csv", |r| (r.auc_mean, r.auc_std)),
        ("score-noisy.csv", |r| (r.score_noisy_mean, r.score_noisy_std)),
        (
            "score-relevant.csv",
            |r| (r.score_relevant_mean, r.score_relevant_std),
        ),
    ];
    for (name, extract) in per_method_files {
        let path = dir.join(name);
        write_series(
            &path,
            "sweep_name,sweep_value,family,ifa,domain,mean,std",
            report.rows.iter().map(|r| {
                let (mean, std) = extract(r);
                format!(
                    "{},{},{},{mean},{std}",
                    r.sweep_name.label(),
                    r.sweep_value,
                    method_key(r)
                )
            }),
        )?;
        written.push(path);
    }

    // risk and the identity diagnostic are per sweep value; dedup on the
    // first method row of each value.
    let mut seen: Vec<f64> = Vec::new();
    let mut risk_lines = Vec::new();
    let mut identity_lines = Vec::new();
    for r in &report.rows {
        if seen.contains(&r.sweep_value) {
            continue;
        }
        seen.push(r.sweep_value);
        risk_lines.push(format!(
            "{},{},{},{}",
            r.sweep_name.label(),
            r.sweep_value,
            r.risk_mean,
            r.risk_std
        ));
        identity_lines.push(format!(
            "{},{},{}",
            r.sweep_name.label(),
            r.sweep_value,
            r.identity_max_diff
        ));
    }
    let risk_path = dir.join("risk.csv");
    write_series(
        &risk_path,
        "sweep_name,sweep_value,risk_mean,risk_std",
        risk_lines.into_iter(),
    )?;
    written.push(risk_path);
    let identity_path = dir.join("identity-error.csv");
    write_series(
        &identity_path,
        "sweep_name,sweep_value,identity_max_diff",
        identity_lines.into_iter(),
    )?;
    written.push(identity_path);
    Ok(written)
}
