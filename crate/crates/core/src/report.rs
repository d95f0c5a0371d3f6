//! Joins the `ocs.json` records of finished scenarios into one flat table.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::runner::{ScenarioRecord, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub warnings: Vec<String>,
}

fn collect_paths(dir: &Path, depth: usize, out: &mut Vec<PathBuf>) -> Result<()> {
    let candidate = dir.join("ocs.json");
    if candidate.is_file() {
        out.push(candidate);
    }
    if depth == 0 {
        return Ok(());
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for sub in subdirs {
        collect_paths(&sub, depth - 1, out)?;
    }
    Ok(())
}

/// Loads `ocs.json` from `dir` and from its subdirectories up to two levels
/// down, in path order.
pub fn load_records(dir: &Path) -> Result<Vec<ScenarioRecord>> {
    if !dir.is_dir() {
        return Err(Error::Report(format!("{} is not a directory", dir.display())));
    }
    let mut paths = Vec::new();
    collect_paths(dir, 2, &mut paths)?;
    if paths.is_empty() {
        return Err(Error::Report(format!("no ocs.json found under {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
            let value: serde_json::Value = serde_json::from_slice(&bytes)?;
            let version = value.get("schema_version").and_then(|v| v.as_u64());
            if version != Some(SCHEMA_VERSION as u64) {
                return Err(Error::Report(format!(
                    "{}: schema version {:?} is incompatible with {SCHEMA_VERSION}",
                    p.display(),
                    version
                )));
            }
            serde_json::from_value(value)
                .map_err(|e| Error::Report(format!("{}: incompatible record: {e}", p.display())))
        })
        .collect()
}

fn fmt(x: f64) -> String {
    format!("{x:.4}")
}

pub fn build_report(records: &[ScenarioRecord]) -> Result<ReportTable> {
    let first = records
        .first()
        .ok_or_else(|| Error::Report("no scenario records to report".into()))?;
    let mut warnings = Vec::new();
    if records.iter().any(|r| r.schema_version != first.schema_version) {
        return Err(Error::Report("records use different schema versions".into()));
    }
    let mut versions: Vec<&str> = records.iter().map(|r| r.tool_version.as_str()).collect();
    versions.sort();
    versions.dedup();
    if versions.len() > 1 {
        warnings.push(format!("records come from different tool versions: {}", versions.join(", ")));
    }

    let mut keys: Vec<String> = Vec::new();
    for r in records {
        for p in &r.params {
            if !keys.contains(&p.key) {
                keys.push(p.key.clone());
            }
        }
    }
    let mut columns = vec!["scenario".to_string()];
    columns.extend(keys.iter().cloned());
    columns.extend(
        [
            "arms_per_1000_median",
            "arms_per_1000_q25",
            "arms_per_1000_q75",
            "platform_n_median",
            "reject_d0",
            "reject_d0.2",
            "reject_d0.35",
            "reject_d0.5",
        ]
        .map(String::from),
    );

    let rows = records
        .iter()
        .map(|r| {
            let mut row = vec![r.scenario_id.clone()];
            for k in &keys {
                row.push(
                    r.params
                        .iter()
                        .find(|p| &p.key == k)
                        .map(|p| p.value.clone())
                        .unwrap_or_default(),
                );
            }
            let o = &r.ocs;
            row.push(fmt(o.arms_per_1000.median));
            row.push(fmt(o.arms_per_1000.q25));
            row.push(fmt(o.arms_per_1000.q75));
            row.push(fmt(o.platform_n.median));
            row.extend(o.rejection_rates().iter().map(|&x| fmt(x)));
            row
        })
        .collect();
    Ok(ReportTable {
        columns,
        rows,
        warnings,
    })
}

pub fn report_command(dir: &Path) -> Result<ReportTable> {
    build_report(&load_records(dir)?)
}

impl ReportTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Report(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Report(e.to_string()))
    }

    /// Space-aligned text table.
    pub fn to_text(&self) -> String {
        let widths: Vec<usize> = (0..self.columns.len())
            .map(|i| {
                self.rows
                    .iter()
                    .map(|r| r[i].len())
                    .chain(std::iter::once(self.columns[i].len()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = line(&self.columns);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }
}
