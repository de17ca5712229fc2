//! Experiment reports and their on-disk layout.
//!
//! A run named `name` writes `name.json`, one `name_<series>.csv` per
//! series and `name.timing.json` with the wall-clock time. Everything except
//! the timing file is a pure function of the configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use pathkac::path_core::format_f64;
use serde::Serialize;

use crate::schema::ExperimentConfig;
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scalar {
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
}

/// Column-major numeric table written as CSV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Series {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn new(columns: &[&str]) -> Self {
        Series {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format_f64(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub scalars: BTreeMap<String, Scalar>,
    /// Series name to CSV file name.
    pub series: BTreeMap<String, String>,
    pub checks: BTreeMap<String, bool>,
    pub pass: bool,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
    #[serde(skip)]
    pub series_data: BTreeMap<String, Series>,
    #[serde(skip)]
    pub extra_files: BTreeMap<String, Vec<u8>>,
    /// Per-stage wall-clock seconds, written only to the timing sidecar.
    #[serde(skip)]
    pub timings: BTreeMap<String, f64>,
}

impl ExperimentReport {
    pub fn new(config: &ExperimentConfig) -> Self {
        ExperimentReport {
            name: config.name.clone(),
            version: VERSION.to_string(),
            config: config.clone(),
            scalars: BTreeMap::new(),
            series: BTreeMap::new(),
            checks: BTreeMap::new(),
            pass: true,
            details: serde_json::Value::Null,
            series_data: BTreeMap::new(),
            extra_files: BTreeMap::new(),
            timings: BTreeMap::new(),
        }
    }

    pub fn scalar(&mut self, name: &str, value: f64) {
        self.scalars.insert(
            name.to_string(),
            Scalar {
                value,
                std_error: None,
            },
        );
    }

    pub fn estimate(&mut self, name: &str, value: f64, std_error: f64) {
        self.scalars.insert(
            name.to_string(),
            Scalar {
                value,
                std_error: Some(std_error),
            },
        );
    }

    pub fn check(&mut self, name: &str, pass: bool) {
        self.checks.insert(name.to_string(), pass);
        self.pass = self.checks.values().all(|&p| p);
    }

    pub fn add_series(&mut self, name: &str, series: Series) {
        self.series
            .insert(name.to_string(), format!("{}_{name}.csv", self.name));
        self.series_data.insert(name.to_string(), series);
    }

    /// Extra artifact stored next to the report (for example a transformed path).
    pub fn add_file(&mut self, file_name: String, bytes: Vec<u8>) {
        self.extra_files.insert(file_name, bytes);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports are serializable");
        s.push('\n');
        s
    }

    pub fn report_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.json", self.name))
    }

    /// Writes the report, its series and extra files, and the timing sidecar.
    pub fn write(&self, dir: &Path, wall_clock_seconds: f64) -> Result<PathBuf, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let write = |name: &str, bytes: &[u8]| {
            let p = dir.join(name);
            fs::write(&p, bytes).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
        };
        for (name, series) in &self.series_data {
            write(&self.series[name], series.to_csv().as_bytes())?;
        }
        for (name, bytes) in &self.extra_files {
            write(name, bytes)?;
        }
        let timing = serde_json::json!({
            "name": self.name,
            "wall_clock_seconds": wall_clock_seconds,
            "stages": self.timings,
        });
        write(
            &format!("{}.timing.json", self.name),
            format!("{timing}\n").as_bytes(),
        )?;
        write(&format!("{}.json", self.name), self.to_json().as_bytes())?;
        Ok(self.report_path(dir))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::Subcommand;

    #[test]
    fn checks_drive_the_verdict_and_json_is_stable() {
        let cfg = ExperimentConfig::from_raw(Subcommand::Roundtrip, &BTreeMap::new()).unwrap();
        let mut r = ExperimentReport::new(&cfg);
        r.check("a", true);
        assert!(r.pass);
        r.check("b", false);
        assert!(!r.pass);
        r.estimate("x", 0.1, 0.01);
        let mut s = Series::new(&["t", "v"]);
        s.push(vec![0.0, 1.5]);
        r.add_series("curve", s);
        assert_eq!(r.series["curve"], "roundtrip_curve.csv");
        assert_eq!(r.to_json(), r.clone().to_json());
        assert!(r.series_data["curve"].to_csv().starts_with("t,v\n"));
    }
}
