//! Report files: JSON lines with a single header line, plus a summary CSV.
//!
//! The header carries the timestamp and the fully resolved configuration;
//! every line after it is a pure function of `(config, seed)`, so repeated
//! runs produce byte-identical bodies. The CSV carries no timestamp at all.

use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::CliError;
use sparse_transfer::rng::RNG_ALGORITHM;

#[derive(Serialize)]
struct Header<'a> {
    report: &'a str,
    rng: &'a str,
    seed: u64,
    timestamp_unix: u64,
    config: &'a BTreeMap<String, String>,
}

pub struct ReportSink {
    name: &'static str,
    seed: u64,
    config: BTreeMap<String, String>,
    body: Vec<String>,
    csv: Vec<String>,
}

impl ReportSink {
    pub fn new(name: &'static str, seed: u64, config: &BTreeMap<String, String>) -> Self {
        ReportSink {
            name,
            seed,
            config: config.clone(),
            body: Vec::new(),
            csv: Vec::new(),
        }
    }

    pub fn push_record<T: Serialize>(&mut self, record: &T) -> Result<(), CliError> {
        let line = serde_json::to_string(record)
            .map_err(|e| CliError::runtime("report-serialization", e))?;
        self.body.push(line);
        Ok(())
    }

    pub fn push_csv(&mut self, line: String) {
        self.csv.push(line);
    }

    /// Write `<out>` (header line + body) and the sibling `<out stem>.csv`.
    pub fn write(&self, out: &Path) -> Result<PathBuf, CliError> {
        if let Some(parent) = out.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)
                    .map_err(|e| CliError::runtime("report-write", e))?;
            }
        }
        let timestamp_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let header = serde_json::to_string(&Header {
            report: self.name,
            rng: RNG_ALGORITHM,
            seed: self.seed,
            timestamp_unix,
            config: &self.config,
        })
        .map_err(|e| CliError::runtime("report-serialization", e))?;

        let file = std::fs::File::create(out).map_err(|e| CliError::runtime("report-write", e))?;
        let mut writer = std::io::BufWriter::new(file);
        writeln!(writer, "{header}").map_err(|e| CliError::runtime("report-write", e))?;
        for line in &self.body {
            writeln!(writer, "{line}").map_err(|e| CliError::runtime("report-write", e))?;
        }
        writer
            .flush()
            .map_err(|e| CliError::runtime("report-write", e))?;

        let csv_path = out.with_extension("csv");
        let mut csv_file =
            std::fs::File::create(&csv_path).map_err(|e| CliError::runtime("report-write", e))?;
        for line in &self.csv {
            writeln!(csv_file, "{line}").map_err(|e| CliError::runtime("report-write", e))?;
        }
        Ok(csv_path)
    }
}

/// Deterministic float formatting for CSV cells.
pub fn csv_float(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v:.12e}")
    }
}
