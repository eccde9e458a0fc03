//! Score reports on disk: a JSON document plus a per-sample CSV for
//! plotting.

use std::path::{Path, PathBuf};

use rssnet_core::metrics::ScoreReport;
use serde::Serialize;

use crate::fsio::{read_json, write, write_json};
use crate::{Error, Result};

#[derive(Serialize)]
struct Row<'a> {
    id: u64,
    permutation: &'a str,
    si_snr: f64,
    si_snri: f64,
    sid: f64,
    sad: f64,
    rmse: f64,
}

/// CSV with one row per sample: id, permutation (space-separated estimate
/// indices per target) and the five source-averaged metrics.
pub fn samples_csv(report: &ScoreReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in &report.samples {
        let perm = s.permutation.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(" ");
        w.serialize(Row {
            id: s.id,
            permutation: &perm,
            si_snr: s.si_snr,
            si_snri: s.si_snri,
            sid: s.sid,
            sad: s.sad,
            rmse: s.rmse,
        })
        .map_err(|e| Error::Usage(format!("csv: {e}")))?;
    }
    w.into_inner().map_err(|e| Error::Usage(format!("csv: {e}")))
}

/// Writes `<dir>/report.json` and `<dir>/samples.csv`; returns both paths.
pub fn write_report(dir: &Path, report: &ScoreReport) -> Result<(PathBuf, PathBuf)> {
    let json = dir.join("report.json");
    let csv = dir.join("samples.csv");
    write_json(&json, report)?;
    write(&csv, &samples_csv(report)?)?;
    Ok((json, csv))
}

pub fn read_report(path: &Path) -> Result<ScoreReport> {
    read_json(path)
}
