//! Per-replication records, their aggregates, and the on-disk report
//! format.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::stats::Summary;

/// One CSV row: a replication seen through one inference method. Empty
/// fields mean "not applicable".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub run_id: String,
    pub replication: usize,
    pub method: String,
    pub est_error: Option<f64>,
    pub cov_error: Option<f64>,
    pub ci_center: Option<f64>,
    pub ci_length: Option<f64>,
    pub covered: Option<u8>,
    pub queries: u64,
    pub aborted: u8,
}

/// Trajectory snapshot for decay curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRow {
    pub run_id: String,
    pub replication: usize,
    pub n: u64,
    pub est_error: f64,
    pub queries: u64,
    pub plug_in_half_width: Option<f64>,
    pub cov_spectral_norm: Option<f64>,
    pub random_scaling_half_width: Option<f64>,
    pub oracle_half_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    /// non-aborted replications
    pub replications: usize,
    pub coverage: Option<Summary>,
    pub ci_length: Option<Summary>,
    pub est_error: Option<Summary>,
    pub cov_error: Option<Summary>,
    pub queries: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub replications: usize,
    pub aborted: usize,
    pub methods: Vec<MethodSummary>,
}

fn summarize(values: impl Iterator<Item = Option<f64>>) -> Option<Summary> {
    let v: Vec<f64> = values.flatten().collect();
    Summary::of(&v)
}

impl Aggregates {
    /// Recomputes every aggregate from the rows alone; aborted replications
    /// are counted and excluded.
    pub fn from_rows(rows: &[ReplicationRow]) -> Self {
        let mut replications: Vec<usize> = rows.iter().map(|r| r.replication).collect();
        replications.sort_unstable();
        replications.dedup();
        let mut aborted: Vec<usize> = rows.iter().filter(|r| r.aborted != 0).map(|r| r.replication).collect();
        aborted.sort_unstable();
        aborted.dedup();

        let mut order: Vec<&str> = Vec::new();
        for r in rows {
            if !order.contains(&r.method.as_str()) {
                order.push(&r.method);
            }
        }
        let methods = order
            .into_iter()
            .map(|m| {
                let ok: Vec<&ReplicationRow> = rows.iter().filter(|r| r.method == m && r.aborted == 0).collect();
                MethodSummary {
                    method: m.to_string(),
                    replications: ok.len(),
                    coverage: summarize(ok.iter().map(|r| r.covered.map(f64::from))),
                    ci_length: summarize(ok.iter().map(|r| r.ci_length)),
                    est_error: summarize(ok.iter().map(|r| r.est_error)),
                    cov_error: summarize(ok.iter().map(|r| r.cov_error)),
                    queries: summarize(ok.iter().map(|r| Some(r.queries as f64))),
                }
            })
            .collect();
        Self {
            replications: replications.len(),
            aborted: aborted.len(),
            methods,
        }
    }

    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub run_id: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub rows: Vec<ReplicationRow>,
    pub checkpoints: Vec<CheckpointRow>,
    pub aggregates: Aggregates,
    /// CI length of the true asymptotic covariance, `2 z sqrt(wᵀΣw/n)`
    pub oracle_ci_length: Option<f64>,
    pub wall_time_secs: f64,
}

/// The `summary.json` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub config_hash: String,
    pub seed: u64,
    pub n: u64,
    pub replications: usize,
    pub aborted: usize,
    pub oracle_ci_length: Option<f64>,
    /// `√n`; lengths times this are on the scale of the limiting law
    pub length_scale: f64,
    pub methods: Vec<MethodSummary>,
    pub wall_time_secs: f64,
}

impl ExperimentReport {
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            run_id: self.run_id.clone(),
            config_hash: self.config_hash.clone(),
            seed: self.config.seed,
            n: self.config.n,
            replications: self.aggregates.replications,
            aborted: self.aggregates.aborted,
            oracle_ci_length: self.oracle_ci_length,
            length_scale: (self.config.n as f64).sqrt(),
            methods: self.aggregates.methods.clone(),
            wall_time_secs: self.wall_time_secs,
        }
    }

    /// Writes `<dir>/<run_id>/{replications.csv, checkpoints.csv,
    /// summary.json, config.resolved.json}`, each via a temporary file and
    /// rename. Returns the run directory.
    pub fn write_to(&self, dir: &Path) -> Result<PathBuf> {
        let run_dir = dir.join(&self.run_id);
        fs::create_dir_all(&run_dir)?;
        let mut csv = Vec::new();
        write_rows_csv(&self.rows, &mut csv)?;
        write_atomic(&run_dir.join("replications.csv"), &csv)?;
        if !self.checkpoints.is_empty() {
            let mut buf = Vec::new();
            write_checkpoints_csv(&self.checkpoints, &mut buf)?;
            write_atomic(&run_dir.join("checkpoints.csv"), &buf)?;
        }
        let mut summary = serde_json::to_vec_pretty(&self.summary())?;
        summary.push(b'\n');
        write_atomic(&run_dir.join("summary.json"), &summary)?;
        let mut config = serde_json::to_vec_pretty(&self.config)?;
        config.push(b'\n');
        write_atomic(&run_dir.join("config.resolved.json"), &config)?;
        Ok(run_dir)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Csv {
            line,
            message: format!("{kind:?}"),
        },
    }
}

fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Floats are written in shortest round-trip form, so reading the file back
/// reproduces every value exactly.
pub fn write_rows_csv<W: Write>(rows: &[ReplicationRow], out: W) -> Result<()> {
    if rows.is_empty() {
        let mut out = out;
        out.write_all(b"run_id,replication,method,est_error,cov_error,ci_center,ci_length,covered,queries,aborted\n")?;
        return Ok(());
    }
    write_csv(rows, out)
}

pub fn read_rows_csv<R: Read>(input: R) -> Result<Vec<ReplicationRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

pub fn write_checkpoints_csv<W: Write>(rows: &[CheckpointRow], out: W) -> Result<()> {
    write_csv(rows, out)
}

pub fn read_checkpoints_csv<R: Read>(input: R) -> Result<Vec<CheckpointRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(rep: usize, method: &str, covered: Option<u8>, len: Option<f64>, aborted: u8) -> ReplicationRow {
        ReplicationRow {
            run_id: "x".into(),
            replication: rep,
            method: method.into(),
            est_error: Some(0.1 + rep as f64 / 3.0),
            cov_error: None,
            ci_center: Some(-1.0 / 7.0),
            ci_length: len,
            covered,
            queries: 10,
            aborted,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let rows = vec![
            row(0, "plug_in", Some(1), Some(0.1 + 0.2), 0),
            row(0, "oracle", Some(0), Some(std::f64::consts::PI * 1e-7), 0),
            row(1, "plug_in", None, None, 1),
        ];
        let mut buf = Vec::new();
        write_rows_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("run_id,replication,method,est_error,cov_error,ci_center,ci_length,covered,queries,aborted\n"));
        assert!(text.contains("1,plug_in,"));
        let back = read_rows_csv(&buf[..]).unwrap();
        assert_eq!(back, rows);
        assert_eq!(Aggregates::from_rows(&back), Aggregates::from_rows(&rows));
    }

    #[test]
    fn aggregates_exclude_aborts() {
        let rows = vec![
            row(0, "plug_in", Some(1), Some(2.0), 0),
            row(1, "plug_in", Some(0), Some(4.0), 0),
            row(2, "plug_in", None, None, 1),
        ];
        let a = Aggregates::from_rows(&rows);
        assert_eq!((a.replications, a.aborted), (3, 1));
        let m = a.method("plug_in").unwrap();
        assert_eq!(m.replications, 2);
        assert_eq!(m.coverage.unwrap().mean, 0.5);
        assert_eq!(m.ci_length.unwrap().mean, 3.0);
        assert!(m.cov_error.is_none());
    }

    #[test]
    fn malformed_csv_reports_line() {
        let text = "run_id,replication,method,est_error,cov_error,ci_center,ci_length,covered,queries,aborted\nx,zero,m,,,,,,1,0\n";
        match read_rows_csv(text.as_bytes()) {
            Err(Error::Csv { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn atomic_write_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"hello").unwrap();
        write_atomic(&p, b"again").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"again");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
