//! On-disk artifact schemas and writers.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cmdp_core::evaluation::{BisectionStep, ConstraintEstimate};
use cmdp_core::learner::{Snapshot, StepRecord};

use crate::CliError;

pub const SUMMARY_SCHEMA: u32 = 1;
pub const TRACE_SCHEMA: u32 = 1;
pub const SNAPSHOT_SCHEMA: u32 = 1;
pub const CONSTRAINTS_SCHEMA: u32 = 1;
pub const BISECTION_SCHEMA: u32 = 1;

pub const TRACE_FILE: &str = "trace.csv";
pub const SNAPSHOTS_FILE: &str = "snapshots.jsonl";
pub const CONSTRAINTS_FILE: &str = "constraints.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const BISECTION_FILE: &str = "bisection.csv";

#[derive(Debug, Serialize)]
struct TraceRow {
    step: u64,
    s: usize,
    a: usize,
    o: usize,
    alpha_or_beta: f64,
    q_updated_value: f64,
    f_value: Option<f64>,
}

/// One line of `snapshots.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotLine {
    pub step: u64,
    /// `[states, actions, opponents]`.
    pub dims: [usize; 3],
    /// Row-major `Q[s][a][o]`.
    pub q: Vec<f64>,
    pub policy: Vec<Vec<f64>>,
    pub f_value: Option<f64>,
}

impl SnapshotLine {
    pub fn from_snapshot(s: &Snapshot) -> Self {
        let d = s.q.dims();
        SnapshotLine {
            step: s.step,
            dims: [d.states, d.actions, d.opponents],
            q: s.q.values().to_vec(),
            policy: s.policy.rows(),
            f_value: s.f_value,
        }
    }

    pub fn q_at(&self, s: usize, a: usize, o: usize) -> f64 {
        let [_, na, no] = self.dims;
        self.q[(s * na + a) * no + o]
    }
}

/// One row of `constraints.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRow {
    pub step: u64,
    pub constraint_index: usize,
    pub mean: f64,
    pub half_width: f64,
}

impl ConstraintRow {
    pub fn rows(step: u64, estimates: &[ConstraintEstimate]) -> Vec<ConstraintRow> {
        estimates
            .iter()
            .enumerate()
            .map(|(j, e)| ConstraintRow { step, constraint_index: j, mean: e.mean, half_width: e.half_width })
            .collect()
    }
}

#[derive(Debug, Serialize)]
struct BisectionRow {
    iteration: usize,
    delta: f64,
    verdict: String,
}

fn out_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::output(format!("{}: {e}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| out_error(dir, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_path(path).map_err(|e| out_error(path, e))
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    for row in rows {
        w.serialize(row).map_err(|e| out_error(path, e))?;
    }
    w.flush().map_err(|e| out_error(path, e))
}

pub fn write_trace(dir: &Path, records: &[StepRecord]) -> Result<(), CliError> {
    write_rows(
        &dir.join(TRACE_FILE),
        records.iter().map(|r| TraceRow {
            step: r.step,
            s: r.s,
            a: r.a,
            o: r.o,
            alpha_or_beta: r.rate,
            q_updated_value: r.q_updated_value,
            f_value: r.f_value,
        }),
    )
}

pub fn write_snapshots(dir: &Path, lines: &[SnapshotLine]) -> Result<(), CliError> {
    let path = dir.join(SNAPSHOTS_FILE);
    let file = File::create(&path).map_err(|e| out_error(&path, e))?;
    let mut w = BufWriter::new(file);
    for line in lines {
        serde_json::to_writer(&mut w, line).map_err(|e| out_error(&path, e))?;
        w.write_all(b"\n").map_err(|e| out_error(&path, e))?;
    }
    w.flush().map_err(|e| out_error(&path, e))
}

pub fn write_constraints(dir: &Path, rows: &[ConstraintRow]) -> Result<(), CliError> {
    write_rows(&dir.join(CONSTRAINTS_FILE), rows)
}

pub fn write_bisection(dir: &Path, steps: &[BisectionStep]) -> Result<(), CliError> {
    write_rows(
        &dir.join(BISECTION_FILE),
        steps.iter().enumerate().map(|(i, s)| BisectionRow { iteration: i, delta: s.delta, verdict: s.verdict.to_string() }),
    )
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| out_error(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| out_error(path, e))
}

fn missing(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::artifact(format!("{}: {e}", path.display()))
}

pub fn read_snapshots(dir: &Path) -> Result<Vec<SnapshotLine>, CliError> {
    let path = dir.join(SNAPSHOTS_FILE);
    let file = File::open(&path).map_err(|e| missing(&path, e))?;
    BufReader::new(file)
        .lines()
        .map(|line| {
            let line = line.map_err(|e| missing(&path, e))?;
            serde_json::from_str(&line).map_err(|e| missing(&path, e))
        })
        .collect()
}

pub fn read_constraints(dir: &Path) -> Result<Vec<ConstraintRow>, CliError> {
    let path = dir.join(CONSTRAINTS_FILE);
    let mut r = csv::Reader::from_path(&path).map_err(|e| missing(&path, e))?;
    r.deserialize().map(|row| row.map_err(|e| missing(&path, e))).collect()
}

pub fn read_summary(dir: &Path) -> Result<serde_json::Value, CliError> {
    let path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).map_err(|e| missing(&path, e))?;
    serde_json::from_str(&text).map_err(|e| missing(&path, e))
}

/// `seed_<n>` directories of a multi-seed run, in seed order; the run
/// directory itself for a single-seed run.
pub fn seed_dirs(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut found: Vec<(u64, PathBuf)> = fs::read_dir(dir)
        .map_err(|e| missing(dir, e))?
        .filter_map(|entry| entry.ok())
        .filter_map(|entry| {
            let name = entry.file_name().into_string().ok()?;
            let seed = name.strip_prefix("seed_")?.parse().ok()?;
            entry.path().is_dir().then(|| (seed, entry.path()))
        })
        .collect();
    found.sort();
    if found.is_empty() {
        Ok(vec![dir.to_path_buf()])
    } else {
        Ok(found.into_iter().map(|(_, p)| p).collect())
    }
}
