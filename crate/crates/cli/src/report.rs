//! Figure-data CSVs built from run artifacts.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Value};

use crate::artifacts::{self as art, SnapshotLine};
use crate::CliError;

pub const REPORT_FILE: &str = "report.json";
pub const FIG2_NOTE: &str =
    "l1_error is the maximum over seeds of sum_j |p_hat_j - 1/3| over all three actions j";

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let err = |e: csv::Error| CliError::output(format!("{}: {e}", path.display()));
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::output(format!("{}: {e}", path.display())))
}

/// Header and rows of one figure file.
type Table = (Vec<String>, Vec<Vec<String>>);

fn num(v: f64) -> String {
    format!("{v}")
}

fn fig1(lines: &[SnapshotLine], s0: usize) -> Option<Table> {
    let [_, na, no] = lines.first()?.dims;
    if na < 2 || no < 2 {
        return None;
    }
    let header = ["step", "Q11", "Q12", "Q21", "Q22"].map(String::from).to_vec();
    let rows = lines
        .iter()
        .map(|l| {
            vec![
                l.step.to_string(),
                num(l.q_at(s0, 0, 0)),
                num(l.q_at(s0, 0, 1)),
                num(l.q_at(s0, 1, 0)),
                num(l.q_at(s0, 1, 1)),
            ]
        })
        .collect();
    Some((header, rows))
}

/// `max_seeds Σ_j |p̂_j - 1/n|` per snapshot step, on the initial state's policy row.
fn fig2(per_seed: &[Vec<SnapshotLine>], s0: usize) -> Result<Vec<Vec<String>>, CliError> {
    let mut by_step: BTreeMap<u64, f64> = BTreeMap::new();
    let steps: Vec<u64> = per_seed[0].iter().map(|l| l.step).collect();
    for lines in per_seed {
        if lines.iter().map(|l| l.step).ne(steps.iter().copied()) {
            return Err(CliError::artifact("seed runs have different snapshot steps".into()));
        }
        for l in lines {
            let row = &l.policy[s0];
            let target = 1.0 / row.len() as f64;
            let err: f64 = row.iter().map(|p| (p - target).abs()).sum();
            let e = by_step.entry(l.step).or_insert(0.0);
            *e = e.max(err);
        }
    }
    Ok(by_step.into_iter().map(|(step, e)| vec![step.to_string(), num(e)]).collect())
}

fn fig3(dir: &Path) -> Result<Option<Table>, CliError> {
    if !dir.join(art::CONSTRAINTS_FILE).exists() {
        return Ok(None);
    }
    let rows = art::read_constraints(dir)?;
    let n_constraints = rows.iter().map(|r| r.constraint_index + 1).max().unwrap_or(0);
    let mut by_step: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in rows {
        by_step.entry(r.step).or_insert_with(|| vec![f64::NAN; n_constraints])[r.constraint_index] = r.mean;
    }
    let mut header = vec!["step".to_string()];
    header.extend((0..n_constraints).map(|j| format!("c{j}")));
    let mut out = Vec::new();
    for (step, values) in by_step {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CliError::artifact(format!("constraints.csv: step {step} is missing a constraint")));
        }
        let mut row = vec![step.to_string()];
        row.extend(values.into_iter().map(num));
        out.push(row);
    }
    Ok(Some((header, out)))
}

/// Writes `fig1.csv`, `fig2.csv` and `fig3_<δ>.csv` as far as the run's
/// environment and artifacts allow, plus `report.json` listing them.
/// Output depends only on the artifacts, so reruns are byte-identical.
pub fn emit_report(dir: &Path) -> Result<Vec<String>, CliError> {
    let summary = art::read_summary(dir)?;
    let environment = summary.get("environment").and_then(Value::as_str).unwrap_or("").to_string();
    let delta = summary.get("delta").and_then(Value::as_f64);
    let seed_dirs = art::seed_dirs(dir)?;
    let per_seed: Vec<Vec<SnapshotLine>> = seed_dirs.iter().map(|d| art::read_snapshots(d)).collect::<Result<_, _>>()?;
    if per_seed.iter().any(|l| l.is_empty()) {
        return Err(CliError::artifact(format!("{}: no snapshots", art::SNAPSHOTS_FILE)));
    }
    let s0 = summary.get("initial_state").and_then(Value::as_u64).unwrap_or(0) as usize;
    let mut written = Vec::new();
    let mut notes = Vec::new();

    if environment == "example1" {
        if let Some((header, rows)) = fig1(&per_seed[0], s0) {
            write_csv(&dir.join("fig1.csv"), &header, &rows)?;
            written.push("fig1.csv".to_string());
        }
    }
    if environment == "example2" {
        let rows = fig2(&per_seed, s0)?;
        write_csv(&dir.join("fig2.csv"), &["step".into(), "l1_error".into()], &rows)?;
        written.push("fig2.csv".to_string());
        notes.push(FIG2_NOTE.to_string());
    }
    if let Some((header, rows)) = fig3(&seed_dirs[0])? {
        let name = match delta {
            Some(d) => format!("fig3_{d}.csv"),
            None => "fig3_unshifted.csv".to_string(),
        };
        write_csv(&dir.join(&name), &header, &rows)?;
        written.push(name);
    }
    let report = json!({
        "schema_version": 1,
        "environment": environment,
        "delta": delta,
        "seed_runs": seed_dirs.len(),
        "files": written,
        "notes": notes,
    });
    art::write_json(&dir.join(REPORT_FILE), &report)?;
    Ok(written)
}
