use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::bench::{AlgorithmRow, SLICE_PSI};
use super::experiment::SimExperimentResult;

/// Column headers of the per-algorithm table.
pub fn table_header() -> Vec<String> {
    let mut h = vec!["Profile".to_string()];
    h.extend(SLICE_PSI.iter().map(|p| format!("psi_{p:.2}")));
    h
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Label of the reference shot set, used in file names.
    pub shotset: String,
    /// `YYYYMMDD`, used in file names only.
    pub date: String,
    pub config_hash: String,
    pub rows: Vec<AlgorithmRow>,
    pub experiments: Vec<SimExperimentResult>,
}

impl EvalReport {
    pub fn row(&self, algorithm: &str) -> Option<&AlgorithmRow> {
        self.rows.iter().find(|r| r.algorithm == algorithm)
    }
}

/// `Profile,psi_0.09,...` header and one row of RMSE values.
pub fn algorithm_csv(row: &AlgorithmRow) -> String {
    let mut s = table_header().join(",");
    s.push('\n');
    let mut cells = vec![row.rmse.to_string()];
    cells.extend(row.slice_rmse.iter().map(|v| v.to_string()));
    s.push_str(&cells.join(","));
    s.push('\n');
    s
}

/// All algorithms with standard errors, one row each.
pub fn summary_csv(rows: &[AlgorithmRow]) -> String {
    let mut header = vec!["algorithm".to_string()];
    for h in table_header() {
        header.push(h.clone());
        header.push(format!("{h}_se"));
    }
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let mut cells = vec![r.algorithm.clone(), r.rmse.to_string(), r.se.to_string()];
        for (v, e) in r.slice_rmse.iter().zip(&r.slice_se) {
            cells.push(v.to_string());
            cells.push(e.to_string());
        }
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// Plot-ready long-format traces: one line per (seed or band, step, slice).
pub fn traces_csv(exp: &SimExperimentResult) -> String {
    let mut s = String::from("controller,pattern,series,step,psi,value\n");
    let psi = &SLICE_PSI;
    let mut line = |series: &str, t: usize, k: usize, v: f64| {
        let _ = writeln!(s, "{},{},{},{},{:.2},{}", exp.controller, exp.pattern.label(), series, t + 1, psi[k], v);
    };
    for (t, row) in exp.target.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            line("target", t, k, *v);
        }
    }
    for (name, data) in [("p05", &exp.band_low), ("p95", &exp.band_high), ("mean", &exp.mean)] {
        for (t, row) in data.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                line(name, t, k, *v);
            }
        }
    }
    for (i, seed_rows) in exp.rotation.iter().enumerate() {
        let series = format!("seed_{i}");
        for (t, row) in seed_rows.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                line(&series, t, k, *v);
            }
        }
    }
    s
}

/// Parses a per-algorithm table back into `(header, values)`.
pub fn parse_algorithm_csv(text: &str) -> Result<(Vec<String>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| Error::Data(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let rec = rdr
        .records()
        .next()
        .ok_or_else(|| Error::Data("table has no data row".into()))?
        .map_err(|e| Error::Data(e.to_string()))?;
    let values = rec
        .iter()
        .map(|c| c.parse::<f64>().map_err(|e| Error::Data(format!("bad cell `{c}`: {e}"))))
        .collect::<Result<_>>()?;
    Ok((header, values))
}

fn write(path: PathBuf, text: &str, out: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    out.push(path);
    Ok(())
}

/// Writes `{algo}_{shotset}_{date}.csv` per algorithm, a summary table, the full
/// JSON report and one trace file per experiment. Returns the written paths.
pub fn emit_report(report: &EvalReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    let tag = format!("{}_{}", report.shotset, report.date);
    for row in &report.rows {
        write(dir.join(format!("{}_{tag}.csv", row.algorithm)), &algorithm_csv(row), &mut out)?;
    }
    if !report.rows.is_empty() {
        write(dir.join(format!("summary_{tag}.csv")), &summary_csv(&report.rows), &mut out)?;
    }
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::Json {
        path: dir.join("report.json"),
        source: e,
    })?;
    write(dir.join(format!("report_{tag}.json")), &json, &mut out)?;
    for exp in &report.experiments {
        write(
            dir.join(format!("traces_{}_{}_{}_{tag}.csv", exp.controller, exp.pattern.label(), exp.shot_id)),
            &traces_csv(exp),
            &mut out,
        )?;
    }
    Ok(out)
}
