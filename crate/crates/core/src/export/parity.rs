use std::path::Path;
use std::time::Instant;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rl::Policy;

use super::bundle::ExportBundle;
use super::interp::Interpreter;

/// Observation with the interpreter's action for it.
#[derive(Clone, Debug, PartialEq)]
pub struct ParityCase {
    pub obs: Vec<f32>,
    pub expected: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParityReport {
    pub n: usize,
    pub max_abs_diff: f64,
    pub mean_latency_us: f64,
    pub max_latency_us: f64,
}

/// Raw observations uniform within three standard deviations of the bundle's
/// normalizer, rounded to `f32` so text round trips are exact.
pub fn random_observations(bundle: &ExportBundle, n: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            bundle
                .obs_mean
                .iter()
                .zip(&bundle.obs_std)
                .map(|(&m, &s)| (m as f64 + s as f64 * rng.random_range(-3.0..3.0)) as f32)
                .collect()
        })
        .collect()
}

/// Worst-case difference between the interpreter and the in-framework
/// deterministic policy over `n` random observations, with interpreter latency.
pub fn parity_check(policy: &Policy, bundle: &ExportBundle, n: usize, seed: u64) -> Result<ParityReport> {
    if n == 0 {
        warn!("parity check with zero observations");
        return Ok(ParityReport {
            n: 0,
            max_abs_diff: 0.0,
            mean_latency_us: 0.0,
            max_latency_us: 0.0,
        });
    }
    let interp = Interpreter::new(bundle.clone())?;
    let mut ws = interp.workspace();
    let mut out = vec![0.0; bundle.output_dim];
    let (mut worst, mut total, mut slowest) = (0.0f64, 0.0, 0.0f64);
    for obs in random_observations(bundle, n, seed) {
        let raw: Vec<f64> = obs.iter().map(|&v| v as f64).collect();
        let start = Instant::now();
        interp.run(&raw, &mut ws, &mut out)?;
        let us = start.elapsed().as_secs_f64() * 1e6;
        total += us;
        slowest = slowest.max(us);
        let reference = policy.deterministic(&policy.normalize(&raw))?;
        for (a, b) in out.iter().zip(&reference) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(ParityReport {
        n,
        max_abs_diff: worst,
        mean_latency_us: total / n as f64,
        max_latency_us: slowest,
    })
}

/// Interpreter outputs for `n` random observations.
pub fn parity_cases(bundle: &ExportBundle, n: usize, seed: u64) -> Result<Vec<ParityCase>> {
    let interp = Interpreter::new(bundle.clone())?;
    random_observations(bundle, n, seed)
        .into_iter()
        .map(|obs| {
            let raw: Vec<f64> = obs.iter().map(|&v| v as f64).collect();
            Ok(ParityCase {
                expected: interp.interpret(&raw)?,
                obs,
            })
        })
        .collect()
}

/// CSV without header: the observation floats then the expected action floats.
pub fn cases_csv(cases: &[ParityCase]) -> String {
    let mut s = String::new();
    for c in cases {
        let cells: Vec<String> = c
            .obs
            .iter()
            .map(|v| v.to_string())
            .chain(c.expected.iter().map(|v| v.to_string()))
            .collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn write_cases(path: &Path, cases: &[ParityCase]) -> Result<()> {
    std::fs::write(path, cases_csv(cases)).map_err(|e| Error::io(path, e))
}

/// Parses a cases file with `n_in` inputs and `n_out` expected values per line.
pub fn read_cases(text: &str, n_in: usize, n_out: usize) -> Result<Vec<ParityCase>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n_in + n_out {
            return Err(Error::Data(format!(
                "line {}: expected {} values, found {}",
                i + 1,
                n_in + n_out,
                cells.len()
            )));
        }
        let bad = |c: &str| Error::Data(format!("line {}: bad number `{c}`", i + 1));
        let obs = cells[..n_in]
            .iter()
            .map(|c| c.trim().parse::<f32>().map_err(|_| bad(c)))
            .collect::<Result<_>>()?;
        let expected = cells[n_in..]
            .iter()
            .map(|c| c.trim().parse::<f64>().map_err(|_| bad(c)))
            .collect::<Result<_>>()?;
        out.push(ParityCase { obs, expected });
    }
    Ok(out)
}
