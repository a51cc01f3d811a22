use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::obs::percentile;
use crate::env::{EnvConfig, EnvMode, TargetSchedule};
use crate::error::{Error, Result};
use crate::rl::Controller;
use crate::rpnn::DynamicsEnsemble;
use crate::scalar::Scalar;
use crate::schema::FRAME_DT;
use crate::seeding::derive;
use crate::synth::Shot;

use super::bench::{run_episode, slice_indices};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    /// High, then low, then high again.
    HighLowHigh,
    /// Low, then high, then low again.
    LowHighLow,
}

impl Pattern {
    pub fn label(self) -> &'static str {
        match self {
            Pattern::HighLowHigh => "a",
            Pattern::LowHighLow => "b",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Switch times on the shot clock, in milliseconds.
    pub switch_ms: Vec<f64>,
    pub n_seeds: usize,
    /// Quantiles of the session's achieved profiles used as the low and high levels.
    pub low_quantile: f64,
    pub high_quantile: f64,
    /// Steps after each switch scored by the post-switch RMSE.
    pub post_switch_steps: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            switch_ms: vec![2250.0, 3250.0],
            n_seeds: 30,
            low_quantile: 0.15,
            high_quantile: 0.85,
            post_switch_steps: 25,
        }
    }
}

/// Low and high rotation profiles drawn from a session's flat-top data,
/// ranked by profile mean.
pub fn experiment_levels(session: &[&Shot], low_q: f64, high_q: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rows: Vec<(f64, Vec<f64>)> = Vec::new();
    for s in session {
        for f in s.flat_top.0..s.flat_top.1 {
            let r = s.rotation(f).to_vec();
            rows.push((r.iter().sum::<f64>() / r.len() as f64, r));
        }
    }
    if rows.is_empty() {
        return Err(Error::Data("session has no flat-top frames".into()));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let pick = |q: f64| rows[((q * (rows.len() - 1) as f64).round() as usize).min(rows.len() - 1)].1.clone();
    Ok((pick(low_q), pick(high_q)))
}

/// Switch steps relative to an episode that starts at `start_frame`.
pub fn switch_steps(switch_ms: &[f64], start_frame: usize) -> Result<Vec<usize>> {
    switch_ms
        .iter()
        .map(|ms| {
            let frame = (ms / (FRAME_DT * 1000.0)).floor() as usize;
            frame.checked_sub(start_frame).ok_or_else(|| {
                Error::Config(format!("switch at {ms} ms precedes the episode start frame {start_frame}"))
            })
        })
        .collect()
}

pub fn pattern_schedule(pattern: Pattern, low: &[f64], high: &[f64], switches: Vec<usize>) -> Result<TargetSchedule> {
    let (a, b) = match pattern {
        Pattern::HighLowHigh => (high, low),
        Pattern::LowHighLow => (low, high),
    };
    let levels = (0..=switches.len())
        .map(|k| if k % 2 == 0 { a.to_vec() } else { b.to_vec() })
        .collect();
    TargetSchedule::new(levels, switches)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimExperimentResult {
    pub controller: String,
    pub pattern: Pattern,
    pub shot_id: u32,
    pub switches: Vec<usize>,
    pub slice_index: Vec<usize>,
    pub seeds: Vec<u64>,
    /// `[seed][step][slice]` rotation after each step.
    pub rotation: Vec<Vec<Vec<f64>>>,
    /// `[seed][step][actuator]` applied actions.
    pub actions: Vec<Vec<Vec<f64>>>,
    /// `[step][slice]` target.
    pub target: Vec<Vec<f64>>,
    /// Pointwise 5th / 95th percentile and mean over seeds, `[step][slice]`.
    pub band_low: Vec<Vec<f64>>,
    pub band_high: Vec<Vec<f64>>,
    pub mean: Vec<Vec<f64>>,
    /// Per-seed full-profile RMSE over the scored post-switch steps.
    pub post_switch_rmse: Vec<f64>,
}

impl SimExperimentResult {
    pub fn mean_post_switch_rmse(&self) -> f64 {
        self.post_switch_rmse.iter().sum::<f64>() / self.post_switch_rmse.len().max(1) as f64
    }

    /// Summed width of the percentile band over steps and slices.
    pub fn band_area(&self) -> f64 {
        self.band_high
            .iter()
            .zip(&self.band_low)
            .map(|(h, l)| h.iter().zip(l).map(|(a, b)| a - b).sum::<f64>())
            .sum()
    }
}

/// Runs the two-switch tracking experiment for one reference shot over `cfg.n_seeds` seeds.
#[allow(clippy::too_many_arguments)]
pub fn simulated_experiment<T: Scalar>(
    controller: &dyn Controller,
    ens: &DynamicsEnsemble<T>,
    shot: &Shot,
    session: &[&Shot],
    pattern: Pattern,
    cfg: &ExperimentConfig,
    env_cfg: &EnvConfig,
    seed: u64,
) -> Result<SimExperimentResult> {
    if env_cfg.mode != EnvMode::Test {
        return Err(Error::Config("simulated experiments run in test mode".into()));
    }
    if cfg.n_seeds == 0 {
        return Err(Error::Config("simulated experiment needs at least one seed".into()));
    }
    let horizon = env_cfg.horizon.unwrap_or(shot.flat_top_len());
    let switches = switch_steps(&cfg.switch_ms, shot.flat_top.0)?;
    if switches.last().is_some_and(|&s| s >= horizon) {
        return Err(Error::Config(format!(
            "horizon {horizon} does not reach the last switch step {}",
            switches.last().unwrap()
        )));
    }
    let (low, high) = experiment_levels(session, cfg.low_quantile, cfg.high_quantile)?;
    let schedule = pattern_schedule(pattern, &low, &high, switches.clone())?;
    let slices = slice_indices();
    let seeds: Vec<u64> = (0..cfg.n_seeds as u64).map(|k| derive(seed, "experiment-seed", k)).collect();
    let logs = seeds
        .par_iter()
        .map(|&s| run_episode(controller, ens, env_cfg, shot, schedule.clone(), s))
        .collect::<Result<Vec<_>>>()?;

    let steps = logs[0].records.len();
    let rotation: Vec<Vec<Vec<f64>>> = logs
        .iter()
        .map(|l| l.records.iter().map(|r| slices.iter().map(|&j| r.rotation[j]).collect()).collect())
        .collect();
    let actions = logs
        .iter()
        .map(|l| l.records.iter().map(|r| r.action_applied.clone()).collect())
        .collect();
    let target = logs[0]
        .records
        .iter()
        .map(|r| slices.iter().map(|&j| r.target[j]).collect())
        .collect();
    let mut band_low = vec![vec![0.0; slices.len()]; steps];
    let mut band_high = band_low.clone();
    let mut mean = band_low.clone();
    for t in 0..steps {
        for k in 0..slices.len() {
            let mut v: Vec<f64> = rotation.iter().map(|r| r[t][k]).collect();
            mean[t][k] = v.iter().sum::<f64>() / v.len() as f64;
            v.sort_by(f64::total_cmp);
            band_low[t][k] = percentile(&v, 0.05);
            band_high[t][k] = percentile(&v, 0.95);
        }
    }
    let post_switch_rmse = logs
        .iter()
        .map(|l| {
            let (mut se, mut n) = (0.0, 0usize);
            for r in &l.records {
                if switches.iter().any(|&s| r.step >= s && r.step < s + cfg.post_switch_steps) {
                    se += r.rotation.iter().zip(&r.target).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                    n += r.rotation.len();
                }
            }
            (se / n.max(1) as f64).sqrt()
        })
        .collect();
    Ok(SimExperimentResult {
        controller: controller.name().to_string(),
        pattern,
        shot_id: shot.shot_id,
        switches,
        slice_index: slices.to_vec(),
        seeds,
        rotation,
        actions,
        target,
        band_low,
        band_high,
        mean,
        post_switch_rmse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::GRID;

    #[test]
    fn switch_steps_from_shot_clock() {
        assert_eq!(switch_steps(&[2250.0, 3250.0], 40).unwrap(), vec![72, 122]);
        assert_eq!(switch_steps(&[2250.0, 3250.0], 0).unwrap(), vec![112, 162]);
        assert!(switch_steps(&[100.0], 40).is_err());
    }

    #[test]
    fn swapped_levels_mirror() {
        let lo = vec![1.0; GRID];
        let hi = vec![3.0; GRID];
        let a = pattern_schedule(Pattern::HighLowHigh, &lo, &hi, vec![3, 6]).unwrap();
        let b = pattern_schedule(Pattern::LowHighLow, &lo, &hi, vec![3, 6]).unwrap();
        for t in 0..10 {
            assert_eq!(a.target_at(t)[0] + b.target_at(t)[0], 4.0);
        }
        assert_eq!(a.target_at(0)[0], 3.0);
        assert_eq!(a.target_at(3)[0], 1.0);
        assert_eq!(a.target_at(6)[0], 3.0);
    }
}
