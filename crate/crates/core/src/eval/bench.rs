use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{sample_training_target, EnvConfig, EnvMode, EpisodeLog, RolloutEnv, TargetSchedule};
use crate::error::{Error, Result};
use crate::rl::Controller;
use crate::rpnn::DynamicsEnsemble;
use crate::scalar::Scalar;
use crate::schema::{nearest_grid_index, GRID};
use crate::seeding::derive;
use crate::synth::Shot;

/// Radial positions reported in the benchmark table.
pub const SLICE_PSI: [f64; 6] = [0.09, 0.18, 0.39, 0.58, 0.79, 0.88];

pub fn slice_indices() -> [usize; 6] {
    SLICE_PSI.map(nearest_grid_index)
}

/// Tracking error of one evaluation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub shot_id: u32,
    pub steps: usize,
    /// RMSE over every (step, grid point) pair.
    pub rmse: f64,
    /// Time-averaged squared error per grid point.
    pub mse_per_point: Vec<f64>,
    pub slice_rmse: Vec<f64>,
}

/// Metrics from logged rotation/target pairs.
pub fn run_metrics(log: &EpisodeLog) -> Result<RunMetrics> {
    if log.records.is_empty() {
        return Err(Error::Data("empty episode log".into()));
    }
    let width = log.records[0].rotation.len();
    let mut mse = vec![0.0; width];
    for r in &log.records {
        if r.rotation.len() != width || r.target.len() != width {
            return Err(Error::Data("ragged episode log".into()));
        }
        for j in 0..width {
            mse[j] += (r.target[j] - r.rotation[j]).powi(2);
        }
    }
    let n = log.records.len() as f64;
    mse.iter_mut().for_each(|v| *v /= n);
    let rmse = (mse.iter().sum::<f64>() / width as f64).sqrt();
    let slice_rmse = if width == GRID {
        slice_indices().iter().map(|&j| mse[j].sqrt()).collect()
    } else {
        Vec::new()
    };
    Ok(RunMetrics {
        seed: log.seed,
        shot_id: log.shot_id,
        steps: log.records.len(),
        rmse,
        mse_per_point: mse,
        slice_rmse,
    })
}

/// One benchmark row: mean over runs with standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmRow {
    pub algorithm: String,
    pub rmse: f64,
    pub se: f64,
    pub slice_rmse: Vec<f64>,
    pub slice_se: Vec<f64>,
    pub seeds: Vec<u64>,
    pub shots: Vec<u32>,
    pub runs: Vec<RunMetrics>,
}

/// Mean and `sample std / sqrt(n)`.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

impl AlgorithmRow {
    pub fn from_runs(algorithm: &str, seeds: Vec<u64>, runs: Vec<RunMetrics>) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::Data(format!("no runs for {algorithm}")));
        }
        let (rmse, se) = mean_se(&runs.iter().map(|r| r.rmse).collect::<Vec<_>>());
        let k = runs[0].slice_rmse.len();
        let (slice_rmse, slice_se) = (0..k)
            .map(|i| mean_se(&runs.iter().map(|r| r.slice_rmse[i]).collect::<Vec<_>>()))
            .unzip();
        let mut shots: Vec<u32> = runs.iter().map(|r| r.shot_id).collect();
        shots.sort_unstable();
        shots.dedup();
        Ok(AlgorithmRow {
            algorithm: algorithm.to_string(),
            rmse,
            se,
            slice_rmse,
            slice_se,
            seeds,
            shots,
            runs,
        })
    }
}

/// Runs `controller` to the horizon in a fresh environment and returns the log.
pub fn run_episode<T: Scalar>(
    controller: &dyn Controller,
    ens: &DynamicsEnsemble<T>,
    env_cfg: &EnvConfig,
    shot: &Shot,
    target: TargetSchedule,
    seed: u64,
) -> Result<EpisodeLog> {
    let mut env = RolloutEnv::new(ens, env_cfg.clone())?;
    let mut obs = env.reset(shot, target, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, "controller", 0));
    loop {
        let a = controller.act(&obs, &mut rng)?;
        let step = env.step(&a)?;
        obs = step.obs;
        if step.done {
            break;
        }
    }
    Ok(env.take_log())
}

/// Groups shots by session, keeping first-seen order.
pub fn by_session<'a>(shots: &[&'a Shot]) -> Vec<Vec<&'a Shot>> {
    let mut out: Vec<Vec<&Shot>> = Vec::new();
    for &s in shots {
        match out.iter_mut().find(|v| v[0].session_id == s.session_id) {
            Some(v) => v.push(s),
            None => out.push(vec![s]),
        }
    }
    out
}

/// Test-mode evaluation: every reference shot under `n_seeds` sampled targets.
pub fn evaluate_policy<T: Scalar>(
    controller: &dyn Controller,
    ens: &DynamicsEnsemble<T>,
    reference: &[&Shot],
    env_cfg: &EnvConfig,
    n_seeds: usize,
    seed: u64,
) -> Result<AlgorithmRow> {
    if reference.is_empty() {
        return Err(Error::Data("evaluation needs at least one held-out shot".into()));
    }
    if env_cfg.mode != EnvMode::Test {
        return Err(Error::Config("evaluation runs in test mode".into()));
    }
    let sessions = by_session(reference);
    let seeds: Vec<u64> = (0..n_seeds as u64).map(|k| derive(seed, "eval-seed", k)).collect();
    let mut jobs = Vec::new();
    for &s in &seeds {
        for session in &sessions {
            for &shot in session {
                jobs.push((s, session, shot));
            }
        }
    }
    let runs = jobs
        .par_iter()
        .map(|&(s, session, shot)| {
            let horizon = env_cfg.horizon.unwrap_or(shot.flat_top_len());
            let target = sample_training_target(session, shot, horizon, derive(s, "target", shot.shot_id as u64))?;
            let log = run_episode(controller, ens, env_cfg, shot, target.into(), derive(s, "episode", shot.shot_id as u64))?;
            let mut m = run_metrics(&log)?;
            m.seed = s;
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    AlgorithmRow::from_runs(controller.name(), seeds, runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::StepRecord;

    fn log(rot: &[Vec<f64>], tgt: &[Vec<f64>]) -> EpisodeLog {
        EpisodeLog {
            records: rot
                .iter()
                .zip(tgt)
                .enumerate()
                .map(|(k, (r, t))| StepRecord {
                    step: k + 1,
                    state: vec![],
                    action_raw: vec![],
                    action_applied: vec![],
                    reward: 0.0,
                    rotation: r.clone(),
                    target: t.clone(),
                    member: None,
                })
                .collect(),
            ..Default::default()
        }
    }

    #[test]
    fn constant_cases() {
        let five = vec![vec![5.0; GRID]; 4];
        assert_eq!(run_metrics(&log(&five, &five)).unwrap().rmse, 0.0);
        let eight = vec![vec![8.0; GRID]; 4];
        let m = run_metrics(&log(&five, &eight)).unwrap();
        assert!((m.rmse - 3.0).abs() < 1e-12);
        assert!(m.slice_rmse.iter().all(|v| (v - 3.0).abs() < 1e-12));
        let row = AlgorithmRow::from_runs("c", vec![1, 2], vec![m.clone(), m]).unwrap();
        assert_eq!(row.se, 0.0);
    }

    #[test]
    fn two_step_two_point() {
        let m = run_metrics(&log(&[vec![1.0, 2.0], vec![0.0, 4.0]], &[vec![0.0, 0.0], vec![1.0, 1.0]])).unwrap();
        // squared errors 1, 4, 1, 9
        assert!((m.rmse - (15.0f64 / 4.0).sqrt()).abs() < 1e-12);
        assert_eq!(m.mse_per_point, vec![1.0, 6.5]);
    }
}
