use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Blob;
use crate::error::{check_dim, Error, Result};
use crate::rpnn::{ensemble::mean_of_means, DynamicsEnsemble};
use crate::scalar::Scalar;
use crate::schema::{Profile, ACTION_DIM, GRID, OBS_DIM, POLICY_ACTUATORS, REDUCED_STATE_DIM};
use crate::seeding::derive;
use crate::synth::Shot;

use super::obs::{raw_observation, ActionLimits, ObsNormalizer, ROT_K};
use super::target::{reward, sample_training_target, TargetSchedule};
use super::{Env, Step};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvMode {
    /// One member per episode, sampled next states, observation noise.
    Train,
    /// Ensemble dynamics, no observation noise.
    Test,
}

/// How test mode combines the members.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestDynamics {
    /// Mean of member means (deterministic).
    Mean,
    /// Mean of one Gaussian sample per member.
    SampledMean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub mode: EnvMode,
    pub test_dynamics: TestDynamics,
    /// Episode length in steps; `None` uses the reference shot's flat-top length.
    pub horizon: Option<usize>,
    pub obs_noise: f64,
    pub lookahead: usize,
    pub warmup: usize,
    pub limits: ActionLimits,
}

impl EnvConfig {
    pub fn new(mode: EnvMode, limits: ActionLimits) -> Self {
        EnvConfig {
            mode,
            test_dynamics: TestDynamics::Mean,
            horizon: None,
            obs_noise: 0.1,
            lookahead: 10,
            warmup: 10,
            limits,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Normalized reduced state after the step.
    pub state: Vec<f64>,
    pub action_raw: Vec<f64>,
    pub action_applied: Vec<f64>,
    pub reward: f64,
    /// Rotation profile after the step and the target it is scored against.
    pub rotation: Vec<f64>,
    pub target: Vec<f64>,
    pub member: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub seed: u64,
    pub shot_id: u32,
    pub initial_rotation: Vec<f64>,
    pub records: Vec<StepRecord>,
}

impl EpisodeLog {
    /// Episode return recomputed from the logged profiles.
    pub fn recompute_return(&self) -> f64 {
        self.records.iter().map(|r| reward(&r.rotation, &r.target)).sum()
    }

    /// Row-major `steps x (1 + 25 + 4 + 4 + 1 + 33 + 33 + 1)` blob.
    pub fn to_blob(&self) -> Blob {
        let mut data = Vec::new();
        for r in &self.records {
            data.push(r.step as f64);
            data.extend(&r.state);
            data.extend(&r.action_raw);
            data.extend(&r.action_applied);
            data.push(r.reward);
            data.extend(&r.rotation);
            data.extend(&r.target);
            data.push(r.member.map_or(-1.0, |m| m as f64));
        }
        Blob::new("episode", &data)
            .with("seed", self.seed)
            .with("shot_id", self.shot_id)
            .with("steps", self.records.len())
            .with("columns", "step,state[25],action_raw[4],action_applied[4],reward,rotation[33],target[33],member")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepInfo {
    pub member: Option<usize>,
    pub applied: [f64; ACTION_DIM],
    pub rotation: Vec<f64>,
    pub target: Vec<f64>,
}

/// Autoregressive environment over a learned dynamics ensemble.
pub struct RolloutEnv<'a, T> {
    ens: &'a DynamicsEnsemble<T>,
    cfg: EnvConfig,
    obs_norm: ObsNormalizer,
    shot: Option<&'a Shot>,
    target: TargetSchedule,
    horizon: usize,
    z: Vec<f64>,
    hiddens: Vec<Array2<T>>,
    member: Option<usize>,
    t: usize,
    last_action: [f64; ACTION_DIM],
    rng: ChaCha8Rng,
    done: bool,
    ret: f64,
    log: EpisodeLog,
}

impl<'a, T: Scalar> RolloutEnv<'a, T> {
    pub fn new(ens: &'a DynamicsEnsemble<T>, cfg: EnvConfig) -> Result<Self> {
        if ens.is_empty() {
            return Err(Error::Config("environment needs a non-empty ensemble".into()));
        }
        Ok(RolloutEnv {
            obs_norm: ObsNormalizer::from_scaling(&ens.scaling),
            ens,
            cfg,
            shot: None,
            target: TargetSchedule {
                levels: vec![vec![0.0; GRID]],
                switches: vec![],
            },
            horizon: 0,
            z: vec![0.0; REDUCED_STATE_DIM],
            hiddens: Vec::new(),
            member: None,
            t: 0,
            last_action: [0.0; ACTION_DIM],
            rng: ChaCha8Rng::seed_from_u64(0),
            done: true,
            ret: 0.0,
            log: EpisodeLog::default(),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn obs_normalizer(&self) -> &ObsNormalizer {
        &self.obs_norm
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn member(&self) -> Option<usize> {
        self.member
    }

    pub fn episode_return(&self) -> f64 {
        self.ret
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    pub fn take_log(&mut self) -> EpisodeLog {
        std::mem::take(&mut self.log)
    }

    pub fn hiddens(&self) -> &[Array2<T>] {
        &self.hiddens
    }

    /// Starts an episode at the reference shot's flat-top start.
    pub fn reset(&mut self, shot: &'a Shot, target: impl Into<TargetSchedule>, seed: u64) -> Result<Vec<f64>> {
        let (start, end) = shot.flat_top;
        let horizon = self.cfg.horizon.unwrap_or(end - start);
        if start < self.cfg.warmup || start + horizon > shot.len() || horizon == 0 {
            return Err(Error::Episode(format!(
                "shot {} (flat-top {:?}, {} frames) cannot host warmup {} and horizon {horizon}",
                shot.shot_id,
                shot.flat_top,
                shot.len(),
                self.cfg.warmup
            )));
        }
        let target = target.into();
        self.rng = ChaCha8Rng::seed_from_u64(derive(seed, "episode", 0));
        self.member = match self.cfg.mode {
            EnvMode::Train => Some(self.rng.random_range(0..self.ens.len())),
            EnvMode::Test => None,
        };
        let codec = &self.ens.codec;
        let zs = self
            .ens
            .scaling
            .state
            .apply(codec.encode_rows(shot.states.slice(ndarray::s![start - self.cfg.warmup..=start, ..]))?.view())?;
        self.hiddens = vec![self.ens.zero_hidden(); self.ens.len()];
        for w in 0..self.cfg.warmup {
            let f = start - self.cfg.warmup + w;
            let x = self.ens.input(zs.row(w).as_slice().unwrap(), shot.actuators.row(f).as_slice().unwrap());
            for i in 0..self.ens.len() {
                if self.member.is_none_or(|m| m == i) {
                    let h = std::mem::take(&mut self.hiddens[i]);
                    self.hiddens[i] = self.ens.advance(i, h, &x)?;
                }
            }
        }
        self.z = zs.row(self.cfg.warmup).to_vec();
        let prev: Vec<f64> = POLICY_ACTUATORS.iter().map(|&c| shot.actuators[(start - 1, c)]).collect();
        self.last_action = self.cfg.limits.clip(&prev);
        self.shot = Some(shot);
        self.target = target;
        self.horizon = horizon;
        self.t = 0;
        self.done = false;
        self.ret = 0.0;
        self.log = EpisodeLog {
            seed,
            shot_id: shot.shot_id,
            initial_rotation: self.rotation()?,
            records: Vec::with_capacity(horizon),
        };
        self.observe()
    }

    fn rotation_coeffs(&self) -> [f64; ROT_K] {
        let r = Profile::Rotation.reduced_range();
        let st = &self.ens.scaling.state;
        std::array::from_fn(|k| self.z[r.start + k] * st.std[r.start + k] + st.mean[r.start + k])
    }

    /// Current 33-point rotation profile in physical units.
    pub fn rotation(&self) -> Result<Vec<f64>> {
        let c = self.rotation_coeffs();
        Ok(self
            .ens
            .codec
            .rotation()
            .from_components(ndarray::ArrayView1::from(&c[..]))?
            .to_vec())
    }

    fn target_coeffs(&self, step: usize) -> Result<Vec<f64>> {
        Ok(self
            .ens
            .codec
            .rotation()
            .to_components(ndarray::ArrayView1::from(self.target.target_at(step)))?
            .to_vec())
    }

    /// Observation before noise, in raw units.
    pub fn raw_observation(&self) -> Result<[f64; OBS_DIM]> {
        Ok(raw_observation(
            &self.last_action,
            &self.rotation_coeffs(),
            &self.target_coeffs(self.t)?,
            &self.target_coeffs(self.t + self.cfg.lookahead)?,
        ))
    }

    fn observe(&mut self) -> Result<Vec<f64>> {
        let mut o = self.obs_norm.normalize(&self.raw_observation()?)?;
        if self.cfg.mode == EnvMode::Train && self.cfg.obs_noise > 0.0 {
            for v in o.iter_mut() {
                let e: f64 = self.rng.sample(StandardNormal);
                *v += self.cfg.obs_noise * e;
            }
        }
        Ok(o)
    }

    pub fn step_with_info(&mut self, action: &[f64]) -> Result<(Step, StepInfo)> {
        if self.done {
            return Err(Error::Episode("step called on a finished episode".into()));
        }
        check_dim("action", ACTION_DIM, action.len())?;
        let shot = self.shot.expect("reset before step");
        let frame = shot.flat_top.0 + self.t;
        let applied = self.cfg.limits.apply(&self.last_action, action);
        let mut acts = shot.actuators.row(frame).to_vec();
        for (k, &c) in POLICY_ACTUATORS.iter().enumerate() {
            acts[c] = applied[k];
        }
        let x = self.ens.input(&self.z, &acts);
        let next = match (self.cfg.mode, self.member) {
            (EnvMode::Train, Some(m)) => {
                let h = std::mem::take(&mut self.hiddens[m]);
                let p = self.ens.predict_member(m, h, &x)?;
                let z = p.sample(&self.z, &mut self.rng);
                self.hiddens[m] = p.hidden;
                z
            }
            _ => {
                let preds = self.ens.predict_all(&mut self.hiddens, &x)?;
                match self.cfg.test_dynamics {
                    TestDynamics::Mean => {
                        let m = mean_of_means(&preds);
                        self.z.iter().zip(&m).map(|(a, b)| a + b).collect()
                    }
                    TestDynamics::SampledMean => {
                        let n = preds.len() as f64;
                        let mut acc = vec![0.0; REDUCED_STATE_DIM];
                        for p in &preds {
                            for (a, s) in acc.iter_mut().zip(p.sample(&self.z, &mut self.rng)) {
                                *a += s / n;
                            }
                        }
                        acc
                    }
                }
            }
        };
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("rollout state"));
        }
        self.z = next;
        self.last_action = applied;
        self.t += 1;
        let rotation = self.rotation()?;
        let target = self.target.target_at(self.t).to_vec();
        let r = reward(&rotation, &target);
        self.ret += r;
        self.done = self.t >= self.horizon;
        self.log.records.push(StepRecord {
            step: self.t,
            state: self.z.clone(),
            action_raw: action.to_vec(),
            action_applied: applied.to_vec(),
            reward: r,
            rotation: rotation.clone(),
            target: target.clone(),
            member: self.member,
        });
        let obs = self.observe()?;
        Ok((
            Step {
                obs,
                reward: r,
                done: self.done,
            },
            StepInfo {
                member: self.member,
                applied,
                rotation,
                target,
            },
        ))
    }

    pub fn step(&mut self, action: &[f64]) -> Result<Step> {
        self.step_with_info(action).map(|(s, _)| s)
    }
}

/// Training tasks: a random reference shot and a target drawn from its session per reset.
pub struct TaskEnv<'a, T> {
    pub env: RolloutEnv<'a, T>,
    sessions: Vec<Vec<&'a Shot>>,
}

impl<'a, T: Scalar> TaskEnv<'a, T> {
    pub fn new(ens: &'a DynamicsEnsemble<T>, cfg: EnvConfig, shots: &[&'a Shot]) -> Result<Self> {
        let mut sessions: Vec<Vec<&Shot>> = Vec::new();
        for &s in shots {
            match sessions.iter_mut().find(|v| v[0].session_id == s.session_id) {
                Some(v) => v.push(s),
                None => sessions.push(vec![s]),
            }
        }
        sessions.retain(|v| v.len() >= 2);
        if sessions.is_empty() {
            return Err(Error::Data("no session with at least two shots".into()));
        }
        Ok(TaskEnv {
            env: RolloutEnv::new(ens, cfg)?,
            sessions,
        })
    }
}

impl<T: Scalar> Env for TaskEnv<'_, T> {
    fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let l = &self.env.cfg.limits;
        (l.low.to_vec(), l.high.to_vec())
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, "task", 0));
        let session = &self.sessions[rng.random_range(0..self.sessions.len())];
        let shot = session[rng.random_range(0..session.len())];
        let horizon = self.env.cfg.horizon.unwrap_or(shot.flat_top.1 - shot.flat_top.0);
        let target = sample_training_target(session, shot, horizon, seed)?;
        self.env.reset(shot, target, seed)
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        self.env.step(action)
    }
}
