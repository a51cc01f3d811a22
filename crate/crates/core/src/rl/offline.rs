use log::info;
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::{raw_observation, reward, ActionLimits, ObsNormalizer};
use crate::error::{check_dim, Error, Result};
use crate::nn::{clip_grad_norm, Activation, AdamConfig, AdamState, Mlp};
use crate::pca::StateCodec;
use crate::schema::{Profile, ACTION_DIM, OBS_DIM, POLICY_ACTUATORS};
use crate::seeding::derive;
use crate::synth::Shot;

use super::policy::Policy;

/// Hindsight relabeling window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelabelConfig {
    pub min_offset: usize,
    pub max_offset: usize,
    /// Relabeled goals drawn per frame.
    pub goals_per_frame: usize,
}

impl Default for RelabelConfig {
    fn default() -> Self {
        RelabelConfig {
            min_offset: 5,
            max_offset: 25,
            goals_per_frame: 1,
        }
    }
}

/// Offline transitions with hindsight goals.
///
/// Observations are normalized exactly as the rollout environment does (noise
/// off); actions are raw, clipped to the action limits.
#[derive(Clone, Debug, PartialEq)]
pub struct OfflineBatch {
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Vec<f64>,
    pub next_obs: Array2<f64>,
    pub dones: Vec<bool>,
    /// `(shot_id, frame, goal_frame)` per row.
    pub origin: Vec<(u32, usize, usize)>,
}

impl OfflineBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

fn policy_actuators(shot: &Shot, frame: usize) -> [f64; ACTION_DIM] {
    std::array::from_fn(|k| shot.actuators[(frame, POLICY_ACTUATORS[k])])
}

/// Builds relabeled transitions from each shot's flat-top.
///
/// For frame `t` a goal frame `t + d` with `d` uniform in the window (and inside
/// the flat-top) supplies both target blocks; the action is the shot's command
/// at `t` and the previous action its command at `t - 1`.
pub fn build_offline(
    shots: &[&Shot],
    codec: &StateCodec,
    obs_norm: &ObsNormalizer,
    limits: &ActionLimits,
    cfg: &RelabelConfig,
    seed: u64,
) -> Result<OfflineBatch> {
    if cfg.min_offset == 0 || cfg.max_offset < cfg.min_offset {
        return Err(Error::Config("relabel window needs 1 <= min_offset <= max_offset".into()));
    }
    let basis = codec.rotation();
    let mut obs = Vec::new();
    let mut next_obs = Vec::new();
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    let mut dones = Vec::new();
    let mut origin = Vec::new();
    for shot in shots {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, "relabel", shot.shot_id as u64));
        let (a, b) = shot.flat_top;
        if a == 0 {
            return Err(Error::Data(format!("shot {} has no frame before its flat-top", shot.shot_id)));
        }
        let coeffs = basis.project_rows(shot.states.slice(ndarray::s![a..b, Profile::Rotation.raw_range()]))?;
        let rot = |f: usize| coeffs.row(f - a).to_vec();
        for t in a..b {
            if t + cfg.min_offset >= b {
                break;
            }
            let hi = cfg.max_offset.min(b - 1 - t);
            for _ in 0..cfg.goals_per_frame {
                let g = t + rng.random_range(cfg.min_offset..=hi);
                let goal = rot(g);
                let prev = limits.clip(&policy_actuators(shot, t - 1));
                let act = limits.clip(&policy_actuators(shot, t));
                obs.extend(obs_norm.normalize(&raw_observation(&prev, &rot(t), &goal, &goal))?);
                next_obs.extend(obs_norm.normalize(&raw_observation(&act, &rot(t + 1), &goal, &goal))?);
                actions.extend(act);
                rewards.push(reward(
                    shot.rotation(t + 1).as_slice().expect("contiguous row"),
                    shot.rotation(g).as_slice().expect("contiguous row"),
                ));
                dones.push(t + 2 == b);
                origin.push((shot.shot_id, t, g));
            }
        }
    }
    if rewards.is_empty() {
        return Err(Error::Data("offline corpus has no usable flat-top frames".into()));
    }
    let n = rewards.len();
    Ok(OfflineBatch {
        obs: Array2::from_shape_vec((n, OBS_DIM), obs).expect("obs rows"),
        actions: Array2::from_shape_vec((n, ACTION_DIM), actions).expect("action rows"),
        rewards,
        next_obs: Array2::from_shape_vec((n, OBS_DIM), next_obs).expect("obs rows"),
        dones,
        origin,
    })
}

/// Behaviour-cloning settings shared by GCIL.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub relabel: RelabelConfig,
}

impl Default for BcConfig {
    fn default() -> Self {
        BcConfig {
            epochs: 30,
            batch_size: 256,
            lr: 1e-3,
            weight_decay: 0.0,
            relabel: RelabelConfig::default(),
        }
    }
}

/// Actions mapped into the squashed unit box, slightly inside it.
pub fn unit_actions(policy: &Policy, actions: &Array2<f64>) -> Array2<f64> {
    let mut y = actions.clone();
    for mut row in y.rows_mut() {
        for (k, v) in row.iter_mut().enumerate() {
            let half = 0.5 * (policy.high[k] - policy.low[k]);
            *v = ((*v - policy.low[k] - half) / half).clamp(-0.999, 0.999);
        }
    }
    y
}

/// Mean squared error between `tanh` of the actor output and unit-box targets.
pub fn bc_loss(policy: &Policy, obs: &Array2<f64>, unit_targets: &Array2<f64>) -> Result<f64> {
    let m = policy.mean_batch(obs.view())?;
    let d = (m.mapv(f64::tanh) - unit_targets).mapv(|v| v * v);
    Ok(d.mean().unwrap_or(0.0))
}

/// Regresses the actor onto `(obs, actions)` in the squashed action space.
pub fn bc_fit(policy: &mut Policy, obs: &Array2<f64>, actions: &Array2<f64>, cfg: &BcConfig, seed: u64) -> Result<Vec<f64>> {
    check_dim("bc observations", policy.obs_dim(), obs.ncols())?;
    check_dim("bc actions", policy.action_dim(), actions.ncols())?;
    check_dim("bc rows", obs.nrows(), actions.nrows())?;
    if obs.nrows() == 0 {
        return Err(Error::Data("behaviour cloning needs at least one sample".into()));
    }
    let y = unit_actions(policy, actions);
    let mut opt = AdamState::new(
        policy.actor.param_count(),
        AdamConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..Default::default()
        },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, "bc", 0));
    let mut idx: Vec<usize> = (0..obs.nrows()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        idx.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in idx.chunks(cfg.batch_size.max(1)) {
            let xb = obs.select(Axis(0), chunk);
            let yb = y.select(Axis(0), chunk);
            let (m, cache) = policy.actor.forward_cached(xb)?;
            let t = m.mapv(f64::tanh);
            let scale = 2.0 / (chunk.len() * policy.action_dim()) as f64;
            let mut dm = &t - &yb;
            total += dm.iter().map(|v| v * v).sum::<f64>();
            ndarray::Zip::from(&mut dm).and(&t).for_each(|d, &tv| *d *= scale * (1.0 - tv * tv));
            let mut grads = policy.actor.params.zeros_like();
            policy.actor.backward(&cache, &dm, &mut grads);
            opt.update(&mut policy.actor.params, &grads)?;
        }
        let loss = total / (obs.nrows() * policy.action_dim()) as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, member: None });
        }
        curve.push(loss);
    }
    Ok(curve)
}

/// Goal-conditioned imitation: behaviour cloning on hindsight-relabeled goals.
pub fn gcil_train(policy: &mut Policy, batch: &OfflineBatch, cfg: &BcConfig, seed: u64) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Data("GCIL needs a non-empty offline corpus".into()));
    }
    let curve = bc_fit(policy, &batch.obs, &batch.actions, cfg, seed)?;
    info!("gcil: final loss {:.5}", curve.last().copied().unwrap_or(f64::NAN));
    Ok(curve)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Td3BcConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub policy_noise: f64,
    pub noise_clip: f64,
    pub policy_delay: usize,
    /// Weight of the behaviour-cloning term against the `|Q|`-normalized value
    /// term; large values approach pure behaviour cloning.
    pub bc_weight: f64,
    pub reward_scale: f64,
    pub critic_hidden: Vec<usize>,
    pub relabel: RelabelConfig,
}

impl Default for Td3BcConfig {
    fn default() -> Self {
        Td3BcConfig {
            steps: 100_000,
            batch_size: 256,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            gamma: 0.99,
            tau: 0.005,
            policy_noise: 0.2,
            noise_clip: 0.5,
            policy_delay: 2,
            bc_weight: 0.4,
            reward_scale: 1.0,
            critic_hidden: vec![256, 256],
            relabel: RelabelConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Td3BcLog {
    pub critic_loss: Vec<f64>,
    pub actor_bc: Vec<f64>,
    pub mean_abs_q: Vec<f64>,
}

/// Twin critics over `[obs, unit action]`.
#[derive(Clone, Debug)]
pub struct Critics {
    pub q: [Mlp<f64>; 2],
    pub target: [Mlp<f64>; 2],
}

impl Critics {
    pub fn new(obs_dim: usize, act_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut sizes = vec![obs_dim + act_dim];
        sizes.extend(hidden);
        sizes.push(1);
        let q1 = Mlp::new(&sizes, Activation::Relu, Activation::Identity, derive(seed, "q", 0))?;
        let q2 = Mlp::new(&sizes, Activation::Relu, Activation::Identity, derive(seed, "q", 1))?;
        Ok(Critics {
            target: [q1.clone(), q2.clone()],
            q: [q1, q2],
        })
    }

    pub fn value(&self, i: usize, obs: &Array2<f64>, unit_act: &Array2<f64>) -> Result<Array1<f64>> {
        let x = ndarray::concatenate(Axis(1), &[obs.view(), unit_act.view()]).expect("same rows");
        Ok(self.q[i].forward(x.view())?.column(0).to_owned())
    }
}

fn soft_update(target: &mut Mlp<f64>, source: &Mlp<f64>, tau: f64) {
    for (t, s) in target.params.values_mut().iter_mut().zip(source.params.values()) {
        *t += tau * (s - *t);
    }
}

fn critic_step(q: &mut Mlp<f64>, opt: &mut AdamState, x: Array2<f64>, y: &Array1<f64>) -> Result<f64> {
    let (pred, cache) = q.forward_cached(x)?;
    let n = y.len() as f64;
    let mut d = Array2::<f64>::zeros(pred.raw_dim());
    let mut loss = 0.0;
    for i in 0..y.len() {
        let e = pred[(i, 0)] - y[i];
        loss += e * e / n;
        d[(i, 0)] = 2.0 * e / n;
    }
    let mut g = q.params.zeros_like();
    q.backward(&cache, &d, &mut g);
    clip_grad_norm(&mut g, 10.0);
    opt.update(&mut q.params, &g)?;
    Ok(loss)
}

/// TD3+BC on an offline batch. Returns the trained critics alongside the log.
pub fn td3bc_train(policy: &mut Policy, batch: &OfflineBatch, cfg: &Td3BcConfig, seed: u64) -> Result<(Critics, Td3BcLog)> {
    if batch.is_empty() {
        return Err(Error::Data("TD3+BC needs a non-empty offline batch".into()));
    }
    if !(cfg.gamma >= 0.0 && cfg.gamma < 1.0) || cfg.policy_delay == 0 {
        return Err(Error::Config("td3bc needs gamma in [0, 1) and policy_delay >= 1".into()));
    }
    let (od, ad) = (policy.obs_dim(), policy.action_dim());
    let mut critics = Critics::new(od, ad, &cfg.critic_hidden, seed)?;
    let mut target_actor = policy.actor.clone();
    let adam = |lr| AdamConfig {
        lr,
        ..Default::default()
    };
    let mut q_opt = [
        AdamState::new(critics.q[0].param_count(), adam(cfg.critic_lr)),
        AdamState::new(critics.q[1].param_count(), adam(cfg.critic_lr)),
    ];
    let mut a_opt = AdamState::new(policy.actor.param_count(), adam(cfg.actor_lr));
    let unit = unit_actions(policy, &batch.actions);
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, "td3bc", 0));
    let noise = Normal::new(0.0, cfg.policy_noise.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let mut log = Td3BcLog::default();
    let n = batch.len();
    for step in 0..cfg.steps {
        let idx: Vec<usize> = (0..cfg.batch_size.min(n).max(1)).map(|_| rng.random_range(0..n)).collect();
        let s = batch.obs.select(Axis(0), &idx);
        let s2 = batch.next_obs.select(Axis(0), &idx);
        let a = unit.select(Axis(0), &idx);

        let mut a2 = target_actor.forward(s2.view())?.mapv(f64::tanh);
        a2.mapv_inplace(|v| (v + noise.sample(&mut rng).clamp(-cfg.noise_clip, cfg.noise_clip)).clamp(-1.0, 1.0));
        let x2 = ndarray::concatenate(Axis(1), &[s2.view(), a2.view()]).expect("same rows");
        let t1 = critics.target[0].forward(x2.view())?;
        let t2 = critics.target[1].forward(x2.view())?;
        let y: Array1<f64> = (0..idx.len())
            .map(|r| {
                let i = idx[r];
                let cont = if batch.dones[i] { 0.0 } else { 1.0 };
                cfg.reward_scale * batch.rewards[i] + cfg.gamma * cont * t1[(r, 0)].min(t2[(r, 0)])
            })
            .collect();
        let x = ndarray::concatenate(Axis(1), &[s.view(), a.view()]).expect("same rows");
        let mut closs = 0.0;
        for k in 0..2 {
            closs += critic_step(&mut critics.q[k], &mut q_opt[k], x.clone(), &y)?;
        }
        if !closs.is_finite() {
            return Err(Error::Diverged { epoch: step, member: None });
        }

        if (step + 1) % cfg.policy_delay == 0 {
            let (m, cache) = policy.actor.forward_cached(s.clone())?;
            let pi = m.mapv(f64::tanh);
            let xq = ndarray::concatenate(Axis(1), &[s.view(), pi.view()]).expect("same rows");
            let (q, qcache) = critics.q[0].forward_cached(xq)?;
            let b = idx.len() as f64;
            let mean_abs_q = q.iter().map(|v| v.abs()).sum::<f64>() / b;
            let lambda = 1.0 / mean_abs_q.max(1e-6);
            let dq = Array2::from_elem(q.raw_dim(), -lambda / b);
            let mut scratch = critics.q[0].params.zeros_like();
            let dx = critics.q[0].backward(&qcache, &dq, &mut scratch);
            let mut dpi = dx.slice(ndarray::s![.., od..]).to_owned();
            let mut bc = 0.0;
            for r in 0..idx.len() {
                for k in 0..ad {
                    let e = pi[(r, k)] - a[(r, k)];
                    bc += e * e / (b * ad as f64);
                    dpi[(r, k)] += cfg.bc_weight * 2.0 * e / (b * ad as f64);
                }
            }
            ndarray::Zip::from(&mut dpi).and(&pi).for_each(|d, &p| *d *= 1.0 - p * p);
            let mut g = policy.actor.params.zeros_like();
            policy.actor.backward(&cache, &dpi, &mut g);
            clip_grad_norm(&mut g, 10.0);
            a_opt.update(&mut policy.actor.params, &g)?;
            for k in 0..2 {
                let src = critics.q[k].clone();
                soft_update(&mut critics.target[k], &src, cfg.tau);
            }
            soft_update(&mut target_actor, &policy.actor, cfg.tau);
            log.actor_bc.push(bc);
            log.mean_abs_q.push(mean_abs_q);
        }
        log.critic_loss.push(closs / 2.0);
        if step % 1000 == 0 {
            info!("td3bc step {step}: critic {:.5} bc {:?}", closs / 2.0, log.actor_bc.last());
        }
    }
    Ok((critics, log))
}
