use log::info;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::Env;
use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, Activation, AdamConfig, AdamState, Mlp, ParamSet};
use crate::seeding::derive;

use super::gae::gae_segments;
use super::policy::{gaussian_log_prob, Policy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub n_envs: usize,
    pub n_steps: usize,
    /// Weight of the entropy bonus on the squashed action, tanh correction included.
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub lr: f64,
    pub total_steps: usize,
    /// Multiplies environment rewards before advantage estimation.
    pub reward_scale: f64,
    pub max_grad_norm: f64,
    pub critic_hidden: Vec<usize>,
    pub log_std_min: f64,
    pub log_std_max: f64,
    /// Bootstrap from the value of the final observation when an episode ends
    /// (time-limit truncation) instead of treating it as terminal.
    pub truncation_bootstrap: bool,
    /// Evaluate every this many iterations; 0 keeps the last iterate.
    pub eval_every: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            epochs: 10,
            minibatch: 256,
            n_envs: 16,
            n_steps: 128,
            ent_coef: 1e-3,
            vf_coef: 0.5,
            lr: 3e-4,
            total_steps: 1_000_000,
            reward_scale: 1.0,
            max_grad_norm: 0.5,
            critic_hidden: vec![256, 256],
            log_std_min: -5.0,
            log_std_max: 0.5,
            truncation_bootstrap: true,
            eval_every: 10,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(self.gamma) || !unit(self.lambda) {
            return Err(Error::Config("ppo gamma and lambda must lie in (0, 1]".into()));
        }
        if self.n_envs == 0 || self.n_steps == 0 || self.minibatch == 0 || self.epochs == 0 {
            return Err(Error::Config("ppo batch sizes and epochs must be positive".into()));
        }
        if !(self.clip > 0.0) || !(self.lr > 0.0) || !(self.reward_scale > 0.0) {
            return Err(Error::Config("ppo clip, lr and reward_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn iterations(&self) -> usize {
        self.total_steps.div_ceil(self.n_envs * self.n_steps).max(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpoIteration {
    pub iteration: usize,
    pub env_steps: usize,
    pub episodes: usize,
    /// Over episodes finished in this iteration; NaN when none finished.
    pub return_mean: f64,
    pub return_std: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub eval: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoLog {
    pub iterations: Vec<PpoIteration>,
    pub best_iteration: Option<usize>,
    pub best_eval: Option<f64>,
}

impl PpoLog {
    /// Learning curve as CSV text.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,env_steps,episodes,return_mean,return_std,approx_kl,clip_fraction,value_loss,entropy,eval\n");
        for it in &self.iterations {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                it.iteration,
                it.env_steps,
                it.episodes,
                it.return_mean,
                it.return_std,
                it.approx_kl,
                it.clip_fraction,
                it.value_loss,
                it.entropy,
                it.eval.map_or(String::new(), |v| v.to_string())
            ));
        }
        s
    }
}

/// Surrogate gradient with respect to the new log-probability of one sample.
///
/// Returns zero when the clipped branch is active, i.e. the ratio has moved
/// beyond `1 +- clip` in the direction the advantage favours.
pub fn clipped_surrogate_grad(ratio: f64, advantage: f64, clip: f64) -> f64 {
    let clipped = (advantage > 0.0 && ratio > 1.0 + clip) || (advantage < 0.0 && ratio < 1.0 - clip);
    if clipped {
        0.0
    } else {
        -advantage * ratio
    }
}

/// Clipped surrogate loss of one sample (to be minimized).
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> f64 {
    -(ratio * advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * advantage)
}

struct Worker<E> {
    env: E,
    index: u64,
    rng: ChaCha8Rng,
    obs: Vec<f64>,
    episode: u64,
    ep_return: f64,
}

#[derive(Default)]
struct Segment {
    obs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    noise: Vec<Vec<f64>>,
    logp: Vec<f64>,
    rewards: Vec<f64>,
    ends: Vec<bool>,
    /// Observations whose value bootstraps a segment end, by step index.
    boot: Vec<(usize, Option<Vec<f64>>)>,
    finished: Vec<f64>,
}

impl<E: Env> Worker<E> {
    fn reset(&mut self, seed: u64) -> Result<()> {
        self.obs = self.env.reset(derive(seed, "ppo-episode", (self.index << 32) | self.episode))?;
        self.episode += 1;
        self.ep_return = 0.0;
        Ok(())
    }

    fn collect(&mut self, policy: &Policy, steps: usize, seed: u64, bootstrap: bool) -> Result<Segment> {
        let mut seg = Segment::default();
        for t in 0..steps {
            let s = policy.sample(&self.obs, &mut self.rng)?;
            let step = self.env.step(&s.action)?;
            if !step.reward.is_finite() {
                return Err(Error::NonFinite("reward"));
            }
            seg.obs.push(std::mem::replace(&mut self.obs, step.obs));
            seg.pre.push(s.pre_squash);
            seg.noise.push(s.noise);
            seg.logp.push(s.log_prob);
            seg.rewards.push(step.reward);
            self.ep_return += step.reward;
            let last = t + 1 == steps;
            seg.ends.push(step.done || last);
            if step.done {
                seg.boot.push((t, bootstrap.then(|| self.obs.clone())));
                seg.finished.push(self.ep_return);
                self.reset(seed)?;
            } else if last {
                seg.boot.push((t, Some(self.obs.clone())));
            }
        }
        Ok(seg)
    }
}

fn rows(v: &[Vec<f64>]) -> Array2<f64> {
    let d = v.first().map_or(0, Vec::len);
    Array2::from_shape_vec((v.len(), d), v.concat()).expect("rectangular rows")
}

fn values(critic: &Mlp<f64>, obs: &[Vec<f64>]) -> Result<Vec<f64>> {
    if obs.is_empty() {
        return Ok(Vec::new());
    }
    Ok(critic.forward(rows(obs).view())?.column(0).to_vec())
}

/// Trains `policy` with clipped-surrogate PPO and GAE.
///
/// `make_env(i)` builds the i-th training environment. `evaluate` scores a
/// policy (higher is better); the best-scoring checkpoint is returned.
pub fn ppo_train<E, F>(
    make_env: F,
    mut policy: Policy,
    cfg: &PpoConfig,
    seed: u64,
    evaluate: &mut dyn FnMut(&Policy) -> Result<f64>,
) -> Result<(Policy, PpoLog)>
where
    E: Env + Send,
    F: Fn(usize) -> Result<E>,
{
    cfg.validate()?;
    let obs_dim = policy.obs_dim();
    let act_dim = policy.action_dim();
    let mut sizes = vec![obs_dim];
    sizes.extend(&cfg.critic_hidden);
    sizes.push(1);
    let mut critic = Mlp::<f64>::new(&sizes, Activation::Tanh, Activation::Identity, derive(seed, "critic", 0))?;
    let adam = |lr| AdamConfig {
        lr,
        ..Default::default()
    };
    let mut actor_opt = AdamState::new(policy.actor.param_count(), adam(cfg.lr));
    let mut critic_opt = AdamState::new(critic.param_count(), adam(cfg.lr));
    let mut log_std = ParamSet::<f64>::new();
    log_std.alloc("log_std", 1, act_dim);
    log_std.load(&policy.log_std)?;
    let mut std_opt = AdamState::new(act_dim, adam(cfg.lr));

    let mut workers = Vec::with_capacity(cfg.n_envs);
    for i in 0..cfg.n_envs {
        let mut w = Worker {
            env: make_env(i)?,
            index: i as u64,
            rng: ChaCha8Rng::seed_from_u64(derive(seed, "ppo-actions", i as u64)),
            obs: Vec::new(),
            episode: 0,
            ep_return: 0.0,
        };
        w.reset(seed)?;
        workers.push(w);
    }
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive(seed, "ppo-shuffle", 0));
    let mut log = PpoLog::default();
    let mut best: Option<(f64, Policy)> = None;
    let iterations = cfg.iterations();
    let mut env_steps = 0;

    for iteration in 0..iterations {
        let segments: Vec<Segment> = workers
            .par_iter_mut()
            .map(|w| w.collect(&policy, cfg.n_steps, seed, cfg.truncation_bootstrap))
            .collect::<Result<_>>()?;
        env_steps += cfg.n_envs * cfg.n_steps;

        let mut all_obs = Vec::new();
        let mut all_pre = Vec::new();
        let mut all_noise = Vec::new();
        let mut all_logp = Vec::new();
        let mut all_adv = Vec::new();
        let mut all_ret = Vec::new();
        let mut finished = Vec::new();
        for seg in segments {
            let v = values(&critic, &seg.obs)?;
            let mut next: Vec<f64> = (0..seg.obs.len()).map(|t| v.get(t + 1).copied().unwrap_or(0.0)).collect();
            let boot_obs: Vec<Vec<f64>> = seg.boot.iter().filter_map(|(_, o)| o.clone()).collect();
            let boot_v = values(&critic, &boot_obs)?;
            let mut k = 0;
            for (t, o) in &seg.boot {
                next[*t] = if o.is_some() {
                    k += 1;
                    boot_v[k - 1]
                } else {
                    0.0
                };
            }
            let r: Vec<f64> = seg.rewards.iter().map(|r| r * cfg.reward_scale).collect();
            let adv = gae_segments(&r, &v, &next, &seg.ends, cfg.gamma, cfg.lambda)?;
            all_ret.extend(adv.iter().zip(&v).map(|(a, v)| a + v));
            all_adv.extend(adv);
            all_obs.extend(seg.obs);
            all_pre.extend(seg.pre);
            all_noise.extend(seg.noise);
            all_logp.extend(seg.logp);
            finished.extend(seg.finished);
        }
        let n = all_adv.len();
        let mean = all_adv.iter().sum::<f64>() / n as f64;
        let std = (all_adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        for a in &mut all_adv {
            *a = (*a - mean) / (std + 1e-8);
        }

        let (mut kl_sum, mut clip_count, mut vloss_sum, mut count) = (0.0, 0usize, 0.0, 0usize);
        let mut idx: Vec<usize> = (0..n).collect();
        for _ in 0..cfg.epochs {
            idx.shuffle(&mut shuffle_rng);
            for chunk in idx.chunks(cfg.minibatch) {
                let b = chunk.len() as f64;
                let obs = rows(&chunk.iter().map(|&i| all_obs[i].clone()).collect::<Vec<_>>());
                let (means, cache) = policy.actor.forward_cached(obs.clone())?;
                let ls = log_std.values().to_vec();
                let mut dmean = Array2::<f64>::zeros(means.raw_dim());
                let mut dls = vec![0.0; act_dim];
                for (r, &i) in chunk.iter().enumerate() {
                    let m = means.row(r).to_vec();
                    let new_lp = gaussian_log_prob(&all_pre[i], &m, &ls);
                    let ratio = (new_lp - all_logp[i]).exp();
                    if !ratio.is_finite() {
                        return Err(Error::Diverged {
                            epoch: iteration,
                            member: None,
                        });
                    }
                    kl_sum += all_logp[i] - new_lp;
                    if (ratio - 1.0).abs() > cfg.clip {
                        clip_count += 1;
                    }
                    count += 1;
                    let g = clipped_surrogate_grad(ratio, all_adv[i], cfg.clip) / b;
                    for k in 0..act_dim {
                        let sigma2 = (2.0 * ls[k]).exp();
                        let d = all_pre[i][k] - m[k];
                        dmean[(r, k)] = g * d / sigma2;
                        dls[k] += g * (d * d / sigma2 - 1.0);
                        // Squash correction of the entropy, reparameterized with the stored noise.
                        let e = all_noise[i][k];
                        let sigma = ls[k].exp();
                        let th = (m[k] + sigma * e).tanh();
                        dmean[(r, k)] += 2.0 * cfg.ent_coef * th / b;
                        dls[k] += 2.0 * cfg.ent_coef * th * sigma * e / b;
                    }
                }
                for d in &mut dls {
                    *d -= cfg.ent_coef;
                }
                let mut grads = policy.actor.params.zeros_like();
                policy.actor.backward(&cache, &dmean, &mut grads);
                let mut joint: Vec<f64> = grads.iter().chain(&dls).copied().collect();
                clip_grad_norm(&mut joint, cfg.max_grad_norm);
                let (ga, gs) = joint.split_at(grads.len());
                actor_opt.update(&mut policy.actor.params, ga)?;
                std_opt.update(&mut log_std, gs)?;
                for v in log_std.values_mut() {
                    *v = v.clamp(cfg.log_std_min, cfg.log_std_max);
                }

                let (vpred, vcache) = critic.forward_cached(obs)?;
                let mut dv = Array2::<f64>::zeros(vpred.raw_dim());
                for (r, &i) in chunk.iter().enumerate() {
                    let e = vpred[(r, 0)] - all_ret[i];
                    vloss_sum += e * e;
                    dv[(r, 0)] = cfg.vf_coef * 2.0 * e / b;
                }
                let mut cg = critic.params.zeros_like();
                critic.backward(&vcache, &dv, &mut cg);
                clip_grad_norm(&mut cg, cfg.max_grad_norm);
                critic_opt.update(&mut critic.params, &cg)?;
            }
        }
        policy.log_std = log_std.values().to_vec();
        if policy.actor.params.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                epoch: iteration,
                member: None,
            });
        }

        let eval = if cfg.eval_every > 0 && ((iteration + 1) % cfg.eval_every == 0 || iteration + 1 == iterations) {
            let score = evaluate(&policy)?;
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, policy.clone()));
                log.best_iteration = Some(iteration);
                log.best_eval = Some(score);
            }
            Some(score)
        } else {
            None
        };
        let (rm, rs) = mean_std(&finished);
        let it = PpoIteration {
            iteration,
            env_steps,
            episodes: finished.len(),
            return_mean: rm,
            return_std: rs,
            approx_kl: kl_sum / count.max(1) as f64,
            clip_fraction: clip_count as f64 / count.max(1) as f64,
            value_loss: vloss_sum / count.max(1) as f64,
            entropy: policy.entropy(),
            eval,
        };
        info!(
            "ppo iter {iteration}: return {:.4} ({} episodes) kl {:.4} clip {:.3} vloss {:.4} eval {:?}",
            it.return_mean, it.episodes, it.approx_kl, it.clip_fraction, it.value_loss, it.eval
        );
        log.iterations.push(it);
    }
    let policy = best.map_or(policy, |(_, p)| p);
    Ok((policy, log))
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}
