use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::nn::{Activation, Mlp};

/// Actor architecture and exploration noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub hidden: Vec<usize>,
    /// Initial log standard deviation of the pre-squash Gaussian.
    pub init_log_std: f64,
    /// Scale applied to the output layer at initialization.
    pub output_init_scale: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            hidden: vec![256, 256],
            init_log_std: -0.5,
            output_init_scale: 0.01,
        }
    }
}

impl PolicyConfig {
    pub fn desk() -> Self {
        PolicyConfig {
            hidden: vec![64, 64],
            ..Default::default()
        }
    }
}

/// Tanh-squashed Gaussian actor.
///
/// The network reads normalized observations and outputs the pre-squash mean `m`.
/// The deterministic action is `mid + half * tanh(m)`; the stochastic action
/// squashes `u ~ N(m, exp(log_std)^2)` the same way.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub actor: Mlp<f64>,
    pub log_std: Vec<f64>,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    /// Raw-to-normalized observation map, carried for export.
    pub obs_mean: Vec<f64>,
    pub obs_std: Vec<f64>,
    pub deterministic_eval: bool,
}

/// One stochastic draw with what PPO needs to recompute its likelihood.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicySample {
    pub pre_squash: Vec<f64>,
    /// Standard normal draw behind `pre_squash`.
    pub noise: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

impl Policy {
    pub fn new(cfg: &PolicyConfig, obs_dim: usize, low: &[f64], high: &[f64], seed: u64) -> Result<Self> {
        if low.len() != high.len() || low.is_empty() {
            return Err(Error::Config("action bounds must be non-empty and of equal length".into()));
        }
        if low.iter().zip(high).any(|(l, h)| !(h > l)) {
            return Err(Error::Config("action bounds need low < high".into()));
        }
        let mut sizes = vec![obs_dim];
        sizes.extend(&cfg.hidden);
        sizes.push(low.len());
        let mut actor = Mlp::new(&sizes, Activation::Tanh, Activation::Identity, seed)?;
        actor.scale_output_layer(cfg.output_init_scale);
        Ok(Policy {
            actor,
            log_std: vec![cfg.init_log_std; low.len()],
            low: low.to_vec(),
            high: high.to_vec(),
            obs_mean: vec![0.0; obs_dim],
            obs_std: vec![1.0; obs_dim],
            deterministic_eval: true,
        })
    }

    pub fn with_obs_normalizer(mut self, mean: &[f64], std: &[f64]) -> Result<Self> {
        check_dim("observation mean", self.obs_dim(), mean.len())?;
        check_dim("observation std", self.obs_dim(), std.len())?;
        self.obs_mean = mean.to_vec();
        self.obs_std = std.to_vec();
        Ok(self)
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.in_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.low.len()
    }

    pub fn mid(&self) -> Vec<f64> {
        self.low.iter().zip(&self.high).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn half_range(&self) -> Vec<f64> {
        self.low.iter().zip(&self.high).map(|(l, h)| 0.5 * (h - l)).collect()
    }

    /// Maps a pre-squash vector into the action box.
    pub fn squash(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(k, v)| {
                let half = 0.5 * (self.high[k] - self.low[k]);
                (self.low[k] + half + half * v.tanh()).clamp(self.low[k], self.high[k])
            })
            .collect()
    }

    /// Inverse of [`squash`](Self::squash), with targets pulled slightly inside the box.
    pub fn unsquash(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let half = 0.5 * (self.high[k] - self.low[k]);
                let y = ((a - self.low[k] - half) / half).clamp(-0.999, 0.999);
                y.atanh()
            })
            .collect()
    }

    pub fn mean(&self, obs: &[f64]) -> Result<Vec<f64>> {
        check_dim("observation", self.obs_dim(), obs.len())?;
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation"));
        }
        self.actor.forward_one(obs)
    }

    pub fn mean_batch(&self, obs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.actor.forward(obs)
    }

    pub fn deterministic(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.squash(&self.mean(obs)?))
    }

    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<PolicySample> {
        let m = self.mean(obs)?;
        let noise: Vec<f64> = m.iter().map(|_| rng.sample(StandardNormal)).collect();
        let u: Vec<f64> = m
            .iter()
            .zip(&self.log_std)
            .zip(&noise)
            .map(|((mu, ls), e)| mu + ls.exp() * e)
            .collect();
        let log_prob = gaussian_log_prob(&u, &m, &self.log_std);
        Ok(PolicySample {
            action: self.squash(&u),
            pre_squash: u,
            noise,
            log_prob,
        })
    }

    /// Action for a normalized observation; always inside the bounds.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], deterministic: bool, rng: &mut R) -> Result<Vec<f64>> {
        if deterministic {
            self.deterministic(obs)
        } else {
            Ok(self.sample(obs, rng)?.action)
        }
    }

    /// Normalizes a raw observation with the carried constants.
    pub fn normalize(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.obs_mean.iter().zip(&self.obs_std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    /// Entropy of the pre-squash Gaussian.
    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| ls + 0.5 * (LN_2PI + 1.0)).sum()
    }
}

/// Diagonal Gaussian log density of `u` (pre-squash).
pub fn gaussian_log_prob(u: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    u.iter()
        .zip(mean.iter().zip(log_std))
        .map(|(x, (m, ls))| {
            let z = (x - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * LN_2PI
        })
        .sum()
}

/// Something that maps observations to actions during evaluation.
pub trait Controller: Sync {
    fn name(&self) -> &str;
    fn act(&self, obs: &[f64], rng: &mut rand_chacha::ChaCha8Rng) -> Result<Vec<f64>>;
}

/// A policy evaluated on its deterministic path.
pub struct Deterministic<'a> {
    pub name: String,
    pub policy: &'a Policy,
}

impl Controller for Deterministic<'_> {
    fn name(&self) -> &str {
        &self.name
    }

    fn act(&self, obs: &[f64], _rng: &mut rand_chacha::ChaCha8Rng) -> Result<Vec<f64>> {
        self.policy.deterministic(obs)
    }
}

/// Uniformly random actions inside the bounds.
pub struct RandomController {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl Controller for RandomController {
    fn name(&self) -> &str {
        "random"
    }

    fn act(&self, _obs: &[f64], rng: &mut rand_chacha::ChaCha8Rng) -> Result<Vec<f64>> {
        Ok(self.low.iter().zip(&self.high).map(|(l, h)| rng.random_range(*l..*h)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> Policy {
        let cfg = PolicyConfig {
            hidden: vec![8],
            ..Default::default()
        };
        Policy::new(&cfg, 3, &[0.0, -2.0], &[4.0, 2.0], 1).unwrap()
    }

    #[test]
    fn zero_actor_gives_midpoint() {
        let mut p = small();
        p.actor.params.values_mut().iter_mut().for_each(|v| *v = 0.0);
        assert_eq!(p.deterministic(&[1.0, -3.0, 9.0]).unwrap(), vec![2.0, 0.0]);
    }

    #[test]
    fn tiny_std_matches_deterministic() {
        let mut p = small();
        p.log_std = vec![-40.0; 2];
        let obs = [0.3, -0.2, 0.9];
        let d = p.deterministic(&obs).unwrap();
        let s = p.act(&obs, false, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        for (a, b) in d.iter().zip(&s) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(d, p.deterministic(&obs).unwrap());
    }

    #[test]
    fn actions_stay_in_bounds() {
        let mut p = small();
        p.actor.params.values_mut().iter_mut().for_each(|v| *v *= 1e4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for k in 0..50 {
            let obs = [k as f64 * 100.0, -1e6, 3.0];
            for det in [true, false] {
                let a = p.act(&obs, det, &mut rng).unwrap();
                assert!(a[0] >= 0.0 && a[0] <= 4.0 && a[1] >= -2.0 && a[1] <= 2.0);
            }
        }
        assert!(p.act(&[0.0; 2], true, &mut rng).is_err());
    }

    #[test]
    fn unsquash_inverts_inside_box() {
        let p = small();
        let a = p.squash(&[0.4, -1.1]);
        let u = p.unsquash(&a);
        assert!((u[0] - 0.4).abs() < 1e-12 && (u[1] + 1.1).abs() < 1e-12);
    }
}
