use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rpnn::DynamicsScaling;
use crate::schema::{Profile, ACTION_DIM, OBS_DIM, POLICY_ACTUATORS};
use crate::synth::Shot;

/// Number of rotation PCA coefficients in each observation block.
pub const ROT_K: usize = 4;

/// Raw observation layout:
/// `[last action (4), rotation (4), target(t) (4), target(t+L) (4), target(t) - rotation (4)]`,
/// profiles as rotation PCA coefficients.
pub fn raw_observation(last_action: &[f64], rot: &[f64], target_now: &[f64], target_ahead: &[f64]) -> [f64; OBS_DIM] {
    let mut o = [0.0; OBS_DIM];
    o[..4].copy_from_slice(last_action);
    o[4..8].copy_from_slice(rot);
    o[8..12].copy_from_slice(target_now);
    o[12..16].copy_from_slice(target_ahead);
    for k in 0..ROT_K {
        o[16 + k] = target_now[k] - rot[k];
    }
    o
}

/// Affine map from raw to normalized observations.
///
/// Profile blocks share the rotation-channel statistics of the dynamics state
/// normalizer; the error block is scaled without shift, so the normalized error
/// block is exactly `target(t) - rotation` in normalized units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObsNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ObsNormalizer {
    pub fn from_scaling(scaling: &DynamicsScaling) -> Self {
        let mut mean = vec![0.0; OBS_DIM];
        let mut std = vec![1.0; OBS_DIM];
        for (k, &c) in POLICY_ACTUATORS.iter().enumerate() {
            mean[k] = scaling.actuator.mean[c];
            std[k] = scaling.actuator.std[c];
        }
        let r = Profile::Rotation.reduced_range();
        for k in 0..ROT_K {
            let (m, s) = (scaling.state.mean[r.start + k], scaling.state.std[r.start + k]);
            for block in 1..4 {
                mean[4 * block + k] = m;
                std[4 * block + k] = s;
            }
            mean[16 + k] = 0.0;
            std[16 + k] = s;
        }
        ObsNormalizer { mean, std }
    }

    pub fn normalize(&self, raw: &[f64]) -> Result<Vec<f64>> {
        check_dim("observation", OBS_DIM, raw.len())?;
        Ok(raw
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }

    pub fn denormalize(&self, obs: &[f64]) -> Vec<f64> {
        obs.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| x * s + m)
            .collect()
    }
}

/// Per-actuator bounds and per-step slew limits for the four policy actuators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionLimits {
    pub low: [f64; ACTION_DIM],
    pub high: [f64; ACTION_DIM],
    pub slew: [f64; ACTION_DIM],
}

pub(crate) fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos - pos.floor());
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

impl ActionLimits {
    /// Bounds from the 1st-99th percentiles of flat-top values, slew from the
    /// 99th percentile of per-frame changes.
    pub fn from_shots(shots: &[&Shot]) -> Result<Self> {
        let mut out = ActionLimits {
            low: [0.0; ACTION_DIM],
            high: [0.0; ACTION_DIM],
            slew: [0.0; ACTION_DIM],
        };
        for (k, &c) in POLICY_ACTUATORS.iter().enumerate() {
            let mut vals = Vec::new();
            let mut steps = Vec::new();
            for s in shots {
                let (a, b) = s.flat_top;
                for f in a..b {
                    vals.push(s.actuators[(f, c)]);
                    if f > a {
                        steps.push((s.actuators[(f, c)] - s.actuators[(f - 1, c)]).abs());
                    }
                }
            }
            if vals.is_empty() || steps.is_empty() {
                return Err(Error::Data("no flat-top frames to derive action limits".into()));
            }
            vals.sort_by(f64::total_cmp);
            steps.sort_by(f64::total_cmp);
            out.low[k] = percentile(&vals, 0.01);
            out.high[k] = percentile(&vals, 0.99);
            if out.high[k] <= out.low[k] {
                out.high[k] = out.low[k] + 1e-3;
            }
            out.slew[k] = percentile(&steps, 0.99).max(1e-3 * (out.high[k] - out.low[k]));
        }
        Ok(out)
    }

    pub fn mid(&self) -> [f64; ACTION_DIM] {
        std::array::from_fn(|k| 0.5 * (self.low[k] + self.high[k]))
    }

    pub fn half_range(&self) -> [f64; ACTION_DIM] {
        std::array::from_fn(|k| 0.5 * (self.high[k] - self.low[k]))
    }

    /// Limits the change from `previous`, then clips to bounds. With `previous`
    /// inside the bounds the result satisfies both limits.
    pub fn apply(&self, previous: &[f64], action: &[f64]) -> [f64; ACTION_DIM] {
        std::array::from_fn(|k| {
            let a = if action[k].is_nan() { previous[k] } else { action[k] };
            let a = a.clamp(previous[k] - self.slew[k], previous[k] + self.slew[k]);
            a.clamp(self.low[k], self.high[k])
        })
    }

    pub fn clip(&self, action: &[f64]) -> [f64; ACTION_DIM] {
        std::array::from_fn(|k| action[k].clamp(self.low[k], self.high[k]))
    }

    pub fn contains(&self, previous: &[f64], applied: &[f64]) -> bool {
        (0..ACTION_DIM).all(|k| {
            applied[k] >= self.low[k] - 1e-12
                && applied[k] <= self.high[k] + 1e-12
                && (applied[k] - previous[k]).abs() <= self.slew[k] + 1e-12
        })
    }
}
