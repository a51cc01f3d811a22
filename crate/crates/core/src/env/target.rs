use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::GRID;
use crate::seeding::derive;
use crate::synth::Shot;

/// Step-function target: profile A before `switch_step`, B from it onwards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub profile_a: Vec<f64>,
    pub profile_b: Vec<f64>,
    pub switch_step: usize,
}

impl TargetSpec {
    pub fn new(profile_a: Vec<f64>, profile_b: Vec<f64>, switch_step: usize) -> Result<Self> {
        if profile_a.len() != GRID || profile_b.len() != GRID {
            return Err(Error::Dimension {
                context: "target profile",
                expected: GRID,
                got: profile_a.len().min(profile_b.len()),
            });
        }
        if profile_a.iter().chain(&profile_b).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("target profile"));
        }
        Ok(TargetSpec {
            profile_a,
            profile_b,
            switch_step,
        })
    }

    pub fn constant(profile: Vec<f64>) -> Result<Self> {
        Self::new(profile.clone(), profile, 0)
    }

    pub fn target_at(&self, step: usize) -> &[f64] {
        if step < self.switch_step {
            &self.profile_a
        } else {
            &self.profile_b
        }
    }
}

/// Piecewise-constant target with any number of switches, used by the
/// simulated experiments. `levels[0]` holds until `switches[0]`, and so on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSchedule {
    pub levels: Vec<Vec<f64>>,
    pub switches: Vec<usize>,
}

impl TargetSchedule {
    pub fn new(levels: Vec<Vec<f64>>, switches: Vec<usize>) -> Result<Self> {
        if levels.len() != switches.len() + 1 || levels.iter().any(|l| l.len() != GRID) {
            return Err(Error::Config("schedule needs one more level than switches, each of grid length".into()));
        }
        if switches.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config("schedule switches must be non-decreasing".into()));
        }
        Ok(TargetSchedule { levels, switches })
    }

    pub fn target_at(&self, step: usize) -> &[f64] {
        let k = self.switches.iter().take_while(|&&s| step >= s).count();
        &self.levels[k]
    }
}

impl From<TargetSpec> for TargetSchedule {
    fn from(t: TargetSpec) -> Self {
        TargetSchedule {
            levels: vec![t.profile_a, t.profile_b],
            switches: vec![t.switch_step],
        }
    }
}

/// Draws a target from another shot of the reference shot's session.
///
/// Two flat-top frames of the target shot are drawn uniformly; the earlier one is
/// profile A. The switch step is uniform over the middle 60% of the horizon.
pub fn sample_training_target(session: &[&Shot], reference: &Shot, horizon: usize, seed: u64) -> Result<TargetSpec> {
    let others: Vec<&&Shot> = session.iter().filter(|s| s.shot_id != reference.shot_id).collect();
    if others.is_empty() {
        return Err(Error::Data(format!(
            "session of shot {} has no other shot to draw a target from",
            reference.shot_id
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, "target", 0));
    let shot = others[rng.random_range(0..others.len())];
    let (a, b) = shot.flat_top;
    let i = rng.random_range(a..b);
    let j = rng.random_range(a..b);
    let (early, late) = if i <= j { (i, j) } else { (j, i) };
    let lo = (horizon as f64 * 0.2).floor() as usize;
    let hi = ((horizon as f64 * 0.8).ceil() as usize).max(lo + 1);
    let switch_step = rng.random_range(lo..hi);
    TargetSpec::new(shot.rotation(early).to_vec(), shot.rotation(late).to_vec(), switch_step)
}

/// `-(1/33) * sum_j (target_j - rot_j)^2`
pub fn reward(rot: &[f64], target: &[f64]) -> f64 {
    let n = rot.len() as f64;
    -rot.iter().zip(target).map(|(r, t)| (t - r) * (t - r)).sum::<f64>() / n
}
