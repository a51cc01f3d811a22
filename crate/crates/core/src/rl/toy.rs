//! One-dimensional integrator tracking a step target, for testing learners.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{Env, Step};
use crate::error::{check_dim, Error, Result};

/// `x' = x + a`, `a in [-max_rate, max_rate]`, reward `max(0, 1 - (g - x')^2)`.
///
/// The target is `g1` before `switch` and `g2` from it on; the observation is
/// `[x, g(t), g(t + 1), g(t) - x]`.
#[derive(Clone, Debug)]
pub struct IntegratorEnv {
    pub horizon: usize,
    pub switch: usize,
    pub max_rate: f64,
    pub x: f64,
    pub g1: f64,
    pub g2: f64,
    pub t: usize,
    done: bool,
}

impl IntegratorEnv {
    pub fn new(horizon: usize, max_rate: f64) -> Self {
        IntegratorEnv {
            horizon,
            switch: horizon / 2,
            max_rate,
            x: 0.0,
            g1: 0.0,
            g2: 0.0,
            t: 0,
            done: true,
        }
    }

    pub fn target(&self, t: usize) -> f64 {
        if t < self.switch {
            self.g1
        } else {
            self.g2
        }
    }

    /// Episode parameters drawn by `reset(seed)`: `(x0, g1, g2)`.
    pub fn episode(seed: u64) -> (f64, f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (rng.random_range(-1.0..1.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))
    }

    fn obs(&self) -> Vec<f64> {
        let g = self.target(self.t);
        vec![self.x, g, self.target(self.t + 1), g - self.x]
    }
}

impl Env for IntegratorEnv {
    fn obs_dim(&self) -> usize {
        4
    }

    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![-self.max_rate], vec![self.max_rate])
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let (x0, g1, g2) = Self::episode(seed);
        self.x = x0;
        self.g1 = g1;
        self.g2 = g2;
        self.t = 0;
        self.done = false;
        Ok(self.obs())
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        if self.done {
            return Err(Error::Episode("step called on a finished episode".into()));
        }
        check_dim("action", 1, action.len())?;
        let a = action[0].clamp(-self.max_rate, self.max_rate);
        self.x += a;
        self.t += 1;
        let e = self.target(self.t) - self.x;
        self.done = self.t >= self.horizon;
        Ok(Step {
            obs: self.obs(),
            reward: (1.0 - e * e).max(0.0),
            done: self.done,
        })
    }
}
