use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::derive;
use crate::synth::Shot;

/// Session-level train/validation/test partition, listed by shot id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub train_sessions: Vec<u32>,
    pub val_sessions: Vec<u32>,
    pub test_sessions: Vec<u32>,
    pub train: Vec<u32>,
    pub val: Vec<u32>,
    pub test: Vec<u32>,
}

impl SplitSpec {
    pub fn is_disjoint(&self) -> bool {
        let a: BTreeSet<_> = self.train_sessions.iter().collect();
        let b: BTreeSet<_> = self.val_sessions.iter().collect();
        let c: BTreeSet<_> = self.test_sessions.iter().collect();
        a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c)
    }

    pub fn select<'a>(ids: &[u32], shots: &'a [Shot]) -> Vec<&'a Shot> {
        ids.iter()
            .filter_map(|id| shots.iter().find(|s| s.shot_id == *id))
            .collect()
    }
}

fn count_for(fraction: f64, n: usize) -> usize {
    if fraction <= 0.0 {
        0
    } else {
        ((fraction * n as f64).round() as usize).max(1)
    }
}

/// Partitions whole sessions; shots of one session never straddle two splits.
pub fn split_corpus(shots: &[Shot], val_fraction: f64, test_fraction: f64, seed: u64) -> Result<SplitSpec> {
    if !(0.0..=1.0).contains(&val_fraction)
        || !(0.0..=1.0).contains(&test_fraction)
        || val_fraction + test_fraction > 1.0
    {
        return Err(Error::Config(format!(
            "split fractions {val_fraction} + {test_fraction} must lie in [0, 1]"
        )));
    }
    let sessions: Vec<u32> = shots
        .iter()
        .map(|s| s.session_id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let n = sessions.len();
    let n_val = count_for(val_fraction, n);
    let n_test = count_for(test_fraction, n);
    if n_val + n_test >= n {
        return Err(Error::Data(format!(
            "{n} sessions are too few for {n_val} validation and {n_test} test sessions plus training"
        )));
    }
    let mut order = sessions;
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, "split", 0));
    order.shuffle(&mut rng);
    let mut val_sessions = order[..n_val].to_vec();
    let mut test_sessions = order[n_val..n_val + n_test].to_vec();
    let mut train_sessions = order[n_val + n_test..].to_vec();
    val_sessions.sort_unstable();
    test_sessions.sort_unstable();
    train_sessions.sort_unstable();
    let ids_of = |set: &[u32]| -> Vec<u32> {
        shots
            .iter()
            .filter(|s| set.contains(&s.session_id))
            .map(|s| s.shot_id)
            .collect()
    };
    Ok(SplitSpec {
        seed,
        train: ids_of(&train_sessions),
        val: ids_of(&val_sessions),
        test: ids_of(&test_sessions),
        train_sessions,
        val_sessions,
        test_sessions,
    })
}

/// N draws with replacement from the N training ids.
pub fn bootstrap_resample(ids: &[u32], member_seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(member_seed, "bootstrap", 0));
    (0..ids.len()).map(|_| ids[rng.random_range(0..ids.len())]).collect()
}

/// Seed for ensemble member `member` under a pipeline seed.
pub fn member_seed(seed: u64, member: usize) -> u64 {
    derive(seed, "member", member as u64)
}
