mod common;

use common::fixture;
use ndarray::Array1;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rotctl::env::*;
use rotctl::schema::{ACTION_DIM, GRID, OBS_DIM};
use rotctl::synth::Shot;

fn cfg(mode: EnvMode, horizon: usize) -> EnvConfig {
    EnvConfig {
        horizon: Some(horizon),
        ..EnvConfig::new(mode, fixture().limits.clone())
    }
}

fn target_for(shot: &Shot) -> TargetSpec {
    let (a, b) = shot.flat_top;
    TargetSpec::new(shot.rotation(a + 5).to_vec(), shot.rotation(b - 5).to_vec(), 12).unwrap()
}

fn actions(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let l = &fixture().limits;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..ACTION_DIM).map(|k| rng.random_range(l.low[k]..l.high[k])).collect())
        .collect()
}

fn run(env: &mut RolloutEnv<'static, f64>, shot: &'static Shot, seed: u64, acts: &[Vec<f64>]) -> EpisodeLog {
    env.reset(shot, target_for(shot), seed).unwrap();
    for a in acts {
        if env.step(a).unwrap().done {
            break;
        }
    }
    env.take_log()
}

#[test]
fn train_mode_members_are_uniform() {
    let f = fixture();
    let mut env = RolloutEnv::new(&f.ens, cfg(EnvMode::Train, 5)).unwrap();
    let mut counts = [0usize; 5];
    for seed in 0..1000 {
        env.reset(&f.shots[0], target_for(&f.shots[0]), seed).unwrap();
        counts[env.member().unwrap()] += 1;
    }
    for c in counts {
        let p = c as f64 / 1000.0;
        assert!((p - 0.2).abs() <= 0.04, "{counts:?}");
    }
}

#[test]
fn member_stays_fixed_within_an_episode() {
    let f = fixture();
    let mut env = RolloutEnv::new(&f.ens, cfg(EnvMode::Train, 30)).unwrap();
    for seed in 0..5 {
        let log = run(&mut env, &f.shots[1], seed, &actions(30, seed));
        let m = log.records[0].member;
        assert!(m.is_some());
        assert!(log.records.iter().all(|r| r.member == m));
    }
}

#[test]
fn test_mode_is_deterministic() {
    let f = fixture();
    let acts = actions(30, 3);
    let mut env = RolloutEnv::new(&f.ens, cfg(EnvMode::Test, 30)).unwrap();
    let a = run(&mut env, &f.shots[2], 1, &acts);
    let b = run(&mut env, &f.shots[2], 99, &acts);
    assert_eq!(a.records.len(), 30);
    assert_eq!(a.records, b.records);
    assert!(a.records.iter().all(|r| r.member.is_none()));
}

#[test]
fn train_mode_replays_from_its_seed() {
    let f = fixture();
    let acts = actions(20, 4);
    let mut env = RolloutEnv::new(&f.ens, cfg(EnvMode::Train, 20)).unwrap();
    let a = run(&mut env, &f.shots[3], 5, &acts);
    assert_eq!(a, run(&mut env, &f.shots[3], 5, &acts));
    assert_ne!(a.records, run(&mut env, &f.shots[3], 6, &acts).records);
}

#[test]
fn logged_return_recomputes() {
    let f = fixture();
    for mode in [EnvMode::Train, EnvMode::Test] {
        let mut env = RolloutEnv::new(&f.ens, cfg(mode, 40)).unwrap();
        env.reset(&f.shots[0], target_for(&f.shots[0]), 7).unwrap();
        let mut total = 0.0;
        for a in actions(40, 7) {
            let s = env.step(&a).unwrap();
            total += s.reward;
            assert!(s.reward <= 0.0);
        }
        assert!(env.step(&[0.0; ACTION_DIM]).is_err(), "stepping past the horizon");
        assert!((env.log().recompute_return() - env.episode_return()).abs() <= 1e-9);
        assert!((total - env.episode_return()).abs() <= 1e-9);
    }
}

#[test]
fn zero_warmup_leaves_hidden_states_at_zero() {
    let f = fixture();
    let mut c = cfg(EnvMode::Test, 10);
    c.warmup = 0;
    let mut env = RolloutEnv::new(&f.ens, c).unwrap();
    env.reset(&f.shots[0], target_for(&f.shots[0]), 0).unwrap();
    assert_eq!(env.hiddens().len(), 5);
    assert!(env.hiddens().iter().all(|h| h.iter().all(|v| *v == 0.0)));

    let mut env = RolloutEnv::new(&f.ens, cfg(EnvMode::Test, 10)).unwrap();
    env.reset(&f.shots[0], target_for(&f.shots[0]), 0).unwrap();
    assert!(env.hiddens().iter().all(|h| h.iter().any(|v| *v != 0.0)));
}

#[test]
fn initial_rotation_is_the_reconstructed_profile() {
    let f = fixture();
    let shot = &f.shots[4];
    let mut env = RolloutEnv::new(&f.ens, cfg(EnvMode::Test, 10)).unwrap();
    env.reset(shot, target_for(shot), 0).unwrap();
    let basis = f.ens.codec.rotation();
    let raw = Array1::from(shot.rotation(shot.flat_top.0).to_vec());
    let expect = basis.from_components(basis.to_components(raw.view()).unwrap().view()).unwrap();
    let got = env.rotation().unwrap();
    assert_eq!(got.len(), GRID);
    assert!(got.iter().zip(&expect).all(|(a, b)| (a - b).abs() <= 1e-9));
    assert_eq!(env.log().initial_rotation, got);
}

#[test]
fn reset_rejects_an_impossible_horizon() {
    let f = fixture();
    let mut env = RolloutEnv::new(&f.ens, cfg(EnvMode::Test, 100_000)).unwrap();
    assert!(env.reset(&f.shots[0], target_for(&f.shots[0]), 0).is_err());
}

#[test]
fn reward_of_a_single_offset_point() {
    let z = vec![0.0; GRID];
    let mut t = z.clone();
    t[20] = 2.0;
    assert!((reward(&z, &t) + 4.0 / 33.0).abs() < 1e-15);
    assert_eq!(reward(&t, &t), 0.0);
}

#[test]
fn training_targets_come_from_the_other_shot() {
    let f = fixture();
    let session: Vec<&Shot> = f.shots.iter().filter(|s| s.session_id == f.shots[0].session_id).collect();
    assert_eq!(session.len(), 2);
    let (reference, other) = (session[0], session[1]);
    let rows: Vec<Vec<f64>> = (other.flat_top.0..other.flat_top.1).map(|t| other.rotation(t).to_vec()).collect();
    for seed in 0..50 {
        let t = sample_training_target(&session, reference, 100, seed).unwrap();
        assert!(rows.contains(&t.profile_a) && rows.contains(&t.profile_b));
        let ia = rows.iter().position(|r| *r == t.profile_a).unwrap();
        let ib = rows.iter().rposition(|r| *r == t.profile_b).unwrap();
        assert!(ia <= ib, "profile A comes first");
    }
    assert!(sample_training_target(&session[..1], reference, 100, 0).is_err());
}

#[test]
fn switch_step_is_uniform_over_the_middle() {
    let f = fixture();
    let session: Vec<&Shot> = f.shots.iter().filter(|s| s.session_id == f.shots[0].session_id).collect();
    let mut counts = [0usize; 60];
    let n = 6000;
    for seed in 0..n {
        let s = sample_training_target(&session, session[0], 100, seed).unwrap().switch_step;
        assert!((20..80).contains(&s), "switch {s}");
        counts[s - 20] += 1;
    }
    let e = n as f64 / 60.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    // 99.9th percentile of chi-squared with 59 degrees of freedom
    assert!(chi2 < 98.3, "chi2 {chi2}");
}

proptest! {
    #[test]
    fn applied_actions_respect_bounds_and_slew(
        prev in proptest::array::uniform4(0.0f64..1.0),
        act in proptest::array::uniform4(-50.0f64..50.0),
    ) {
        let l = &fixture().limits;
        let prev: Vec<f64> = (0..ACTION_DIM).map(|k| l.low[k] + prev[k] * (l.high[k] - l.low[k])).collect();
        let applied = l.apply(&prev, &act);
        prop_assert!(l.contains(&prev, &applied));
    }

    #[test]
    fn normalized_error_block_is_target_minus_rotation(
        vals in proptest::collection::vec(-100.0f64..100.0, 16),
    ) {
        let norm = ObsNormalizer::from_scaling(&fixture().ens.scaling);
        let raw = raw_observation(&vals[..4], &vals[4..8], &vals[8..12], &vals[12..16]);
        let o = norm.normalize(&raw).unwrap();
        prop_assert_eq!(o.len(), OBS_DIM);
        for k in 0..4 {
            prop_assert!((o[16 + k] - (o[8 + k] - o[4 + k])).abs() <= 1e-9);
        }
        let back = norm.denormalize(&o);
        prop_assert!(back.iter().zip(&raw).all(|(a, b)| (a - b).abs() <= 1e-9));
    }
}
