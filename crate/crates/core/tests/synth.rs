use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rotctl::synth::*;

const EDGE: usize = 28;
const INNER: usize = 6;

fn quiet(programs: [f64; 4], n_frames: usize) -> ScenarioSpec {
    ScenarioSpec {
        n_frames,
        programs: programs.map(Program::constant),
        noise: 0.0,
        ..Default::default()
    }
}

fn rel_l2(a: &[[f64; 33]], b: &[[f64; 33]]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        for j in 0..33 {
            num += (x[j] - y[j]).powi(2);
            den += y[j].powi(2);
        }
    }
    (num / den).sqrt()
}

#[test]
fn production_step_matches_the_fine_step_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut machines = vec![MachineParams::default()];
    machines.extend((0..4).map(|s| MachineParams::sample(s, &mut rng)));
    for mp in &machines {
        let mut spec = quiet([6.0, 4.0, 1.5, 1.0], 200);
        spec.programs[1] = Program {
            breakpoints: vec![(0, 4.0), (80, 1.0), (120, 7.0)],
        };
        spec.programs[2] = Program {
            breakpoints: vec![(0, 0.5), (100, 3.0)],
        };
        let coarse = integrate_rotation(&spec, mp, SUBSTEPS_PER_FRAME).unwrap();
        let fine = integrate_rotation(&spec, mp, 200).unwrap();
        let e = rel_l2(&coarse, &fine);
        assert!(e <= 0.01, "session {}: relative L2 {e}", mp.session_id);
    }
}

#[test]
fn constant_torque_steady_state_is_core_peaked() {
    let mp = MachineParams::default();
    let traj = integrate_rotation(&quiet([0.0, 4.0, 0.0, 0.0], 400), &mp, SUBSTEPS_PER_FRAME).unwrap();
    let v = traj.last().unwrap();
    let prev = &traj[traj.len() - 11];
    for j in 0..33 {
        assert!((v[j] - prev[j]).abs() <= 1e-3 * v[0].abs().max(1.0), "not steady at {j}");
    }
    let peak = (0..33).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
    assert!((peak as f64 / 32.0) <= mp.nbi_center + mp.nbi_width, "peak at {peak}");
    for j in peak..32 {
        assert!(v[j + 1] <= v[j] + 1e-12, "rises at {j}");
    }
    assert!(v[0] > 10.0 * v[EDGE]);
}

/// Frames after `from` until the profile at `j` has dropped 10% below its value
/// at `from`; the trajectory length when it never does.
fn frames_to_drop(traj: &[[f64; 33]], from: usize, j: usize) -> usize {
    let v0 = traj[from][j];
    (from..traj.len())
        .find(|&f| traj[f][j] <= 0.9 * v0)
        .map_or(traj.len(), |f| f - from)
}

#[test]
fn gas_step_brakes_the_edge_first() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut machines = vec![MachineParams::default()];
    machines.extend((0..4).map(|s| MachineParams::sample(s, &mut rng)));
    for mp in &machines {
        let mut spec = quiet([5.0, 4.0, 0.0, 0.0], 260);
        spec.programs[2] = Program {
            breakpoints: vec![(0, 0.0), (160, 5.0)],
        };
        let traj = integrate_rotation(&spec, mp, SUBSTEPS_PER_FRAME).unwrap();
        let edge = frames_to_drop(&traj, 160, EDGE);
        let inner = frames_to_drop(&traj, 160, INNER);
        assert!(edge < 100, "session {}: edge never dropped", mp.session_id);
        assert!(edge < inner, "session {}: edge {edge} inner {inner}", mp.session_id);
    }
}

#[test]
fn more_torque_means_more_rotation_everywhere() {
    let mp = MachineParams::default();
    for scale in [1.5, 2.0] {
        let base = quiet([5.0, 2.0, 1.0, 1.0], 200);
        let mut more = base.clone();
        more.programs[1] = base.programs[1].scaled(scale);
        let a = integrate_rotation(&base, &mp, SUBSTEPS_PER_FRAME).unwrap();
        let b = integrate_rotation(&more, &mp, SUBSTEPS_PER_FRAME).unwrap();
        let (a, b) = (a.last().unwrap(), b.last().unwrap());
        for j in 0..32 {
            assert!(b[j] > a[j], "grid {j}");
        }
    }
}

#[test]
fn sessions_differ_more_than_shots_within_them() {
    let sessions = generate_sessions(10, 5, 3).unwrap();
    let steady = |s: &Shot| {
        let n = s.len();
        (n - 40..n).map(|f| s.rotation(f)[0]).sum::<f64>() / 40.0
    };
    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
    };
    let mut means = Vec::new();
    let mut within = 0.0;
    for s in &sessions {
        let v: Vec<f64> = s.shots.iter().map(steady).collect();
        within += var(&v) / sessions.len() as f64;
        means.push(v.iter().sum::<f64>() / v.len() as f64);
    }
    let between = var(&means);
    assert!(between > within, "between {between} within {within}");
}

#[test]
fn session_shots_share_the_machine() {
    let s = make_session(4, 2, 9).unwrap();
    assert_eq!(s.shots.len(), 2);
    assert!(s.shots.iter().all(|shot| shot.session_id == 4));
    assert_ne!(make_session(4, 2, 9).unwrap().params, make_session(4, 2, 10).unwrap().params);
    assert!(make_session(0, 1, 0).is_err());
}

#[test]
fn unstable_substep_is_refused() {
    let mp = MachineParams {
        chi: 50.0,
        ..Default::default()
    };
    assert!(simulate_shot(&ScenarioSpec::default(), &mp, 1, 0).is_err());
}
