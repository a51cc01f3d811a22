use std::collections::BTreeSet;

use ndarray::{s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rotctl::dataset::*;
use rotctl::pca::{explained_variance, fit_pca, StateCodec};
use rotctl::schema::{Profile, GRID};
use rotctl::synth::{generate_corpus, generate_sessions, Shot};

fn corpus(n_sessions: usize, seed: u64) -> Vec<Shot> {
    generate_sessions(n_sessions, 3, seed)
        .unwrap()
        .into_iter()
        .flat_map(|s| s.shots)
        .collect()
}

#[test]
fn regenerated_corpus_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = generate_corpus(a.path(), 1, 2, 7).unwrap();
    let mb = generate_corpus(b.path(), 1, 2, 7).unwrap();
    assert_eq!(ma, mb);
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 3, "two shots and the manifest");
    for n in names {
        assert_eq!(std::fs::read(a.path().join(&n)).unwrap(), std::fs::read(b.path().join(&n)).unwrap());
    }
    let (_, shots) = read_corpus(a.path()).unwrap();
    assert_eq!(shots.len(), 2);
}

#[test]
fn corpus_values_are_finite_and_capped() {
    for shot in corpus(3, 2) {
        assert!(shot.states.iter().all(|v| v.is_finite()));
        assert!(shot.actuators.iter().all(|v| v.is_finite()));
        for f in 0..shot.len() {
            assert!(shot.rotation(f).iter().all(|v| v.abs() <= 1000.0));
        }
    }
}

#[test]
fn split_is_by_session_and_reproducible() {
    let shots = corpus(10, 1);
    let a = split_corpus(&shots, 0.1, 0.1, 5).unwrap();
    assert_eq!(a.val_sessions.len(), 1);
    assert_eq!(a.test_sessions.len(), 1);
    assert_eq!(a.train_sessions.len(), 8);
    assert!(a.is_disjoint());
    assert_eq!(a, split_corpus(&shots, 0.1, 0.1, 5).unwrap());
    let all: BTreeSet<u32> = a.train.iter().chain(&a.val).chain(&a.test).copied().collect();
    assert_eq!(all.len(), shots.len());
    for id in &a.val {
        let s = shots.iter().find(|s| s.shot_id == *id).unwrap();
        assert!(a.val_sessions.contains(&s.session_id));
    }
    assert!(split_corpus(&shots, 0.6, 0.5, 5).is_err());
}

#[test]
fn bootstrap_keeps_about_two_thirds_distinct() {
    let ids: Vec<u32> = (0..500).collect();
    assert_eq!(bootstrap_resample(&[42], 3), vec![42]);
    let mut total = 0.0;
    for m in 0..1000 {
        let r = bootstrap_resample(&ids, member_seed(9, m));
        assert_eq!(r.len(), 500);
        total += r.iter().collect::<BTreeSet<_>>().len() as f64 / 500.0;
    }
    let frac = total / 1000.0;
    assert!((frac - (1.0 - (-1.0f64).exp())).abs() <= 0.02, "{frac}");
}

#[test]
fn member_seeds_give_distinct_multisets() {
    let ids: Vec<u32> = (0..60).collect();
    let sets: BTreeSet<Vec<u32>> = (0..25)
        .map(|m| {
            let mut r = bootstrap_resample(&ids, member_seed(1, m));
            r.sort_unstable();
            r
        })
        .collect();
    assert_eq!(sets.len(), 25);
}

#[test]
fn normalizer_standardizes_and_inverts() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Array2::from_shape_fn((400, 5), |(_, j)| 10.0 * j as f64 + (j + 1) as f64 * rng.random_range(-1.0..1.0));
    let n = Normalizer::fit(x.view(), "train").unwrap();
    let z = n.apply(x.view()).unwrap();
    for j in 0..5 {
        let c = z.column(j);
        assert!(c.mean().unwrap().abs() <= 1e-6);
        assert!((c.std(0.0) - 1.0).abs() <= 1e-6);
    }
    let back = n.invert(z.view()).unwrap();
    assert!((&back - &x).iter().all(|d| d.abs() <= 1e-9));
    assert_eq!(Normalizer::from_flat(&n.to_flat(), "train").unwrap(), n);
}

fn rotation_rows(shots: &[Shot]) -> Array2<f64> {
    let rows: Vec<_> = shots
        .iter()
        .map(|s| s.states.slice(s![s.flat_top.0..s.flat_top.1, Profile::Rotation.raw_range()]).to_owned())
        .collect();
    let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
    ndarray::concatenate(Axis(0), &views).unwrap()
}

#[test]
fn four_rotation_components_explain_the_corpus() {
    let data = rotation_rows(&corpus(8, 4));
    let basis = fit_pca(data.view(), 4, "rotation").unwrap();
    assert!(basis.explained_variance >= 0.99, "{}", basis.explained_variance);
    assert_eq!(basis.explained_variance, explained_variance(&basis, data.view()).unwrap());
    let gram = basis.components.dot(&basis.components.t());
    for i in 0..4 {
        for j in 0..4 {
            assert!((gram[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
        }
    }
}

#[test]
fn in_subspace_profiles_round_trip() {
    let data = rotation_rows(&corpus(4, 4));
    let basis = fit_pca(data.view(), 4, "rotation").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let c = Array1::from_shape_fn(4, |_| rng.random_range(-50.0..50.0));
        let p = basis.from_components(c.view()).unwrap();
        let back = basis.from_components(basis.to_components(p.view()).unwrap().view()).unwrap();
        assert!((&back - &p).iter().all(|d| d.abs() <= 1e-9));
    }
    let zero = basis.to_components(basis.mean.view()).unwrap();
    assert!(zero.iter().all(|v| v.abs() < 1e-12));
    let e0 = basis.to_components((&basis.mean + &basis.components.row(0)).view()).unwrap();
    assert!((e0[0] - 1.0).abs() < 1e-12 && e0.iter().skip(1).all(|v| v.abs() < 1e-12));
}

#[test]
fn rank_two_data_ratio_from_singular_values() {
    // Two orthogonal directions with amplitudes 3 and 1 along a zero-mean pattern.
    let u: Vec<f64> = (0..GRID).map(|j| if j < 11 { 1.0 } else { 0.0 }).collect();
    let v: Vec<f64> = (0..GRID).map(|j| if j >= 11 { (j % 2) as f64 - 0.5 } else { 0.0 }).collect();
    let pattern = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];
    let data = Array2::from_shape_fn((4, GRID), |(i, j)| 3.0 * pattern[i].0 * u[j] + pattern[i].1 * v[j]);
    let nu: f64 = u.iter().map(|x| x * x).sum();
    let nv: f64 = v.iter().map(|x| x * x).sum();
    let (s1, s2) = (9.0 * nu, nv);
    let basis = fit_pca(data.view(), 1, "toy").unwrap();
    assert!((basis.explained_variance - s1 / (s1 + s2)).abs() < 1e-10);
}

#[test]
fn complete_basis_explains_everything() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let data = Array2::from_shape_fn((100, GRID), |_| rng.random_range(-1.0..1.0));
    let full = fit_pca(data.view(), GRID, "rotation").unwrap();
    assert!((full.explained_variance - 1.0).abs() < 1e-10);
    let none = full.truncated(0);
    assert!(explained_variance(&none, data.view()).unwrap().abs() < 1e-12);
}

#[test]
fn codec_round_trips_through_its_blob() {
    let shots = corpus(2, 6);
    let raw: Vec<_> = shots.iter().map(|s| s.states.slice(s![s.flat_top.0.., ..]).to_owned()).collect();
    let views: Vec<_> = raw.iter().map(|r| r.view()).collect();
    let codec = StateCodec::fit(ndarray::concatenate(Axis(0), &views).unwrap().view()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pca.blob");
    codec.to_blob().write(&path).unwrap();
    let back = StateCodec::from_blob(&Blob::read(&path).unwrap(), &path).unwrap();
    assert_eq!(back, codec);
}
