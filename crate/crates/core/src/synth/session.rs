use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::machine::MachineParams;
use super::scenario::{PlasmaSettings, Program, ScenarioSpec, ACTUATOR_LIMITS};
use super::shot::{simulate_shot, Shot};
use crate::dataset::store::{shot_file_name, write_shot};
use crate::error::{Error, Result};
use crate::seeding::derive;

/// Shots of one experimental session sharing a machine configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Session {
    pub params: MachineParams,
    pub shots: Vec<Shot>,
}

/// Nominal operating point a session's programs scatter around.
#[derive(Clone, Debug, PartialEq)]
struct SessionPlan {
    levels: [f64; 4],
    plasma: PlasmaSettings,
}

impl SessionPlan {
    fn sample(rng: &mut ChaCha8Rng) -> Self {
        let mut plasma = PlasmaSettings {
            current_target: rng.random_range(0.9..1.6),
            toroidal_field: rng.random_range(1.6..2.2),
            ..Default::default()
        };
        for s in plasma.shape.iter_mut() {
            *s += rng.random_range(-0.05..0.05);
        }
        SessionPlan {
            levels: [
                rng.random_range(3.0..9.0),
                rng.random_range(1.5..6.0),
                rng.random_range(0.3..2.5),
                rng.random_range(0.0..2.5),
            ],
            plasma,
        }
    }

    fn program(&self, k: usize, n_frames: usize, rng: &mut ChaCha8Rng) -> Program {
        let (lo, hi) = ACTUATOR_LIMITS[k];
        let mut breakpoints = Vec::new();
        let mut start = 0;
        while start < n_frames {
            let nominal = self.levels[k];
            let v: f64 = match k {
                0 | 1 => nominal * rng.random_range(0.5..1.5),
                2 => {
                    if rng.random_bool(0.3) {
                        0.0
                    } else {
                        nominal + rng.random_range(-1.0..1.5)
                    }
                }
                _ => {
                    if rng.random_bool(0.35) {
                        0.0
                    } else {
                        nominal * rng.random_range(0.4..1.6)
                    }
                }
            };
            breakpoints.push((start, v.clamp(lo, hi)));
            start += rng.random_range(12..=40);
        }
        Program { breakpoints }
    }
}

/// Generates one session: a single machine configuration and `n_shots`
/// scenarios with varied feedforward programs.
pub fn make_session(session_id: u32, n_shots: usize, seed: u64) -> Result<Session> {
    make_session_with(session_id, n_shots, seed, 200, 40)
}

pub fn make_session_with(
    session_id: u32,
    n_shots: usize,
    seed: u64,
    n_frames: usize,
    flat_top_start: usize,
) -> Result<Session> {
    if n_shots < 2 {
        return Err(Error::Config(format!(
            "a session needs at least 2 shots for target sampling, got {n_shots}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, "session", session_id as u64));
    let params = MachineParams::sample(session_id, &mut rng);
    let plan = SessionPlan::sample(&mut rng);
    let mut shots = Vec::with_capacity(n_shots);
    for k in 0..n_shots {
        let programs = std::array::from_fn(|a| plan.program(a, n_frames, &mut rng));
        let spec = ScenarioSpec {
            n_frames,
            flat_top_start,
            programs,
            initial_rotation: rng.random_range(5.0..40.0),
            plasma: plan.plasma.clone(),
            noise: 1.0,
        };
        let shot_id = session_id * 100 + k as u32;
        shots.push(simulate_shot(&spec, &params, shot_id, derive(seed, "shot", shot_id as u64))?);
    }
    Ok(Session { params, shots })
}

/// Generates `n_sessions` sessions in memory.
pub fn generate_sessions(n_sessions: usize, shots_per_session: usize, seed: u64) -> Result<Vec<Session>> {
    (0..n_sessions)
        .map(|s| make_session(s as u32, shots_per_session, seed))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub file: String,
    pub session_id: u32,
    pub shot_id: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub n_sessions: usize,
    pub shots_per_session: usize,
    pub n_shots: usize,
    pub files: Vec<CorpusEntry>,
    pub machine_params: Vec<MachineParams>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Simulates a corpus and writes one file per shot plus `manifest.json`.
pub fn generate_corpus(dir: &Path, n_sessions: usize, shots_per_session: usize, seed: u64) -> Result<CorpusManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    let mut machine_params = Vec::new();
    for s in 0..n_sessions {
        let session = make_session(s as u32, shots_per_session, seed)?;
        for shot in &session.shots {
            let name = shot_file_name(shot);
            write_shot(&dir.join(&name), shot)?;
            files.push(CorpusEntry {
                file: name,
                session_id: shot.session_id,
                shot_id: shot.shot_id,
            });
        }
        machine_params.push(session.params);
    }
    let manifest = CorpusManifest {
        schema_version: 1,
        seed,
        n_sessions,
        shots_per_session,
        n_shots: files.len(),
        files,
        machine_params,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::GRID;

    #[test]
    fn session_needs_two_shots() {
        assert!(make_session(0, 1, 1).is_err());
        let s = make_session(3, 2, 1).unwrap();
        assert_eq!(s.shots.len(), 2);
        assert!(s.shots.iter().all(|sh| sh.session_id == 3));
        assert_ne!(s.shots[0].shot_id, s.shots[1].shot_id);
    }

    #[test]
    fn seeds_change_machine() {
        let a = make_session(0, 2, 1).unwrap();
        let b = make_session(0, 2, 2).unwrap();
        assert_ne!(a.params, b.params);
    }

    #[test]
    fn corpus_values_are_physical() {
        for s in generate_sessions(3, 2, 9).unwrap() {
            for shot in &s.shots {
                assert!(shot.states.iter().all(|x| x.is_finite()));
                for f in 0..shot.len() {
                    assert!(shot.rotation(f).iter().all(|v| v.abs() < super::super::shot::ROTATION_CAP));
                }
                assert_eq!(shot.rotation(0).len(), GRID);
            }
        }
    }
}
