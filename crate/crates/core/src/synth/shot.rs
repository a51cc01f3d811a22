use ndarray::{s, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::machine::MachineParams;
use super::scenario::ScenarioSpec;
use super::transport::{required_substeps, EffectiveActuators, Profile33, Transport};
use crate::error::{Error, Result};
use crate::schema::{psi, Profile, ACTUATOR_DIM, FRAME_DT, GRID, RAW_STATE_DIM};

/// Substeps of the transport integrator per 20 ms frame.
pub const SUBSTEPS_PER_FRAME: usize = 20;

/// Rotation magnitudes above this (km/s) are treated as unphysical.
pub const ROTATION_CAP: f64 = 1000.0;

/// One simulated discharge in raw (un-reduced) form.
#[derive(Clone, Debug, PartialEq)]
pub struct Shot {
    pub session_id: u32,
    pub shot_id: u32,
    pub dt: f64,
    /// Flat-top frames `[start, end)`.
    pub flat_top: (usize, usize),
    /// `n_frames x RAW_STATE_DIM`
    pub states: Array2<f64>,
    /// `n_frames x ACTUATOR_DIM`
    pub actuators: Array2<f64>,
}

impl Shot {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat_top_len(&self) -> usize {
        self.flat_top.1 - self.flat_top.0
    }

    pub fn profile(&self, p: Profile, frame: usize) -> ArrayView1<'_, f64> {
        self.states.slice(s![frame, p.raw_range()])
    }

    pub fn rotation(&self, frame: usize) -> ArrayView1<'_, f64> {
        self.profile(Profile::Rotation, frame)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.states.ncols() != RAW_STATE_DIM || self.actuators.ncols() != ACTUATOR_DIM {
            return Err(Error::Data(format!("shot {}: wrong channel counts", self.shot_id)));
        }
        if self.actuators.nrows() != n {
            return Err(Error::Data(format!("shot {}: state/actuator length mismatch", self.shot_id)));
        }
        if !(self.flat_top.0 < self.flat_top.1 && self.flat_top.1 <= n) {
            return Err(Error::Data(format!(
                "shot {}: flat-top {:?} outside [0, {n}]",
                self.shot_id, self.flat_top
            )));
        }
        if (self.dt - FRAME_DT).abs() > 1e-12 {
            return Err(Error::Data(format!("shot {}: dt {} != 0.02", self.shot_id, self.dt)));
        }
        Ok(())
    }
}

/// Stationary AR(1) noise source.
struct Ar1 {
    rho: f64,
    innovation: f64,
    value: f64,
}

impl Ar1 {
    fn new(rho: f64, stationary_std: f64) -> Self {
        Ar1 {
            rho,
            innovation: stationary_std * (1.0 - rho * rho).sqrt(),
            value: 0.0,
        }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        let e: f64 = StandardNormal.sample(rng);
        self.value = self.rho * self.value + self.innovation * e;
        self.value
    }
}

#[inline]
fn quantize(x: f64) -> f64 {
    x as f32 as f64
}

/// Algebraic proxies for the non-rotation state channels.
fn fill_proxy_channels(
    row: &mut [f64],
    eff: &EffectiveActuators,
    current: f64,
    field: f64,
    density_base: f64,
    noise: &[f64; 5],
    shape: &[f64; 4],
) {
    let [power, torque, gas, ech] = *eff;
    let [nn, nte, nti, nq, _] = *noise;
    let [sd, se, si, sq] = *shape;
    let pe = 1.5 + 0.6 * ech / (1.0 + ech) + se;
    let pi = 1.7 - 0.5 * power / (4.0 + power) + si;
    let pq = 2.5 + 0.4 * (current / 1.2 - 1.0) + sq;
    let ne_line = density_base
        * (1.0 + 0.10 * gas - 0.04 * ech + 0.015 * power)
        * (current.max(0.05) / 1.2).sqrt()
        * (1.0 + nn);
    let te0 = (1.2 + 0.22 * power + 0.45 * ech) * (5.0 / ne_line).powf(0.3) * (1.0 + nte);
    let ti0 = (1.1 + 0.30 * power + 0.05 * torque) * (5.0 / ne_line).powf(0.25) * (1.0 + nti);
    let q95 = 4.0 * (field / 2.0) / (current.max(0.05) / 1.2);
    let q0 = (1.0 + 0.05 * ech) * (1.0 + nq);

    let mut w = 0.0;
    for j in 0..GRID {
        let x = psi(j);
        let dens = ne_line * (1.15 - (0.55 + sd) * x * x - (0.3 + 0.25 * power / (4.0 + power)) * x.powi(8) + 0.12 * gas * x.powi(4) + 0.5 * sd * x);
        let core = (1.0 - x * x).max(0.0);
        let d = (x - 0.5) / 0.1;
        let te = te0 * (core.powf(pe) + 0.08) + 0.35 * ech * (-0.5 * d * d).exp() * (1.0 + nte);
        let ti = ti0 * (core.powf(pi) + 0.06);
        let pres = 1.602 * dens * (te + ti);
        let q = q0 + (q95 - q0) * x.powf(pq);
        row[Profile::Density.raw_range().start + j] = dens;
        row[Profile::ElectronTemp.raw_range().start + j] = te;
        row[Profile::IonTemp.raw_range().start + j] = ti;
        row[Profile::Pressure.raw_range().start + j] = pres;
        row[Profile::Q.raw_range().start + j] = q;
        w += pres * x;
    }
    let w_mhd = 0.04 * w / (GRID - 1) as f64;
    row[0] = 3.0 * w_mhd / (current.max(0.05) * field);
    row[1] = 0.7 + 0.25 * (q95 / q0).ln() / 4f64.ln();
    row[2] = ne_line;
    row[3] = 0.25 * current / te0.powf(1.5);
    row[4] = w_mhd;
}

/// Runs the synthetic plant through one scenario.
///
/// `states[f]` is the plasma at the start of frame `f`; `actuators[f]` are the
/// commands applied during frame `f`.
pub fn simulate_shot(spec: &ScenarioSpec, mp: &MachineParams, shot_id: u32, seed: u64) -> Result<Shot> {
    spec.validate()?;
    let transport = Transport::new(mp)?;
    let dt_int = FRAME_DT / SUBSTEPS_PER_FRAME as f64;
    if required_substeps(mp.chi, FRAME_DT) > SUBSTEPS_PER_FRAME {
        return Err(Error::Unstable {
            required_substeps: required_substeps(mp.chi, FRAME_DT),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ns = spec.noise;
    let mut torque_noise = Ar1::new(0.9, 0.04 * ns);
    let mut proxy_noise: Vec<Ar1> = (0..5).map(|_| Ar1::new(0.0, 0.01 * ns)).collect();
    let mut shape_drift = [0.0; 6];
    // per-shot profile shape offsets plus a slow drift
    let shape_offset: [f64; 4] = std::array::from_fn(|_| {
        let e: f64 = StandardNormal.sample(&mut rng);
        0.1 * ns * e
    });
    let mut profile_shape: Vec<Ar1> = (0..4).map(|_| Ar1::new(0.98, 0.02 * ns)).collect();

    let n = spec.n_frames;
    let mut states = Array2::zeros((n, RAW_STATE_DIM));
    let mut actuators = Array2::zeros((n, ACTUATOR_DIM));

    let mut v: Profile33 = [0.0; GRID];
    for (j, x) in v.iter_mut().enumerate() {
        *x = spec.initial_rotation * (1.0 - psi(j).powi(2));
    }
    v[GRID - 1] = 0.0;
    let mut eff: EffectiveActuators = spec.commands(0);
    let alphas: Vec<f64> = mp.lags.iter().map(|tau| 1.0 - (-dt_int / tau).exp()).collect();

    for f in 0..n {
        let cmd = spec.commands(f);
        let current = spec.plasma.current_target * (0.3 + 0.7 * spec.ramp(f));
        let tn = torque_noise.next(&mut rng);
        let pn: [f64; 5] = std::array::from_fn(|k| proxy_noise[k].next(&mut rng));
        let ps: [f64; 4] = std::array::from_fn(|k| shape_offset[k] + profile_shape[k].next(&mut rng));
        for d in shape_drift.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *d += 2e-4 * ns * e;
        }

        // record frame f
        {
            let mut row = states.row_mut(f);
            let row = row.as_slice_mut().expect("contiguous row");
            for j in 0..GRID {
                let meas: f64 = if ns > 0.0 {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    0.3 * ns * e
                } else {
                    0.0
                };
                row[Profile::Rotation.raw_range().start + j] = v[j] + if j + 1 < GRID { meas } else { 0.0 };
            }
            fill_proxy_channels(row, &eff, current, spec.plasma.toroidal_field, mp.density_base, &pn, &ps);
            for x in row.iter_mut() {
                *x = quantize(*x);
            }
        }
        {
            let mut a = actuators.row_mut(f);
            for k in 0..6 {
                a[k] = quantize(spec.plasma.shape[k] + shape_drift[k]);
            }
            for k in 0..4 {
                a[6 + k] = quantize(cmd[k]);
            }
            a[10] = quantize(current);
            a[11] = quantize(spec.plasma.toroidal_field);
        }

        // advance to frame f + 1
        for _ in 0..SUBSTEPS_PER_FRAME {
            for k in 0..4 {
                eff[k] += alphas[k] * (cmd[k] - eff[k]);
            }
            let mut driven = eff;
            driven[1] *= 1.0 + tn;
            v = transport.step(&v, &driven, dt_int)?;
        }
        if v.iter().any(|x| !x.is_finite() || x.abs() > ROTATION_CAP) {
            return Err(Error::Data(format!("shot {shot_id}: rotation left physical range at frame {f}")));
        }
    }

    let shot = Shot {
        session_id: mp.session_id,
        shot_id,
        dt: FRAME_DT,
        flat_top: (spec.flat_top_start, n),
        states,
        actuators,
    };
    shot.validate()?;
    Ok(shot)
}

/// Noise-free rotation trajectory integrated with an arbitrary substep; used as
/// a fine-step reference for the production integrator. Returns one profile per frame.
pub fn integrate_rotation(spec: &ScenarioSpec, mp: &MachineParams, substeps: usize) -> Result<Vec<Profile33>> {
    spec.validate()?;
    let transport = Transport::new(mp)?;
    let dt_int = FRAME_DT / substeps as f64;
    let mut v: Profile33 = [0.0; GRID];
    for (j, x) in v.iter_mut().enumerate() {
        *x = spec.initial_rotation * (1.0 - psi(j).powi(2));
    }
    v[GRID - 1] = 0.0;
    let mut eff = spec.commands(0);
    let alphas: Vec<f64> = mp.lags.iter().map(|tau| 1.0 - (-dt_int / tau).exp()).collect();
    let mut out = Vec::with_capacity(spec.n_frames);
    for f in 0..spec.n_frames {
        out.push(v);
        let cmd = spec.commands(f);
        for _ in 0..substeps {
            for k in 0..4 {
                eff[k] += alphas[k] * (cmd[k] - eff[k]);
            }
            v = transport.step(&v, &eff, dt_int)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::scenario::Program;

    fn quiet(mut spec: ScenarioSpec) -> ScenarioSpec {
        spec.noise = 0.0;
        spec
    }

    #[test]
    fn zero_scenario_has_zero_rotation() {
        let spec = quiet(ScenarioSpec {
            programs: [
                Program::constant(0.0),
                Program::constant(0.0),
                Program::constant(0.0),
                Program::constant(0.0),
            ],
            initial_rotation: 0.0,
            ..Default::default()
        });
        let shot = simulate_shot(&spec, &MachineParams::default(), 1, 0).unwrap();
        for f in 0..shot.len() {
            assert!(shot.rotation(f).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn doubled_torque_raises_final_rotation() {
        let base = quiet(ScenarioSpec::default());
        let mut double = base.clone();
        double.programs[1] = base.programs[1].scaled(2.0);
        let mp = MachineParams::default();
        let a = simulate_shot(&base, &mp, 1, 0).unwrap();
        let b = simulate_shot(&double, &mp, 1, 0).unwrap();
        let last = a.len() - 1;
        for j in 0..GRID - 1 {
            assert!(b.rotation(last)[j] > a.rotation(last)[j], "grid {j}");
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let spec = ScenarioSpec::default();
        let mp = MachineParams::default();
        assert_eq!(
            simulate_shot(&spec, &mp, 3, 11).unwrap(),
            simulate_shot(&spec, &mp, 3, 11).unwrap()
        );
        assert_ne!(
            simulate_shot(&spec, &mp, 3, 11).unwrap(),
            simulate_shot(&spec, &mp, 3, 12).unwrap()
        );
    }

    #[test]
    fn shot_shape_and_window() {
        let shot = simulate_shot(&ScenarioSpec::default(), &MachineParams::default(), 1, 0).unwrap();
        assert_eq!(shot.len(), 200);
        assert_eq!(shot.flat_top, (40, 200));
        assert_eq!(shot.dt, 0.020);
        assert!(shot.states.iter().all(|x| x.is_finite()));
    }
}
