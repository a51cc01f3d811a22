//! Explicit finite-difference toroidal momentum transport on the flux grid.
//!
//! ```text
//! dv/dt = chi d2v/dpsi2 - (nu0 + cG gas exp((psi-1)/lambdaG)) v
//!         + cT torque N(psi; psi_nbi, w_nbi) + cE ech N(psi; psi_ech, w_ech)
//! ```
//!
//! with `dv/dpsi = 0` at the core and `v = 0` at the edge.

use super::machine::MachineParams;
use crate::error::{Error, Result};
use crate::schema::{psi, GRID};

/// Largest allowed diffusion number `chi dt / dpsi^2`.
pub const STABILITY_LIMIT: f64 = 0.4;

pub type Profile33 = [f64; GRID];

/// Lag-filtered actuator values driving the transport: power, torque, gas, ECH.
pub type EffectiveActuators = [f64; 4];

#[inline]
fn bump(x: f64, center: f64, width: f64) -> f64 {
    let d = (x - center) / width;
    (-0.5 * d * d).exp()
}

pub fn grid_spacing() -> f64 {
    1.0 / (GRID - 1) as f64
}

/// Substeps per frame needed to respect the stability limit.
pub fn required_substeps(chi: f64, frame_dt: f64) -> usize {
    let dpsi2 = grid_spacing().powi(2);
    (chi * frame_dt / (STABILITY_LIMIT * dpsi2)).ceil().max(1.0) as usize
}

/// Precomputed source and drag shapes for one machine.
#[derive(Clone, Debug)]
pub struct Transport {
    params: MachineParams,
    nbi: Profile33,
    ech: Profile33,
    gas: Profile33,
}

impl Transport {
    pub fn new(params: &MachineParams) -> Result<Self> {
        params.validate()?;
        let mut nbi = [0.0; GRID];
        let mut ech = [0.0; GRID];
        let mut gas = [0.0; GRID];
        for j in 0..GRID {
            let x = psi(j);
            nbi[j] = bump(x, params.nbi_center, params.nbi_width);
            ech[j] = bump(x, params.ech_center, params.ech_width);
            gas[j] = ((x - 1.0) / params.gas_scale).exp();
        }
        Ok(Transport {
            params: params.clone(),
            nbi,
            ech,
            gas,
        })
    }

    pub fn params(&self) -> &MachineParams {
        &self.params
    }

    /// Advances `v` by one explicit substep of length `dt`.
    pub fn step(&self, v: &Profile33, act: &EffectiveActuators, dt: f64) -> Result<Profile33> {
        let r = self.params.chi * dt / grid_spacing().powi(2);
        if r > STABILITY_LIMIT {
            return Err(Error::Unstable {
                required_substeps: required_substeps(self.params.chi, dt),
            });
        }
        let [_, torque, gas, ech] = *act;
        let p = &self.params;
        let mut out = [0.0; GRID];
        for j in 0..GRID - 1 {
            let lap = if j == 0 {
                2.0 * (v[1] - v[0])
            } else {
                v[j + 1] - 2.0 * v[j] + v[j - 1]
            };
            let drag = p.nu0 + p.gas_coupling * gas * self.gas[j];
            let source = p.torque_coupling * torque * self.nbi[j] + p.ech_coupling * ech * self.ech[j];
            out[j] = v[j] + r * lap - dt * drag * v[j] + dt * source;
        }
        out[GRID - 1] = 0.0;
        Ok(out)
    }
}

/// One explicit substep of the momentum equation.
pub fn momentum_step(
    v: &Profile33,
    actuators_effective: &EffectiveActuators,
    params: &MachineParams,
    dt_int: f64,
) -> Result<Profile33> {
    Transport::new(params)?.step(v, actuators_effective, dt_int)
}

/// Trapezoid integral of a grid profile over `[0, 1]`.
pub fn integral(v: &Profile33) -> f64 {
    let h = grid_spacing();
    h * (0.5 * v[0] + v[1..GRID - 1].iter().sum::<f64>() + 0.5 * v[GRID - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_state_zero_source_stays_zero() {
        let mp = MachineParams::default();
        let v = momentum_step(&[0.0; GRID], &[3.0, 0.0, 2.0, 0.0], &mp, 1e-3).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn unstable_step_reports_substeps() {
        let mp = MachineParams::default();
        let err = momentum_step(&[0.0; GRID], &[0.0; 4], &mp, 0.02).unwrap_err();
        match err {
            Error::Unstable { required_substeps } => {
                assert_eq!(required_substeps, required_substeps_for(&mp));
                assert!(required_substeps > 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    fn required_substeps_for(mp: &MachineParams) -> usize {
        required_substeps(mp.chi, 0.02)
    }

    #[test]
    fn pure_diffusion_integral_matches_edge_flux() {
        let mp = MachineParams {
            nu0: 0.0,
            ..Default::default()
        };
        let tr = Transport::new(&mp).unwrap();
        let mut v = [0.0; GRID];
        for (j, x) in v.iter_mut().enumerate() {
            *x = 100.0 * (1.0 - psi(j).powi(2)) + 5.0 * (psi(j) * 7.0).sin();
        }
        v[GRID - 1] = 0.0;
        let dt = 1e-3;
        let h = grid_spacing();
        for _ in 0..500 {
            let before = integral(&v);
            let predicted = -mp.chi * dt * v[GRID - 2] / h;
            v = tr.step(&v, &[0.0; 4], dt).unwrap();
            let change = integral(&v) - before;
            assert!((change - predicted).abs() <= 1e-10, "{change} vs {predicted}");
            assert!(change <= 1e-12);
        }
    }
}
