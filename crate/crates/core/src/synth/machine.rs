use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-session transport and coupling coefficients of the synthetic plant.
///
/// Rotation is in km/s, time in seconds, flux coordinates in normalized units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MachineParams {
    pub session_id: u32,
    /// Momentum diffusivity (1/s in normalized-flux units).
    pub chi: f64,
    /// Base drag rate (1/s).
    pub nu0: f64,
    pub torque_coupling: f64,
    pub nbi_center: f64,
    pub nbi_width: f64,
    pub gas_coupling: f64,
    /// Edge e-folding length of the gas drag.
    pub gas_scale: f64,
    pub ech_coupling: f64,
    pub ech_center: f64,
    pub ech_width: f64,
    /// First-order lag time constants for power, torque, gas, ECH (s).
    pub lags: [f64; 4],
    /// Line-averaged density scale (1e19 m^-3).
    pub density_base: f64,
}

impl Default for MachineParams {
    fn default() -> Self {
        MachineParams {
            session_id: 0,
            chi: 0.25,
            nu0: 18.0,
            torque_coupling: 950.0,
            nbi_center: 0.1,
            nbi_width: 0.15,
            gas_coupling: 14.0,
            gas_scale: 0.15,
            ech_coupling: 250.0,
            ech_center: 0.5,
            ech_width: 0.1,
            lags: [0.06; 4],
            density_base: 4.5,
        }
    }
}

impl MachineParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("machine params: {what}")));
        if !(self.chi > 0.0) {
            return bad("chi must be > 0");
        }
        if !(self.nbi_width > 0.0 && self.ech_width > 0.0 && self.gas_scale > 0.0) {
            return bad("widths must be > 0");
        }
        if !(0.0..=1.0).contains(&self.nbi_center) || !(0.0..=1.0).contains(&self.ech_center) {
            return bad("deposition centers must lie in [0, 1]");
        }
        if self.lags.iter().any(|&l| !(l > 0.0)) {
            return bad("lag constants must be > 0");
        }
        if self.nu0 < 0.0 {
            return bad("nu0 must be >= 0");
        }
        Ok(())
    }

    /// Draws one session's coefficients around the defaults.
    pub fn sample(session_id: u32, rng: &mut ChaCha8Rng) -> Self {
        let base = MachineParams::default();
        MachineParams {
            session_id,
            chi: rng.random_range(0.15..0.35),
            nu0: rng.random_range(14.0..22.0),
            torque_coupling: rng.random_range(800.0..1100.0),
            nbi_center: base.nbi_center + rng.random_range(-0.03..0.03),
            nbi_width: rng.random_range(0.12..0.18),
            gas_coupling: rng.random_range(10.0..18.0),
            gas_scale: base.gas_scale + rng.random_range(-0.02..0.02),
            ech_coupling: rng.random_range(200.0..300.0),
            ech_center: base.ech_center + rng.random_range(-0.05..0.05),
            ech_width: rng.random_range(0.08..0.12),
            lags: base.lags,
            density_base: rng.random_range(3.0..6.0),
        }
    }
}
