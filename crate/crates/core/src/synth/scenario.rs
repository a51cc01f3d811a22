use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical limits of the four policy actuators: NB power (MW), NB torque (N m),
/// gas valve voltage (V), ECH power (MW).
pub const ACTUATOR_LIMITS: [(f64, f64); 4] = [(0.0, 12.0), (-2.0, 9.0), (0.0, 5.0), (0.0, 4.0)];

/// Piecewise-constant feedforward program: `(start_frame, value)` breakpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Program {
    pub breakpoints: Vec<(usize, f64)>,
}

impl Program {
    pub fn constant(value: f64) -> Self {
        Program {
            breakpoints: vec![(0, value)],
        }
    }

    pub fn value_at(&self, frame: usize) -> f64 {
        self.breakpoints
            .iter()
            .take_while(|(start, _)| *start <= frame)
            .last()
            .map_or(0.0, |&(_, v)| v)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Program {
            breakpoints: self.breakpoints.iter().map(|&(s, v)| (s, v * factor)).collect(),
        }
    }
}

/// Non-controlled actuator settings held through a shot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlasmaSettings {
    /// Plasma current target (MA).
    pub current_target: f64,
    /// Toroidal field (T).
    pub toroidal_field: f64,
    /// Elongation, upper/lower triangularity, minor radius, R and Z of the axis.
    pub shape: [f64; 6],
}

impl Default for PlasmaSettings {
    fn default() -> Self {
        PlasmaSettings {
            current_target: 1.2,
            toroidal_field: 2.0,
            shape: [1.8, 0.4, 0.6, 0.6, 1.75, 0.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// Frames of 20 ms.
    pub n_frames: usize,
    /// First frame of the flat-top phase; actuators ramp linearly before it.
    pub flat_top_start: usize,
    /// NB power, NB torque, gas voltage, ECH power.
    pub programs: [Program; 4],
    /// Core rotation at frame 0 (km/s).
    pub initial_rotation: f64,
    pub plasma: PlasmaSettings,
    /// Noise scale; 0 disables every stochastic term.
    pub noise: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            n_frames: 200,
            flat_top_start: 40,
            programs: [
                Program::constant(5.0),
                Program::constant(3.0),
                Program::constant(1.0),
                Program::constant(1.0),
            ],
            initial_rotation: 20.0,
            plasma: PlasmaSettings::default(),
            noise: 1.0,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_frames < 2 || self.flat_top_start >= self.n_frames {
            return Err(Error::Config(format!(
                "scenario needs flat_top_start < n_frames, got {} / {}",
                self.flat_top_start, self.n_frames
            )));
        }
        for (k, prog) in self.programs.iter().enumerate() {
            let (lo, hi) = ACTUATOR_LIMITS[k];
            if let Some(&(_, v)) = prog.breakpoints.iter().find(|(_, v)| !(*v >= lo && *v <= hi)) {
                return Err(Error::Config(format!(
                    "program {k} value {v} outside actuator limits [{lo}, {hi}]"
                )));
            }
        }
        if !(self.noise >= 0.0) {
            return Err(Error::Config("noise scale must be >= 0".into()));
        }
        Ok(())
    }

    /// Commanded policy-actuator values at `frame`, including the ramp-up.
    pub fn commands(&self, frame: usize) -> [f64; 4] {
        let ramp = self.ramp(frame);
        let mut out = [0.0; 4];
        for (o, p) in out.iter_mut().zip(&self.programs) {
            *o = p.value_at(frame) * ramp;
        }
        out
    }

    pub fn ramp(&self, frame: usize) -> f64 {
        if self.flat_top_start == 0 {
            1.0
        } else {
            (frame as f64 / self.flat_top_start as f64).min(1.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn program_lookup() {
        let p = Program {
            breakpoints: vec![(0, 1.0), (10, 2.0), (20, 0.5)],
        };
        assert_eq!(p.value_at(0), 1.0);
        assert_eq!(p.value_at(9), 1.0);
        assert_eq!(p.value_at(10), 2.0);
        assert_eq!(p.value_at(500), 0.5);
    }

    #[test]
    fn limits_are_checked() {
        let mut s = ScenarioSpec::default();
        assert!(s.validate().is_ok());
        s.programs[3] = Program::constant(10.0);
        assert!(s.validate().is_err());
    }
}
