//! Signal layout shared by the simulator, the shot files and the models.
//!
//! Raw state frame: 5 scalars followed by six 33-point profiles.
//! Reduced state: the 5 scalars followed by PCA coefficients of each
//! profile (4+4+4+4+2+2), 25 values in total.

/// Radial grid points on normalized flux, uniform on `[0, 1]`.
pub const GRID: usize = 33;
/// Control period in seconds.
pub const FRAME_DT: f64 = 0.020;

pub const SCALAR_NAMES: [&str; 5] = ["beta_n", "li", "line_density", "loop_voltage", "w_mhd"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Profile {
    Rotation,
    Density,
    IonTemp,
    ElectronTemp,
    Pressure,
    Q,
}

impl Profile {
    pub const ALL: [Profile; 6] = [
        Profile::Rotation,
        Profile::Density,
        Profile::IonTemp,
        Profile::ElectronTemp,
        Profile::Pressure,
        Profile::Q,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Profile::Rotation => "rotation",
            Profile::Density => "density",
            Profile::IonTemp => "ion_temp",
            Profile::ElectronTemp => "electron_temp",
            Profile::Pressure => "pressure",
            Profile::Q => "q",
        }
    }

    /// PCA components kept for this profile in the reduced state.
    pub fn components(self) -> usize {
        match self {
            Profile::Pressure | Profile::Q => 2,
            _ => 4,
        }
    }

    pub fn index(self) -> usize {
        Profile::ALL.iter().position(|&p| p == self).expect("listed")
    }

    /// Column range of this profile inside a raw state frame.
    pub fn raw_range(self) -> std::ops::Range<usize> {
        let start = SCALAR_NAMES.len() + self.index() * GRID;
        start..start + GRID
    }

    /// Column range of this profile's coefficients inside a reduced state.
    pub fn reduced_range(self) -> std::ops::Range<usize> {
        let start = SCALAR_NAMES.len()
            + Profile::ALL[..self.index()]
                .iter()
                .map(|p| p.components())
                .sum::<usize>();
        start..start + self.components()
    }
}

pub const RAW_STATE_DIM: usize = 5 + 6 * GRID;
pub const REDUCED_STATE_DIM: usize = 25;

pub const ACTUATOR_NAMES: [&str; 12] = [
    "elongation",
    "triangularity_upper",
    "triangularity_lower",
    "minor_radius",
    "r_axis",
    "z_axis",
    "nb_power",
    "nb_torque",
    "gas_a_voltage",
    "ech_power",
    "current_target",
    "toroidal_field",
];
pub const ACTUATOR_DIM: usize = 12;

/// Actuator columns the policy controls: NB power, NB torque, gas voltage, ECH power.
pub const POLICY_ACTUATORS: [usize; 4] = [6, 7, 8, 9];
pub const ACTION_DIM: usize = 4;
pub const OBS_DIM: usize = 20;

/// Dynamics-model input: reduced state followed by all actuators.
pub const MODEL_INPUT_DIM: usize = REDUCED_STATE_DIM + ACTUATOR_DIM;

/// Normalized-flux coordinate of grid point `j`.
pub fn psi(j: usize) -> f64 {
    j as f64 / (GRID - 1) as f64
}

/// Nearest grid index for a flux value.
pub fn nearest_grid_index(psi_n: f64) -> usize {
    ((psi_n * (GRID - 1) as f64).round() as usize).min(GRID - 1)
}

/// Ordered channel names of a raw shot record: raw state then actuators.
pub fn channel_names() -> Vec<String> {
    let mut names: Vec<String> = SCALAR_NAMES.iter().map(|s| s.to_string()).collect();
    for p in Profile::ALL {
        for j in 0..GRID {
            names.push(format!("{}_{:02}", p.name(), j));
        }
    }
    names.extend(ACTUATOR_NAMES.iter().map(|s| s.to_string()));
    names
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions_add_up() {
        let reduced: usize = 5 + Profile::ALL.iter().map(|p| p.components()).sum::<usize>();
        assert_eq!(reduced, REDUCED_STATE_DIM);
        assert_eq!(Profile::Q.reduced_range(), 23..25);
        assert_eq!(Profile::Rotation.reduced_range(), 5..9);
        assert_eq!(Profile::Q.raw_range().end, RAW_STATE_DIM);
        assert_eq!(channel_names().len(), RAW_STATE_DIM + ACTUATOR_DIM);
        assert_eq!(OBS_DIM, 4 * 5);
    }

    #[test]
    fn slice_points() {
        let idx: Vec<usize> = [0.09, 0.18, 0.39, 0.58, 0.79, 0.88]
            .iter()
            .map(|&p| nearest_grid_index(p))
            .collect();
        assert_eq!(idx, vec![3, 6, 12, 19, 25, 28]);
    }
}
