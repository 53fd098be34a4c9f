//! CODATA 2018 values used throughout the crate.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Neutron mass, kg.
pub const NEUTRON_MASS: f64 = 1.674_927_498_04e-27;
/// Planck constant, J·s (exact).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant, J·s.
pub const HBAR: f64 = PLANCK / (2.0 * PI);
/// Magnitude of the neutron gyromagnetic ratio, rad·s⁻¹·T⁻¹.
pub const NEUTRON_GYROMAGNETIC: f64 = 1.832_471_71e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub neutron_mass: f64,
    pub planck: f64,
    pub hbar: f64,
    pub gyromagnetic: f64,
}

impl PhysicalConstants {
    pub const CODATA_2018: PhysicalConstants = PhysicalConstants {
        neutron_mass: NEUTRON_MASS,
        planck: PLANCK,
        hbar: HBAR,
        gyromagnetic: NEUTRON_GYROMAGNETIC,
    };

    /// Neutron speed for de Broglie wavelength `lambda` (m), in m/s.
    pub fn velocity(&self, lambda: f64) -> f64 {
        self.planck / (self.neutron_mass * lambda)
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::CODATA_2018
    }
}
