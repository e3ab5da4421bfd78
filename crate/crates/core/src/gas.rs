//! Ideal-gas pressure used when the controller does not drive pressure, and
//! the pressure bounds derived from it.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Ideal gas constant (m^2 Pa mol^-1 K^-1).
pub const GAS_CONSTANT: f64 = 8.3145626;
/// Molar mass of N2 (kg/mol).
pub const NITROGEN_MOLAR_MASS: f64 = 0.0280314;
/// 15 degrees Celsius.
pub const ROOM_TEMPERATURE: f64 = 288.15;
/// Lower pressure bound relative to the upper one.
pub const P_MIN_FRACTION: f64 = 0.2;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GasError {
    #[error("envelope area must be positive, got {0}")]
    DegenerateArea(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GasModel {
    pub gas_mass: f64,
    pub molar_mass: f64,
    pub temperature: f64,
    pub gas_constant: f64,
}

impl GasModel {
    pub fn nitrogen(gas_mass: f64) -> Self {
        Self {
            gas_mass,
            molar_mass: NITROGEN_MOLAR_MASS,
            temperature: ROOM_TEMPERATURE,
            gas_constant: GAS_CONSTANT,
        }
    }

    /// Amount of substance (mol).
    pub fn amount(&self) -> f64 {
        self.gas_mass / self.molar_mass
    }

    /// `n R T`, the constant right-hand side of the gas law (Pa m^2).
    pub fn energy(&self) -> f64 {
        self.amount() * self.gas_constant * self.temperature
    }

    pub fn pressure_from_area(&self, area: f64) -> Result<f64, GasError> {
        if area > 0.0 {
            Ok(self.energy() / area)
        } else {
            Err(GasError::DegenerateArea(area))
        }
    }

    /// Pressure of this gas filling a circle of radius `r`.
    pub fn p_max_for(&self, r: f64) -> f64 {
        self.energy() / (PI * r * r)
    }

    pub fn p_min_for(&self, r: f64) -> f64 {
        P_MIN_FRACTION * self.p_max_for(r)
    }
}
