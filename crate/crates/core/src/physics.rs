//! Acoustic constants and the residuals linking pressure, particle velocity,
//! FOA channels and the velocity potential.
//!
//! Under SN3D the W channel is the pressure and `(X, Y, Z) = v` relates to
//! the particle velocity through `u = -v / (ρ₀ c₀)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Homogeneous, inviscid propagation medium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Medium {
    /// Density in kg/m³.
    pub density: f64,
    /// Speed of sound in m/s.
    pub sound_speed: f64,
}

impl Default for Medium {
    fn default() -> Self {
        Medium {
            density: 1.2,
            sound_speed: 343.0,
        }
    }
}

impl Medium {
    pub fn new(density: f64, sound_speed: f64) -> Result<Self> {
        let m = Medium {
            density,
            sound_speed,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.density) || !ok(self.sound_speed) {
            return Err(Error::config(format!(
                "medium constants must be positive and finite, got ρ₀={} c₀={}",
                self.density, self.sound_speed
            )));
        }
        Ok(())
    }

    /// Characteristic impedance ρ₀c₀.
    pub fn impedance(&self) -> f64 {
        self.density * self.sound_speed
    }
}

/// Particle velocity from the first-order channels: `u = -v / (ρ₀ c₀)`.
pub fn velocity_from_foa(v: [f64; 3], medium: &Medium) -> [f64; 3] {
    let z = medium.impedance();
    v.map(|c| -c / z)
}

/// Inverse of [`velocity_from_foa`].
pub fn foa_from_velocity(u: [f64; 3], medium: &Medium) -> [f64; 3] {
    let z = medium.impedance();
    u.map(|c| -c * z)
}

/// `∇w - (1/c₀) ∂v/∂t`, zero when the linearized momentum equation holds.
pub fn momentum_residual(grad_w: [f64; 3], dv_dt: [f64; 3], medium: &Medium) -> [f64; 3] {
    let inv_c = 1.0 / medium.sound_speed;
    [
        grad_w[0] - inv_c * dv_dt[0],
        grad_w[1] - inv_c * dv_dt[1],
        grad_w[2] - inv_c * dv_dt[2],
    ]
}

/// `∇·v - (1/c₀) ∂w/∂t`: the continuity equation written in FOA channels and
/// multiplied by `-c₀`.
pub fn continuity_residual(div_v: f64, dw_dt: f64, medium: &Medium) -> f64 {
    div_v - dw_dt / medium.sound_speed
}

/// `ΔΨ - (1/c₀²) ∂²Ψ/∂t²`.
pub fn wave_residual(laplacian: f64, d2_dt2: f64, medium: &Medium) -> f64 {
    let c = medium.sound_speed;
    laplacian - d2_dt2 / (c * c)
}
