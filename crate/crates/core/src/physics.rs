//! Physical constants, gravitational scales and the initial wave packet.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Hydrogen (and antihydrogen) atomic mass (kg).
pub const HYDROGEN_MASS: f64 = 1.6735e-27;
/// Standard free-fall acceleration used as the reference value (m/s²).
pub const STANDARD_G: f64 = 9.81;
/// Ratio `ζ/h` above which the analytic projection formula is flagged.
pub const PROJECTION_VALIDITY_RATIO: f64 = 0.2;

/// Mass, ħ and acceleration together with the derived gravitational scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalContext {
    pub mass: f64,
    pub hbar: f64,
    pub g: f64,
    /// `t_g = (2ħ / (m g²))^{1/3}`
    pub time_scale: f64,
    /// `ℓ_g = (ħ² / (2 m² g))^{1/3}`
    pub length_scale: f64,
    /// `p_g = ħ / ℓ_g = (2 ħ m² g)^{1/3}`
    pub momentum_scale: f64,
}

/// Builds a context with the standard ħ.
pub fn make_context(mass: f64, g: f64) -> Result<PhysicalContext> {
    PhysicalContext::new(mass, HBAR, g)
}

impl PhysicalContext {
    pub fn new(mass: f64, hbar: f64, g: f64) -> Result<Self> {
        for (name, v) in [("mass", mass), ("hbar", hbar), ("g", g)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let time_scale = (2.0 * hbar / (mass * g * g)).cbrt();
        let length_scale = (hbar * hbar / (2.0 * mass * mass * g)).cbrt();
        let momentum_scale = hbar / length_scale;
        Ok(Self {
            mass,
            hbar,
            g,
            time_scale,
            length_scale,
            momentum_scale,
        })
    }

    /// Same mass and ħ at another acceleration.
    pub fn with_g(&self, g: f64) -> Result<Self> {
        Self::new(self.mass, self.hbar, g)
    }

    /// Gravitational energy unit `m g ℓ_g`.
    pub fn energy_scale(&self) -> f64 {
        self.mass * self.g * self.length_scale
    }
}

/// Minimal-uncertainty Gaussian released above the mirror.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialWavePacket {
    /// mean height `h` (m)
    pub height: f64,
    /// position dispersion `ζ` (m), identical along both axes
    pub width: f64,
    /// horizontal kick velocity `v0` (m/s)
    pub kick_velocity: f64,
}

impl InitialWavePacket {
    pub fn new(height: f64, width: f64, kick_velocity: f64) -> Result<Self> {
        let wp = Self {
            height,
            width,
            kick_velocity,
        };
        wp.validate()?;
        Ok(wp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.height > 0.0) || !(self.width > 0.0) {
            return Err(Error::Config(format!(
                "wave packet needs h > 0 and ζ > 0 (h = {}, ζ = {})",
                self.height, self.width
            )));
        }
        if !self.kick_velocity.is_finite() {
            return Err(Error::Config("kick velocity must be finite".into()));
        }
        if self.width >= self.height {
            return Err(Error::Config(format!(
                "ζ = {} is not smaller than h = {}; the Gaussian overlaps the mirror",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// True when `ζ/h` exceeds the range where the analytic projection is trusted.
    pub fn projection_warning(&self) -> bool {
        self.width / self.height > PROJECTION_VALIDITY_RATIO
    }

    /// Momentum dispersion `ħ / (2ζ)` along either axis.
    pub fn momentum_dispersion(&self, hbar: f64) -> f64 {
        hbar / (2.0 * self.width)
    }

    /// Velocity dispersion `ħ / (2 m ζ)`.
    pub fn velocity_dispersion(&self, ctx: &PhysicalContext) -> f64 {
        self.momentum_dispersion(ctx.hbar) / ctx.mass
    }

    /// Normalized vertical wave function `ψ_0(z)`.
    pub fn vertical(&self, z: f64) -> f64 {
        let w2 = self.width * self.width;
        (2.0 * std::f64::consts::PI * w2).powf(-0.25) * (-(z - self.height).powi(2) / (4.0 * w2)).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hydrogen_scales() {
        let ctx = make_context(HYDROGEN_MASS, STANDARD_G).unwrap();
        assert!((ctx.time_scale / 1.09e-3 - 1.0).abs() < 0.01, "{}", ctx.time_scale);
        assert!((ctx.momentum_scale / 1.79e-29 - 1.0).abs() < 0.01, "{}", ctx.momentum_scale);
        // ℓ_g from the two quoted values: ħ / 1.79e-29 ≈ 5.89 μm
        assert!((ctx.length_scale / (HBAR / 1.79e-29) - 1.0).abs() < 0.01);
        assert!((ctx.length_scale - 5.87e-6).abs() < 0.03e-6);
        let p_alt = (2.0 * HBAR * HYDROGEN_MASS * HYDROGEN_MASS * STANDARD_G).cbrt();
        assert!((ctx.momentum_scale / p_alt - 1.0).abs() < 1e-12);
    }

    #[test]
    fn doubling_g_rescales_exactly() {
        let a = make_context(HYDROGEN_MASS, 9.81).unwrap();
        let b = a.with_g(2.0 * 9.81).unwrap();
        assert!((b.time_scale / a.time_scale - 2f64.powf(-2.0 / 3.0)).abs() < 1e-14);
        assert!((b.momentum_scale / a.momentum_scale - 2f64.powf(1.0 / 3.0)).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_positive_inputs() {
        assert!(make_context(0.0, 9.81).is_err());
        assert!(make_context(HYDROGEN_MASS, -1.0).is_err());
        assert!(InitialWavePacket::new(1e-5, 2e-5, 0.25).is_err());
        assert!(InitialWavePacket::new(1e-5, 0.0, 0.25).is_err());
    }

    #[test]
    fn reference_packet_velocity_dispersion() {
        let ctx = make_context(HYDROGEN_MASS, STANDARD_G).unwrap();
        let wp = InitialWavePacket::new(10e-6, 0.5e-6, 0.25).unwrap();
        assert!((wp.velocity_dispersion(&ctx) - 0.063).abs() < 0.001);
        assert!(!wp.projection_warning());
        assert!(InitialWavePacket::new(10e-6, 3e-6, 0.25).unwrap().projection_warning());
    }
}
