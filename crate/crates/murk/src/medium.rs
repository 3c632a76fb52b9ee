//! Homogeneous scattering medium: extinction, single-scattering albedo and
//! the Henyey-Greenstein phase function.
//!
//! Spectral parameters are per-RGB-channel; the anisotropy `g` is shared by
//! all channels. Because volume scattering is modeled as depolarizing, the
//! in-medium random walk is a scalar (per-channel) process; the phase
//! function only shapes directions and the albedo only scales throughput.

use crate::error::{Error, Result};
use crate::math::{direction_about, Vec3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Inclusive bounds used for parameter validation and for the inverse
/// solver's search box.
pub const SIGMA_T_MIN: f64 = 1.0;
pub const SIGMA_T_MAX: f64 = 300.0;
pub const ALPHA_MIN: f64 = 0.0;
pub const ALPHA_MAX: f64 = 1.0;
pub const G_MIN: f64 = -0.9;
pub const G_MAX: f64 = 0.9;

/// Homogeneous medium parameters (RGB extinction and albedo, shared `g`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediumParams {
    /// Extinction coefficient per channel, in inverse meters.
    pub sigma_t: [f64; 3],
    /// Single-scattering albedo per channel, in [0, 1]. Serialized as
    /// `albedo` in config and metadata files.
    #[serde(rename = "albedo")]
    pub alpha: [f64; 3],
    /// Henyey-Greenstein anisotropy, in (-1, 1).
    pub g: f64,
}

impl MediumParams {
    pub fn new(sigma_t: [f64; 3], alpha: [f64; 3], g: f64) -> Result<Self> {
        let p = Self { sigma_t, alpha, g };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, &s) in self.sigma_t.iter().enumerate() {
            if !s.is_finite() || s < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "sigma_t[{k}] must be finite and non-negative, got {s}"
                )));
            }
        }
        for (k, &a) in self.alpha.iter().enumerate() {
            if !a.is_finite() || !(ALPHA_MIN..=ALPHA_MAX).contains(&a) {
                return Err(Error::InvalidInput(format!(
                    "alpha[{k}] must be in [0, 1], got {a}"
                )));
            }
        }
        if !self.g.is_finite() || self.g.abs() >= 1.0 {
            return Err(Error::InvalidInput(format!(
                "g must be in (-1, 1), got {}",
                self.g
            )));
        }
        Ok(())
    }

    /// True when no channel ever scatters (the interior contributes nothing).
    pub fn is_black(&self) -> bool {
        self.alpha.iter().all(|&a| a == 0.0)
    }
}

/// Henyey-Greenstein phase function value for scattering cosine `cos_theta`.
///
/// Normalized so the integral over the sphere is 1.
pub fn hg_eval(g: f64, cos_theta: f64) -> f64 {
    let g2 = g * g;
    let denom = 1.0 + g2 - 2.0 * g * cos_theta;
    (1.0 - g2) / (4.0 * PI * denom.max(1e-300).powf(1.5))
}

/// Sample a scattering cosine from the Henyey-Greenstein distribution.
pub fn hg_sample_cos(g: f64, u: f64) -> f64 {
    if g.abs() < 1e-3 {
        2.0 * u - 1.0
    } else {
        let sq = (1.0 - g * g) / (1.0 - g + 2.0 * g * u);
        ((1.0 + g * g - sq * sq) / (2.0 * g)).clamp(-1.0, 1.0)
    }
}

/// Sample a new propagation direction about `dir` from the phase function.
pub fn hg_sample<R: Rng>(g: f64, dir: Vec3, rng: &mut R) -> Vec3 {
    let cos_theta = hg_sample_cos(g, rng.gen::<f64>());
    let phi = 2.0 * PI * rng.gen::<f64>();
    direction_about(dir, cos_theta, phi)
}

/// Sample a free-flight distance for extinction `sigma_t`.
///
/// Returns `f64::INFINITY` when the medium does not attenuate.
pub fn sample_free_flight<R: Rng>(sigma_t: f64, rng: &mut R) -> f64 {
    if sigma_t <= 0.0 {
        return f64::INFINITY;
    }
    let u: f64 = rng.gen();
    -(1.0 - u).max(1e-300).ln() / sigma_t
}

/// Beam transmittance over distance `t` for extinction `sigma_t`.
pub fn transmittance(sigma_t: f64, t: f64) -> f64 {
    (-sigma_t * t).exp()
}
