//! Polarized Fresnel coefficients and Mueller matrices for a smooth
//! dielectric interface.
//!
//! All matrices here are expressed in the local s/p frame of the interface:
//! the Stokes reference axis is the s-direction (perpendicular to the plane
//! of incidence) on both sides of the interaction. With the crate's capture
//! convention (`s1 = I90 - I0`) an unpolarized beam reflects to `s1 < 0`,
//! i.e. an AoP of pi/2, and transmits to `s1 > 0`, an AoP of 0; the two
//! differ by exactly pi/2 for every incidence angle.
//!
//! Transmission uses the power normalization `(eta_t cos_t)/(eta_i cos_i)`
//! applied to the squared amplitudes, which makes the matrix symmetric under
//! direction reversal and closes the energy balance `R + T = 1` exactly.

use crate::error::{Error, Result};
use crate::stokes::MuellerMatrix;
use serde::{Deserialize, Serialize};

/// Relative index of refraction for the object boundary used throughout the
/// synthetic scenes (exterior -> interior).
pub const DEFAULT_IOR: f64 = 1.5046;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterfaceParams {
    /// Index of refraction ratio, exterior -> interior.
    pub eta: f64,
}

impl Default for InterfaceParams {
    fn default() -> Self {
        Self { eta: DEFAULT_IOR }
    }
}

impl InterfaceParams {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
        }
        Ok(Self { eta })
    }

    /// True when the boundary is index-matched and optically absent.
    pub fn is_index_matched(&self) -> bool {
        self.eta == 1.0
    }
}

/// Which way a transmission crosses the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransmissionSide {
    /// Exterior to interior (relative index `eta`).
    Enter,
    /// Interior to exterior (relative index `1/eta`); may hit TIR.
    Exit,
}

/// Amplitude and power Fresnel coefficients for one incidence configuration.
///
/// `eta` is the ratio of transmitted-side to incident-side index. In the TIR
/// regime the power reflectances are 1, transmittances 0, and the amplitudes
/// are reported with unit magnitude (their phase is not tracked).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FresnelCoeffs {
    pub rs: f64,
    pub rp: f64,
    pub ts: f64,
    pub tp: f64,
    /// Power reflectances.
    pub rs_pow: f64,
    pub rp_pow: f64,
    /// Power transmittances (flux-normalized).
    pub ts_pow: f64,
    pub tp_pow: f64,
    /// cos of the transmitted angle (0 in the TIR regime).
    pub cos_theta_t: f64,
    pub tir: bool,
}

impl FresnelCoeffs {
    /// `(Rs + Rp) / 2`.
    pub fn unpolarized_reflectance(&self) -> f64 {
        0.5 * (self.rs_pow + self.rp_pow)
    }

    /// `(Ts + Tp) / 2`.
    pub fn unpolarized_transmittance(&self) -> f64 {
        0.5 * (self.ts_pow + self.tp_pow)
    }
}

/// Fresnel coefficients for incidence with cosine `cos_theta_i` onto a
/// boundary with relative index `eta` (transmitted over incident side).
pub fn fresnel(cos_theta_i: f64, eta: f64) -> FresnelCoeffs {
    debug_assert!((0.0..=1.0 + 1e-12).contains(&cos_theta_i));
    let ci = cos_theta_i.clamp(0.0, 1.0);
    let sin2_i = 1.0 - ci * ci;
    let sin2_t = sin2_i / (eta * eta);
    if sin2_t >= 1.0 {
        return FresnelCoeffs {
            rs: 1.0,
            rp: 1.0,
            ts: 0.0,
            tp: 0.0,
            rs_pow: 1.0,
            rp_pow: 1.0,
            ts_pow: 0.0,
            tp_pow: 0.0,
            cos_theta_t: 0.0,
            tir: true,
        };
    }
    let ct = (1.0 - sin2_t).sqrt();
    // with eta = eta_t / eta_i, incident side index normalized to 1
    let rs = (ci - eta * ct) / (ci + eta * ct);
    let rp = (eta * ci - ct) / (eta * ci + ct);
    let ts = 2.0 * ci / (ci + eta * ct);
    let tp = 2.0 * ci / (eta * ci + ct);
    let flux = if ci > 0.0 { eta * ct / ci } else { 0.0 };
    FresnelCoeffs {
        rs,
        rp,
        ts,
        tp,
        rs_pow: rs * rs,
        rp_pow: rp * rp,
        ts_pow: flux * ts * ts,
        tp_pow: flux * tp * tp,
        cos_theta_t: ct,
        tir: false,
    }
}

/// Local-frame Mueller matrix of dielectric reflection.
pub fn reflect_mueller(cos_theta_i: f64, eta: f64) -> MuellerMatrix {
    let f = fresnel(cos_theta_i, eta);
    let a = 0.5 * (f.rs_pow + f.rp_pow);
    let b = 0.5 * (f.rp_pow - f.rs_pow);
    // TIR amplitudes carry no tracked phase; interior transport is scalar
    // anyway, so the coherent term is reported as its magnitude.
    let c = f.rs * f.rp;
    MuellerMatrix::new([[a, b, 0.0], [b, a, 0.0], [0.0, 0.0, c]])
}

/// Local-frame Mueller matrix of dielectric transmission.
///
/// `eta` is the exterior->interior index of the boundary; `side` selects the
/// crossing direction. Exiting beyond the critical angle is refused.
pub fn refract_mueller(cos_theta_i: f64, eta: f64, side: TransmissionSide) -> Result<MuellerMatrix> {
    let eta_rel = match side {
        TransmissionSide::Enter => eta,
        TransmissionSide::Exit => 1.0 / eta,
    };
    let f = fresnel(cos_theta_i, eta_rel);
    if f.tir {
        return Err(Error::TotalInternalReflection);
    }
    let flux = eta_rel * f.cos_theta_t / cos_theta_i.max(1e-300);
    let a = 0.5 * (f.ts_pow + f.tp_pow);
    let b = 0.5 * (f.tp_pow - f.ts_pow);
    let c = flux * f.ts * f.tp;
    Ok(MuellerMatrix::new([[a, b, 0.0], [b, a, 0.0], [0.0, 0.0, c]]))
}

/// Incidence angle (from the interior side) beyond which TIR occurs.
pub fn critical_angle(eta: f64) -> Result<f64> {
    if eta <= 1.0 {
        return Err(Error::InvalidInput(format!(
            "critical angle requires eta > 1, got {eta}"
        )));
    }
    Ok((1.0 / eta).asin())
}

/// Incidence angle at which the p reflectance vanishes.
pub fn brewster_angle(eta: f64) -> f64 {
    eta.atan()
}
