//! Environment illumination as a real spherical-harmonic expansion of
//! orders 0-2 (nine coefficients per RGB channel).
//!
//! Basis ordering follows the usual real-SH convention:
//! `[Y00, Y1-1, Y10, Y11, Y2-2, Y2-1, Y20, Y21, Y22]`, i.e. the degree-1
//! functions are proportional to `(y, z, x)` and the degree-2 functions to
//! `(xy, yz, 3z^2-1, xz, x^2-y^2)`.
//!
//! Evaluated radiance is clamped at zero by default: sampled coefficient
//! sets may have negative lobes, but physical radiance cannot be negative.
//! The unclamped signed evaluation is kept available for linear-transport
//! fitting, where the expansion must behave as an exact linear family.

use crate::math::Vec3;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Number of coefficients per channel (orders 0 through 2).
pub const SH_COEFF_COUNT: usize = 9;

const C0: f64 = 0.282095; // Y00
const C1: f64 = 0.488603; // Y1m
const C2: f64 = 1.092548; // Y2-2, Y2-1, Y21
const C3: f64 = 0.315392; // Y20
const C4: f64 = 0.546274; // Y22

/// Evaluate the nine basis functions at a unit direction.
pub fn sh_basis(d: Vec3) -> [f64; SH_COEFF_COUNT] {
    let (x, y, z) = (d.x, d.y, d.z);
    [
        C0,
        C1 * y,
        C1 * z,
        C1 * x,
        C2 * x * y,
        C2 * y * z,
        C3 * (3.0 * z * z - 1.0),
        C2 * x * z,
        C4 * (x * x - y * y),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SHEnvironment {
    /// `coeffs[channel][basis_index]`, radiance units.
    pub coeffs: [[f64; SH_COEFF_COUNT]; 3],
}

impl SHEnvironment {
    pub fn black() -> Self {
        Self { coeffs: [[0.0; SH_COEFF_COUNT]; 3] }
    }

    /// Environment with constant radiance `l` in every direction
    /// (`c00 = l * sqrt(4 pi)` per channel).
    pub fn constant(l: f64) -> Self {
        let mut env = Self::black();
        for ch in 0..3 {
            env.coeffs[ch][0] = l * (4.0 * PI).sqrt();
        }
        env
    }

    /// Environment containing a single basis function with unit coefficient
    /// in every channel. Used to render transport images for linear fits.
    pub fn single_basis(index: usize) -> Self {
        assert!(index < SH_COEFF_COUNT);
        let mut env = Self::black();
        for ch in 0..3 {
            env.coeffs[ch][index] = 1.0;
        }
        env
    }

    /// Radiance toward direction `d`, clamped at zero per channel.
    pub fn eval(&self, d: Vec3) -> [f64; 3] {
        let v = self.eval_signed(d);
        [v[0].max(0.0), v[1].max(0.0), v[2].max(0.0)]
    }

    /// Unclamped signed evaluation (exact linear in the coefficients).
    pub fn eval_signed(&self, d: Vec3) -> [f64; 3] {
        let b = sh_basis(d);
        let mut out = [0.0; 3];
        for ch in 0..3 {
            let mut acc = 0.0;
            for (c, y) in self.coeffs[ch].iter().zip(b.iter()) {
                acc += c * y;
            }
            out[ch] = acc;
        }
        out
    }

    /// Mean radiance per channel of the unclamped expansion over the sphere
    /// (only the constant term survives the average).
    pub fn mean_radiance(&self) -> [f64; 3] {
        // mean = c00 * Y00 since all higher-order basis functions integrate
        // to zero over the sphere
        [
            self.coeffs[0][0] * C0,
            self.coeffs[1][0] * C0,
            self.coeffs[2][0] * C0,
        ]
    }

    /// True when the expansion is non-negative on a dense direction grid,
    /// i.e. clamping never activates (within tolerance).
    pub fn is_nonnegative_on_grid(&self) -> bool {
        let n = 64;
        for i in 0..n {
            for j in 0..(2 * n) {
                let theta = PI * (i as f64 + 0.5) / n as f64;
                let phi = PI * j as f64 / n as f64;
                let d = Vec3 {
                    x: theta.sin() * phi.cos(),
                    y: theta.sin() * phi.sin(),
                    z: theta.cos(),
                };
                if self.eval_signed(d).iter().any(|&v| v < -1e-12) {
                    return false;
                }
            }
        }
        true
    }
}
