//! Linear-polarization algebra: Stokes vectors, Mueller matrices, ideal
//! polarizer measurement and its four-angle capture inverse.
//!
//! Only linear polarization is modeled, so Stokes vectors have three
//! components and Mueller matrices are 3x3. The sign convention is fixed by
//! the capture inversion used throughout this crate:
//!
//! ```text
//!   s0 = (I0 + I45 + I90 + I135) / 2
//!   s1 = I90 - I0
//!   s2 = 2*I45 - s0
//! ```
//!
//! and the matching forward model for an ideal polarizer at angle `theta`
//! (measured from the frame reference axis):
//!
//! ```text
//!   I(theta) = (s0 - s1*cos(2 theta) + s2*sin(2 theta)) / 2
//! ```
//!
//! Under this convention light fully polarized along the reference axis has
//! `s1 = -s0`, and light polarized along the 45-degree diagonal has
//! `s2 = +s0`. DoP and the max/min intensities are convention-invariant.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul};

/// Absolute slack allowed when checking physical realizability, to absorb
/// accumulated rounding in long Mueller products.
pub const REALIZABILITY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StokesVector {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
}

impl StokesVector {
    pub const fn new(s0: f64, s1: f64, s2: f64) -> Self {
        Self { s0, s1, s2 }
    }

    /// Unpolarized light of intensity `i`.
    pub const fn unpolarized(i: f64) -> Self {
        Self::new(i, 0.0, 0.0)
    }

    /// Fully linearly polarized light: `psi` is the oscillation angle from
    /// the frame reference axis.
    pub fn polarized(i: f64, psi: f64) -> Self {
        Self::new(i, -i * (2.0 * psi).cos(), i * (2.0 * psi).sin())
    }

    pub fn polarized_intensity(&self) -> f64 {
        self.s1.hypot(self.s2)
    }

    /// `s0 >= sqrt(s1^2 + s2^2) - eps` and `s0 >= 0`.
    pub fn is_realizable(&self) -> bool {
        self.s0 >= 0.0 && self.s0 >= self.polarized_intensity() - REALIZABILITY_EPS
    }

    /// Intensity through an ideal linear polarizer at angle `theta` (radians,
    /// measured from the frame reference axis).
    pub fn measure_polarizer(&self, theta: f64) -> f64 {
        0.5 * (self.s0 - self.s1 * (2.0 * theta).cos() + self.s2 * (2.0 * theta).sin())
    }

    /// Degree and angle of polarization. AoP is folded into `[0, pi)`;
    /// the degenerate unpolarized case reports `(0, 0)`.
    pub fn dop_aop(&self) -> (f64, f64) {
        if self.s0 <= 0.0 {
            return (0.0, 0.0);
        }
        let lp = self.polarized_intensity();
        if lp == 0.0 {
            return (0.0, 0.0);
        }
        let dop = lp / self.s0;
        let mut aop = 0.5 * self.s2.atan2(self.s1);
        if aop < 0.0 {
            aop += PI;
        }
        if aop >= PI {
            aop -= PI;
        }
        (dop, aop)
    }

    /// Maximum and minimum intensity over all polarizer angles.
    pub fn maxmin(&self) -> (f64, f64) {
        let lp = self.polarized_intensity();
        (0.5 * (self.s0 + lp), 0.5 * (self.s0 - lp))
    }

    /// Re-express this Stokes vector in a reference frame rotated by `phi`.
    /// `s0` and DoP are unchanged; the period in `phi` is `pi`.
    pub fn rotate_frame(&self, phi: f64) -> StokesVector {
        let (s, c) = (2.0 * phi).sin_cos();
        StokesVector::new(
            self.s0,
            c * self.s1 + s * self.s2,
            -s * self.s1 + c * self.s2,
        )
    }

    /// Projection onto its unpolarized part: `[s0, 0, 0]`.
    pub fn depolarized(&self) -> StokesVector {
        StokesVector::unpolarized(self.s0)
    }
}

impl Add for StokesVector {
    type Output = StokesVector;
    fn add(self, o: StokesVector) -> StokesVector {
        StokesVector::new(self.s0 + o.s0, self.s1 + o.s1, self.s2 + o.s2)
    }
}

impl AddAssign for StokesVector {
    fn add_assign(&mut self, o: StokesVector) {
        *self = *self + o;
    }
}

impl Mul<f64> for StokesVector {
    type Output = StokesVector;
    fn mul(self, k: f64) -> StokesVector {
        StokesVector::new(self.s0 * k, self.s1 * k, self.s2 * k)
    }
}

/// 3x3 linear operator on Stokes vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuellerMatrix {
    pub m: [[f64; 3]; 3],
}

impl MuellerMatrix {
    pub const IDENTITY: MuellerMatrix = MuellerMatrix {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub const fn new(m: [[f64; 3]; 3]) -> Self {
        Self { m }
    }

    /// Ideal depolarizer: keeps `s0`, erases `s1` and `s2`.
    pub const fn depolarizer() -> Self {
        Self::new([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    }

    /// Frame-change operator equivalent to [`StokesVector::rotate_frame`].
    pub fn frame_rotation(phi: f64) -> Self {
        let (s, c) = (2.0 * phi).sin_cos();
        Self::new([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])
    }

    pub fn apply(&self, v: StokesVector) -> StokesVector {
        let m = &self.m;
        StokesVector::new(
            m[0][0] * v.s0 + m[0][1] * v.s1 + m[0][2] * v.s2,
            m[1][0] * v.s0 + m[1][1] * v.s1 + m[1][2] * v.s2,
            m[2][0] * v.s0 + m[2][1] * v.s1 + m[2][2] * v.s2,
        )
    }

    pub fn scaled(&self, k: f64) -> MuellerMatrix {
        let mut m = self.m;
        for row in &mut m {
            for e in row {
                *e *= k;
            }
        }
        MuellerMatrix::new(m)
    }
}

impl Mul for MuellerMatrix {
    type Output = MuellerMatrix;
    fn mul(self, o: MuellerMatrix) -> MuellerMatrix {
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = (0..3).map(|k| self.m[i][k] * o.m[k][j]).sum();
            }
        }
        MuellerMatrix::new(r)
    }
}

impl Mul<StokesVector> for MuellerMatrix {
    type Output = StokesVector;
    fn mul(self, v: StokesVector) -> StokesVector {
        self.apply(v)
    }
}

/// The four canonical polarizer angles, in capture order 0, 45, 90, 135 deg.
pub const CAPTURE_ANGLES: [f64; 4] = [0.0, PI / 4.0, PI / 2.0, 3.0 * PI / 4.0];

/// Reconstruct a Stokes vector from the four canonical polarizer intensities.
pub fn invert_capture_pixel(i0: f64, i45: f64, i90: f64, i135: f64) -> StokesVector {
    let s0 = 0.5 * (i0 + i45 + i90 + i135);
    StokesVector::new(s0, i90 - i0, 2.0 * i45 - s0)
}

/// Frame-change operator between two transverse reference frames of the
/// same beam.
///
/// `x_old` and `x_new` are unit reference axes, both perpendicular to the
/// propagation direction `omega`. Angles within each frame are measured from
/// the reference axis toward `omega x axis`. The returned matrix
/// re-expresses a Stokes vector given relative to `x_old` in the frame whose
/// axis is `x_new`; the physical beam is unchanged.
pub fn frame_change(x_old: crate::math::Vec3, x_new: crate::math::Vec3, omega: crate::math::Vec3) -> MuellerMatrix {
    let phi = x_new.dot(omega.cross(x_old)).atan2(x_new.dot(x_old));
    MuellerMatrix::frame_rotation(-phi)
}
