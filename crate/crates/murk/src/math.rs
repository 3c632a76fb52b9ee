//! Small 3D vector type and geometric helpers shared across the crate.

use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub const fn vec3(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3 { x, y, z }
}

impl Vec3 {
    pub const ZERO: Vec3 = vec3(0.0, 0.0, 0.0);

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        vec3(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn length_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn length(self) -> f64 {
        self.length_squared().sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        self / self.length()
    }

    /// Normalize, falling back to `fallback` when the vector is too short to
    /// define a direction.
    pub fn normalized_or(self, fallback: Vec3) -> Vec3 {
        let l = self.length();
        if l > 1e-12 {
            self / l
        } else {
            fallback
        }
    }

    pub fn abs(self) -> Vec3 {
        vec3(self.x.abs(), self.y.abs(), self.z.abs())
    }

    pub fn max_component(self) -> f64 {
        self.x.max(self.y).max(self.z)
    }

    pub fn min_component(self) -> f64 {
        self.x.min(self.y).min(self.z)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Mirror reflection of a direction `d` about normal `n` (both unit).
    pub fn reflect(self, n: Vec3) -> Vec3 {
        self - n * (2.0 * self.dot(n))
    }

    /// Any unit vector perpendicular to `self` (which must be unit length).
    pub fn any_perpendicular(self) -> Vec3 {
        // branch on the smallest component to avoid degeneracy
        let a = self.abs();
        let pick = if a.x <= a.y && a.x <= a.z {
            vec3(1.0, 0.0, 0.0)
        } else if a.y <= a.z {
            vec3(0.0, 1.0, 0.0)
        } else {
            vec3(0.0, 0.0, 1.0)
        };
        self.cross(pick).normalized()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        vec3(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        vec3(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        vec3(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        vec3(self.x * s, self.y * s, self.z * s)
    }
}

impl MulAssign<f64> for Vec3 {
    fn mul_assign(&mut self, s: f64) {
        *self = *self * s;
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        vec3(self.x / s, self.y / s, self.z / s)
    }
}

/// Orthonormal basis around a unit `w` axis; maps local (x, y, z=w) to world.
#[derive(Debug, Clone, Copy)]
pub struct Onb {
    pub u: Vec3,
    pub v: Vec3,
    pub w: Vec3,
}

impl Onb {
    pub fn from_w(w: Vec3) -> Onb {
        let u = w.any_perpendicular();
        let v = w.cross(u);
        Onb { u, v, w }
    }

    pub fn to_world(&self, local: Vec3) -> Vec3 {
        self.u * local.x + self.v * local.y + self.w * local.z
    }
}

/// Direction from spherical coordinates about `axis`.
pub fn direction_about(axis: Vec3, cos_theta: f64, phi: f64) -> Vec3 {
    let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
    let onb = Onb::from_w(axis);
    onb.to_world(vec3(sin_theta * phi.cos(), sin_theta * phi.sin(), cos_theta))
}

/// Refract unit direction `d` at a surface with unit normal `n` opposing `d`
/// (`d.dot(n) < 0`), with relative index `eta_rel = eta_incident / eta_transmitted`.
/// Returns `None` on total internal reflection.
pub fn refract(d: Vec3, n: Vec3, eta_rel: f64) -> Option<Vec3> {
    let cos_i = -d.dot(n);
    debug_assert!(cos_i >= -1e-9);
    let sin2_t = eta_rel * eta_rel * (1.0 - cos_i * cos_i);
    if sin2_t >= 1.0 {
        return None;
    }
    let cos_t = (1.0 - sin2_t).sqrt();
    Some((d * eta_rel + n * (eta_rel * cos_i - cos_t)).normalized())
}
