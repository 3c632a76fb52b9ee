//! Pinhole perspective camera.
//!
//! Camera space is right-handed with `x` pointing image-right, `y` pointing
//! image-up and `z` pointing forward along the view direction (`x cross y =
//! z`). A surface directly facing the camera therefore has camera-space
//! normal `(0, 0, -1)`. Pixel rows run top to bottom, so pixel `(0, 0)` maps
//! to the upper-left of the image.

use crate::error::{Error, Result};
use crate::math::{vec3, Vec3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    #[serde(default = "default_up")]
    pub up: Vec3,
    /// Vertical field of view in degrees.
    pub vfov_deg: f64,
    /// Default output resolution `[width, height]` in pixels.
    pub resolution: [u32; 2],
}

fn default_up() -> Vec3 {
    vec3(0.0, 1.0, 0.0)
}

/// Orthonormal camera basis: `x` right, `y` up, `z` forward.
#[derive(Debug, Clone, Copy)]
pub struct CameraFrame {
    pub origin: Vec3,
    pub x: Vec3,
    pub y: Vec3,
    pub z: Vec3,
    /// `tan(vfov / 2)`.
    pub tan_half_vfov: f64,
    pub width: u32,
    pub height: u32,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if !(self.vfov_deg > 0.0 && self.vfov_deg < 180.0) {
            return Err(Error::InvalidInput(format!(
                "vertical FOV must be in (0, 180) degrees, got {}",
                self.vfov_deg
            )));
        }
        if self.resolution[0] == 0 || self.resolution[1] == 0 {
            return Err(Error::InvalidInput("camera resolution must be nonzero".into()));
        }
        if (self.look_at - self.position).length() < 1e-12 {
            return Err(Error::InvalidInput(
                "camera look_at must differ from position".into(),
            ));
        }
        let forward = (self.look_at - self.position).normalized();
        if self.up.cross(forward).length() < 1e-9 {
            return Err(Error::InvalidInput(
                "camera up vector is parallel to the view direction".into(),
            ));
        }
        Ok(())
    }

    /// Resolve the orthonormal frame at a given output resolution.
    pub fn frame(&self, width: u32, height: u32) -> CameraFrame {
        let z = (self.look_at - self.position).normalized();
        let x = self.up.normalized().cross(z).normalized();
        let y = z.cross(x);
        CameraFrame {
            origin: self.position,
            x,
            y,
            z,
            tan_half_vfov: (self.vfov_deg.to_radians() / 2.0).tan(),
            width,
            height,
        }
    }
}

impl CameraFrame {
    /// World-space primary ray direction through pixel `(px, py)` at
    /// sub-pixel offset `(jx, jy)` in `[0, 1)` (`(0.5, 0.5)` is the center).
    pub fn primary_dir(&self, px: u32, py: u32, jx: f64, jy: f64) -> Vec3 {
        let aspect = self.width as f64 / self.height as f64;
        let sx = ((px as f64 + jx) / self.width as f64 * 2.0 - 1.0) * aspect * self.tan_half_vfov;
        let sy = (1.0 - (py as f64 + jy) / self.height as f64 * 2.0) * self.tan_half_vfov;
        (self.x * sx + self.y * sy + self.z).normalized()
    }

    /// Polarization reference axis for a ray direction: the image x axis
    /// projected into the plane perpendicular to the ray.
    pub fn reference_axis(&self, dir: Vec3) -> Vec3 {
        let proj = self.x - dir * self.x.dot(dir);
        let len = proj.length();
        if len > 1e-12 {
            proj / len
        } else {
            // degenerate only when the ray runs along image x, far outside
            // any realistic field of view
            self.y.cross(dir).normalized()
        }
    }

    /// Transform a world-space direction into camera space.
    pub fn to_camera_space(&self, v: Vec3) -> Vec3 {
        vec3(v.dot(self.x), v.dot(self.y), v.dot(self.z))
    }

    /// Camera-space depth of a world point: distance along the view axis.
    pub fn depth_of(&self, p: Vec3) -> f64 {
        (p - self.origin).dot(self.z)
    }
}
