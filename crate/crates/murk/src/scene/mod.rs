//! Scene description: shape, camera, lights, medium and ground-truth maps.
//!
//! Scenes are defined by a JSON config with explicit schema (lengths in
//! meters, angles in degrees):
//!
//! ```json
//! {
//!   "seed": 7,
//!   "eta": 1.5046,
//!   "shape": { "kind": "sphere", "radius": 0.08 },
//!   "camera": {
//!     "position": [0.0, 0.0, -0.35], "look_at": [0.0, 0.0, 0.0],
//!     "vfov_deg": 45.0, "resolution": [128, 128]
//!   },
//!   "env_sh": [[2.1, 0, 0, 0, 0, 0, 0, 0, 0], ...x3],
//!   "flash": { "radius": 0.01, "intensity": 6.0 },
//!   "medium": { "sigma_t": [60, 60, 60], "albedo": [0.9, 0.8, 0.7], "g": 0.3 }
//! }
//! ```
//!
//! `shape` may be omitted for empty-scene diagnostics; `flash.center`
//! defaults to 2 cm off-axis (along image +x) from the camera. Config errors
//! are reported with a JSON pointer to the offending field.

pub mod camera;
pub mod mesh;
pub mod sh;
pub mod shape;

use crate::error::{Error, Result};
use crate::fresnel::InterfaceParams;
use crate::math::{vec3, Vec3};
use crate::medium::MediumParams;
use crate::render::image::{RgbImage, ScalarImage};
use serde::{Deserialize, Serialize};
use sh::{SHEnvironment, SH_COEFF_COUNT};
use shape::{Shape, ShapeConfig};

pub use camera::{Camera, CameraFrame};
pub use shape::Hit;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlashConfig {
    /// Absolute position; defaults to 2 cm off-axis from the camera.
    #[serde(default)]
    pub center: Option<Vec3>,
    #[serde(default = "default_flash_radius")]
    pub radius: f64,
    pub intensity: f64,
}

fn default_flash_radius() -> f64 {
    0.01
}

/// Emissive sphere approximating a camera flash: uniform isotropic radiance
/// `intensity` from its surface, opaque to everything behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlashLight {
    pub center: Vec3,
    pub radius: f64,
    pub intensity: f64,
}

impl FlashLight {
    /// Nearest intersection distance, if any.
    pub fn intersect(&self, origin: Vec3, dir: Vec3, t_min: f64) -> Option<f64> {
        let o = origin - self.center;
        let b = o.dot(dir);
        let c = o.length_squared() - self.radius * self.radius;
        let disc = b * b - c;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        let t0 = -b - sq;
        let t1 = -b + sq;
        if t0 > t_min {
            Some(t0)
        } else if t1 > t_min {
            Some(t1)
        } else {
            None
        }
    }
}

fn default_eta() -> f64 {
    crate::fresnel::DEFAULT_IOR
}

/// Serializable scene description (the on-disk schema).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default)]
    pub seed: u64,
    /// Relative index of refraction of the object boundary.
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Omit for an empty scene (environment and flash only).
    #[serde(default)]
    pub shape: Option<ShapeConfig>,
    pub camera: Camera,
    /// Spherical-harmonic coefficients, `[channel][basis]`, orders 0-2.
    pub env_sh: [[f64; SH_COEFF_COUNT]; 3],
    #[serde(default)]
    pub flash: Option<FlashConfig>,
    pub medium: MediumParams,
}

/// A validated scene, immutable during rendering.
#[derive(Debug, Clone)]
pub struct Scene {
    pub config: SceneConfig,
    pub shape: Option<Shape>,
    pub camera: Camera,
    pub env: SHEnvironment,
    pub flash: Option<FlashLight>,
    pub medium: MediumParams,
    pub interface: InterfaceParams,
    pub seed: u64,
}

impl SceneConfig {
    /// Parse a config from JSON, reporting schema violations with a JSON
    /// pointer to the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            pointer: path_to_pointer(e.path()),
            message: e.inner().to_string(),
        })
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene config serializes")
    }
}

fn path_to_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Map { key } => {
                out.push('/');
                out.push_str(key);
            }
            Segment::Seq { index } => {
                out.push('/');
                out.push_str(&index.to_string());
            }
            Segment::Enum { variant } => {
                out.push('/');
                out.push_str(variant);
            }
            Segment::Unknown => out.push_str("/?"),
        }
    }
    if out.is_empty() {
        "/".to_string()
    } else {
        out
    }
}

fn config_err(pointer: &str, message: impl Into<String>) -> Error {
    Error::Config {
        pointer: pointer.to_string(),
        message: message.into(),
    }
}

impl Scene {
    pub fn from_config(config: SceneConfig) -> Result<Self> {
        config
            .camera
            .validate()
            .map_err(|e| config_err("/camera", e.to_string()))?;
        if !(config.eta > 0.0) || !config.eta.is_finite() {
            return Err(config_err("/eta", format!("must be positive, got {}", config.eta)));
        }
        config
            .medium
            .validate()
            .map_err(|e| config_err("/medium", e.to_string()))?;
        for (ch, coeffs) in config.env_sh.iter().enumerate() {
            for (i, c) in coeffs.iter().enumerate() {
                if !c.is_finite() {
                    return Err(config_err(
                        &format!("/env_sh/{ch}/{i}"),
                        "coefficient must be finite",
                    ));
                }
            }
        }
        let shape = match &config.shape {
            Some(sc) => Some(Shape::from_config(sc).map_err(|e| config_err("/shape", e.to_string()))?),
            None => None,
        };
        let frame = config.camera.frame(config.camera.resolution[0], config.camera.resolution[1]);
        let flash = match &config.flash {
            Some(fc) => {
                if !(fc.radius > 0.0) {
                    return Err(config_err("/flash/radius", "must be positive"));
                }
                if !(fc.intensity >= 0.0) || !fc.intensity.is_finite() {
                    return Err(config_err("/flash/intensity", "must be finite and >= 0"));
                }
                let center = fc
                    .center
                    .unwrap_or_else(|| config.camera.position + frame.x * 0.02);
                Some(FlashLight {
                    center,
                    radius: fc.radius,
                    intensity: fc.intensity,
                })
            }
            None => None,
        };
        if let Some(s) = &shape {
            if s.contains(config.camera.position) {
                return Err(config_err("/camera/position", "camera is inside the shape"));
            }
            if let Some(f) = &flash {
                let dist = (f.center - s.center()).length();
                if dist <= f.radius + s.bounding_radius() {
                    // conservative bounding-sphere separation; exact contact
                    // checks are not worth the complexity at desk scale
                    return Err(config_err(
                        "/flash/center",
                        "flash sphere may intersect the shape (bounding-sphere test)",
                    ));
                }
            }
        }
        if let Some(f) = &flash {
            if (config.camera.position - f.center).length() <= f.radius {
                return Err(config_err("/flash/center", "camera is inside the flash sphere"));
            }
        }
        let env = SHEnvironment { coeffs: config.env_sh };
        Ok(Scene {
            shape,
            camera: config.camera,
            env,
            flash,
            medium: config.medium,
            interface: InterfaceParams::new(config.eta)?,
            seed: config.seed,
            config,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_config(SceneConfig::from_json(text)?)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::from_config(SceneConfig::from_file(path)?)
    }

    /// A copy with different medium parameters (used by the inverse solver).
    pub fn with_medium(&self, medium: MediumParams) -> Scene {
        let mut s = self.clone();
        s.medium = medium;
        s.config.medium = medium;
        s
    }

    /// A copy with a different environment and flash (used for illumination
    /// transport renders). `None` flash removes the emitter entirely.
    pub fn with_lights(&self, env: SHEnvironment, flash: Option<FlashLight>) -> Scene {
        let mut s = self.clone();
        s.config.env_sh = env.coeffs;
        s.config.flash = flash.map(|f| FlashConfig {
            center: Some(f.center),
            radius: f.radius,
            intensity: f.intensity,
        });
        s.env = env;
        s.flash = flash;
        s
    }
}

/// Per-pixel ground truth: camera-space normals, view-axis depth and the
/// object mask. Background pixels carry zero normals and depth 0.
#[derive(Debug, Clone)]
pub struct SceneGT {
    pub normal: RgbImage,
    pub depth: ScalarImage,
    pub mask: ScalarImage,
}

impl SceneGT {
    pub fn masked_count(&self) -> usize {
        self.mask.data.iter().filter(|&&m| m > 0.5).count()
    }
}

/// Ground-truth maps from pixel-center primary rays against the shape only
/// (lights are not part of the object mask).
pub fn gt_maps(scene: &Scene, width: u32, height: u32) -> SceneGT {
    let frame = scene.camera.frame(width, height);
    let mut normal = RgbImage::new(width, height);
    let mut depth = ScalarImage::new(width, height);
    let mut mask = ScalarImage::new(width, height);
    if let Some(shape) = &scene.shape {
        for py in 0..height {
            for px in 0..width {
                let dir = frame.primary_dir(px, py, 0.5, 0.5);
                if let Some(hit) = shape.intersect(frame.origin, dir, 1e-9) {
                    let n_cam = frame.to_camera_space(hit.facing_normal());
                    normal.set(px, py, [n_cam.x, n_cam.y, n_cam.z]);
                    depth.set(px, py, frame.depth_of(hit.position));
                    mask.set(px, py, 1.0);
                }
            }
        }
    }
    SceneGT { normal, depth, mask }
}

/// Ready-made scene configurations used by tests, docs and the CLI.
pub mod presets {
    use super::*;

    /// The regression fixture used throughout the test suite: a glass-like
    /// sphere of radius 8 cm viewed from 35 cm, mildly directional
    /// environment light plus an off-axis flash, and a forward-scattering
    /// milky medium.
    pub fn reference_sphere() -> SceneConfig {
        let l = (4.0 * std::f64::consts::PI).sqrt();
        let mut env = [[0.0; SH_COEFF_COUNT]; 3];
        for ch in 0..3 {
            env[ch][0] = 0.6 * l;
            env[ch][1] = 0.25; // mild vertical gradient
            env[ch][3] = -0.15; // mild horizontal gradient
        }
        SceneConfig {
            seed: 7,
            eta: crate::fresnel::DEFAULT_IOR,
            shape: Some(ShapeConfig::Sphere {
                radius: 0.08,
                pose: Default::default(),
            }),
            camera: Camera {
                position: vec3(0.0, 0.0, -0.35),
                look_at: Vec3::ZERO,
                up: vec3(0.0, 1.0, 0.0),
                vfov_deg: 45.0,
                resolution: [128, 128],
            },
            env_sh: env,
            flash: Some(FlashConfig {
                center: None,
                radius: 0.01,
                intensity: 6.0,
            }),
            medium: MediumParams {
                sigma_t: [60.0; 3],
                alpha: [0.9, 0.8, 0.7],
                g: 0.3,
            },
        }
    }

    /// Conservative medium in a constant unit environment with an
    /// index-matched boundary: the classic invisibility check.
    pub fn furnace_sphere() -> SceneConfig {
        let mut cfg = reference_sphere();
        cfg.eta = 1.0;
        cfg.flash = None;
        let l = (4.0 * std::f64::consts::PI).sqrt();
        cfg.env_sh = [[l, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]; 3];
        cfg.medium = MediumParams {
            sigma_t: [40.0; 3],
            alpha: [1.0; 3],
            g: 0.5,
        };
        cfg
    }
}
