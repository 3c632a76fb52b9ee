//! Polarized volumetric Monte Carlo renderer.
//!
//! The transport model follows how polarization actually arises for a smooth
//! dielectric object filled with a scattering medium: volume scattering
//! depolarizes, so the only polarizing event on a camera path is its first
//! surface interaction. The renderer therefore accumulates a full Mueller
//! matrix through that one interaction (reflection or transmission, with the
//! proper rotations between the local incidence frame and the image reference
//! axis) and treats everything deeper as an unpolarized radiance source,
//! estimated by independent scalar random walks, one per color channel.
//! Power-normalized transmission is symmetric under direction reversal, so
//! walking from the camera yields the same values as tracing light flow.
//!
//! Paths branch at boundaries (reflect with probability equal to the
//! unpolarized reflectance, otherwise refract), which cancels the branch
//! weight and keeps every sample non-negative. Because each (pixel, sample,
//! channel) owns a counter-based random stream, images are bit-identical for
//! any thread count, and the component modes decompose exactly: per sample,
//! `Full` equals `PureBsdf` plus `SssOnly` bit for bit, and `Unpolarized`
//! reproduces the `Full` intensity channel bit for bit.

pub mod image;

use crate::fresnel::{fresnel, reflect_mueller, refract_mueller, TransmissionSide};
use crate::math::{refract, Vec3};
use crate::medium::{hg_sample, sample_free_flight};
use crate::rng::{channel_rng, sample_rng};
use crate::scene::{gt_maps, CameraFrame, Scene, SceneGT};
use crate::stokes::{frame_change, StokesVector};
use image::{
    capture_images, polarimetric_maps, polarimetric_summary, CaptureSet, PolarimetricMaps,
    PolarimetricSummary, RgbImage, ScalarImage, StokesImage,
};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};

pub const DEFAULT_MAX_BOUNCES: u32 = 64;
/// Bounce count after which Russian roulette begins.
pub const RR_START_BOUNCE: u32 = 32;
const RR_SURVIVAL_MIN: f64 = 0.05;
const RR_SURVIVAL_MAX: f64 = 0.95;
/// Smallest ray parameter accepted when intersecting from a surface point.
const T_MIN: f64 = 1e-7;
/// Offset along the normal when restarting a ray at a boundary, in meters.
/// Large enough to clear floating-point surface noise (~1e-12 m), small
/// enough to be invisible against desk-scale mean free paths (>= 3 mm).
const SURFACE_NUDGE: f64 = 1e-9;

const BLACK: [StokesVector; 3] = [StokesVector::new(0.0, 0.0, 0.0); 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    /// Polarized surface response plus the interior walk.
    Full,
    /// Surface response only: samples that would enter the medium are black.
    PureBsdf,
    /// Interior term only: samples that never enter the medium are black.
    SssOnly,
    /// Same transport as `Full` with the polarization state discarded.
    Unpolarized,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RenderConfig {
    pub width: u32,
    pub height: u32,
    pub spp: u32,
    pub max_bounces: u32,
    pub seed: u64,
    pub mode: RenderMode,
    /// Worker thread count; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Evaluate the environment without clamping negative lobes (used when
    /// rendering against signed basis illuminations for transport fits).
    pub signed_env: bool,
    /// Also estimate the per-pixel variance of the sample mean of `s0`.
    pub track_variance: bool,
}

impl RenderConfig {
    pub fn new(width: u32, height: u32, spp: u32, seed: u64) -> Self {
        Self {
            width,
            height,
            spp,
            max_bounces: DEFAULT_MAX_BOUNCES,
            seed,
            mode: RenderMode::Full,
            threads: None,
            signed_env: false,
            track_variance: false,
        }
    }

    /// Configuration at the scene camera's native resolution and seed.
    pub fn for_scene(scene: &Scene, spp: u32) -> Self {
        Self::new(
            scene.camera.resolution[0],
            scene.camera.resolution[1],
            spp,
            scene.seed,
        )
    }

    pub fn with_mode(mut self, mode: RenderMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }

    pub fn with_variance(mut self) -> Self {
        self.track_variance = true;
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RenderMetadata {
    pub width: u32,
    pub height: u32,
    pub spp: u32,
    pub seed: u64,
    pub mode: RenderMode,
    /// Interior rays that escaped the shape without meeting its boundary.
    /// Grazing floating-point misses at parts-per-million rates are normal
    /// even on analytic shapes; large counts flag leaky meshes.
    pub watertight_warnings: u64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct RenderOutputs {
    pub stokes: StokesImage,
    pub captures: CaptureSet,
    /// Captures of a surface-only render at the same seed, when requested.
    pub pure_bsdf_captures: Option<CaptureSet>,
    pub gt: SceneGT,
    pub polarimetric: PolarimetricMaps,
    /// Per-pixel variance of the mean `s0`, when tracked.
    pub variance: Option<RgbImage>,
    pub metadata: RenderMetadata,
}

impl RenderOutputs {
    /// Masked polarimetric statistics over the object pixels.
    pub fn summary(&self) -> crate::Result<PolarimetricSummary> {
        polarimetric_summary(&self.stokes, &self.gt.mask)
    }
}

/// Render the per-pixel Stokes image (plus optional variance) and count
/// watertightness failures. When `mask` is given, only pixels with mask
/// value above 0.5 are traced; the rest stay zero.
pub fn render_stokes_masked(
    scene: &Scene,
    cfg: &RenderConfig,
    mask: Option<&ScalarImage>,
) -> (StokesImage, Option<RgbImage>, u64) {
    assert!(cfg.width > 0 && cfg.height > 0, "render target must be non-empty");
    if let Some(m) = mask {
        assert!(
            m.width == cfg.width && m.height == cfg.height,
            "mask resolution must match the render target"
        );
    }
    let frame = scene.camera.frame(cfg.width, cfg.height);
    let mut stokes = StokesImage::new(cfg.width, cfg.height);
    let mut var = RgbImage::new(cfg.width, cfg.height);
    let leaks = AtomicU64::new(0);
    let w = cfg.width as usize;
    let spp = cfg.spp.max(1);

    let mut run = || {
        stokes
            .data
            .par_chunks_mut(w)
            .zip(var.data.par_chunks_mut(w))
            .enumerate()
            .for_each(|(y, (srow, vrow))| {
                let y = y as u32;
                let mut local_leaks = 0u64;
                for x in 0..cfg.width {
                    if let Some(m) = mask {
                        if m.get(x, y) <= 0.5 {
                            continue;
                        }
                    }
                    let mut acc = [StokesVector::new(0.0, 0.0, 0.0); 3];
                    let mut sum_sq = [0.0f64; 3];
                    for s in 0..spp {
                        let v = trace_sample(scene, &frame, x, y, s, cfg, &mut local_leaks);
                        for k in 0..3 {
                            acc[k] += v[k];
                            if cfg.track_variance {
                                sum_sq[k] += v[k].s0 * v[k].s0;
                            }
                        }
                    }
                    let inv = 1.0 / spp as f64;
                    srow[x as usize] = [acc[0] * inv, acc[1] * inv, acc[2] * inv];
                    if cfg.track_variance && spp >= 2 {
                        let n = spp as f64;
                        for k in 0..3 {
                            let mean = acc[k].s0 * inv;
                            let sample_var = ((sum_sq[k] - n * mean * mean) / (n - 1.0)).max(0.0);
                            vrow[x as usize][k] = sample_var * inv;
                        }
                    }
                }
                leaks.fetch_add(local_leaks, Ordering::Relaxed);
            });
    };
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool construction")
            .install(run),
        None => run(),
    }

    let variance = cfg.track_variance.then_some(var);
    (stokes, variance, leaks.into_inner())
}

/// Render the full output set: Stokes image, the four polarizer captures,
/// ground-truth maps and derived polarimetric maps.
pub fn render(scene: &Scene, cfg: &RenderConfig) -> RenderOutputs {
    let t0 = std::time::Instant::now();
    let (stokes, variance, leak_count) = render_stokes_masked(scene, cfg, None);
    let captures = capture_images(&stokes);
    let polarimetric = polarimetric_maps(&stokes);
    let gt = gt_maps(scene, cfg.width, cfg.height);
    RenderOutputs {
        captures,
        pure_bsdf_captures: None,
        polarimetric,
        gt,
        variance,
        metadata: RenderMetadata {
            width: cfg.width,
            height: cfg.height,
            spp: cfg.spp,
            seed: cfg.seed,
            mode: cfg.mode,
            watertight_warnings: leak_count,
            wall_time_s: t0.elapsed().as_secs_f64(),
        },
        stokes,
    }
}

/// Like [`render`], plus a surface-only render at the same seed whose
/// captures isolate the specular component.
pub fn render_with_pure(scene: &Scene, cfg: &RenderConfig) -> RenderOutputs {
    let mut out = render(scene, cfg);
    let pure_cfg = cfg.clone().with_mode(RenderMode::PureBsdf);
    let (pure, _, _) = render_stokes_masked(scene, &pure_cfg, None);
    out.pure_bsdf_captures = Some(capture_images(&pure));
    out
}

fn env_radiance(scene: &Scene, d: Vec3, signed: bool) -> [f64; 3] {
    if signed {
        scene.env.eval_signed(d)
    } else {
        scene.env.eval(d)
    }
}

fn flash_radiance(scene: &Scene) -> [f64; 3] {
    let i = scene.flash.as_ref().map_or(0.0, |f| f.intensity);
    [i, i, i]
}

fn unpolarized3(l: [f64; 3]) -> [StokesVector; 3] {
    [
        StokesVector::unpolarized(l[0]),
        StokesVector::unpolarized(l[1]),
        StokesVector::unpolarized(l[2]),
    ]
}

/// Unit axis perpendicular to the plane of incidence, shared by all beams of
/// one surface interaction. At normal incidence the interaction is
/// rotationally symmetric and any transverse axis serves.
fn plane_axis(d: Vec3, n: Vec3) -> Vec3 {
    d.cross(n).normalized_or(d.any_perpendicular())
}

/// Apply the mode's output filter to a path's polarization column times the
/// per-channel scalar radiance.
fn finish(mode: RenderMode, col: StokesVector, l: [f64; 3]) -> [StokesVector; 3] {
    let col = if mode == RenderMode::Unpolarized {
        StokesVector::new(col.s0, 0.0, 0.0)
    } else {
        col
    };
    [col * l[0], col * l[1], col * l[2]]
}

/// Trace one camera sample, returning the per-channel Stokes contribution in
/// the image reference frame of its primary ray.
fn trace_sample(
    scene: &Scene,
    frame: &CameraFrame,
    x: u32,
    y: u32,
    sample: u32,
    cfg: &RenderConfig,
    leaks: &mut u64,
) -> [StokesVector; 3] {
    let mut rng = sample_rng(cfg.seed, x, y, sample);
    let jx: f64 = rng.gen();
    let jy: f64 = rng.gen();
    let dir = frame.primary_dir(x, y, jx, jy);
    let origin = frame.origin;
    let mode = cfg.mode;

    let shape_hit = scene.shape.as_ref().and_then(|s| s.intersect(origin, dir, T_MIN));
    let flash_t = scene.flash.as_ref().and_then(|f| f.intersect(origin, dir, T_MIN));
    let flash_first = match (&shape_hit, flash_t) {
        (Some(h), Some(t)) => t < h.t,
        (None, Some(_)) => true,
        _ => false,
    };
    if flash_first {
        if mode == RenderMode::SssOnly {
            return BLACK;
        }
        return unpolarized3(flash_radiance(scene));
    }
    let Some(hit) = shape_hit else {
        if mode == RenderMode::SssOnly {
            return BLACK;
        }
        return unpolarized3(env_radiance(scene, dir, cfg.signed_env));
    };
    if hit.inside {
        // validated scenes keep the camera outside the shape; treat the
        // floating-point grazing corner as a miss
        if mode == RenderMode::SssOnly {
            return BLACK;
        }
        return unpolarized3(env_radiance(scene, dir, cfg.signed_env));
    }

    // The first surface interaction: the only polarizing event on the path.
    let n = hit.normal;
    let ci = (-dir.dot(n)).clamp(0.0, 1.0);
    let eta = scene.interface.eta;
    let fc = fresnel(ci, eta);
    let rbar = fc.unpolarized_reflectance();
    let u: f64 = rng.gen();
    let s_axis = plane_axis(dir, n);
    let cam_axis = frame.reference_axis(dir);
    let to_camera = dir * -1.0;

    if u < rbar {
        // mirror branch, probability rbar
        if mode == RenderMode::SssOnly {
            return BLACK;
        }
        let d2 = dir.reflect(n).normalized();
        let p2 = hit.position + n * SURFACE_NUDGE;
        let mut bounces = 1u32;
        let l = exterior_chain(scene, p2, d2, &mut rng, cfg, &mut bounces);
        let m = frame_change(s_axis, cam_axis, to_camera) * reflect_mueller(ci, eta);
        let col = m.scaled(1.0 / rbar).apply(StokesVector::new(1.0, 0.0, 0.0));
        finish(mode, col, l)
    } else {
        // transmission branch, probability 1 - rbar
        if mode == RenderMode::PureBsdf {
            return BLACK;
        }
        let tbar = (1.0 - rbar).max(1e-300);
        let Some(d2) = refract(dir, n, 1.0 / eta).map(|v| v.normalized()) else {
            // the unpolarized branch probability already vanishes here;
            // reachable only through floating-point grazing
            return BLACK;
        };
        let Ok(mt) = refract_mueller(ci, eta, TransmissionSide::Enter) else {
            return BLACK;
        };
        let m = frame_change(s_axis, cam_axis, to_camera) * mt;
        let col = m.scaled(1.0 / tbar).apply(StokesVector::new(1.0, 0.0, 0.0));
        let p2 = hit.position - n * SURFACE_NUDGE;
        let mut l = [0.0f64; 3];
        for (k, lk) in l.iter_mut().enumerate() {
            let mut crng = channel_rng(cfg.seed, x, y, sample, k as u32);
            *lk = interior_walk(scene, p2, d2, k, &mut crng, cfg, leaks);
        }
        finish(mode, col, l)
    }
}

/// Unpolarized radiance reaching `p` along `-d` through a specular chain
/// outside the medium. A reflected ray can only meet a convex body again
/// through floating-point grazing; those corners continue as an unpolarized
/// chain or terminate black rather than disturb the stream layout.
fn exterior_chain<R: Rng>(
    scene: &Scene,
    mut p: Vec3,
    mut d: Vec3,
    rng: &mut R,
    cfg: &RenderConfig,
    bounces: &mut u32,
) -> [f64; 3] {
    let eta = scene.interface.eta;
    loop {
        if *bounces >= cfg.max_bounces {
            return [0.0; 3];
        }
        let shape_hit = scene.shape.as_ref().and_then(|s| s.intersect(p, d, T_MIN));
        let flash_t = scene.flash.as_ref().and_then(|f| f.intersect(p, d, T_MIN));
        let hit = match (shape_hit, flash_t) {
            (Some(h), Some(t)) if t < h.t => {
                let _ = h;
                return flash_radiance(scene);
            }
            (Some(h), _) => h,
            (None, Some(_)) => return flash_radiance(scene),
            (None, None) => return env_radiance(scene, d, cfg.signed_env),
        };
        let n = hit.normal;
        let cos = d.dot(n);
        if cos >= 0.0 {
            return [0.0; 3];
        }
        let ci = (-cos).clamp(0.0, 1.0);
        let f = fresnel(ci, eta);
        let u: f64 = rng.gen();
        if u < f.unpolarized_reflectance() {
            d = d.reflect(n).normalized();
            p = hit.position + n * SURFACE_NUDGE;
            *bounces += 1;
        } else {
            // re-entry into the medium from a secondary surface meeting:
            // terminate instead of spawning fresh channel walks
            return [0.0; 3];
        }
    }
}

/// Scalar radiance estimate for one channel, starting just inside the
/// boundary. Free flights, scattering, internal reflection and the
/// unpolarized chain after exit all live here; branch probabilities cancel
/// against their throughput, so `w` only tracks albedo and roulette.
fn interior_walk<R: Rng>(
    scene: &Scene,
    entry: Vec3,
    dir: Vec3,
    k: usize,
    rng: &mut R,
    cfg: &RenderConfig,
    leaks: &mut u64,
) -> f64 {
    let shape = scene.shape.as_ref().expect("interior walk requires a shape");
    let sigma = scene.medium.sigma_t[k];
    let alpha = scene.medium.alpha[k];
    let g = scene.medium.g;
    let eta = scene.interface.eta;
    let mut p = entry;
    let mut d = dir;
    let mut w = 1.0f64;
    let mut inside = true;
    let mut bounces = 1u32;
    loop {
        if bounces >= cfg.max_bounces {
            return 0.0;
        }
        if inside {
            let t_s = sample_free_flight(sigma, rng);
            let mut scattered = t_s.is_finite() && shape.interior_segment_stays_inside(p, d, t_s);
            if !scattered {
                match shape.intersect(p, d, T_MIN) {
                    None => {
                        // watertightness failure: escaped without a boundary
                        *leaks += 1;
                        return w * env_radiance(scene, d, cfg.signed_env)[k];
                    }
                    Some(hit) => {
                        if t_s < hit.t {
                            scattered = true;
                        } else {
                            let n = hit.normal;
                            let ci = d.dot(n).abs().clamp(0.0, 1.0);
                            let f = fresnel(ci, 1.0 / eta);
                            let u: f64 = rng.gen();
                            if f.tir || u < f.unpolarized_reflectance() {
                                d = d.reflect(n).normalized();
                                p = hit.position - n * SURFACE_NUDGE;
                            } else {
                                match refract(d, n * -1.0, eta) {
                                    Some(dt) => {
                                        d = dt.normalized();
                                        p = hit.position + n * SURFACE_NUDGE;
                                        inside = false;
                                    }
                                    None => {
                                        // Fresnel and Snell disagree exactly at
                                        // the critical angle; keep the ray in
                                        d = d.reflect(n).normalized();
                                        p = hit.position - n * SURFACE_NUDGE;
                                    }
                                }
                            }
                            bounces += 1;
                        }
                    }
                }
            }
            if scattered {
                p = p + d * t_s;
                w *= alpha;
                if w == 0.0 {
                    return 0.0;
                }
                // renormalize: thousands of scatter events would otherwise
                // drift the direction off unit length
                d = hg_sample(g, d, rng).normalized();
                bounces += 1;
            }
        } else {
            let shape_hit = shape.intersect(p, d, T_MIN);
            let flash_t = scene.flash.as_ref().and_then(|f| f.intersect(p, d, T_MIN));
            let hit = match (shape_hit, flash_t) {
                (Some(h), Some(t)) if t < h.t => {
                    let _ = h;
                    return w * scene.flash.as_ref().map_or(0.0, |f| f.intensity);
                }
                (Some(h), _) => h,
                (None, Some(_)) => return w * scene.flash.as_ref().map_or(0.0, |f| f.intensity),
                (None, None) => return w * env_radiance(scene, d, cfg.signed_env)[k],
            };
            let n = hit.normal;
            let cos = d.dot(n);
            if cos >= 0.0 {
                // outside yet leaving the surface: grazing artifact
                *leaks += 1;
                return w * env_radiance(scene, d, cfg.signed_env)[k];
            }
            let ci = (-cos).clamp(0.0, 1.0);
            let f = fresnel(ci, eta);
            let u: f64 = rng.gen();
            if u < f.unpolarized_reflectance() {
                d = d.reflect(n).normalized();
                p = hit.position + n * SURFACE_NUDGE;
            } else {
                match refract(d, n, 1.0 / eta) {
                    Some(dt) => {
                        d = dt.normalized();
                        p = hit.position - n * SURFACE_NUDGE;
                        inside = true;
                    }
                    None => {
                        d = d.reflect(n).normalized();
                        p = hit.position + n * SURFACE_NUDGE;
                    }
                }
            }
            bounces += 1;
        }
        if bounces > RR_START_BOUNCE {
            let q = w.clamp(RR_SURVIVAL_MIN, RR_SURVIVAL_MAX);
            if rng.gen::<f64>() >= q {
                return 0.0;
            }
            w /= q;
        }
    }
}
