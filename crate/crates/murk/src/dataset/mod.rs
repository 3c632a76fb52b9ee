//! Synthetic polarimetric dataset generation.
//!
//! Each record is a directory `record_{index:06}/` holding the four
//! polarizer captures (`i000..i135.pfm`), the four surface-only captures
//! (`b000..b135.pfm`), ground-truth maps (`normal.pfm`, `depth.pfm`,
//! `mask.pfm`) and `gt.json` with the scene description, render settings and
//! per-file checksums. A dataset-level `manifest.json` lists every record
//! with its checksums and is written last through a temp-file rename, so a
//! complete manifest implies a complete dataset.
//!
//! Generation is a pure function of `(master seed, ranges, render settings,
//! generator version)`: records are sampled through counter-derived random
//! streams, rendered deterministically, and re-runs skip any record whose
//! files still match their checksums. `gt.json` holds no wall-clock data, so
//! regenerated records are byte-identical; timing lives only in the manifest.

pub mod pfm;

use crate::error::{Error, Result};
use crate::fresnel::DEFAULT_IOR;
use crate::math::{vec3, Vec3};
use crate::medium::{MediumParams, ALPHA_MAX, ALPHA_MIN, G_MAX, G_MIN, SIGMA_T_MAX, SIGMA_T_MIN};
use crate::render::image::{CaptureSet, RgbImage, ScalarImage};
use crate::render::{
    render_stokes_masked, render_with_pure, RenderConfig, RenderMode, RenderOutputs,
    DEFAULT_MAX_BOUNCES,
};
use crate::rng::derived_rng;
use crate::scene::shape::{MeshSource, Pose, Shape, ShapeConfig};
use crate::scene::{gt_maps, Camera, FlashConfig, Scene, SceneConfig};
use pfm::{decode_pfm, encode_pfm, PfmImage};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const GT_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const GT_FILE: &str = "gt.json";

/// Image files of one record, in a fixed order.
pub const RECORD_IMAGE_FILES: [&str; 11] = [
    "i000.pfm",
    "i045.pfm",
    "i090.pfm",
    "i135.pfm",
    "b000.pfm",
    "b045.pfm",
    "b090.pfm",
    "b135.pfm",
    "normal.pfm",
    "depth.pfm",
    "mask.pfm",
];

/// Distance from the camera to the shape center, in bounding radii. Frames
/// the object at roughly three quarters of the image height at 45 degrees
/// vertical field of view.
pub const CAMERA_DISTANCE_FACTOR: f64 = 3.3;

/// Scenes whose masked mean intensity falls below this are resampled.
pub const REJECTION_MIN_MEAN_S0: f64 = 0.01;
/// Resolution and sample count of the cheap rejection render.
pub const REJECTION_RESOLUTION: u32 = 32;
pub const REJECTION_SPP: u32 = 8;
/// Consecutive rejections after which sampling gives up with a diagnostic.
pub const MAX_SAMPLE_ATTEMPTS: u64 = 100;

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn default_range<const N: usize>(v: [f64; N]) -> [f64; N] {
    v
}

macro_rules! range_default {
    ($name:ident, $($v:expr),+) => {
        fn $name() -> [f64; 2] {
            default_range([$($v),+])
        }
    };
}

range_default!(d_sigma_t, 1.0, 300.0);
range_default!(d_alpha, 0.05, 0.99);
range_default!(d_g, -0.8, 0.8);
range_default!(d_env_mean, 0.5, 2.0);
range_default!(d_flash_rel, 3.0, 10.0);
range_default!(d_sphere_radius, 0.05, 0.12);
range_default!(d_box_half_extent, 0.04, 0.1);
range_default!(d_box_corner, 0.005, 0.02);
range_default!(d_superquadric_radius, 0.05, 0.1);
range_default!(d_superquadric_exponent, 0.4, 1.6);
range_default!(d_icosphere_radius, 0.05, 0.1);

fn d_env_rel() -> f64 {
    0.3
}

fn d_icosphere_subdivisions() -> u32 {
    3
}

/// Declared sampling ranges for scene generation. All fields are `[lo, hi]`
/// pairs unless noted; extinction is drawn log-uniformly, everything else
/// uniformly. Defaults reproduce the reference dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingRanges {
    /// Extinction bounds in 1/m, drawn log-uniformly per channel.
    pub sigma_t: [f64; 2],
    /// Single-scattering albedo bounds per channel.
    pub alpha: [f64; 2],
    /// Phase-function anisotropy bounds (one draw, shared by channels).
    pub g: [f64; 2],
    /// Bounds on the mean environment radiance per channel.
    pub env_mean: [f64; 2],
    /// Magnitude bound on order-1/2 coefficients relative to the mean term.
    pub env_rel: f64,
    /// Flash radiance bounds as a multiple of the mean environment radiance.
    pub flash_rel: [f64; 2],
    pub sphere_radius: [f64; 2],
    pub box_half_extent: [f64; 2],
    pub box_corner: [f64; 2],
    pub superquadric_radius: [f64; 2],
    pub superquadric_exponent: [f64; 2],
    pub icosphere_radius: [f64; 2],
    pub icosphere_subdivisions: u32,
}

impl Default for SamplingRanges {
    fn default() -> Self {
        Self {
            sigma_t: d_sigma_t(),
            alpha: d_alpha(),
            g: d_g(),
            env_mean: d_env_mean(),
            env_rel: d_env_rel(),
            flash_rel: d_flash_rel(),
            sphere_radius: d_sphere_radius(),
            box_half_extent: d_box_half_extent(),
            box_corner: d_box_corner(),
            superquadric_radius: d_superquadric_radius(),
            superquadric_exponent: d_superquadric_exponent(),
            icosphere_radius: d_icosphere_radius(),
            icosphere_subdivisions: d_icosphere_subdivisions(),
        }
    }
}

impl SamplingRanges {
    pub fn validate(&self) -> Result<()> {
        let ordered = |name: &str, r: [f64; 2]| -> Result<()> {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                return Err(Error::InvalidInput(format!(
                    "range {name} must be finite with lo <= hi, got {r:?}"
                )));
            }
            Ok(())
        };
        ordered("sigma_t", self.sigma_t)?;
        ordered("alpha", self.alpha)?;
        ordered("g", self.g)?;
        ordered("env_mean", self.env_mean)?;
        ordered("flash_rel", self.flash_rel)?;
        ordered("sphere_radius", self.sphere_radius)?;
        ordered("box_half_extent", self.box_half_extent)?;
        ordered("box_corner", self.box_corner)?;
        ordered("superquadric_radius", self.superquadric_radius)?;
        ordered("superquadric_exponent", self.superquadric_exponent)?;
        ordered("icosphere_radius", self.icosphere_radius)?;
        if self.sigma_t[0] < SIGMA_T_MIN || self.sigma_t[1] > SIGMA_T_MAX {
            return Err(Error::InvalidInput(format!(
                "sigma_t range must stay within [{SIGMA_T_MIN}, {SIGMA_T_MAX}]"
            )));
        }
        if self.sigma_t[0] <= 0.0 {
            return Err(Error::InvalidInput("sigma_t range must be positive".into()));
        }
        if self.alpha[0] < ALPHA_MIN || self.alpha[1] > ALPHA_MAX {
            return Err(Error::InvalidInput("alpha range must stay within [0, 1]".into()));
        }
        if self.g[0] < G_MIN || self.g[1] > G_MAX {
            return Err(Error::InvalidInput(format!(
                "g range must stay within [{G_MIN}, {G_MAX}]"
            )));
        }
        if !(self.env_mean[0] > 0.0) {
            return Err(Error::InvalidInput("env_mean must be positive".into()));
        }
        if !(self.env_rel >= 0.0 && self.env_rel.is_finite()) {
            return Err(Error::InvalidInput("env_rel must be finite and >= 0".into()));
        }
        if !(self.flash_rel[0] >= 0.0) {
            return Err(Error::InvalidInput("flash_rel must be non-negative".into()));
        }
        if self.box_corner[1] > self.box_half_extent[0] {
            return Err(Error::InvalidInput(
                "box corner radius may not exceed the smallest half extent".into(),
            ));
        }
        if !(self.sphere_radius[0] > 0.0
            && self.box_half_extent[0] > 0.0
            && self.superquadric_radius[0] > 0.0
            && self.icosphere_radius[0] > 0.0
            && self.box_corner[0] > 0.0)
        {
            return Err(Error::InvalidInput("shape dimensions must be positive".into()));
        }
        if self.icosphere_subdivisions > 6 {
            return Err(Error::InvalidInput(
                "icosphere subdivisions above 6 explode triangle counts".into(),
            ));
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ranges: SamplingRanges = serde_json::from_str(&text)?;
        ranges.validate()?;
        Ok(ranges)
    }
}

fn uniform<R: Rng>(rng: &mut R, r: [f64; 2]) -> f64 {
    let u: f64 = rng.gen();
    r[0] + u * (r[1] - r[0])
}

fn log_uniform<R: Rng>(rng: &mut R, r: [f64; 2]) -> f64 {
    let u: f64 = rng.gen();
    (r[0].ln() + u * (r[1].ln() - r[0].ln())).exp()
}

fn unit_direction<R: Rng>(rng: &mut R) -> Vec3 {
    let z: f64 = 2.0 * rng.gen::<f64>() - 1.0;
    let phi = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
    let s = (1.0 - z * z).max(0.0).sqrt();
    vec3(s * phi.cos(), s * phi.sin(), z)
}

/// One unrejected draw from the scene distribution. The draw order is fixed
/// (shape, pose, medium, environment, flash, seed) and must not change
/// without bumping the manifest schema version.
pub fn raw_scene_config(
    master_seed: u64,
    index: u64,
    attempt: u64,
    ranges: &SamplingRanges,
    width: u32,
    height: u32,
) -> Result<SceneConfig> {
    let mut rng = derived_rng(master_seed, &[index, attempt]);

    let kind = rng.gen_range(0u32..4);
    let pose = |rng: &mut rand_chacha::ChaCha8Rng| Pose {
        translation: Vec3::ZERO,
        rotation_axis: unit_direction(rng),
        rotation_angle_deg: 360.0 * rng.gen::<f64>(),
    };
    let shape_cfg = match kind {
        0 => ShapeConfig::Sphere {
            radius: uniform(&mut rng, ranges.sphere_radius),
            pose: pose(&mut rng),
        },
        1 => ShapeConfig::RoundedBox {
            half_extents: [
                uniform(&mut rng, ranges.box_half_extent),
                uniform(&mut rng, ranges.box_half_extent),
                uniform(&mut rng, ranges.box_half_extent),
            ],
            corner_radius: uniform(&mut rng, ranges.box_corner),
            pose: pose(&mut rng),
        },
        2 => ShapeConfig::Superquadric {
            radii: [
                uniform(&mut rng, ranges.superquadric_radius),
                uniform(&mut rng, ranges.superquadric_radius),
                uniform(&mut rng, ranges.superquadric_radius),
            ],
            exponents: [
                uniform(&mut rng, ranges.superquadric_exponent),
                uniform(&mut rng, ranges.superquadric_exponent),
            ],
            pose: pose(&mut rng),
        },
        _ => ShapeConfig::TriangleMesh {
            source: MeshSource::Icosphere {
                radius: uniform(&mut rng, ranges.icosphere_radius),
                subdivisions: ranges.icosphere_subdivisions,
            },
            pose: pose(&mut rng),
        },
    };
    let bounding_radius = Shape::from_config(&shape_cfg)?.bounding_radius();

    let medium = MediumParams {
        sigma_t: [
            log_uniform(&mut rng, ranges.sigma_t),
            log_uniform(&mut rng, ranges.sigma_t),
            log_uniform(&mut rng, ranges.sigma_t),
        ],
        alpha: [
            uniform(&mut rng, ranges.alpha),
            uniform(&mut rng, ranges.alpha),
            uniform(&mut rng, ranges.alpha),
        ],
        g: uniform(&mut rng, ranges.g),
    };

    let sqrt_4pi = (4.0 * std::f64::consts::PI).sqrt();
    let mut env_sh = [[0.0; 9]; 3];
    let mut mean_sum = 0.0;
    for coeffs in env_sh.iter_mut() {
        let mean = uniform(&mut rng, ranges.env_mean);
        mean_sum += mean;
        coeffs[0] = mean * sqrt_4pi;
        for c in coeffs.iter_mut().skip(1) {
            *c = uniform(&mut rng, [-ranges.env_rel, ranges.env_rel]) * mean;
        }
    }
    let flash_intensity = uniform(&mut rng, ranges.flash_rel) * (mean_sum / 3.0);
    let seed = rng.gen::<u64>();

    Ok(SceneConfig {
        seed,
        eta: DEFAULT_IOR,
        shape: Some(shape_cfg),
        camera: Camera {
            position: vec3(0.0, 0.0, -CAMERA_DISTANCE_FACTOR * bounding_radius),
            look_at: Vec3::ZERO,
            up: vec3(0.0, 1.0, 0.0),
            vfov_deg: 45.0,
            resolution: [width, height],
        },
        env_sh,
        flash: Some(FlashConfig {
            center: None,
            radius: 0.01,
            intensity: flash_intensity,
        }),
        medium,
    })
}

/// Masked mean intensity of a cheap preview render, used by the rejection
/// rule. Returns 0 when the object covers no pixels.
fn preview_mean_s0(scene: &Scene) -> f64 {
    let cfg = RenderConfig::new(
        REJECTION_RESOLUTION,
        REJECTION_RESOLUTION,
        REJECTION_SPP,
        scene.seed,
    )
    .with_mode(RenderMode::Unpolarized);
    let gt = gt_maps(scene, cfg.width, cfg.height);
    if gt.masked_count() == 0 {
        return 0.0;
    }
    let (stokes, _, _) = render_stokes_masked(scene, &cfg, Some(&gt.mask));
    let mut sum = 0.0;
    let mut n = 0usize;
    for (px, m) in stokes.data.iter().zip(gt.mask.data.iter()) {
        if *m > 0.5 {
            sum += (px[0].s0 + px[1].s0 + px[2].s0) / 3.0;
            n += 1;
        }
    }
    sum / n as f64
}

/// Sample the scene for a record: a deterministic function of
/// `(master_seed, index, ranges)`. Too-dark draws are rejected and resampled
/// through nested attempt counters; persistent rejection is an error.
pub fn sample_scene(
    master_seed: u64,
    index: u64,
    ranges: &SamplingRanges,
    width: u32,
    height: u32,
) -> Result<Scene> {
    ranges.validate()?;
    let mut last_mean = 0.0;
    for attempt in 0..MAX_SAMPLE_ATTEMPTS {
        let config = raw_scene_config(master_seed, index, attempt, ranges, width, height)?;
        let scene = Scene::from_config(config)?;
        let mean = preview_mean_s0(&scene);
        if mean >= REJECTION_MIN_MEAN_S0 {
            return Ok(scene);
        }
        last_mean = mean;
    }
    Err(Error::Sampling(format!(
        "record {index}: {MAX_SAMPLE_ATTEMPTS} consecutive draws were too dark \
         (last masked mean s0 = {last_mean:.3e} < {REJECTION_MIN_MEAN_S0}); \
         check the environment and flash ranges"
    )))
}

/// Render settings shared by every record of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRenderSettings {
    pub width: u32,
    pub height: u32,
    pub spp: u32,
}

impl Default for DatasetRenderSettings {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            spp: 64,
        }
    }
}

/// Ground-truth sidecar stored per record. Deliberately free of wall-clock
/// data so regenerated records are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordGt {
    pub version: u32,
    pub index: u64,
    pub scene: SceneConfig,
    pub render: DatasetRenderSettings,
    pub max_bounces: u32,
    pub watertight_warnings: u64,
    /// SHA-256 of each image file, keyed by file name.
    pub checksums: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub index: u64,
    /// Directory name relative to the dataset root.
    pub dir: String,
    pub scene_seed: u64,
    /// SHA-256 of every file in the record, including `gt.json`.
    pub checksums: BTreeMap<String, String>,
    /// Render time when this run produced the record, 0 when reused.
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub generator: String,
    pub master_seed: u64,
    pub ranges: SamplingRanges,
    pub render: DatasetRenderSettings,
    pub records: Vec<ManifestRecord>,
    pub total_wall_time_s: f64,
}

impl DatasetManifest {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Write `manifest.json` through a temp file and rename, so readers only
    /// ever observe a complete manifest.
    pub fn save_atomic(&self, out_dir: &Path) -> Result<()> {
        let tmp = out_dir.join(format!("{MANIFEST_FILE}.tmp"));
        std::fs::write(&tmp, serde_json::to_vec_pretty(self)?)?;
        std::fs::rename(&tmp, out_dir.join(MANIFEST_FILE))?;
        Ok(())
    }

    /// True when both manifests describe byte-identical datasets (timing and
    /// generator fields excluded).
    pub fn same_content(&self, other: &DatasetManifest) -> bool {
        self.version == other.version
            && self.master_seed == other.master_seed
            && self.ranges == other.ranges
            && self.render == other.render
            && self.records.len() == other.records.len()
            && self
                .records
                .iter()
                .zip(other.records.iter())
                .all(|(a, b)| {
                    a.index == b.index
                        && a.dir == b.dir
                        && a.scene_seed == b.scene_seed
                        && a.checksums == b.checksums
                })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GenerateStats {
    /// Records rendered by this run.
    pub rendered: usize,
    /// Records whose existing files passed checksum validation.
    pub reused: usize,
}

pub fn record_dir_name(index: u64) -> String {
    format!("record_{index:06}")
}

fn generator_id() -> String {
    format!("{}-{}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

fn build_record(
    master_seed: u64,
    index: u64,
    ranges: &SamplingRanges,
    settings: &DatasetRenderSettings,
) -> Result<(SceneConfig, RenderOutputs)> {
    let scene = sample_scene(master_seed, index, ranges, settings.width, settings.height)?;
    let cfg = RenderConfig::new(settings.width, settings.height, settings.spp, scene.seed);
    let outs = render_with_pure(&scene, &cfg);
    Ok((scene.config.clone(), outs))
}

fn record_images<'a>(outs: &'a RenderOutputs) -> [(&'static str, PfmImage); 11] {
    let pure = outs
        .pure_bsdf_captures
        .as_ref()
        .expect("records require the surface-only pass");
    [
        ("i000.pfm", PfmImage::from_rgb(&outs.captures.images[0])),
        ("i045.pfm", PfmImage::from_rgb(&outs.captures.images[1])),
        ("i090.pfm", PfmImage::from_rgb(&outs.captures.images[2])),
        ("i135.pfm", PfmImage::from_rgb(&outs.captures.images[3])),
        ("b000.pfm", PfmImage::from_rgb(&pure.images[0])),
        ("b045.pfm", PfmImage::from_rgb(&pure.images[1])),
        ("b090.pfm", PfmImage::from_rgb(&pure.images[2])),
        ("b135.pfm", PfmImage::from_rgb(&pure.images[3])),
        ("normal.pfm", PfmImage::from_rgb(&outs.gt.normal)),
        ("depth.pfm", PfmImage::from_scalar(&outs.gt.depth)),
        ("mask.pfm", PfmImage::from_scalar(&outs.gt.mask)),
    ]
}

fn write_record(
    dir: &Path,
    index: u64,
    config: &SceneConfig,
    outs: &RenderOutputs,
    settings: &DatasetRenderSettings,
) -> Result<BTreeMap<String, String>> {
    std::fs::create_dir_all(dir)?;
    let mut sums = BTreeMap::new();
    for (name, img) in record_images(outs) {
        let bytes = encode_pfm(&img);
        std::fs::write(dir.join(name), &bytes)?;
        sums.insert(name.to_string(), sha256_hex(&bytes));
    }
    let gt = RecordGt {
        version: GT_SCHEMA_VERSION,
        index,
        scene: config.clone(),
        render: *settings,
        max_bounces: DEFAULT_MAX_BOUNCES,
        watertight_warnings: outs.metadata.watertight_warnings,
        checksums: sums.clone(),
    };
    let gt_bytes = serde_json::to_vec_pretty(&gt)?;
    std::fs::write(dir.join(GT_FILE), &gt_bytes)?;
    sums.insert(GT_FILE.to_string(), sha256_hex(&gt_bytes));
    Ok(sums)
}

/// Checksums of an existing, valid record matching the requested settings;
/// `None` means the record must be (re)generated.
fn try_reuse_record(
    dir: &Path,
    index: u64,
    settings: &DatasetRenderSettings,
) -> Option<(BTreeMap<String, String>, u64)> {
    let gt_bytes = std::fs::read(dir.join(GT_FILE)).ok()?;
    let gt: RecordGt = serde_json::from_slice(&gt_bytes).ok()?;
    if gt.version != GT_SCHEMA_VERSION || gt.index != index || gt.render != *settings {
        return None;
    }
    let expected: std::collections::BTreeSet<&str> = RECORD_IMAGE_FILES.iter().copied().collect();
    let present: std::collections::BTreeSet<&str> =
        gt.checksums.keys().map(|s| s.as_str()).collect();
    if expected != present {
        return None;
    }
    for (name, sum) in &gt.checksums {
        let bytes = std::fs::read(dir.join(name)).ok()?;
        if sha256_hex(&bytes) != *sum {
            return None;
        }
    }
    let mut sums = gt.checksums.clone();
    sums.insert(GT_FILE.to_string(), sha256_hex(&gt_bytes));
    Some((sums, gt.scene.seed))
}

/// Generate (or resume) a dataset of `n` records under `out_dir`.
pub fn generate(
    n: usize,
    out_dir: &Path,
    master_seed: u64,
    ranges: &SamplingRanges,
    settings: &DatasetRenderSettings,
) -> Result<DatasetManifest> {
    generate_with_stats(n, out_dir, master_seed, ranges, settings).map(|(m, _)| m)
}

pub fn generate_with_stats(
    n: usize,
    out_dir: &Path,
    master_seed: u64,
    ranges: &SamplingRanges,
    settings: &DatasetRenderSettings,
) -> Result<(DatasetManifest, GenerateStats)> {
    generate_with_progress(n, out_dir, master_seed, ranges, settings, &mut |_| {})
}

/// Like [`generate_with_stats`], reporting the completed fraction after each
/// record (for progress bars; the callback never influences the output).
pub fn generate_with_progress(
    n: usize,
    out_dir: &Path,
    master_seed: u64,
    ranges: &SamplingRanges,
    settings: &DatasetRenderSettings,
    progress: &mut dyn FnMut(f64),
) -> Result<(DatasetManifest, GenerateStats)> {
    ranges.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let t_total = std::time::Instant::now();
    let mut stats = GenerateStats::default();
    let mut records = Vec::with_capacity(n);
    for index in 0..n as u64 {
        let dir = out_dir.join(record_dir_name(index));
        let t0 = std::time::Instant::now();
        let (checksums, scene_seed, wall) = match try_reuse_record(&dir, index, settings) {
            Some((sums, seed)) => {
                stats.reused += 1;
                (sums, seed, 0.0)
            }
            None => {
                let (config, outs) = build_record(master_seed, index, ranges, settings)?;
                let sums = write_record(&dir, index, &config, &outs, settings)?;
                stats.rendered += 1;
                (sums, config.seed, t0.elapsed().as_secs_f64())
            }
        };
        records.push(ManifestRecord {
            index,
            dir: record_dir_name(index),
            scene_seed,
            checksums,
            wall_time_s: wall,
        });
        progress((index + 1) as f64 / n as f64);
    }
    let manifest = DatasetManifest {
        version: MANIFEST_SCHEMA_VERSION,
        generator: generator_id(),
        master_seed,
        ranges: ranges.clone(),
        render: *settings,
        records,
        total_wall_time_s: t_total.elapsed().as_secs_f64(),
    };
    manifest.save_atomic(out_dir)?;
    Ok((manifest, stats))
}

/// A fully decoded and validated record.
#[derive(Debug, Clone)]
pub struct SceneRecord {
    pub dir: PathBuf,
    pub gt: RecordGt,
    /// The validated scene (medium fields are the ground-truth parameters).
    pub scene: Scene,
    pub captures: CaptureSet,
    pub pure_captures: CaptureSet,
    pub normal: RgbImage,
    pub depth: ScalarImage,
    pub mask: ScalarImage,
    /// Non-fatal oddities noticed while loading; empty for healthy records.
    pub warnings: Vec<String>,
}

/// Load a record directory, verifying checksums, dimensions and the capture
/// identity (half the sum of the four captures is a non-negative intensity).
pub fn load_record(dir: &Path) -> Result<SceneRecord> {
    let gt_path = dir.join(GT_FILE);
    if !gt_path.exists() {
        return Err(Error::NotFound(gt_path.display().to_string()));
    }
    let gt: RecordGt = serde_json::from_slice(&std::fs::read(&gt_path)?)?;
    if gt.version != GT_SCHEMA_VERSION {
        return Err(Error::Integrity {
            file: GT_FILE.to_string(),
            message: format!("unsupported schema version {}", gt.version),
        });
    }
    let mut images: BTreeMap<String, PfmImage> = BTreeMap::new();
    for name in RECORD_IMAGE_FILES {
        let sum = gt.checksums.get(name).ok_or_else(|| Error::Integrity {
            file: GT_FILE.to_string(),
            message: format!("missing checksum entry for {name}"),
        })?;
        let path = dir.join(name);
        if !path.exists() {
            return Err(Error::NotFound(path.display().to_string()));
        }
        let bytes = std::fs::read(&path)?;
        if sha256_hex(&bytes) != *sum {
            return Err(Error::Integrity {
                file: name.to_string(),
                message: "checksum mismatch".into(),
            });
        }
        let img = decode_pfm(&bytes).map_err(|e| Error::Integrity {
            file: name.to_string(),
            message: e.to_string(),
        })?;
        if img.width != gt.render.width || img.height != gt.render.height {
            return Err(Error::Integrity {
                file: name.to_string(),
                message: format!(
                    "dimensions {}x{} do not match the record settings {}x{}",
                    img.width, img.height, gt.render.width, gt.render.height
                ),
            });
        }
        images.insert(name.to_string(), img);
    }
    let rgb = |name: &str| -> Result<RgbImage> {
        images[name].to_rgb().map_err(|e| Error::Integrity {
            file: name.to_string(),
            message: e.to_string(),
        })
    };
    let gray = |name: &str| -> Result<ScalarImage> {
        images[name].to_scalar().map_err(|e| Error::Integrity {
            file: name.to_string(),
            message: e.to_string(),
        })
    };
    let captures = CaptureSet {
        images: [rgb("i000.pfm")?, rgb("i045.pfm")?, rgb("i090.pfm")?, rgb("i135.pfm")?],
    };
    let pure_captures = CaptureSet {
        images: [rgb("b000.pfm")?, rgb("b045.pfm")?, rgb("b090.pfm")?, rgb("b135.pfm")?],
    };
    let normal = rgb("normal.pfm")?;
    let depth = gray("depth.pfm")?;
    let mask = gray("mask.pfm")?;

    let mut warnings = Vec::new();
    let mut worst = 0.0f64;
    for i in 0..captures.images[0].data.len() {
        for ch in 0..3 {
            let s0 = 0.5
                * (captures.images[0].data[i][ch]
                    + captures.images[1].data[i][ch]
                    + captures.images[2].data[i][ch]
                    + captures.images[3].data[i][ch]);
            worst = worst.min(s0);
        }
    }
    if worst < -1e-4 {
        warnings.push(format!(
            "captures imply a negative intensity (worst s0 = {worst:.3e})"
        ));
    }
    if mask.data.iter().all(|&m| m <= 0.5) {
        warnings.push("object mask is empty".into());
    }
    let scene = Scene::from_config(gt.scene.clone())?;
    Ok(SceneRecord {
        dir: dir.to_path_buf(),
        gt,
        scene,
        captures,
        pure_captures,
        normal,
        depth,
        mask,
        warnings,
    })
}
