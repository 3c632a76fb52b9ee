//! Built-in physics checks. Each one verifies an invariant of the optical
//! model against an independently computed reference and reports pass, fail
//! or skip with a one-line diagnostic.
//!
//! Two environment hooks exist so a mutation harness can watch a check fail
//! without patching the library: `MURK_SELFTEST_ETA` overrides the interface
//! index used by the surface checks, and `MURK_SELFTEST_HG_SCALE` multiplies
//! the phase function inside the normalization quadrature (simulating a
//! corrupted normalization constant).

use murk::dataset::pfm::{encode_pfm, PfmImage};
use murk::fresnel::{brewster_angle, fresnel, reflect_mueller};
use murk::medium::{hg_eval, hg_sample_cos};
use murk::render::image::capture_images;
use murk::render::{render, RenderConfig};
use murk::rng::derived_rng;
use murk::scene::{presets, Scene};
use murk::stokes::StokesVector;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl Status {
    pub fn word(self) -> &'static str {
        match self {
            Status::Pass => "ok",
            Status::Fail => "FAIL",
            Status::Skip => "skip",
        }
    }
}

pub struct Check {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

impl Check {
    fn verdict(name: &'static str, ok: bool, detail: String) -> Check {
        let status = if ok { Status::Pass } else { Status::Fail };
        Check {
            name,
            status,
            detail,
        }
    }
}

fn env_f64(name: &str) -> Option<f64> {
    std::env::var(name).ok()?.parse().ok()
}

pub fn run_all() -> Vec<Check> {
    vec![
        capture_round_trip(),
        brewster(),
        fresnel_energy(),
        hg_eval_normalization(),
        hg_sampling(),
        furnace(),
        thread_determinism(),
    ]
}

/// 10^4 random realizable polarization states survive the four-polarizer
/// measurement and its closed-form inversion to 1e-12 relative error.
fn capture_round_trip() -> Check {
    let mut rng = derived_rng(0x5e1f, &[1]);
    let mut img = murk::render::image::StokesImage::new(100, 100);
    for px in img.data.iter_mut() {
        for s in px.iter_mut() {
            let s0 = 0.1 + 9.9 * rng.gen::<f64>();
            let dop = rng.gen::<f64>();
            let psi = rng.gen::<f64>() * std::f64::consts::PI;
            *s = StokesVector::new(
                s0,
                s0 * dop * (2.0 * psi).cos(),
                s0 * dop * (2.0 * psi).sin(),
            );
        }
    }
    let back = capture_images(&img).invert();
    let mut worst = 0.0f64;
    for (a, b) in img.data.iter().zip(back.data.iter()) {
        for ch in 0..3 {
            let (x, y) = (a[ch], b[ch]);
            let err = (x.s0 - y.s0)
                .abs()
                .max((x.s1 - y.s1).abs())
                .max((x.s2 - y.s2).abs())
                / x.s0;
            worst = worst.max(err);
        }
    }
    Check::verdict(
        "capture_round_trip",
        worst <= 1e-12,
        format!("worst relative error {worst:.2e} over 10000 states"),
    )
}

/// Reflection at atan(eta) fully polarizes unpolarized light, and the
/// normal-incidence reflectance matches ((eta-1)/(eta+1))^2.
fn brewster() -> Check {
    let eta = env_f64("MURK_SELFTEST_ETA").unwrap_or(1.5046);
    if (eta - 1.0).abs() < 1e-9 {
        return Check {
            name: "brewster",
            status: Status::Skip,
            detail: "undefined for an index-matched interface (nothing reflects)".into(),
        };
    }
    let theta = brewster_angle(eta);
    let reflected = reflect_mueller(theta.cos(), eta).apply(StokesVector::unpolarized(1.0));
    let (dop, _) = reflected.dop_aop();
    let r0 = fresnel(1.0, eta).unpolarized_reflectance();
    let r0_ref = ((eta - 1.0) / (eta + 1.0)).powi(2);
    let ok = (dop - 1.0).abs() <= 1e-9 && (r0 - r0_ref).abs() <= 1e-6;
    Check::verdict(
        "brewster",
        ok,
        format!(
            "DoP at {:.2} deg = {dop:.12}; normal reflectance {r0:.6} vs {r0_ref:.6}",
            theta.to_degrees()
        ),
    )
}

/// Reflected and transmitted energy fractions sum to one at every incidence.
fn fresnel_energy() -> Check {
    let eta = env_f64("MURK_SELFTEST_ETA").unwrap_or(1.5046);
    let mut worst = 0.0f64;
    for i in 0..=100 {
        let cos = 0.01 + 0.99 * i as f64 / 100.0;
        let c = fresnel(cos, eta);
        worst = worst.max((c.unpolarized_reflectance() + c.unpolarized_transmittance() - 1.0).abs());
    }
    Check::verdict(
        "fresnel_energy",
        worst <= 1e-12,
        format!("max |R + T - 1| = {worst:.2e}"),
    )
}

/// The phase function integrates to one over the sphere for forward, backward
/// and isotropic anisotropies.
fn hg_eval_normalization() -> Check {
    let scale = env_f64("MURK_SELFTEST_HG_SCALE").unwrap_or(1.0);
    let mut worst = 0.0f64;
    let mut worst_g = 0.0;
    for g in [-0.9, -0.5, 0.0, 0.5, 0.9] {
        let n = 20_000;
        let h = 2.0 / n as f64;
        let f = |mu: f64| scale * hg_eval(g, mu);
        let mut s = f(-1.0) + f(1.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(-1.0 + i as f64 * h);
        }
        let integral = 2.0 * std::f64::consts::PI * s * h / 3.0;
        if (integral - 1.0).abs() > worst {
            worst = (integral - 1.0).abs();
            worst_g = g;
        }
    }
    Check::verdict(
        "hg_eval",
        worst <= 1e-4,
        format!("worst |integral - 1| = {worst:.2e} at g = {worst_g}"),
    )
}

/// The sampled scattering cosine averages to g within Monte Carlo error.
fn hg_sampling() -> Check {
    let mut worst_z = 0.0f64;
    let mut worst_g = 0.0;
    for (i, g) in [-0.5, 0.0, 0.7].into_iter().enumerate() {
        let mut rng = derived_rng(0x5e1f, &[2, i as u64]);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let c = hg_sample_cos(g, rng.gen());
            sum += c;
            sq += c * c;
        }
        let mean = sum / n as f64;
        let var = (sq - sum * sum / n as f64) / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        let z = (mean - g).abs() / se;
        if z > worst_z {
            worst_z = z;
            worst_g = g;
        }
    }
    Check::verdict(
        "hg_sampling",
        worst_z <= 3.0,
        format!("worst |mean - g| = {worst_z:.2} standard errors at g = {worst_g}"),
    )
}

/// A conservative index-matched medium in a uniform unit radiance field is
/// invisible: unit intensity, no polarization.
fn furnace() -> Check {
    let mut cfg = presets::furnace_sphere();
    cfg.camera.resolution = [32, 32];
    cfg.seed = 11;
    let scene = match Scene::from_config(cfg) {
        Ok(s) => s,
        Err(e) => return Check::verdict("furnace", false, e.to_string()),
    };
    let outs = render(&scene, &RenderConfig::for_scene(&scene, 128));
    let summary = match outs.summary() {
        Ok(s) => s,
        Err(e) => return Check::verdict("furnace", false, e.to_string()),
    };
    let s0_ok = summary.mean_s0.iter().all(|&m| (0.97..=1.03).contains(&m));
    let dop_ok = summary.mean_dop <= 0.02;
    Check::verdict(
        "furnace",
        s0_ok && dop_ok,
        format!(
            "masked mean s0 = ({:.4}, {:.4}, {:.4}), mean DoP = {:.2e}",
            summary.mean_s0[0], summary.mean_s0[1], summary.mean_s0[2], summary.mean_dop
        ),
    )
}

/// The same render on one worker and on two produces identical bytes.
fn thread_determinism() -> Check {
    let mut cfg = presets::reference_sphere();
    cfg.camera.resolution = [16, 16];
    cfg.seed = 5;
    let scene = match Scene::from_config(cfg) {
        Ok(s) => s,
        Err(e) => return Check::verdict("thread_determinism", false, e.to_string()),
    };
    let bytes = |threads: usize| {
        let cfg = RenderConfig::for_scene(&scene, 8).with_threads(threads);
        let outs = render(&scene, &cfg);
        outs.captures
            .images
            .iter()
            .flat_map(|img| encode_pfm(&PfmImage::from_rgb(img)))
            .collect::<Vec<u8>>()
    };
    let same = bytes(1) == bytes(2);
    Check::verdict(
        "thread_determinism",
        same,
        if same {
            "1-thread and 2-thread captures are byte-identical".into()
        } else {
            "captures differ between 1 and 2 workers".into()
        },
    )
}
