//! Release acceptance checks: one test per shipping criterion, each printing
//! its measured numbers and asserting the tolerances pinned in the code.
//!
//! The tests share a lock so that they run one at a time and every wall-clock
//! budget is measured on an otherwise idle process. Budgets written for an
//! eight-core machine are enforced only when that much hardware is present;
//! on smaller machines the measured time is still reported for the record.

use murk::dataset::{generate_with_stats, load_record, DatasetRenderSettings, SamplingRanges};
use murk::fresnel::{brewster_angle, fresnel, reflect_mueller};
use murk::inverse::{estimate_sss, InverseProblem, OptimizerConfig};
use murk::medium::{hg_eval, hg_sample_cos};
use murk::render::image::{
    aop_distance, capture_images, polarimetric_summary, ScalarImage, StokesImage,
};
use murk::render::{render_stokes_masked, RenderConfig, RenderMode};
use murk::rng::derived_rng;
use murk::scene::{gt_maps, presets, Scene};
use murk::stokes::StokesVector;
use rand::Rng;
use std::f64::consts::PI;
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

fn assert_flat_budget(name: &str, elapsed: Duration, secs: f64) {
    let t = elapsed.as_secs_f64();
    assert!(t <= secs, "{name} took {t:.1}s, over its {secs:.0}s budget");
    println!("{name}: {t:.1}s (budget {secs:.0}s)");
}

/// Budgets quoted for an eight-core machine: enforced when satisfied or when
/// eight cores are actually available, reported honestly otherwise.
fn assert_eight_core_budget(name: &str, elapsed: Duration, secs: f64) {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let t = elapsed.as_secs_f64();
    if t <= secs {
        println!("{name}: {t:.1}s (budget {secs:.0}s)");
    } else if cores < 8 {
        println!(
            "{name}: {t:.1}s on {cores} core(s); the {secs:.0}s budget assumes 8 cores \
             and is not enforced on this machine"
        );
    } else {
        panic!("{name} took {t:.1}s on {cores} cores, over its {secs:.0}s budget");
    }
}

fn reference_scene(res: u32) -> Scene {
    let mut cfg = presets::reference_sphere();
    cfg.camera.resolution = [res, res];
    Scene::from_config(cfg).unwrap()
}

#[test]
fn criterion_01_capture_round_trip_is_exact_for_ten_thousand_pixels() {
    let _guard = serial();
    let t0 = Instant::now();
    let (w, h) = (100u32, 100u32);
    let mut rng = derived_rng(0xACCE_0001, &[]);
    let mut img = StokesImage::new(w, h);
    for px in img.data.iter_mut() {
        for ch in 0..3 {
            let i: f64 = rng.gen_range(1e-3..2.0);
            let dop: f64 = rng.gen_range(0.0..1.0);
            let ang: f64 = rng.gen_range(0.0..PI);
            px[ch] = StokesVector::new(
                i,
                i * dop * (2.0 * ang).cos(),
                i * dop * (2.0 * ang).sin(),
            );
        }
    }
    let round_trip = capture_images(&img).invert();
    let mut worst = 0.0f64;
    for (a, b) in img.data.iter().zip(round_trip.data.iter()) {
        for ch in 0..3 {
            let scale = a[ch].s0;
            worst = worst
                .max((a[ch].s0 - b[ch].s0).abs() / scale)
                .max((a[ch].s1 - b[ch].s1).abs() / scale)
                .max((a[ch].s2 - b[ch].s2).abs() / scale);
        }
    }
    println!("round-trip worst relative error over {} pixels: {worst:.3e}", w * h);
    assert!(worst <= 1e-12, "round-trip error {worst:.3e} exceeds 1e-12");
    assert_flat_budget("criterion 01", t0.elapsed(), 1.0);
}

#[test]
fn criterion_02_brewster_reflection_is_fully_polarized() {
    let _guard = serial();
    let t0 = Instant::now();
    let eta = 1.5046;
    let theta_b = brewster_angle(eta);
    assert!(
        (theta_b.to_degrees() - 56.39).abs() <= 0.01,
        "Brewster angle {:.4} deg is not 56.39 deg",
        theta_b.to_degrees()
    );
    let unpolarized = StokesVector::unpolarized(1.0);
    let dop = reflect_mueller(theta_b.cos(), eta).apply(unpolarized).dop_aop().0;
    println!("DoP at the Brewster angle ({:.2} deg): {dop:.12}", theta_b.to_degrees());
    assert!((dop - 1.0).abs() <= 1e-9, "Brewster DoP {dop} is not 1 within 1e-9");
    let r0 = fresnel(1.0, eta).unpolarized_reflectance();
    println!("normal-incidence reflectance: {r0:.8}");
    assert!(
        (r0 - 0.04059).abs() <= 1e-6,
        "normal-incidence reflectance {r0} is not 0.04059 within 1e-6"
    );
    assert_flat_budget("criterion 02", t0.elapsed(), 1.0);
}

#[test]
fn criterion_03_phase_function_normalizes_and_samples_consistently() {
    let _guard = serial();
    let t0 = Instant::now();
    for g in [-0.9f64, -0.5, 0.0, 0.5, 0.9] {
        // composite Simpson over the scattering cosine, 20k intervals
        let n = 20_000usize;
        let h = 2.0 / n as f64;
        let mut sum = hg_eval(g, -1.0) + hg_eval(g, 1.0);
        for k in 1..n {
            let mu = -1.0 + k as f64 * h;
            sum += hg_eval(g, mu) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        let integral = 2.0 * PI * sum * h / 3.0;
        println!("g {g:+.1}: solid-angle integral {integral:.8}");
        assert!(
            (integral - 1.0).abs() <= 1e-4,
            "phase function integral {integral} for g={g} is off unity by more than 1e-4"
        );

        let draws = 1_000_000usize;
        let mut rng = derived_rng(0xACCE_0003, &[g.to_bits()]);
        let mut mean = 0.0f64;
        let mut m2 = 0.0f64;
        for i in 0..draws {
            let c = hg_sample_cos(g, rng.gen_range(0.0..1.0));
            let delta = c - mean;
            mean += delta / (i + 1) as f64;
            m2 += delta * (c - mean);
        }
        let se = (m2 / (draws as f64 - 1.0) / draws as f64).sqrt();
        println!("g {g:+.1}: sampled mean cosine {mean:.6} (se {se:.2e})");
        assert!(
            (mean - g).abs() <= 3.0 * se,
            "sampled mean cosine {mean} for g={g} is outside 3 standard errors ({se:.2e})"
        );
    }
    assert_flat_budget("criterion 03", t0.elapsed(), 30.0);
}

#[test]
fn criterion_04_white_furnace_is_invisible() {
    let _guard = serial();
    let t0 = Instant::now();
    let mut cfg = presets::furnace_sphere();
    cfg.camera.resolution = [128, 128];
    let scene = Scene::from_config(cfg).unwrap();
    let rc = RenderConfig::new(128, 128, 1024, 11);
    let (stokes, _, leaks) = render_stokes_masked(&scene, &rc, None);
    // grazing interior segments can miss the analytic boundary by a float
    // epsilon; parts-per-million rates are harmless, anything more is a bug
    let samples = 128u64 * 128 * 1024;
    assert!(
        leaks <= samples / 100_000,
        "{leaks} interior escapes in {samples} camera samples"
    );
    let mask = gt_maps(&scene, 128, 128).mask;
    let summary = polarimetric_summary(&stokes, &mask).unwrap();
    println!(
        "furnace masked mean s0 {:?}, mean DoP {:.5} over {} pixels",
        summary.mean_s0, summary.mean_dop, summary.masked_pixels
    );
    for ch in 0..3 {
        assert!(
            (0.98..=1.02).contains(&summary.mean_s0[ch]),
            "channel {ch} mean s0 {} is outside [0.98, 1.02]",
            summary.mean_s0[ch]
        );
    }
    assert!(
        summary.mean_dop <= 0.01,
        "furnace mean DoP {} exceeds 0.01",
        summary.mean_dop
    );
    assert_eight_core_budget("criterion 04", t0.elapsed(), 600.0);
}

#[test]
fn criterion_05_dop_decreases_as_albedo_brightens() {
    let _guard = serial();
    let t0 = Instant::now();
    let mut dops = Vec::new();
    for alpha in [0.2f64, 0.4, 0.6, 0.8, 0.95] {
        let mut cfg = presets::reference_sphere();
        cfg.camera.resolution = [64, 64];
        cfg.medium.alpha = [alpha; 3];
        let scene = Scene::from_config(cfg).unwrap();
        let rc = RenderConfig::new(64, 64, 256, 7);
        let (stokes, _, _) = render_stokes_masked(&scene, &rc, None);
        let mask = gt_maps(&scene, 64, 64).mask;
        let summary = polarimetric_summary(&stokes, &mask).unwrap();
        println!("albedo {alpha:.2}: masked mean DoP {:.5}", summary.mean_dop);
        dops.push(summary.mean_dop);
    }
    for pair in dops.windows(2) {
        assert!(
            pair[1] < pair[0],
            "mean DoP failed to decrease: {:?}",
            dops
        );
    }
    assert_flat_budget("criterion 05", t0.elapsed(), 900.0);
}

/// Narrow radial spoke on the +x limb of the image disk: both polarization
/// orientations are constant across it to within the spoke's half-angle,
/// and its radial span keeps the incidence oblique yet below Brewster.
fn spoke_mask(w: u32, h: u32, rho_lo: f64, rho_hi: f64, half_angle_deg: f64) -> ScalarImage {
    let r_px = (0.08f64 / 0.35).asin().tan() / (22.5f64).to_radians().tan() * (w as f64 / 2.0);
    let sin_lim = half_angle_deg.to_radians().sin();
    let mut mask = ScalarImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - (w - 1) as f64 / 2.0;
            let dy = y as f64 - (h - 1) as f64 / 2.0;
            let r = (dx * dx + dy * dy).sqrt();
            if dx > 0.0 && r >= rho_lo * r_px && r < rho_hi * r_px && dy.abs() <= sin_lim * r {
                mask.set(x, y, 1.0);
            }
        }
    }
    mask
}

#[test]
fn criterion_06_aop_mode_flips_quarter_turn_between_specular_and_diffuse() {
    let _guard = serial();
    let t0 = Instant::now();
    // The quarter turn between the surface-glint orientation (perpendicular
    // to the plane of incidence) and the subsurface-exit orientation
    // (parallel to it) is only visible where the interior glow outshines the
    // mirrored surroundings: power-normalized Fresnel factors satisfy
    // Tp - Ts = Rs - Rp, so at any pixel the two polarized signals stand in
    // the exact ratio of interior radiance to mirrored environment radiance.
    // A hard camera flash in a dim room realizes that ratio, so the
    // reference sphere is re-lit with its environment dimmed tenfold and the
    // flash driven bright, and the statistic is read off a narrow spoke
    // whose incidence stays oblique but off-Brewster (roughly 24-53 deg).
    let (w, h) = (160u32, 160u32);
    let mask = spoke_mask(w, h, 0.40, 0.80, 2.5);
    let mut modes = Vec::new();
    for alpha in [0.05f64, 0.95] {
        let mut cfg = presets::reference_sphere();
        cfg.camera.resolution = [w, h];
        cfg.medium.alpha = [alpha; 3];
        for ch in 0..3 {
            for coeff in cfg.env_sh[ch].iter_mut() {
                *coeff *= 0.1;
            }
        }
        cfg.flash.as_mut().unwrap().intensity = 200.0;
        let scene = Scene::from_config(cfg).unwrap();
        let rc = RenderConfig::new(w, h, 16_384, 7);
        let (stokes, _, _) = render_stokes_masked(&scene, &rc, Some(&mask));
        let summary = polarimetric_summary(&stokes, &mask).unwrap();
        println!(
            "albedo {alpha:.2}: spoke AoP mode {:6.1} deg, mean DoP {:.4} over {} pixels",
            summary.aop_mode.to_degrees(),
            summary.mean_dop,
            summary.masked_pixels
        );
        modes.push(summary.aop_mode);
    }
    let distance = aop_distance(modes[0], modes[1]);
    println!("circular distance between AoP modes: {:.1} deg", distance.to_degrees());
    assert!(
        (distance - PI / 2.0).abs() <= 5.0f64.to_radians(),
        "AoP mode distance {:.2} deg is not a quarter turn within 5 deg",
        distance.to_degrees()
    );
    assert_flat_budget("criterion 06", t0.elapsed(), 600.0);
}

#[test]
fn criterion_07_render_decomposes_into_surface_plus_subsurface() {
    let _guard = serial();
    let t0 = Instant::now();

    // shared seed: the split is an identity, not an approximation
    let scene_small = reference_scene(32);
    let base = RenderConfig::new(32, 32, 32, 9);
    let (full, _, _) = render_stokes_masked(&scene_small, &base, None);
    let (pure, _, _) =
        render_stokes_masked(&scene_small, &base.clone().with_mode(RenderMode::PureBsdf), None);
    let (sss, _, _) =
        render_stokes_masked(&scene_small, &base.clone().with_mode(RenderMode::SssOnly), None);
    let mut worst_split = 0.0f64;
    for i in 0..full.data.len() {
        for ch in 0..3 {
            let f = full.data[i][ch];
            let p = pure.data[i][ch];
            let s = sss.data[i][ch];
            let scale = f.s0.abs().max(1.0);
            worst_split = worst_split
                .max((f.s0 - (p.s0 + s.s0)).abs() / scale)
                .max((f.s1 - (p.s1 + s.s1)).abs() / scale)
                .max((f.s2 - (p.s2 + s.s2)).abs() / scale);
        }
    }
    println!("shared-seed split residual: {worst_split:.3e}");
    assert!(worst_split <= 1e-12, "shared-seed split residual {worst_split:.3e}");

    // independent seeds: the branch sum must agree within combined Monte
    // Carlo uncertainty at every masked pixel; with ~3100 pixel-channel
    // tests an honest 3-sigma check leaves a small exceedance allowance
    let scene = reference_scene(64);
    let mask = gt_maps(&scene, 64, 64).mask;
    let render_var = |mode: RenderMode, seed: u64| {
        let cfg = RenderConfig::new(64, 64, 512, seed).with_mode(mode).with_variance();
        let (stokes, var, _) = render_stokes_masked(&scene, &cfg, None);
        (stokes, var.unwrap())
    };
    let (full, vf) = render_var(RenderMode::Full, 101);
    let (pure, vp) = render_var(RenderMode::PureBsdf, 102);
    let (sss, vs) = render_var(RenderMode::SssOnly, 103);
    let mut tests = 0usize;
    let mut exceed = 0usize;
    for y in 0..64u32 {
        for x in 0..64u32 {
            if mask.get(x, y) <= 0.5 {
                continue;
            }
            let i = (y * 64 + x) as usize;
            for ch in 0..3 {
                let d = full.data[i][ch].s0 - (pure.data[i][ch].s0 + sss.data[i][ch].s0);
                let var = vf.data[i][ch] + vp.data[i][ch] + vs.data[i][ch];
                tests += 1;
                if var > 0.0 {
                    if d.abs() > 3.0 * var.sqrt() {
                        exceed += 1;
                    }
                } else if d.abs() > 1e-12 {
                    exceed += 1;
                }
            }
        }
    }
    let fraction = exceed as f64 / tests as f64;
    println!(
        "independent-seed branch sum: {exceed}/{tests} pixel-channels beyond 3 sigma ({:.2}%)",
        100.0 * fraction
    );
    assert!(
        fraction <= 0.015,
        "{:.2}% of pixel-channels beyond 3 sigma (allowance 1.5%)",
        100.0 * fraction
    );
    assert_flat_budget("criterion 07", t0.elapsed(), 600.0);
}

#[test]
fn criterion_08_inverse_recovers_the_reference_medium() {
    let _guard = serial();
    let t0 = Instant::now();
    let scene = reference_scene(128);
    let obs_cfg = RenderConfig::new(128, 128, 256, 4242);
    let (stokes, _, _) = render_stokes_masked(&scene, &obs_cfg, None);
    let observations = capture_images(&stokes);
    let problem = InverseProblem::new(observations, scene).unwrap();
    // per-restart budget of 1995/5 = 399 evaluations never exceeds the
    // 2000-evaluation cap even after each restart's closing refinement
    let opt = OptimizerConfig {
        max_evals: 1995,
        restarts: 5,
        seed: 7,
        spp_schedule: vec![32, 128],
        similarity_slice_points: 0,
        ..Default::default()
    };
    let est = estimate_sss(&problem, &opt).unwrap();
    println!(
        "recovered sigma_t {:?} (truth [60, 60, 60])",
        est.params.sigma_t
    );
    println!(
        "recovered alpha   {:?} (truth [0.9, 0.8, 0.7])",
        est.params.alpha
    );
    println!("recovered g       {:.4} (truth 0.3)", est.params.g);
    println!("loss {:.6e}, evaluations {}", est.loss, est.evals);
    assert!(est.evals <= 2000, "spent {} objective evaluations", est.evals);
    let truth_alpha = [0.9, 0.8, 0.7];
    for ch in 0..3 {
        assert!(
            (est.params.alpha[ch] - truth_alpha[ch]).abs() <= 0.05,
            "alpha[{ch}] {} is outside +/-0.05 of {}",
            est.params.alpha[ch],
            truth_alpha[ch]
        );
        assert!(
            (est.params.sigma_t[ch] / 60.0 - 1.0).abs() <= 0.25,
            "sigma_t[{ch}] {} is outside +/-25% of 60",
            est.params.sigma_t[ch]
        );
    }
    assert!(
        (est.params.g - 0.3).abs() <= 0.1,
        "g {} is outside +/-0.1 of 0.3",
        est.params.g
    );
    assert_eight_core_budget("criterion 08", t0.elapsed(), 3600.0);
}

fn stokes_bits(img: &StokesImage) -> Vec<u64> {
    let mut bits = Vec::with_capacity(img.data.len() * 9);
    for px in &img.data {
        for ch in 0..3 {
            bits.push(px[ch].s0.to_bits());
            bits.push(px[ch].s1.to_bits());
            bits.push(px[ch].s2.to_bits());
        }
    }
    bits
}

#[test]
fn criterion_09_renders_and_datasets_are_reproducible() {
    let _guard = serial();
    let t0 = Instant::now();

    let scene = reference_scene(32);
    let rc = RenderConfig::new(32, 32, 16, 5);
    let renders: Vec<Vec<u64>> = [1usize, 2, 4]
        .iter()
        .map(|&threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| stokes_bits(&render_stokes_masked(&scene, &rc, None).0))
        })
        .collect();
    assert_eq!(renders[0], renders[1], "1-thread and 2-thread renders differ");
    assert_eq!(renders[0], renders[2], "1-thread and 4-thread renders differ");
    println!("renders are bit-identical across 1, 2 and 4 worker threads");

    let ranges = SamplingRanges::default();
    let settings = DatasetRenderSettings { width: 24, height: 24, spp: 8 };
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let (manifest_a, _) = generate_with_stats(3, dir_a.path(), 77, &ranges, &settings).unwrap();
    let (manifest_b, _) = generate_with_stats(3, dir_b.path(), 77, &ranges, &settings).unwrap();
    assert_eq!(manifest_a.records.len(), 3);
    for (a, b) in manifest_a.records.iter().zip(manifest_b.records.iter()) {
        assert_eq!(
            a.checksums, b.checksums,
            "record {} checksums differ between independent generations",
            a.index
        );
    }
    println!("two independent dataset generations agree on every file checksum");
    assert_flat_budget("criterion 09", t0.elapsed(), 300.0);
}

#[test]
fn criterion_10_dataset_generation_yields_clean_records() {
    let _guard = serial();
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let ranges = SamplingRanges::default();
    let settings = DatasetRenderSettings { width: 128, height: 128, spp: 64 };
    let (manifest, stats) = generate_with_stats(10, dir.path(), 2024, &ranges, &settings).unwrap();
    assert_eq!(manifest.records.len(), 10);
    println!("generated {} records ({} rendered, {} reused)", 10, stats.rendered, stats.reused);
    for record in &manifest.records {
        let loaded = load_record(&dir.path().join(&record.dir)).unwrap();
        assert!(
            loaded.warnings.is_empty(),
            "record {} loaded with warnings: {:?}",
            record.index,
            loaded.warnings
        );
    }
    println!("all 10 records reload with verified checksums and no warnings");
    assert_eight_core_budget("criterion 10", t0.elapsed(), 1800.0);
}
