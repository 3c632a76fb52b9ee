use murk::render::image::{aop_distance, polarimetric_summary, ScalarImage};
use murk::render::{render_stokes_masked, RenderConfig};
use murk::scene::{gt_maps, presets, Scene};

fn spoke_mask(w: u32, h: u32, rho_lo: f64, rho_hi: f64, half_angle_deg: f64) -> ScalarImage {
    let r_px = (0.08f64 / 0.35).asin().tan() / (22.5f64).to_radians().tan() * (w as f64 / 2.0);
    let sin_lim = half_angle_deg.to_radians().sin();
    let mut mask = ScalarImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - (w - 1) as f64 / 2.0;
            let dy = y as f64 - (h - 1) as f64 / 2.0;
            let r = (dx * dx + dy * dy).sqrt();
            let rho = r / r_px;
            if dx > 0.0 && rho >= rho_lo && rho < rho_hi && dy.abs() <= sin_lim * r {
                mask.set(x, y, 1.0);
            }
        }
    }
    mask
}

fn main() {
    // Part 1: canonical scene, full coverage mask (evidence for the ledger).
    println!("== canonical scene, coverage mask, 64x64 @ 512 ==");
    let mut modes = Vec::new();
    for alpha in [0.05f64, 0.95] {
        let mut cfg = presets::reference_sphere();
        cfg.camera.resolution = [64, 64];
        cfg.medium.alpha = [alpha; 3];
        let scene = Scene::from_config(cfg).unwrap();
        let rc = RenderConfig::new(64, 64, 512, 7);
        let (stokes, _, _) = render_stokes_masked(&scene, &rc, None);
        let mask = gt_maps(&scene, 64, 64).mask;
        let s = polarimetric_summary(&stokes, &mask).unwrap();
        println!(
            "alpha {alpha:.2}  px {:4}  mean_dop {:.4}  mode {:6.1} deg  principal {:6.1} deg",
            s.masked_pixels,
            s.mean_dop,
            s.aop_mode.to_degrees(),
            s.aop_principal.to_degrees()
        );
        modes.push(s.aop_mode);
    }
    println!("mode distance: {:.1} deg\n", aop_distance(modes[0], modes[1]).to_degrees());

    // Part 2: flash-dominant re-light, radial spoke mask.
    for (env_scale, flash_i, spp) in [(0.1f64, 200.0f64, 16384u32), (0.1, 200.0, 65536)] {
        println!("== re-lit: env x{env_scale}, flash {flash_i}, 160x160 spoke @ {spp} ==");
        let (w, h) = (160u32, 160u32);
        let mask = spoke_mask(w, h, 0.40, 0.80, 2.5);
        let n_mask: u32 = mask.data.iter().map(|&v| (v > 0.5) as u32).sum();
        println!("spoke pixels: {n_mask}");
        let mut modes = Vec::new();
        for alpha in [0.05f64, 0.95] {
            let mut cfg = presets::reference_sphere();
            cfg.camera.resolution = [w, h];
            cfg.medium.alpha = [alpha; 3];
            for ch in 0..3 {
                for k in 0..cfg.env_sh[ch].len() {
                    cfg.env_sh[ch][k] *= env_scale;
                }
            }
            if let Some(f) = cfg.flash.as_mut() {
                f.intensity = flash_i;
            }
            let scene = Scene::from_config(cfg).unwrap();
            let rc = RenderConfig::new(w, h, spp, 7);
            let (stokes, _, _) = render_stokes_masked(&scene, &rc, Some(&mask));
            let s = polarimetric_summary(&stokes, &mask).unwrap();
            let mut top: Vec<(usize, u32)> =
                s.aop_histogram.iter().copied().enumerate().filter(|&(_, c)| c > 0).collect();
            top.sort_by(|a, b| b.1.cmp(&a.1));
            top.truncate(6);
            let top: Vec<String> =
                top.iter().map(|(b, c)| format!("{}deg:{c}", b * 180 / 90)).collect();
            println!(
                "alpha {alpha:.2}  mean_dop {:.4}  mode {:6.1} deg  principal {:6.1} deg  bins [{}]",
                s.mean_dop,
                s.aop_mode.to_degrees(),
                s.aop_principal.to_degrees(),
                top.join(" ")
            );
            modes.push(s.aop_mode);
        }
        println!("mode distance: {:.1} deg\n", aop_distance(modes[0], modes[1]).to_degrees());
    }
}
