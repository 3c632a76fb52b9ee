use murk::inverse::{objective, InverseProblem};
use murk::render::image::capture_images;
use murk::render::{render_stokes_masked, RenderConfig};
use murk::medium::MediumParams;
use murk::scene::{presets, Scene};

fn main() {
    let res = 64u32;
    let mut cfg = presets::reference_sphere();
    cfg.camera.resolution = [res, res];
    let scene = Scene::from_config(cfg).unwrap();
    let rc = RenderConfig::new(res, res, 256, 4242);
    let (stokes, _, _) = render_stokes_masked(&scene, &rc, None);
    let obs = capture_images(&stokes);
    let problem = InverseProblem::new(obs, scene).unwrap();

    let truth = MediumParams::new([60.0; 3], [0.9, 0.8, 0.7], 0.3).unwrap();
    let found = MediumParams::new(
        [19.64992978356035, 17.071840501987012, 22.70154567426476],
        [0.708233503099673, 0.3768402913474164, 0.34976338675321716],
        0.1656,
    )
    .unwrap();

    for (name, p) in [("truth", truth), ("found", found)] {
        for spp in [16u32, 64, 256] {
            let l = objective(&problem, &p, spp, 7).unwrap();
            println!("{name:6} spp {spp:4}: loss {l:.6e}");
        }
    }
    // extinction scaling line through truth (fixed alpha, g)
    for t in [0.33f64, 0.5, 0.75, 1.0, 1.5, 2.0] {
        let p = MediumParams::new([60.0 * t; 3], [0.9, 0.8, 0.7], 0.3).unwrap();
        let l = objective(&problem, &p, 64, 7).unwrap();
        println!("sigma x{t:.2} spp 64: loss {l:.6e}");
    }
    // albedo line at truth extinction
    for da in [-0.1f64, -0.05, 0.0, 0.05] {
        let p = MediumParams::new(
            [60.0; 3],
            [0.9 + da, 0.8 + da, 0.7 + da],
            0.3,
        )
        .unwrap();
        let l = objective(&problem, &p, 64, 7).unwrap();
        println!("alpha {da:+.2} spp 64: loss {l:.6e}");
    }
}
