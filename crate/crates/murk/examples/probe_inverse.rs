use murk::inverse::{estimate_sss, InverseProblem, OptimizerConfig};
use murk::render::image::capture_images;
use murk::render::{render_stokes_masked, RenderConfig};
use murk::scene::{presets, Scene};
use std::time::Instant;

fn main() {
    let res: u32 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(64);
    let evals: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let base: u32 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(16);
    let mut cfg = presets::reference_sphere();
    cfg.camera.resolution = [res, res];
    let scene = Scene::from_config(cfg).unwrap();
    let rc = RenderConfig::new(res, res, 256, 4242);
    let (stokes, _, _) = render_stokes_masked(&scene, &rc, None);
    let obs = capture_images(&stokes);
    let problem = InverseProblem::new(obs, scene).unwrap();
    let opt = OptimizerConfig {
        max_evals: evals,
        restarts: 5,
        seed: 7,
        spp_schedule: vec![base, 4 * base],
        similarity_slice_points: 0,
        ..Default::default()
    };
    let t0 = Instant::now();
    let est = estimate_sss(&problem, &opt).unwrap();
    println!(
        "res {res} elapsed {:.1}s evals {} loss {:.6e} converged {}",
        t0.elapsed().as_secs_f64(),
        est.evals,
        est.loss,
        est.converged
    );
    println!("sigma_t {:?} (gt [60,60,60])", est.params.sigma_t);
    println!("alpha   {:?} (gt [0.9,0.8,0.7])", est.params.alpha);
    println!("g       {:.4} (gt 0.3)", est.params.g);
    for (i, r) in est.restarts.iter().enumerate() {
        println!(
            "restart {i}: evals {:3} converged {:5} loss {:.4e}  sigma {:5.1} {:5.1} {:5.1}  alpha {:.2} {:.2} {:.2}  g {:+.2}",
            r.evals, r.converged, r.loss,
            r.params.sigma_t[0], r.params.sigma_t[1], r.params.sigma_t[2],
            r.params.alpha[0], r.params.alpha[1], r.params.alpha[2], r.params.g
        );
    }
}
