//! Command-line driver for the murk renderer: render scenes to polarizer
//! captures, analyze captures into polarimetric maps, generate synthetic
//! datasets, estimate medium parameters from observations, and run the
//! built-in physics self-test.
//!
//! Exit codes are a stable contract: 0 on success, 1 when a self-test
//! invariant fails, 2 for usage, configuration or data errors. Summary
//! statistics are always written as JSON files next to the images, never
//! only logged, so scripts can consume them without parsing output.

mod selftest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use murk::dataset::pfm::{read_pfm, write_pfm, PfmImage};
use murk::dataset::{self, DatasetRenderSettings, SamplingRanges};
use murk::inverse::{
    estimate_sss, reconstruction_residual, InverseProblem, OptimizerConfig, Reconstruction,
};
use murk::render::image::{capture_images, polarimetric_maps, polarimetric_summary, CaptureSet};
use murk::render::image::{CAPTURE_NAMES, PURE_BSDF_CAPTURE_NAMES};
use murk::render::{
    render, render_stokes_masked, render_with_pure, RenderConfig, RenderMode, DEFAULT_MAX_BOUNCES,
};
use murk::render::image::ScalarImage;
use murk::scene::{Scene, SceneConfig};
use murk::{Error, Result};

#[derive(Parser)]
#[command(
    name = "murk",
    version,
    about = "Polarized volumetric renderer, dataset generator and inverse solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Override the scene seed (render/invert) or master seed (dataset).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker thread count; defaults to the MURK_THREADS variable, then all
    /// cores. Affects speed only — output bytes are identical for any value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Report progress and timings on stderr.
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene into polarizer captures, ground-truth maps and a
    /// summary JSON.
    Render(RenderArgs),
    /// Derive DoP/AoP/extremal-intensity maps and statistics from the four
    /// captures in a directory.
    Analyze(AnalyzeArgs),
    /// Dataset operations.
    Dataset(DatasetArgs),
    /// Estimate medium parameters from observed captures of a known scene.
    Invert(InvertArgs),
    /// Check the optical model against built-in physics invariants.
    Selftest,
}

#[derive(Args)]
struct RenderArgs {
    /// Scene configuration JSON.
    scene: PathBuf,

    /// Samples per pixel.
    #[arg(long, default_value_t = 64)]
    spp: u32,

    /// Resolution override as `N` or `WxH` (default: the scene camera's).
    #[arg(long, value_parser = parse_resolution)]
    res: Option<[u32; 2]>,

    /// One of: full, pure_bsdf, sss_only, unpolarized.
    #[arg(long, default_value = "full", value_parser = parse_mode)]
    mode: RenderMode,

    /// Path-length cap per sample.
    #[arg(long, default_value_t = DEFAULT_MAX_BOUNCES)]
    max_bounces: u32,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Directory holding the four capture files.
    captures: PathBuf,

    /// Capture filename prefix: `i` (full renders) or `b` (surface-only).
    #[arg(long, default_value = "i")]
    prefix: String,
}

#[derive(Args)]
struct DatasetArgs {
    #[command(subcommand)]
    command: DatasetCommand,
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Generate (or resume) a dataset of rendered records.
    Gen(GenArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Number of records.
    #[arg(long)]
    n: usize,

    /// Sampling-ranges JSON (default: the built-in ranges).
    #[arg(long)]
    ranges: Option<PathBuf>,

    /// Samples per pixel for every record.
    #[arg(long, default_value_t = 64)]
    spp: u32,

    /// Record resolution as `N` or `WxH`.
    #[arg(long, default_value = "128", value_parser = parse_resolution)]
    res: [u32; 2],
}

#[derive(Args)]
struct InvertArgs {
    /// Scene configuration JSON; its medium values are ignored.
    #[arg(long)]
    scene: PathBuf,

    /// Observation directory in dataset-record layout (i000.pfm … i135.pfm).
    #[arg(long)]
    obs: PathBuf,

    /// Optimizer configuration JSON (default: the built-in settings).
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    if let Some(t) = thread_override(cli) {
        // the renderer draws on the global pool unless a config overrides it
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .ok();
    }
    match &cli.command {
        Command::Render(args) => cmd_render(cli, args).map(|_| ExitCode::SUCCESS),
        Command::Analyze(args) => cmd_analyze(cli, args).map(|_| ExitCode::SUCCESS),
        Command::Dataset(args) => match &args.command {
            DatasetCommand::Gen(gen) => cmd_dataset_gen(cli, gen).map(|_| ExitCode::SUCCESS),
        },
        Command::Invert(args) => cmd_invert(cli, args).map(|_| ExitCode::SUCCESS),
        Command::Selftest => cmd_selftest(cli),
    }
}

fn thread_override(cli: &Cli) -> Option<usize> {
    cli.threads
        .or_else(|| std::env::var("MURK_THREADS").ok()?.parse().ok())
}

fn out_dir(cli: &Cli) -> Result<&Path> {
    cli.out
        .as_deref()
        .ok_or_else(|| Error::InvalidInput("--out <dir> is required for this command".into()))
}

fn parse_resolution(s: &str) -> std::result::Result<[u32; 2], String> {
    let parse = |t: &str| {
        t.parse::<u32>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| format!("`{t}` is not a positive pixel count"))
    };
    match s.split_once(['x', 'X']) {
        Some((w, h)) => Ok([parse(w)?, parse(h)?]),
        None => {
            let n = parse(s)?;
            Ok([n, n])
        }
    }
}

fn parse_mode(s: &str) -> std::result::Result<RenderMode, String> {
    match s {
        "full" => Ok(RenderMode::Full),
        "pure_bsdf" => Ok(RenderMode::PureBsdf),
        "sss_only" => Ok(RenderMode::SssOnly),
        "unpolarized" => Ok(RenderMode::Unpolarized),
        other => Err(format!(
            "unknown mode `{other}` (expected full, pure_bsdf, sss_only or unpolarized)"
        )),
    }
}

fn write_rgb(dir: &Path, name: &str, img: &murk::render::image::RgbImage) -> Result<()> {
    write_pfm(&dir.join(name), &PfmImage::from_rgb(img))
}

fn write_captures(dir: &Path, names: &[&str; 4], caps: &CaptureSet) -> Result<()> {
    for (name, img) in names.iter().zip(caps.images.iter()) {
        write_rgb(dir, &format!("{name}.pfm"), img)?;
    }
    Ok(())
}

/// Read the four polarizer captures `<prefix>000.pfm` … `<prefix>135.pfm`.
fn read_captures(dir: &Path, prefix: &str) -> Result<CaptureSet> {
    let mut images = Vec::with_capacity(4);
    for (angle, deg) in [("000", 0), ("045", 45), ("090", 90), ("135", 135)] {
        let name = format!("{prefix}{angle}.pfm");
        let path = dir.join(&name);
        if !path.exists() {
            return Err(Error::NotFound(format!(
                "{name} (the {deg}-degree polarizer capture) in {}",
                dir.display()
            )));
        }
        images.push(read_pfm(&path)?.to_rgb()?);
    }
    let (w, h) = (images[0].width, images[0].height);
    if images.iter().any(|i| (i.width, i.height) != (w, h)) {
        return Err(Error::Dimension(format!(
            "capture files in {} disagree on resolution",
            dir.display()
        )));
    }
    let images: [murk::render::image::RgbImage; 4] =
        images.try_into().expect("exactly four captures");
    Ok(CaptureSet { images })
}

fn cmd_render(cli: &Cli, args: &RenderArgs) -> Result<()> {
    let out = out_dir(cli)?;
    let mut config = SceneConfig::from_file(&args.scene)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(res) = args.res {
        config.camera.resolution = res;
    }
    let scene = Scene::from_config(config)?;
    let mut cfg = RenderConfig::for_scene(&scene, args.spp).with_mode(args.mode);
    cfg.max_bounces = args.max_bounces;

    std::fs::create_dir_all(out)?;
    let outs = match args.mode {
        RenderMode::Full => render_with_pure(&scene, &cfg),
        _ => render(&scene, &cfg),
    };
    let mut files = 4;
    if args.mode == RenderMode::PureBsdf {
        // a surface-only render *is* the b-side of a record: just those four
        write_captures(out, &PURE_BSDF_CAPTURE_NAMES, &outs.captures)?;
    } else {
        write_captures(out, &CAPTURE_NAMES, &outs.captures)?;
        if let Some(pure) = &outs.pure_bsdf_captures {
            write_captures(out, &PURE_BSDF_CAPTURE_NAMES, pure)?;
            files += 4;
        }
        write_rgb(out, "normal.pfm", &outs.gt.normal)?;
        write_pfm(&out.join("depth.pfm"), &PfmImage::from_scalar(&outs.gt.depth))?;
        write_pfm(&out.join("mask.pfm"), &PfmImage::from_scalar(&outs.gt.mask))?;
        let report = serde_json::json!({
            "metadata": outs.metadata,
            "summary": outs.summary()?,
        });
        std::fs::write(out.join("summary.json"), serde_json::to_vec_pretty(&report)?)?;
        files += 4;
    }
    if cli.verbose {
        eprintln!(
            "wrote {files} files to {} in {:.2}s",
            out.display(),
            outs.metadata.wall_time_s
        );
    }
    Ok(())
}

fn cmd_analyze(cli: &Cli, args: &AnalyzeArgs) -> Result<()> {
    let out = out_dir(cli)?;
    let caps = read_captures(&args.captures, &args.prefix)?;
    let stokes = caps.invert();
    let maps = polarimetric_maps(&stokes);
    std::fs::create_dir_all(out)?;
    write_rgb(out, "dop.pfm", &maps.dop)?;
    write_rgb(out, "aop.pfm", &maps.aop)?;
    write_rgb(out, "imax.pfm", &maps.imax)?;
    write_rgb(out, "imin.pfm", &maps.imin)?;

    // statistics over the object mask when the directory carries one,
    // otherwise over the full frame
    let mask_path = args.captures.join("mask.pfm");
    let (mask, masked) = if mask_path.exists() {
        (read_pfm(&mask_path)?.to_scalar()?, true)
    } else {
        let mut all = ScalarImage::new(stokes.width, stokes.height);
        all.data.fill(1.0);
        (all, false)
    };
    let summary = polarimetric_summary(&stokes, &mask)?;

    // the extremal maps partition the intensity: their sum must rebuild s0
    let mut max_extrema_sum_error = 0.0f64;
    for (i, px) in stokes.data.iter().enumerate() {
        for ch in 0..3 {
            let rebuilt = maps.imax.data[i][ch] + maps.imin.data[i][ch];
            max_extrema_sum_error = max_extrema_sum_error.max((rebuilt - px[ch].s0).abs());
        }
    }
    let report = serde_json::json!({
        "masked": masked,
        "summary": summary,
        "max_extrema_sum_error": max_extrema_sum_error,
    });
    std::fs::write(out.join("stats.json"), serde_json::to_vec_pretty(&report)?)?;
    if cli.verbose {
        eprintln!(
            "wrote dop/aop/imax/imin.pfm and stats.json to {}",
            out.display()
        );
    }
    Ok(())
}

fn cmd_dataset_gen(cli: &Cli, args: &GenArgs) -> Result<()> {
    let out = out_dir(cli)?;
    let ranges = match &args.ranges {
        Some(path) => SamplingRanges::from_file(path)?,
        None => SamplingRanges::default(),
    };
    let settings = DatasetRenderSettings {
        width: args.res[0],
        height: args.res[1],
        spp: args.spp,
    };
    let master_seed = cli.seed.unwrap_or(0);
    let n = args.n;
    let verbose = cli.verbose;
    let (manifest, stats) = dataset::generate_with_progress(
        n,
        out,
        master_seed,
        &ranges,
        &settings,
        &mut |fraction| {
            if verbose {
                eprintln!("{:5.1}% of {n} records", 100.0 * fraction);
            }
        },
    )?;
    println!(
        "{} records under {} ({} rendered, {} reused, {:.1}s)",
        manifest.records.len(),
        out.display(),
        stats.rendered,
        stats.reused,
        manifest.total_wall_time_s
    );
    Ok(())
}

fn cmd_invert(cli: &Cli, args: &InvertArgs) -> Result<()> {
    let out = out_dir(cli)?;
    let config = SceneConfig::from_file(&args.scene)?;
    let scene = Scene::from_config(config)?;
    let observations = read_captures(&args.obs, "i")?;
    let mut opt: OptimizerConfig = match &args.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => OptimizerConfig::default(),
    };
    if let Some(seed) = cli.seed {
        opt.seed = seed;
    }
    let problem = InverseProblem::new(observations, scene)?;

    let t0 = Instant::now();
    let est = estimate_sss(&problem, &opt)?;
    let spp = *opt.spp_schedule.last().expect("validated non-empty");
    let rec = reconstruct(&problem, args, &est.params, spp, opt.seed)?;

    std::fs::create_dir_all(out)?;
    for (name, img) in ["r000", "r045", "r090", "r135"]
        .iter()
        .zip(rec.captures.images.iter())
    {
        write_rgb(out, &format!("{name}.pfm"), img)?;
    }
    for (name, img) in ["s000", "s045", "s090", "s135"]
        .iter()
        .zip(rec.sss_captures.images.iter())
    {
        write_rgb(out, &format!("{name}.pfm"), img)?;
    }
    let report = serde_json::json!({
        "estimate": est,
        "reconstruction": {
            "per_angle_l1": rec.per_angle_l1,
            "loss": rec.loss,
            "max_decomposition_error": rec.max_decomposition_error,
        },
        "wall_time_s": t0.elapsed().as_secs_f64(),
    });
    std::fs::write(out.join("estimate.json"), serde_json::to_vec_pretty(&report)?)?;
    let p = &est.params;
    println!(
        "sigma_t=({:.1}, {:.1}, {:.1}) alpha=({:.3}, {:.3}, {:.3}) g={:.3} loss={:.3e} evals={}",
        p.sigma_t[0], p.sigma_t[1], p.sigma_t[2], p.alpha[0], p.alpha[1], p.alpha[2], p.g,
        est.loss, est.evals
    );
    Ok(())
}

/// Re-render at the estimate and audit the surface/subsurface split. Observed
/// surface-only captures (`b*.pfm`) are used when the observation directory
/// has them; otherwise a surface pass is rendered with the solver's seed,
/// which makes the decomposition identity exact.
fn reconstruct(
    problem: &InverseProblem,
    args: &InvertArgs,
    params: &murk::medium::MediumParams,
    spp: u32,
    seed: u64,
) -> Result<Reconstruction> {
    let pure = match read_captures(&args.obs, "b") {
        Ok(p) => p,
        Err(_) => {
            let cfg = RenderConfig::new(
                problem.observations.width(),
                problem.observations.height(),
                spp,
                seed,
            )
            .with_mode(RenderMode::PureBsdf);
            let (stokes, _, _) = render_stokes_masked(&problem.scene, &cfg, None);
            capture_images(&stokes)
        }
    };
    reconstruction_residual(problem, &pure, params, spp, seed)
}

fn cmd_selftest(cli: &Cli) -> Result<ExitCode> {
    let checks = selftest::run_all();
    let mut failed = 0;
    for c in &checks {
        println!("{:4} {:24} {}", c.status.word(), c.name, c.detail);
        if c.status == selftest::Status::Fail {
            failed += 1;
        }
    }
    println!("{} checks, {failed} failed", checks.len());
    if let Some(out) = &cli.out {
        std::fs::create_dir_all(out)?;
        let report = serde_json::json!({
            "checks": checks
                .iter()
                .map(|c| {
                    serde_json::json!({
                        "name": c.name,
                        "status": c.status.word(),
                        "detail": c.detail,
                    })
                })
                .collect::<Vec<_>>(),
            "failed": failed,
        });
        std::fs::write(out.join("selftest.json"), serde_json::to_vec_pretty(&report)?)?;
    }
    Ok(if failed > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}
