use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use uvsync::denoiser::{
    Denoiser, EchoDenoiser, NoisyOracleDenoiser, OracleDenoiser, RemoteDenoiser, RemoteOptions,
};
use uvsync::geometry::{
    load_mesh_sequence_with, primitives, save_mesh_sequence, Camera, FramePattern, LoadOptions,
    MeshSequence, Vec3,
};
use uvsync::grid::Grid;
use uvsync::image_io::load_rgb_grid;
use uvsync::par::Execution;
use uvsync::pipeline::{
    generate_in_scene, CheckpointWriter, GenerateOptions, IdentityDecoder, NoObserver,
    PipelineConfig, RenderOptions, Scene, StepObserver, TextureSequence,
};
use uvsync::raster::{sample_texture, texel_uv};
use uvsync::schedule::make_schedule;
use uvsync::uvdiff::AggregationMode;

#[derive(Parser)]
#[command(
    name = "uvsync",
    version,
    about = "Synchronized UV-space diffusion texturing for animated meshes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Texture a mesh sequence.
    Generate(GenerateArgs),
    /// Render finalized textures on the mesh sequence.
    Render(RenderArgs),
    /// Run the built-in invariant checks.
    Validate,
    /// Time each phase of a run, sequential and parallel.
    Bench(BenchArgs),
    /// Write a procedural animated mesh sequence as OBJ files.
    DemoMesh(DemoMeshArgs),
}

#[derive(clap::Args)]
struct GenerateArgs {
    #[arg(long)]
    mesh_dir: PathBuf,
    /// Frame file pattern, e.g. `frame_%04d.obj`.
    #[arg(long, default_value = "frame_%04d.obj")]
    pattern: String,
    #[arg(long)]
    prompt: Option<String>,
    /// TOML file with pipeline settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `oracle`, `noisy-oracle`, `echo` or `remote:HOST:PORT`.
    #[arg(long)]
    denoiser: Option<String>,
    /// `proposed`, `agg-x0-eps` or `agg-zprev`.
    #[arg(long)]
    mode: Option<AggregationMode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Target texture image for the oracle denoisers.
    #[arg(long)]
    target: Option<PathBuf>,
    /// Dump the diffusion state after every step under OUT/checkpoints.
    #[arg(long)]
    checkpoints: bool,
    /// Keep the mesh coordinates as stored instead of centering them.
    #[arg(long)]
    no_center: bool,
    #[arg(long, default_value_t = 600)]
    timeout_secs: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct RenderArgs {
    #[arg(long)]
    mesh_dir: PathBuf,
    #[arg(long, default_value = "frame_%04d.obj")]
    pattern: String,
    /// Output directory of `generate`.
    #[arg(long)]
    textures: PathBuf,
    /// `AZIMUTH,ELEVATION,RADIUS[,FOV_DEG[,RESOLUTION]]` in degrees and scene units.
    #[arg(long, default_value = "0,15,2.5,40,256")]
    camera: String,
    #[arg(long, default_value_t = 3)]
    interval: usize,
    /// Equatorial views used for the cross-view consistency report (0 = off).
    #[arg(long, default_value_t = 0)]
    consistency_views: usize,
    #[arg(long)]
    no_center: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct BenchArgs {
    /// Mesh sequence to time; a procedural sphere when omitted.
    #[arg(long)]
    mesh_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    #[arg(long, default_value_t = 96)]
    latent_resolution: usize,
    #[arg(long, default_value_t = 256)]
    uv_resolution: usize,
    #[arg(long, default_value_t = 4)]
    frames: usize,
}

#[derive(clap::Args)]
struct DemoMeshArgs {
    /// `sphere`, `cube` or `quad`.
    #[arg(long, default_value = "sphere")]
    shape: String,
    #[arg(long, default_value_t = 8)]
    frames: usize,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Render(a) => cmd_render(a),
        Command::Validate => cmd_validate(),
        Command::Bench(a) => cmd_bench(a),
        Command::DemoMesh(a) => cmd_demo_mesh(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_meshes(dir: &Path, pattern: &str, center: bool) -> Result<MeshSequence> {
    let opts = LoadOptions {
        pattern: FramePattern::parse(pattern)?,
        center,
    };
    let seq = load_mesh_sequence_with(dir, &opts)
        .with_context(|| format!("loading {}", dir.display()))?;
    info!(
        "loaded {} frames, {} vertices, {} faces",
        seq.frame_count(),
        seq.vertex_count(),
        seq.face_count()
    );
    Ok(seq)
}

/// Soft colored bands in UV space used when no target image is given.
fn procedural_target(channels: usize, r: usize) -> Grid {
    use std::f64::consts::PI;
    Grid::from_fn(channels, r, r, |c, y, x| {
        let (u, v) = texel_uv(y, x, r);
        let phase = c as f64 * 2.0 * PI / 3.0;
        (0.5 + 0.3 * (6.0 * PI * u + phase).sin() * (3.0 * PI * v + phase).cos()) as f32
    })
}

fn load_target(path: Option<&Path>, channels: usize, r: usize) -> Result<Grid> {
    let Some(path) = path else {
        return Ok(procedural_target(channels, r));
    };
    let img = load_rgb_grid(path).with_context(|| format!("reading {}", path.display()))?;
    if channels != 3 {
        bail!("image targets need 3 channels, config has {channels}");
    }
    // Image rows run top to bottom, texel rows likewise.
    Ok(Grid::from_fn(3, r, r, |c, y, x| {
        let (u, v) = texel_uv(y, x, r);
        sample_texture(&img, c, u, v) as f32
    }))
}

fn build_denoiser(
    spec: &str,
    cfg: &PipelineConfig,
    scene: &Scene,
    target: Option<&Path>,
    timeout: Duration,
) -> Result<Box<dyn Denoiser>> {
    if let Some(addr) = spec.strip_prefix("remote:") {
        let opts = RemoteOptions {
            io_timeout: timeout,
            ..RemoteOptions::default()
        };
        return Ok(Box::new(RemoteDenoiser::connect(addr, opts)?));
    }
    let oracle = || -> Result<OracleDenoiser> {
        let t = load_target(target, cfg.channels, cfg.uv_resolution)?;
        let targets = vec![t; scene.frame_count()];
        Ok(OracleDenoiser::from_buffers(
            &targets,
            &scene.buffers,
            cfg.execution,
        )?)
    };
    Ok(match spec {
        "oracle" => Box::new(oracle()?),
        "noisy-oracle" => Box::new(NoisyOracleDenoiser::new(
            oracle()?,
            cfg.noise_sigma,
            cfg.seed,
        )?),
        "echo" => Box::new(EchoDenoiser),
        other => bail!("unknown denoiser {other:?}"),
    })
}

fn cmd_generate(a: GenerateArgs) -> Result<ExitCode> {
    let mut cfg = match &a.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(p) = a.prompt {
        cfg.prompt = p;
    }
    if let Some(d) = a.denoiser {
        cfg.denoiser = d;
    }
    if let Some(m) = a.mode {
        cfg.mode = m;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    cfg.validate()?;

    let meshes = load_meshes(&a.mesh_dir, &a.pattern, !a.no_center)?;
    let rig = cfg.rig.build()?;
    std::fs::create_dir_all(&a.out)?;
    let scene = Scene::prepare(
        &meshes,
        &rig,
        cfg.latent_resolution,
        cfg.uv_resolution,
        &cfg.raster(),
    )?;
    let denoiser = build_denoiser(
        &cfg.denoiser,
        &cfg,
        &scene,
        a.target.as_deref(),
        Duration::from_secs(a.timeout_secs),
    )?;
    info!(
        "running {} steps, {} views, {} keyframes, mode {}",
        cfg.steps,
        rig.len(),
        meshes.frame_count(),
        cfg.mode
    );

    let mut writer;
    let mut none = NoObserver;
    let observer: &mut dyn StepObserver = if a.checkpoints {
        writer = CheckpointWriter {
            dir: a.out.join("checkpoints"),
        };
        &mut writer
    } else {
        &mut none
    };
    let seq = generate_in_scene(
        &scene,
        &cfg,
        &*denoiser,
        GenerateOptions {
            observer,
            decoder: &IdentityDecoder,
            resume: None,
        },
    )?;
    seq.save(&a.out)?;
    std::fs::write(a.out.join("config.toml"), cfg.to_toml()?)?;
    make_schedule(cfg.steps, cfg.schedule, cfg.schedule_params)?
        .save(a.out.join("schedule.toml"))?;
    let manifest = serde_json::json!({
        "tool": "uvsync",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "mesh_dir": a.mesh_dir,
        "frames": meshes.frame_count(),
        "views": rig.len(),
        "denoiser": cfg.denoiser,
        "backend": denoiser.handshake()?,
        "mode": cfg.mode.to_string(),
        "parallel": cfg.execution.is_parallel(),
        "seconds": seq.timings.total().as_secs_f64(),
        "config": cfg,
    });
    std::fs::write(
        a.out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    for r in &seq.reports {
        info!(
            "frame {}: {} covered, {} from reference, {} dilated, {} empty",
            r.frame, r.covered, r.reference_filled, r.dilated, r.empty
        );
    }
    info!(
        "wrote {} in {:.1}s",
        a.out.display(),
        seq.timings.total().as_secs_f64()
    );
    Ok(ExitCode::SUCCESS)
}

fn parse_camera(spec: &str) -> Result<Camera> {
    let parts: Vec<f64> = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("bad camera spec {spec:?}"))?;
    if !(3..=5).contains(&parts.len()) {
        bail!("camera spec needs AZIMUTH,ELEVATION,RADIUS[,FOV_DEG[,RESOLUTION]]");
    }
    let (az, el, r) = (parts[0].to_radians(), parts[1].to_radians(), parts[2]);
    let fov = parts.get(3).copied().unwrap_or(40.0).to_radians();
    let res = parts.get(4).copied().unwrap_or(256.0) as usize;
    let pos = Vec3::new(
        r * el.cos() * az.sin(),
        r * el.sin(),
        r * el.cos() * az.cos(),
    );
    Ok(Camera::new(pos, Vec3::zeros(), Vec3::y(), fov, (res, res))?)
}

fn cmd_render(a: RenderArgs) -> Result<ExitCode> {
    let meshes = load_meshes(&a.mesh_dir, &a.pattern, !a.no_center)?;
    let keyframes = TextureSequence::load_keyframes(&a.textures)?;
    let camera = parse_camera(&a.camera)?;
    let consistency_rig = (a.consistency_views > 0)
        .then(|| {
            uvsync::geometry::default_rig(camera.position().norm(), a.consistency_views, false)
        })
        .transpose()?;
    let opts = RenderOptions {
        consistency_rig,
        ..RenderOptions::default()
    };
    let reports =
        uvsync::pipeline::render_sequence(&meshes, &keyframes, a.interval, &camera, &a.out, &opts)?;
    for r in &reports {
        match r.consistency {
            Some(c) => info!(
                "frame {}: cross-view std mean {:.4}, max {:.4} over {} texels",
                r.frame, c.mean_std, c.max_std, c.texels
            ),
            None => info!("frame {} -> {}", r.frame, r.image.display()),
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate() -> Result<ExitCode> {
    let checks = uvsync::selfcheck::run_checks();
    let mut ok = true;
    for c in &checks {
        ok &= c.passed;
        println!(
            "{} {:<58} {:>7.2}s {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.seconds,
            c.detail
        );
    }
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn animated_sphere(frames: usize) -> Result<MeshSequence> {
    let base = primitives::uv_sphere(0.6, 48, 24);
    let positions = (0..frames)
        .map(|k| {
            let s = (k as f64 / frames.max(1) as f64 * std::f64::consts::TAU).sin();
            base.positions(0)
                .iter()
                .map(|p| Vec3::new(p.x * (1.0 + 0.15 * s), p.y * (1.0 - 0.1 * s), p.z))
                .collect()
        })
        .collect();
    Ok(MeshSequence::new(
        positions,
        base.faces().to_vec(),
        base.uvs().to_vec(),
    )?)
}

fn cmd_demo_mesh(a: DemoMeshArgs) -> Result<ExitCode> {
    if a.frames == 0 {
        bail!("--frames must be >= 1");
    }
    let base = match a.shape.as_str() {
        "sphere" => return write_demo(animated_sphere(a.frames)?, &a.out),
        "cube" => primitives::cube(0.8),
        "quad" => primitives::quad(1.0, 1.0),
        other => bail!("unknown shape {other:?}"),
    };
    let positions = (0..a.frames)
        .map(|k| {
            let ang = 0.3 * (k as f64 / a.frames as f64 * std::f64::consts::TAU).sin();
            let (s, c) = ang.sin_cos();
            base.positions(0)
                .iter()
                .map(|p| Vec3::new(c * p.x + s * p.z, p.y, -s * p.x + c * p.z))
                .collect()
        })
        .collect();
    write_demo(
        MeshSequence::new(positions, base.faces().to_vec(), base.uvs().to_vec())?,
        &a.out,
    )
}

fn write_demo(seq: MeshSequence, out: &Path) -> Result<ExitCode> {
    save_mesh_sequence(&seq, out, &FramePattern::parse("frame_%04d.obj")?)?;
    info!("wrote {} frames to {}", seq.frame_count(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(a: BenchArgs) -> Result<ExitCode> {
    let meshes = match &a.mesh_dir {
        Some(d) => load_meshes(d, "frame_%04d.obj", true)?,
        None => animated_sphere(a.frames)?,
    };
    let rig = PipelineConfig::default().rig.build()?;
    println!(
        "{} frames, {} views, {} steps, {}² latents, {}² UV",
        meshes.frame_count(),
        rig.len(),
        a.steps,
        a.latent_resolution,
        a.uv_resolution
    );
    println!(
        "{:<11} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>10} {:>9}",
        "execution",
        "prepare",
        "denoise",
        "bake",
        "step",
        "render",
        "finalize",
        "per-step",
        "total"
    );
    for exec in [Execution::Sequential, Execution::Parallel] {
        let cfg = PipelineConfig {
            steps: a.steps,
            latent_resolution: a.latent_resolution,
            uv_resolution: a.uv_resolution,
            execution: exec,
            ..PipelineConfig::default()
        };
        let clock = std::time::Instant::now();
        let scene = Scene::prepare(
            &meshes,
            &rig,
            cfg.latent_resolution,
            cfg.uv_resolution,
            &cfg.raster(),
        )?;
        let prepare = clock.elapsed();
        let targets = vec![procedural_target(cfg.channels, cfg.uv_resolution); scene.frame_count()];
        let oracle = OracleDenoiser::from_buffers(&targets, &scene.buffers, exec)?;
        let mut obs = NoObserver;
        let seq = generate_in_scene(
            &scene,
            &cfg,
            &oracle,
            GenerateOptions {
                observer: &mut obs,
                decoder: &IdentityDecoder,
                resume: None,
            },
        )?;
        let t = seq.timings;
        let ms = |d: Duration| format!("{:.1}ms", d.as_secs_f64() * 1e3);
        let per_step = t.per_step.iter().sum::<Duration>() / t.per_step.len().max(1) as u32;
        let label = if exec.is_parallel() {
            "parallel"
        } else {
            "sequential"
        };
        println!(
            "{:<11} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>10} {:>9}",
            label,
            ms(prepare),
            ms(t.denoise),
            ms(t.bake),
            ms(t.step),
            ms(t.render),
            ms(t.finalize),
            ms(per_step),
            ms(prepare + t.total())
        );
    }
    Ok(ExitCode::SUCCESS)
}
