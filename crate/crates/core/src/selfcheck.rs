//! Fast invariant checks run by `uvsync validate`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::denoiser::{Denoiser, OracleDenoiser};
use crate::error::Result;
use crate::geometry::{primitives, Camera, CameraRig, Vec3};
use crate::grid::Grid;
use crate::par::Execution;
use crate::pipeline::{generate, PipelineConfig, Scene};
use crate::raster::{render_buffers, PartialTexture, RasterConfig, UvRaster, VisibilityMap};
use crate::schedule::kernel;
use crate::uvdiff::{
    aggregate_views, blend_with_reference, build_reference, composite, AggregationConfig,
    LatentTexture, ReferenceTexture,
};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn run(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    let t = Instant::now();
    let (passed, detail) = match f() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    Check {
        name,
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

pub fn run_checks() -> Vec<Check> {
    vec![
        run("uv step equals DDIM with implied noise", || {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let mut worst = 0f64;
            for _ in 0..10_000 {
                let ab = rng.random_range(1e-3..0.999);
                let ab_prev = rng.random_range(ab..1.0);
                let (z, x0) = (rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
                let d = kernel::uv_step(ab, ab_prev, z, x0)
                    - kernel::ddim(ab_prev, x0, kernel::implied_eps(ab, z, x0));
                worst = worst.max(d.abs());
            }
            Ok((worst < 1e-9, format!("max diff {worst:.2e}")))
        }),
        run("aggregation of equal values is exact", || {
            let vals = Grid::filled(3, 8, 8, 0.3712);
            let ps: Vec<_> = (0..5)
                .map(|v| PartialTexture {
                    values: vals.clone(),
                    weight: Grid::filled(1, 8, 8, 0.2 + 0.15 * v as f32),
                })
                .collect();
            let t = aggregate_views(&ps, &AggregationConfig::default(), 0, Execution::Sequential)?;
            Ok((t.values == vals, String::new()))
        }),
        run("reference fill keeps the earliest frame", || {
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let mut ok = true;
            for _ in 0..20 {
                let frames: Vec<LatentTexture> = (0..4)
                    .map(|k| {
                        let cov = Grid::from_fn(1, 6, 6, |_, _, _| rng.random_range(0..2) as f32);
                        let vals = Grid::from_fn(1, 6, 6, |_, _, _| rng.random_range(-1.0..1.0));
                        LatentTexture::new(vals, cov, k).expect("square")
                    })
                    .collect();
                let r = build_reference(&frames)?;
                for i in 0..36 {
                    let first = frames.iter().find(|f| f.coverage.data()[i] > 0.0);
                    let want = first.map(|f| f.values.data()[i]).unwrap_or(0.0);
                    ok &= r.values.data()[i] == want && (r.mask.data()[i] > 0.0) == first.is_some();
                }
            }
            Ok((ok, String::new()))
        }),
        run("blend and composite closed forms", || {
            let t = LatentTexture::fully_covered(Grid::filled(1, 2, 2, 1.25), 0)?;
            let r = ReferenceTexture {
                values: Grid::filled(1, 2, 2, -0.5),
                mask: Grid::filled(1, 2, 2, 1.0),
            };
            let one = Grid::filled(1, 2, 2, 1.0);
            let zero = Grid::filled(1, 2, 2, 0.0);
            let ok = blend_with_reference(&t, &r, &one, 0.0)?.values == t.values
                && blend_with_reference(&t, &r, &one, 1.0)?.values == r.values
                && blend_with_reference(&t, &r, &zero, 0.2)?.values == r.values
                && composite(&t.values, &r.values, &one)? == t.values
                && composite(&t.values, &r.values, &zero)? == r.values;
            Ok((ok, String::new()))
        }),
        run("constant field survives un-projection", || {
            let mesh = primitives::uv_sphere(0.6, 32, 16);
            let cam = Camera::new(
                Vec3::new(0.0, 0.3, 2.5),
                Vec3::zeros(),
                Vec3::y(),
                0.6,
                (64, 64),
            )?;
            let cfg = RasterConfig::default();
            let b = render_buffers(&mesh.frame(0), &cam, (64, 64), &cfg)?;
            let uv = UvRaster::build(&mesh, 64, cfg.execution);
            let vis = VisibilityMap::build(
                &mesh.frame(0),
                &b,
                &uv,
                1e-3 * mesh.aabb().diagonal(),
                cfg.execution,
            );
            let p = vis.unproject(&Grid::filled(2, 64, 64, 0.7), cfg.execution)?;
            let n = 64 * 64;
            let ok = (0..n)
                .filter(|&i| p.weight.data()[i] > 0.0)
                .all(|i| p.values.data()[i] == 0.7 && p.values.data()[n + i] == 0.7);
            Ok((
                ok && vis.visible_count() > 0,
                format!("{} visible texels", vis.visible_count()),
            ))
        }),
        run(
            "fixed seed reproduces bitwise across execution policies",
            || {
                let mesh = primitives::uv_sphere(0.6, 24, 12);
                let rig = CameraRig::new(vec![
                    Camera::new(
                        Vec3::new(0.0, 0.0, 2.5),
                        Vec3::zeros(),
                        Vec3::y(),
                        0.6,
                        (32, 32),
                    )?,
                    Camera::new(
                        Vec3::new(2.5, 0.0, 0.0),
                        Vec3::zeros(),
                        Vec3::y(),
                        0.6,
                        (32, 32),
                    )?,
                ])?;
                let target =
                    Grid::from_fn(3, 64, 64, |c, y, x| ((x + 2 * y + 5 * c) % 7) as f32 / 7.0);
                let mut outs = Vec::new();
                for exec in [
                    Execution::Sequential,
                    Execution::Parallel,
                    Execution::Parallel,
                ] {
                    let cfg = PipelineConfig {
                        steps: 5,
                        latent_resolution: 32,
                        uv_resolution: 64,
                        seed: 9,
                        execution: exec,
                        ..PipelineConfig::default()
                    };
                    let scene = Scene::prepare(&mesh, &rig, 32, 64, &cfg.raster())?;
                    let oracle = OracleDenoiser::from_buffers(
                        std::slice::from_ref(&target),
                        &scene.buffers,
                        exec,
                    )?;
                    let d: &dyn Denoiser = &oracle;
                    outs.push(generate(&mesh, &rig, &cfg, d)?.keyframes);
                }
                Ok((outs[0] == outs[1] && outs[1] == outs[2], String::new()))
            },
        ),
    ]
}
