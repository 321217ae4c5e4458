use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use uvsync::denoiser::OracleDenoiser;
use uvsync::geometry::{default_rig, primitives, Camera, Vec3};
use uvsync::grid::Grid;
use uvsync::par::Execution;
use uvsync::pipeline::{
    generate_in_scene, GenerateOptions, IdentityDecoder, NoObserver, PipelineConfig, Scene,
};
use uvsync::raster::{render_buffers, PartialTexture, RasterConfig};
use uvsync::uvdiff::{aggregate_views, AggregationConfig};

const POLICIES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn target(r: usize) -> Grid {
    Grid::from_fn(3, r, r, |c, y, x| {
        ((x as f32 * 0.05 + c as f32).sin() * (y as f32 * 0.03).cos()) * 0.4 + 0.5
    })
}

fn rasterize(c: &mut Criterion) {
    let mesh = primitives::uv_sphere(0.6, 64, 32);
    let cam = Camera::new(
        Vec3::new(0.0, 0.4, 2.5),
        Vec3::zeros(),
        Vec3::y(),
        0.55,
        (192, 192),
    )
    .unwrap();
    let mut g = c.benchmark_group("render_buffers_192");
    for (name, exec) in POLICIES {
        let cfg = RasterConfig {
            execution: exec,
            ..RasterConfig::default()
        };
        g.bench_function(name, |b| {
            b.iter(|| black_box(render_buffers(&mesh.frame(0), &cam, (192, 192), &cfg).unwrap()))
        });
    }
    g.finish();
}

fn scene_prepare(c: &mut Criterion) {
    let mesh = primitives::uv_sphere(0.6, 48, 24);
    let rig = default_rig(2.5, 6, true).unwrap();
    let mut g = c.benchmark_group("scene_prepare_7x96_uv256");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        let cfg = RasterConfig {
            execution: exec,
            ..RasterConfig::default()
        };
        g.bench_function(name, |b| {
            b.iter(|| black_box(Scene::prepare(&mesh, &rig, 96, 256, &cfg).unwrap()))
        });
    }
    g.finish();
}

fn aggregate(c: &mut Criterion) {
    let r = 512;
    let partials: Vec<PartialTexture> = (0..7)
        .map(|v| PartialTexture {
            values: target(r).map(|x| x + v as f64 * 0.01),
            weight: Grid::from_fn(1, r, r, |_, y, x| {
                (((x + y * 3 + v * 17) % 11) as f32) / 10.0
            }),
        })
        .collect();
    let cfg = AggregationConfig::default();
    let mut g = c.benchmark_group("aggregate_7_views_512");
    for (name, exec) in POLICIES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(aggregate_views(&partials, &cfg, 0, exec).unwrap()))
        });
    }
    g.finish();
}

fn pipeline_steps(c: &mut Criterion) {
    let mesh = primitives::uv_sphere(0.6, 32, 16);
    let rig = default_rig(2.5, 6, true).unwrap();
    let mut g = c.benchmark_group("pipeline_3_steps_7x64_uv128");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        let cfg = PipelineConfig {
            steps: 3,
            latent_resolution: 64,
            uv_resolution: 128,
            execution: exec,
            ..PipelineConfig::default()
        };
        let scene = Scene::prepare(&mesh, &rig, 64, 128, &cfg.raster()).unwrap();
        let oracle = OracleDenoiser::from_buffers(&[target(128)], &scene.buffers, exec).unwrap();
        g.bench_function(name, |b| {
            b.iter(|| {
                let opts = GenerateOptions {
                    observer: &mut NoObserver,
                    decoder: &IdentityDecoder,
                    resume: None,
                };
                black_box(generate_in_scene(&scene, &cfg, &oracle, opts).unwrap())
            })
        });
    }
    g.finish();
}

criterion_group!(benches, rasterize, scene_prepare, aggregate, pipeline_steps);
criterion_main!(benches);
