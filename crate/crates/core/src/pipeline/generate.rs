use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::denoiser::{checked_denoise, derive_seed, DenoiseRequest, Denoiser};
use crate::error::{Error, Result, ResultExt};
use crate::grid::{load_grid, save_grid, Grid};
use crate::par::Execution;
use crate::schedule::{ddim_step, make_schedule, NoiseSchedule, PredictionKind};
use crate::uvdiff::{
    aggregate_views, blend_with_reference, build_reference, composite, uv_ddim_from_eps,
    uv_ddim_step, AggregationMode, LatentTexture, ReferenceTexture,
};

use super::{PipelineConfig, Scene};

const TAG_TEXTURE: u64 = 1;
const TAG_BACKGROUND: u64 = 2;

/// `C x H x W` standard normal samples from a seeded stream.
pub fn gaussian_grid(channels: usize, height: usize, width: usize, seed: u64) -> Grid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Grid::from_fn(channels, height, width, |_, _, _| {
        let x: f64 = StandardNormal.sample(&mut rng);
        x as f32
    })
}

/// Snapshot handed to a [`StepObserver`] after initialization and after
/// every denoising step.
#[derive(Debug, Clone, Copy)]
pub struct StepState<'a> {
    /// Timestep the textures are at: `T` after initialization, then `t - 1`
    /// after step `t`.
    pub timestep: usize,
    pub schedule: &'a NoiseSchedule,
    /// Per-frame UV latents.
    pub textures: &'a [LatentTexture],
    /// Baked clean estimates of the step just taken.
    pub x0_textures: Option<&'a [LatentTexture]>,
    pub reference: Option<&'a ReferenceTexture>,
    /// Composited view latents, `[view][frame]`.
    pub view_latents: &'a [Vec<Grid>],
    /// Background plates, `[view][frame]`.
    pub backgrounds: &'a [Vec<Grid>],
}

pub trait StepObserver {
    fn observe(&mut self, state: &StepState<'_>) -> Result<()>;
}

impl<F: FnMut(&StepState<'_>) -> Result<()>> StepObserver for F {
    fn observe(&mut self, state: &StepState<'_>) -> Result<()> {
        self(state)
    }
}

/// Ignores every step.
pub struct NoObserver;

impl StepObserver for NoObserver {
    fn observe(&mut self, _: &StepState<'_>) -> Result<()> {
        Ok(())
    }
}

/// Diffusion state at one timestep, sufficient to resume the run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub timestep: usize,
    pub textures: Vec<Grid>,
    /// `[view][frame]`.
    pub backgrounds: Vec<Vec<Grid>>,
}

fn step_dir(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("step_{t:04}"))
}

impl Checkpoint {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let d = step_dir(dir.as_ref(), self.timestep);
        std::fs::create_dir_all(&d)?;
        for (k, tex) in self.textures.iter().enumerate() {
            let mut meta = serde_json::Map::new();
            meta.insert("timestep".into(), self.timestep.into());
            meta.insert("frame".into(), k.into());
            save_grid(d.join(format!("texture_{k:04}.grid")), tex, meta)?;
        }
        for (v, per_frame) in self.backgrounds.iter().enumerate() {
            for (k, bg) in per_frame.iter().enumerate() {
                save_grid(
                    d.join(format!("background_{v:02}_{k:04}.grid")),
                    bg,
                    Default::default(),
                )?;
            }
        }
        Ok(())
    }

    pub fn load(
        dir: impl AsRef<Path>,
        timestep: usize,
        views: usize,
        frames: usize,
    ) -> Result<Self> {
        let d = step_dir(dir.as_ref(), timestep);
        let read = |name: String| load_grid(d.join(&name)).map(|(g, _)| g).context(|| name);
        let textures = (0..frames)
            .map(|k| read(format!("texture_{k:04}.grid")))
            .collect::<Result<Vec<_>>>()?;
        let backgrounds = (0..views)
            .map(|v| {
                (0..frames)
                    .map(|k| {
                        let name = format!("background_{v:02}_{k:04}.grid");
                        if d.join(&name).exists() {
                            read(name)
                        } else {
                            Ok(Grid::zeros(0, 0, 0))
                        }
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            timestep,
            textures,
            backgrounds,
        })
    }
}

/// Dumps every step's state under `dir/step_NNNN/`.
pub struct CheckpointWriter {
    pub dir: PathBuf,
}

impl StepObserver for CheckpointWriter {
    fn observe(&mut self, s: &StepState<'_>) -> Result<()> {
        Checkpoint {
            timestep: s.timestep,
            textures: s.textures.iter().map(|t| t.values.clone()).collect(),
            backgrounds: s.backgrounds.to_vec(),
        }
        .save(&self.dir)
    }
}

/// Wall-clock time spent in each phase.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Timings {
    pub prepare: Duration,
    pub init: Duration,
    pub denoise: Duration,
    pub bake: Duration,
    pub step: Duration,
    pub render: Duration,
    pub finalize: Duration,
    /// Duration of each denoising step, in execution order.
    pub per_step: Vec<Duration>,
}

impl Timings {
    pub fn total(&self) -> Duration {
        self.prepare + self.init + self.per_step.iter().sum::<Duration>() + self.finalize
    }
}

#[derive(Debug, Clone)]
pub struct DiffusionOutput {
    /// Per-frame UV latents at `t = 0`.
    pub textures: Vec<LatentTexture>,
    /// Final composited view latents, `[view][frame]`.
    pub view_latents: Vec<Vec<Grid>>,
    pub schedule: NoiseSchedule,
    pub timings: Timings,
}

struct Ctx<'a> {
    scene: &'a Scene,
    cfg: &'a PipelineConfig,
    sched: &'a NoiseSchedule,
    denoiser: &'a dyn Denoiser,
    kind: PredictionKind,
    /// Execution policy for fan-out over views.
    view_exec: Execution,
    exec: Execution,
}

struct Predictions {
    /// `[view][frame]`.
    x0: Vec<Vec<Grid>>,
    eps: Vec<Vec<Grid>>,
}

impl Ctx<'_> {
    fn views(&self) -> usize {
        self.scene.view_count()
    }
    fn frames(&self) -> usize {
        self.scene.frame_count()
    }

    fn denoise(&self, t: usize, latents: &[Vec<Grid>], background: bool) -> Result<Predictions> {
        let res = self.scene.latent_resolution;
        let far = Grid::filled(1, res, res, f32::INFINITY);
        let per_view = self.view_exec.try_map(self.views(), |v| {
            let depths = (0..self.frames())
                .map(|k| {
                    if background {
                        far.clone()
                    } else {
                        self.scene.depth(v, k).clone()
                    }
                })
                .collect();
            let req = DenoiseRequest {
                view_id: v,
                timestep: t,
                train_timestep: self.sched.train_timestep(t),
                latents: latents[v].clone(),
                depths,
                prompt: self.cfg.prompt.clone(),
                guidance: self.cfg.guidance.clone(),
                background,
            };
            let what = if background {
                "background"
            } else {
                "foreground"
            };
            let resp = checked_denoise(self.denoiser, &req, self.kind)
                .context(|| format!("step {t}, view {v}, {what} denoise"))?;
            let mut x0 = Vec::with_capacity(self.frames());
            let mut eps = Vec::with_capacity(self.frames());
            for (z, p) in latents[v].iter().zip(resp.frames) {
                let pred = crate::schedule::Prediction {
                    kind: self.kind,
                    tensor: p,
                };
                x0.push(pred.to_x0(z, t, self.sched)?);
                eps.push(pred.to_eps(z, t, self.sched)?);
            }
            Ok::<_, Error>((x0, eps))
        })?;
        let (x0, eps) = per_view.into_iter().unzip();
        Ok(Predictions { x0, eps })
    }

    /// Un-projects `[view][frame]` images and aggregates them per frame.
    fn bake(&self, images: &[Vec<Grid>]) -> Result<Vec<LatentTexture>> {
        let (vn, kn) = (self.views(), self.frames());
        let mut partials = self
            .exec
            .try_map(vn * kn, |i| {
                let (k, v) = (i / vn, i % vn);
                self.scene.unproject(&images[v][k], v, k)
            })?
            .into_iter();
        (0..kn)
            .map(|k| {
                let ps: Vec<_> = partials.by_ref().take(vn).collect();
                aggregate_views(&ps, &self.cfg.aggregation, k, self.exec)
            })
            .collect()
    }

    /// Renders every frame's texture into every view and composites it over
    /// the background plates.
    fn render(
        &self,
        textures: &[LatentTexture],
        backgrounds: &[Vec<Grid>],
    ) -> Result<Vec<Vec<Grid>>> {
        let (vn, kn) = (self.views(), self.frames());
        let mut flat = self
            .exec
            .try_map(vn * kn, |i| {
                let (v, k) = (i / kn, i % kn);
                let fg = self.scene.render(&textures[k].values, v, k)?;
                let bg = &backgrounds[v][k];
                if bg.channels() == 0 {
                    let zero = Grid::zeros(fg.channels(), fg.height(), fg.width());
                    composite(&fg, &zero, self.scene.mask(v, k))
                } else {
                    composite(&fg, bg, self.scene.mask(v, k))
                }
            })?
            .into_iter();
        Ok((0..vn).map(|_| flat.by_ref().take(kn).collect()).collect())
    }
}

/// Runs the synchronized denoising loop from pure noise (or from `resume`)
/// down to `t = 0`.
pub fn run_diffusion(
    scene: &Scene,
    cfg: &PipelineConfig,
    denoiser: &dyn Denoiser,
    observer: &mut dyn StepObserver,
    resume: Option<Checkpoint>,
) -> Result<DiffusionOutput> {
    cfg.validate()?;
    let sched = make_schedule(cfg.steps, cfg.schedule, cfg.schedule_params)?;
    let hs = denoiser.handshake()?;
    let channels = hs.channels.unwrap_or(cfg.channels);
    let exec = cfg.execution;
    let ctx = Ctx {
        scene,
        cfg,
        sched: &sched,
        denoiser,
        kind: hs.kind,
        view_exec: if hs.concurrent {
            exec
        } else {
            Execution::Sequential
        },
        exec,
    };
    let (vn, kn) = (scene.view_count(), scene.frame_count());
    let (r, res) = (scene.uv_resolution(), scene.latent_resolution);
    let mut timings = Timings::default();

    let init = Instant::now();
    let (start, mut textures, mut backgrounds) = match resume {
        Some(ck) => {
            if ck.timestep > sched.steps() || ck.textures.len() != kn {
                return Err(Error::invalid(format!(
                    "checkpoint at t = {} with {} frames does not fit this run",
                    ck.timestep,
                    ck.textures.len()
                )));
            }
            let textures = ck
                .textures
                .into_iter()
                .enumerate()
                .map(|(k, g)| {
                    if g.shape() != (channels, r, r) {
                        return Err(Error::shape((channels, r, r), g.shape()));
                    }
                    LatentTexture::new(g, Grid::zeros(1, r, r), k)
                })
                .collect::<Result<Vec<_>>>()?;
            (ck.timestep, textures, ck.backgrounds)
        }
        None => {
            let textures = (0..kn)
                .map(|k| LatentTexture {
                    values: gaussian_grid(
                        channels,
                        r,
                        r,
                        derive_seed(cfg.seed, &[TAG_TEXTURE, k as u64]),
                    ),
                    coverage: Grid::zeros(1, r, r),
                    frame_index: k,
                })
                .collect::<Vec<_>>();
            let backgrounds = (0..vn)
                .map(|v| {
                    (0..kn)
                        .map(|k| {
                            if cfg.background {
                                gaussian_grid(
                                    channels,
                                    res,
                                    res,
                                    derive_seed(cfg.seed, &[TAG_BACKGROUND, v as u64, k as u64]),
                                )
                            } else {
                                Grid::zeros(0, 0, 0)
                            }
                        })
                        .collect()
                })
                .collect::<Vec<Vec<Grid>>>();
            (sched.steps(), textures, backgrounds)
        }
    };
    let mut latents = ctx.render(&textures, &backgrounds)?;
    timings.init = init.elapsed();
    observer.observe(&StepState {
        timestep: start,
        schedule: &sched,
        textures: &textures,
        x0_textures: None,
        reference: None,
        view_latents: &latents,
        backgrounds: &backgrounds,
    })?;

    for t in (1..=start).rev() {
        let step_start = Instant::now();
        log::debug!("step {t}");

        let clock = Instant::now();
        if cfg.background {
            let bp = ctx.denoise(t, &backgrounds, true)?;
            backgrounds = bp
                .x0
                .iter()
                .zip(&bp.eps)
                .map(|(xs, es)| {
                    xs.iter()
                        .zip(es)
                        .map(|(x, e)| ddim_step(x, e, t, &sched))
                        .collect()
                })
                .collect::<Result<Vec<Vec<_>>>>()?;
        }
        let fg = ctx.denoise(t, &latents, false)?;
        timings.denoise += clock.elapsed();

        let clock = Instant::now();
        let x0_hat = ctx.bake(&fg.x0)?;
        let eps_hat = match cfg.mode {
            AggregationMode::AggX0Eps => Some(ctx.bake(&fg.eps)?),
            _ => None,
        };
        let zprev_hat = match cfg.mode {
            AggregationMode::AggZprev => {
                let stepped = fg
                    .x0
                    .iter()
                    .zip(&fg.eps)
                    .map(|(xs, es)| {
                        xs.iter()
                            .zip(es)
                            .map(|(x, e)| ddim_step(x, e, t, &sched))
                            .collect()
                    })
                    .collect::<Result<Vec<Vec<_>>>>()?;
                Some(ctx.bake(&stepped)?)
            }
            _ => None,
        };
        let reference = build_reference(&x0_hat)?;
        timings.bake += clock.elapsed();

        let clock = Instant::now();
        textures = exec.try_map(kn, |k| {
            let cur = &textures[k];
            let stepped = match cfg.mode {
                AggregationMode::Proposed => uv_ddim_step(cur, &x0_hat[k], t, &sched)?,
                AggregationMode::AggX0Eps => uv_ddim_from_eps(
                    cur,
                    &x0_hat[k],
                    &eps_hat.as_ref().expect("baked")[k],
                    t,
                    &sched,
                )?,
                AggregationMode::AggZprev => {
                    let z = &zprev_hat.as_ref().expect("baked")[k];
                    carry_uncovered(z, cur)?
                }
            };
            blend_with_reference(
                &stepped,
                &reference,
                &x0_hat[k].visibility_mask(),
                cfg.lambda,
            )
            .context(|| format!("step {t}, frame {k}"))
        })?;
        timings.step += clock.elapsed();

        let clock = Instant::now();
        latents = ctx.render(&textures, &backgrounds)?;
        timings.render += clock.elapsed();
        timings.per_step.push(step_start.elapsed());

        observer.observe(&StepState {
            timestep: t - 1,
            schedule: &sched,
            textures: &textures,
            x0_textures: Some(&x0_hat),
            reference: Some(&reference),
            view_latents: &latents,
            backgrounds: &backgrounds,
        })?;
    }

    Ok(DiffusionOutput {
        textures,
        view_latents: latents,
        schedule: sched,
        timings,
    })
}

/// Takes `baked` where it is covered and `current` elsewhere.
fn carry_uncovered(baked: &LatentTexture, current: &LatentTexture) -> Result<LatentTexture> {
    baked.values.ensure_shape(&current.values)?;
    let n = baked.coverage.data().len();
    let mut values = current.values.clone();
    for (j, v) in values.data_mut().iter_mut().enumerate() {
        if baked.is_covered(j % n) {
            *v = baked.values.data()[j];
        }
    }
    LatentTexture::new(values, baked.coverage.clone(), current.frame_index)
}
