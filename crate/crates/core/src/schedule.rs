//! Noise schedule and single-latent DDIM arithmetic.
//!
//! `alpha_bar[t]` is the cumulative signal coefficient at timestep `t`, with
//! `alpha_bar[0] = 1` so the last step lands on the clean sample. All
//! arithmetic is carried out in `f64`; grids store `f32`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    #[default]
    LinearBeta,
    Cosine,
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear-beta" => Ok(Self::LinearBeta),
            "cosine" => Ok(Self::Cosine),
            other => Err(Error::invalid(format!("unknown schedule kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleParams {
    /// Length of the virtual training schedule that `linear-beta` subsamples.
    pub train_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    /// Offset `s` of the cosine schedule.
    pub cosine_s: f64,
    /// Upper clip on per-step beta for the cosine schedule.
    pub max_beta: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            train_steps: 1000,
            beta_start: 8.5e-4,
            beta_end: 0.012,
            cosine_s: 0.008,
            max_beta: 0.999,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    steps: usize,
    kind: ScheduleKind,
    params: ScheduleParams,
    alpha_bar: Vec<f64>,
}

pub fn make_schedule(
    steps: usize,
    kind: ScheduleKind,
    params: ScheduleParams,
) -> Result<NoiseSchedule> {
    if steps < 1 {
        return Err(Error::invalid("schedule needs at least one step"));
    }
    let mut alpha_bar = Vec::with_capacity(steps + 1);
    alpha_bar.push(1.0);
    match kind {
        ScheduleKind::LinearBeta => {
            let n = params.train_steps;
            if n < steps {
                return Err(Error::invalid(format!(
                    "{steps} steps exceed the {n}-step training schedule"
                )));
            }
            if !(0.0 < params.beta_start
                && params.beta_start <= params.beta_end
                && params.beta_end < 1.0)
            {
                return Err(Error::invalid(
                    "beta range must satisfy 0 < start <= end < 1",
                ));
            }
            let mut cum = Vec::with_capacity(n);
            let mut acc = 1.0;
            for i in 0..n {
                let frac = if n > 1 {
                    i as f64 / (n - 1) as f64
                } else {
                    0.0
                };
                acc *= 1.0 - (params.beta_start + frac * (params.beta_end - params.beta_start));
                cum.push(acc);
            }
            for t in 1..=steps {
                alpha_bar.push(cum[train_index(t, steps, n)]);
            }
        }
        ScheduleKind::Cosine => {
            let s = params.cosine_s;
            if s < 0.0 || !(0.0..1.0).contains(&params.max_beta) {
                return Err(Error::invalid(
                    "cosine schedule needs s >= 0 and max_beta in [0, 1)",
                ));
            }
            let f = |t: usize| {
                let x =
                    ((t as f64 / steps as f64 + s) / (1.0 + s) * std::f64::consts::FRAC_PI_2).cos();
                x * x
            };
            let f0 = f(0);
            for t in 1..=steps {
                let prev = alpha_bar[t - 1];
                let raw = f(t) / f0;
                let beta = (1.0 - raw / prev).min(params.max_beta);
                let next = if beta < params.max_beta {
                    raw
                } else {
                    prev * (1.0 - beta)
                };
                alpha_bar.push(next);
            }
        }
    }
    let sched = NoiseSchedule {
        steps,
        kind,
        params,
        alpha_bar,
    };
    sched.validate()?;
    Ok(sched)
}

/// Index into the training schedule used by sampling step `t`.
fn train_index(t: usize, steps: usize, train_steps: usize) -> usize {
    (t * train_steps).div_ceil(steps) - 1
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        make_schedule(50, ScheduleKind::default(), ScheduleParams::default())
            .expect("default schedule")
    }
}

impl NoiseSchedule {
    /// Builds a schedule from an explicit `alpha_bar` table.
    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self> {
        let sched = Self {
            steps: alpha_bar.len().saturating_sub(1),
            kind: ScheduleKind::default(),
            params: ScheduleParams::default(),
            alpha_bar,
        };
        sched.validate()?;
        Ok(sched)
    }

    fn validate(&self) -> Result<()> {
        let ab = &self.alpha_bar;
        if self.steps < 1 || ab.len() != self.steps + 1 {
            return Err(Error::invalid(format!(
                "alpha_bar has {} entries for {} steps",
                ab.len(),
                self.steps
            )));
        }
        if ab[0] != 1.0 {
            return Err(Error::invalid("alpha_bar[0] must be exactly 1"));
        }
        for t in 1..ab.len() {
            if !(ab[t] > 0.0 && ab[t] < ab[t - 1]) {
                return Err(Error::invalid(format!(
                    "alpha_bar must be strictly decreasing in (0, 1]; fails at t = {t}"
                )));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }
    pub fn params(&self) -> &ScheduleParams {
        &self.params
    }
    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    /// The training-schedule timestep a backend should be conditioned on.
    pub fn train_timestep(&self, t: usize) -> usize {
        match self.kind {
            ScheduleKind::LinearBeta if t > 0 => {
                train_index(t, self.steps, self.params.train_steps)
            }
            _ => t,
        }
    }

    /// Noise standard deviation `sqrt(1 - alpha_bar[t])`.
    pub fn sigma(&self, t: usize) -> f64 {
        (1.0 - self.alpha_bar[t]).sqrt()
    }

    pub(crate) fn check_t(&self, t: usize) -> Result<()> {
        if t < 1 || t > self.steps {
            return Err(Error::invalid(format!(
                "timestep {t} outside [1, {}]",
                self.steps
            )));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Scalar kernels. Each takes the relevant `alpha_bar` values directly.
pub mod kernel {
    #[inline]
    pub fn x0_from_eps(ab: f64, z: f64, eps: f64) -> f64 {
        (z - (1.0 - ab).sqrt() * eps) / ab.sqrt()
    }

    #[inline]
    pub fn x0_from_v(ab: f64, z: f64, v: f64) -> f64 {
        ab.sqrt() * z - (1.0 - ab).sqrt() * v
    }

    #[inline]
    pub fn eps_from_v(ab: f64, z: f64, v: f64) -> f64 {
        ab.sqrt() * v + (1.0 - ab).sqrt() * z
    }

    #[inline]
    pub fn eps_from_x0(ab: f64, z: f64, x0: f64) -> f64 {
        (z - ab.sqrt() * x0) / (1.0 - ab).sqrt()
    }

    #[inline]
    pub fn ddim(ab_prev: f64, x0: f64, eps: f64) -> f64 {
        ab_prev.sqrt() * x0 + (1.0 - ab_prev).sqrt() * eps
    }

    /// Noise implied by a latent and its clean estimate, written as the
    /// combination of the v-form terms.
    #[inline]
    pub fn implied_eps(ab: f64, z: f64, x0: f64) -> f64 {
        (ab / (1.0 - ab)).sqrt() * (ab.sqrt() * z - x0) + (1.0 - ab).sqrt() * z
    }

    /// One UV-space step from `z` at `ab` to `ab_prev` given the clean estimate.
    #[inline]
    pub fn uv_step(ab: f64, ab_prev: f64, z: f64, x0: f64) -> f64 {
        ab_prev.sqrt() * x0
            + (1.0 - ab_prev).sqrt()
                * ((ab / (1.0 - ab)).sqrt() * (ab.sqrt() * z - x0) + (1.0 - ab).sqrt() * z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionKind {
    Epsilon,
    V,
    X0,
}

impl std::str::FromStr for PredictionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epsilon" | "eps" => Ok(Self::Epsilon),
            "v" => Ok(Self::V),
            "x0" => Ok(Self::X0),
            other => Err(Error::invalid(format!("unknown prediction kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for PredictionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Epsilon => "epsilon",
            Self::V => "v",
            Self::X0 => "x0",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub kind: PredictionKind,
    pub tensor: Grid,
}

fn binary(a: &Grid, b: &Grid, f: impl Fn(f64, f64) -> f64) -> Result<Grid> {
    a.zip_map(b, f)
}

pub fn x0_from_eps(z: &Grid, eps: &Grid, t: usize, sched: &NoiseSchedule) -> Result<Grid> {
    sched.check_t(t)?;
    let ab = sched.alpha_bar(t);
    binary(z, eps, |z, e| kernel::x0_from_eps(ab, z, e))
}

pub fn x0_from_v(z: &Grid, v: &Grid, t: usize, sched: &NoiseSchedule) -> Result<Grid> {
    sched.check_t(t)?;
    let ab = sched.alpha_bar(t);
    binary(z, v, |z, v| kernel::x0_from_v(ab, z, v))
}

pub fn eps_from_v(z: &Grid, v: &Grid, t: usize, sched: &NoiseSchedule) -> Result<Grid> {
    sched.check_t(t)?;
    let ab = sched.alpha_bar(t);
    binary(z, v, |z, v| kernel::eps_from_v(ab, z, v))
}

/// Deterministic DDIM update from timestep `t` to `t - 1`.
pub fn ddim_step(x0: &Grid, eps: &Grid, t: usize, sched: &NoiseSchedule) -> Result<Grid> {
    sched.check_t(t)?;
    let ab_prev = sched.alpha_bar(t - 1);
    binary(x0, eps, |x, e| kernel::ddim(ab_prev, x, e))
}

pub fn implied_eps(z: &Grid, x0: &Grid, t: usize, sched: &NoiseSchedule) -> Result<Grid> {
    sched.check_t(t)?;
    let ab = sched.alpha_bar(t);
    if ab >= 1.0 {
        return Err(Error::DegenerateTimestep { t });
    }
    binary(z, x0, |z, x| kernel::implied_eps(ab, z, x))
}

impl Prediction {
    /// Converts the prediction to a clean-sample estimate for latent `z` at `t`.
    pub fn to_x0(&self, z: &Grid, t: usize, sched: &NoiseSchedule) -> Result<Grid> {
        match self.kind {
            PredictionKind::X0 => {
                z.ensure_shape(&self.tensor)?;
                Ok(self.tensor.clone())
            }
            PredictionKind::Epsilon => x0_from_eps(z, &self.tensor, t, sched),
            PredictionKind::V => x0_from_v(z, &self.tensor, t, sched),
        }
    }

    /// Converts the prediction to a noise estimate for latent `z` at `t`.
    pub fn to_eps(&self, z: &Grid, t: usize, sched: &NoiseSchedule) -> Result<Grid> {
        match self.kind {
            PredictionKind::Epsilon => {
                z.ensure_shape(&self.tensor)?;
                Ok(self.tensor.clone())
            }
            PredictionKind::X0 => implied_eps(z, &self.tensor, t, sched),
            PredictionKind::V => eps_from_v(z, &self.tensor, t, sched),
        }
    }
}
