use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::schedule::{kernel, NoiseSchedule};

use super::{LatentTexture, ReferenceTexture, FILL_THRESHOLD};

fn same_shape(a: &LatentTexture, b: &LatentTexture) -> Result<()> {
    a.values.ensure_shape(&b.values)?;
    a.coverage.ensure_shape(&b.coverage)
}

/// UV-space DDIM step from `t` to `t - 1` driven by the baked clean estimate.
///
/// Texels covered in `x0_hat` step with the noise implied by `current` and
/// `x0_hat`; the rest carry `current` forward. The result takes `x0_hat`'s
/// coverage.
pub fn uv_ddim_step(
    current: &LatentTexture,
    x0_hat: &LatentTexture,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<LatentTexture> {
    same_shape(current, x0_hat)?;
    sched.check_t(t)?;
    let (ab, ab_prev) = (sched.alpha_bar(t), sched.alpha_bar(t - 1));
    if ab >= 1.0 {
        return Err(Error::DegenerateTimestep { t });
    }
    let n = current.coverage.data().len();
    let mut values = current.values.clone();
    for (j, v) in values.data_mut().iter_mut().enumerate() {
        if x0_hat.is_covered(j % n) {
            *v = kernel::uv_step(ab, ab_prev, *v as f64, x0_hat.values.data()[j] as f64) as f32;
        }
    }
    LatentTexture::new(values, x0_hat.coverage.clone(), current.frame_index)
}

/// Plain DDIM update in UV space from separately baked clean and noise
/// estimates. Texels uncovered in `x0_hat` carry `current` forward.
pub fn uv_ddim_from_eps(
    current: &LatentTexture,
    x0_hat: &LatentTexture,
    eps_hat: &LatentTexture,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<LatentTexture> {
    same_shape(current, x0_hat)?;
    same_shape(current, eps_hat)?;
    sched.check_t(t)?;
    let ab_prev = sched.alpha_bar(t - 1);
    let n = current.coverage.data().len();
    let mut values = current.values.clone();
    for (j, v) in values.data_mut().iter_mut().enumerate() {
        if x0_hat.is_covered(j % n) {
            *v = kernel::ddim(
                ab_prev,
                x0_hat.values.data()[j] as f64,
                eps_hat.values.data()[j] as f64,
            ) as f32;
        }
    }
    LatentTexture::new(values, x0_hat.coverage.clone(), current.frame_index)
}

/// Fills texels frame by frame: each texel takes its value from the first
/// frame (in slice order) that covers it.
pub fn build_reference(frames: &[LatentTexture]) -> Result<ReferenceTexture> {
    let first = frames
        .first()
        .ok_or_else(|| Error::invalid("reference needs at least one frame"))?;
    let (c, r, _) = first.values.shape();
    let n = r * r;
    let mut values = Grid::zeros(c, r, r);
    let mut mask = Grid::zeros(1, r, r);
    for f in frames {
        same_shape(first, f)?;
        for i in 0..n {
            if mask.data()[i] == 0.0 && f.coverage.data()[i] > FILL_THRESHOLD {
                mask.data_mut()[i] = 1.0;
                for ch in 0..c {
                    values.data_mut()[ch * n + i] = f.values.data()[ch * n + i];
                }
            }
        }
    }
    Ok(ReferenceTexture { values, mask })
}

/// `((1 - lambda) * tex + lambda * ref) * mask + ref * (1 - mask)`, where
/// `mask` (`1 x R x R`) is the frame's visibility indicator.
pub fn blend_with_reference(
    tex: &LatentTexture,
    reference: &ReferenceTexture,
    mask: &Grid,
    lambda: f64,
) -> Result<LatentTexture> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda {lambda} outside [0, 1]")));
    }
    tex.values.ensure_shape(&reference.values)?;
    tex.coverage.ensure_shape(mask)?;
    let n = mask.data().len();
    let mut values = tex.values.clone();
    for (j, v) in values.data_mut().iter_mut().enumerate() {
        let m = mask.data()[j % n] as f64;
        let r = reference.values.data()[j] as f64;
        *v = (((1.0 - lambda) * *v as f64 + lambda * r) * m + r * (1.0 - m)) as f32;
    }
    LatentTexture::new(values, tex.coverage.clone(), tex.frame_index)
}

/// `fg * mask + bg * (1 - mask)` with a single-channel mask broadcast over
/// channels.
pub fn composite(fg: &Grid, bg: &Grid, mask: &Grid) -> Result<Grid> {
    fg.ensure_shape(bg)?;
    let (_, h, w) = fg.shape();
    if mask.shape() != (1, h, w) {
        return Err(Error::ShapeMismatch {
            expected: format!("1x{h}x{w}"),
            found: format!("{:?}", mask.shape()),
        });
    }
    let n = h * w;
    let mut out = fg.clone();
    for (j, v) in out.data_mut().iter_mut().enumerate() {
        let m = mask.data()[j % n] as f64;
        *v = (*v as f64 * m + bg.data()[j] as f64 * (1.0 - m)) as f32;
    }
    Ok(out)
}
