use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::par::Execution;
use crate::raster::PartialTexture;

use super::{AggregationConfig, LatentTexture};

/// Aggregation weight of a view seeing a texel at cosine `cos`.
#[inline]
pub fn view_weight(cos: f64, cfg: &AggregationConfig) -> f64 {
    if cos <= 0.0 || cos < cfg.cos_min {
        0.0
    } else {
        cos.powf(cfg.cosine_exponent)
    }
}

const ROWS_PER_TASK: usize = 8;

/// Cosine-power weighted average of per-view partial textures.
///
/// Sums run over views in slice order for every texel, so the result does
/// not depend on the execution policy.
pub fn aggregate_views(
    partials: &[PartialTexture],
    cfg: &AggregationConfig,
    frame_index: usize,
    exec: Execution,
) -> Result<LatentTexture> {
    cfg.validate()?;
    let first = partials
        .first()
        .ok_or_else(|| Error::invalid("aggregation needs at least one view"))?;
    let (c, r, _) = first.values.shape();
    for p in partials {
        if p.values.shape() != (c, r, r) || p.weight.shape() != (1, r, r) {
            return Err(Error::ShapeMismatch {
                expected: format!("{c}x{r}x{r} values with 1x{r}x{r} weight"),
                found: format!(
                    "{:?} values with {:?} weight",
                    p.values.shape(),
                    p.weight.shape()
                ),
            });
        }
    }
    let n = r * r;
    // One row-major record per texel: coverage followed by C values.
    let mut packed = vec![0f32; n * (c + 1)];
    let task_len = ROWS_PER_TASK * r * (c + 1);
    exec.for_each_chunk(&mut packed, task_len, |task, out| {
        let base = task * ROWS_PER_TASK * r;
        let mut acc = vec![0f64; c];
        for (j, rec) in out.chunks_mut(c + 1).enumerate() {
            let i = base + j;
            acc.iter_mut().for_each(|a| *a = 0.0);
            let mut wsum = 0f64;
            for p in partials {
                let w = view_weight(p.weight.data()[i] as f64, cfg);
                if w == 0.0 {
                    continue;
                }
                wsum += w;
                for (ch, a) in acc.iter_mut().enumerate() {
                    *a += w * p.values.data()[ch * n + i] as f64;
                }
            }
            if wsum > 0.0 {
                rec[0] = wsum as f32;
                for ch in 0..c {
                    rec[ch + 1] = (acc[ch] / wsum) as f32;
                }
            }
        }
    });
    let values = Grid::from_fn(c, r, r, |ch, y, x| packed[(y * r + x) * (c + 1) + ch + 1]);
    let coverage = Grid::from_fn(1, r, r, |_, y, x| packed[(y * r + x) * (c + 1)]);
    LatentTexture::new(values, coverage, frame_index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn partial(values: Vec<f32>, weights: Vec<f32>, c: usize, r: usize) -> PartialTexture {
        PartialTexture {
            values: Grid::from_vec(c, r, r, values).unwrap(),
            weight: Grid::from_vec(1, r, r, weights).unwrap(),
        }
    }

    const ALPHA1: AggregationConfig = AggregationConfig {
        cosine_exponent: 1.0,
        cos_min: 0.0,
    };

    #[test]
    fn single_frontal_view_is_identity() {
        let p = partial(vec![0.1, -2.0, 3.5, 7.0], vec![1.0; 4], 1, 2);
        let t = aggregate_views(
            &[p.clone()],
            &AggregationConfig::default(),
            0,
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(t.values, p.values);
        assert_eq!(t.coverage.data(), &[1.0; 4]);
    }

    #[test]
    fn equal_weights_average() {
        let a = partial(vec![2.0], vec![0.7], 1, 1);
        let b = partial(vec![4.0], vec![0.7], 1, 1);
        let t = aggregate_views(
            &[a, b],
            &AggregationConfig::default(),
            0,
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(t.values.data(), &[3.0]);
    }

    #[test]
    fn cosine_weighted_average() {
        let a = partial(vec![2.0], vec![1.0], 1, 1);
        let b = partial(vec![4.0], vec![0.5], 1, 1);
        let t = aggregate_views(&[a, b], &ALPHA1, 0, Execution::Sequential).unwrap();
        assert_abs_diff_eq!(t.values.data()[0], 8.0 / 3.0, epsilon = 1e-4);
        assert_abs_diff_eq!(t.coverage.data()[0], 1.5, epsilon = 1e-7);
    }

    #[test]
    fn grazing_views_dropped() {
        let a = partial(vec![2.0, 5.0], vec![0.05], 2, 1);
        let t = aggregate_views(
            &[a],
            &AggregationConfig::default(),
            0,
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(t.values.data(), &[0.0, 0.0]);
        assert_eq!(t.coverage.data(), &[0.0]);
    }

    #[test]
    fn empty_and_mismatched_inputs_rejected() {
        assert!(matches!(
            aggregate_views(&[], &ALPHA1, 0, Execution::Sequential),
            Err(Error::InvalidArgument(_))
        ));
        let a = partial(vec![1.0], vec![1.0], 1, 1);
        let b = partial(vec![1.0; 4], vec![1.0; 4], 1, 2);
        assert!(matches!(
            aggregate_views(&[a, b], &ALPHA1, 0, Execution::Sequential),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    fn arb_partials() -> impl Strategy<Value = (usize, usize, Vec<PartialTexture>)> {
        (1usize..3, 1usize..5, 1usize..5).prop_flat_map(|(c, r, v)| {
            let n = r * r;
            (
                Just(c),
                Just(r),
                proptest::collection::vec(
                    (
                        proptest::collection::vec(-10.0f32..10.0, c * n),
                        proptest::collection::vec(0.0f32..1.0, n),
                    ),
                    v,
                ),
            )
                .prop_map(move |(c, r, vs)| {
                    let ps = vs.into_iter().map(|(x, w)| partial(x, w, c, r)).collect();
                    (c, r, ps)
                })
        })
    }

    proptest! {
        #[test]
        fn identical_values_returned_exactly((c, r, ps) in arb_partials(), x in -10.0f32..10.0) {
            let ps: Vec<_> = ps
                .into_iter()
                .map(|p| PartialTexture { values: Grid::filled(c, r, r, x), weight: p.weight })
                .collect();
            let t = aggregate_views(&ps, &ALPHA1, 0, Execution::Sequential).unwrap();
            for i in 0..r * r {
                if t.coverage.data()[i] > 0.0 {
                    for ch in 0..c {
                        prop_assert_eq!(t.values.data()[ch * r * r + i], x);
                    }
                }
            }
        }

        #[test]
        fn scale_equivariant((_c, _r, ps) in arb_partials(), s in -4.0f32..4.0) {
            let cfg = AggregationConfig::default();
            let scaled: Vec<_> = ps
                .iter()
                .map(|p| PartialTexture { values: p.values.map(|x| x * s as f64), weight: p.weight.clone() })
                .collect();
            let a = aggregate_views(&ps, &cfg, 0, Execution::Sequential).unwrap();
            let b = aggregate_views(&scaled, &cfg, 0, Execution::Sequential).unwrap();
            let expect = a.values.map(|x| x * s as f64);
            prop_assert!(b.values.max_abs_diff(&expect).unwrap() < 1e-4);
        }

        #[test]
        fn parallel_matches_sequential((_c, _r, ps) in arb_partials()) {
            let cfg = AggregationConfig::default();
            let a = aggregate_views(&ps, &cfg, 3, Execution::Sequential).unwrap();
            let b = aggregate_views(&ps, &cfg, 3, Execution::Parallel).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn zero_coverage_texels_untouched((_c, _r, ps) in arb_partials()) {
            let cfg = AggregationConfig { cosine_exponent: 2.0, cos_min: 0.5 };
            let t = aggregate_views(&ps, &cfg, 0, Execution::Sequential).unwrap();
            let n = t.coverage.data().len();
            for i in 0..n {
                if t.coverage.data()[i] == 0.0 {
                    for ch in 0..t.channels() {
                        prop_assert_eq!(t.values.data()[ch * n + i], 0.0);
                    }
                }
            }
        }
    }
}
