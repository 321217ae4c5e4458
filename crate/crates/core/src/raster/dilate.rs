//! Gutter padding: grow covered texels outward into empty neighbors.

use crate::grid::Grid;

/// Fills empty texels that have at least one covered 8-neighbor with the
/// mean of those neighbors, `passes` times. Returns the indices filled, in
/// pass order.
pub fn dilate(values: &mut Grid, covered: &mut [bool], passes: usize) -> Vec<usize> {
    let (c, h, w) = values.shape();
    assert_eq!(covered.len(), h * w);
    let mut filled = Vec::new();
    for _ in 0..passes {
        let mut batch = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if covered[y * w + x] {
                    continue;
                }
                let mut nb = Vec::with_capacity(8);
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (yy, xx) = (y as i64 + dy, x as i64 + dx);
                        if (dy, dx) == (0, 0)
                            || yy < 0
                            || xx < 0
                            || yy >= h as i64
                            || xx >= w as i64
                        {
                            continue;
                        }
                        let j = yy as usize * w + xx as usize;
                        if covered[j] {
                            nb.push(j);
                        }
                    }
                }
                if !nb.is_empty() {
                    batch.push((y * w + x, nb));
                }
            }
        }
        if batch.is_empty() {
            break;
        }
        let n = h * w;
        let fills: Vec<(usize, Vec<f32>)> = batch
            .iter()
            .map(|(i, nb)| {
                let vals = (0..c)
                    .map(|ch| {
                        let s: f64 = nb.iter().map(|&j| values.data()[ch * n + j] as f64).sum();
                        (s / nb.len() as f64) as f32
                    })
                    .collect();
                (*i, vals)
            })
            .collect();
        for (i, vals) in fills {
            for (ch, v) in vals.into_iter().enumerate() {
                values.data_mut()[ch * n + i] = v;
            }
            covered[i] = true;
            filled.push(i);
        }
    }
    filled
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fills_ring_around_covered_block() {
        let mut g = Grid::zeros(1, 7, 7);
        let mut cov = vec![false; 49];
        g.set(0, 3, 3, 2.0);
        cov[3 * 7 + 3] = true;
        let filled = dilate(&mut g, &mut cov, 2);
        assert_eq!(filled.len(), 24);
        assert!(cov.iter().enumerate().all(|(i, &c)| c == {
            let (y, x) = (i / 7, i % 7);
            (1..=5).contains(&y) && (1..=5).contains(&x)
        }));
        assert_eq!(g.get(0, 1, 1), 2.0);
    }

    #[test]
    fn zero_passes_is_noop() {
        let mut g = Grid::filled(2, 3, 3, 1.0);
        let mut cov = vec![false; 9];
        cov[0] = true;
        assert!(dilate(&mut g, &mut cov, 0).is_empty());
    }
}
