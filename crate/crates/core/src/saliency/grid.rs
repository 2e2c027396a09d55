use super::{SaliencyError, SaliencyGrid, SaliencyMap, SaliencyMask};

/// Block-mean pooling of a pixel map onto a `rows x cols` patch grid.
pub fn pool_to_grid(map: &SaliencyMap, rows: usize, cols: usize) -> Result<SaliencyGrid, SaliencyError> {
    let (h, w) = map.dims();
    if rows == 0 || cols == 0 || h % rows != 0 || w % cols != 0 {
        return Err(SaliencyError::NotDivisible {
            height: h,
            width: w,
            rows,
            cols,
        });
    }
    let (bh, bw) = (h / rows, w / cols);
    let area = (bh * bw) as f64;
    let mut out = vec![0.0; rows * cols];
    for r in 0..h {
        for c in 0..w {
            out[(r / bh) * cols + c / bw] += map.get(r, c);
        }
    }
    for v in &mut out {
        *v /= area;
    }
    SaliencyGrid::new(rows, cols, out)
}

/// Keeps the `m` largest grid cells. Equal values are ranked by ascending
/// flat index.
pub fn top_m_mask(grid: &SaliencyGrid, m: usize) -> Result<SaliencyMask, SaliencyError> {
    let n = grid.len();
    if m == 0 || m > n {
        return Err(SaliencyError::KeepCount { m, n });
    }
    let v = grid.values();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    SaliencyMask::from_kept(n, &order[..m])
}
