use crate::maskops::{Grid, Mask};

/// Maps a destination index to a source coordinate with half-pixel centres.
fn source_coord(dst: usize, src_len: usize, dst_len: usize) -> f64 {
    (dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5
}

fn nearest_index(dst: usize, src_len: usize, dst_len: usize) -> usize {
    (((dst as f64 + 0.5) * src_len as f64 / dst_len as f64).floor() as usize).min(src_len - 1)
}

pub fn resize_bilinear(grid: &Grid, height: usize, width: usize) -> Grid {
    let taps = |dst_len: usize, src_len: usize| -> Vec<(usize, usize, f64)> {
        (0..dst_len)
            .map(|d| {
                let s = source_coord(d, src_len, dst_len).clamp(0.0, (src_len - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(src_len - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let ys = taps(height, grid.height);
    let xs = taps(width, grid.width);
    let lerp = |a: f64, b: f64, t: f64| a + t * (b - a);
    let mut data = Vec::with_capacity(height * width);
    for &(y0, y1, ty) in &ys {
        for &(x0, x1, tx) in &xs {
            let top = lerp(grid.get(y0, x0), grid.get(y0, x1), tx);
            let bottom = lerp(grid.get(y1, x0), grid.get(y1, x1), tx);
            data.push(lerp(top, bottom, ty));
        }
    }
    Grid {
        height,
        width,
        data,
    }
}

pub fn resize_nearest(mask: &Mask, height: usize, width: usize) -> Mask {
    let ys: Vec<usize> = (0..height)
        .map(|d| nearest_index(d, mask.height(), height))
        .collect();
    let xs: Vec<usize> = (0..width)
        .map(|d| nearest_index(d, mask.width(), width))
        .collect();
    Mask::from_fn(height, width, |y, x| mask.get(ys[y], xs[x]) != 0)
}
