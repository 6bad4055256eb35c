//! Overlap and surface metrics, HU density estimation, paired testing.

mod kde;
mod stats;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::maskops::Mask;

pub use kde::{kde, silverman_bandwidth, trapezoid, KdeCurve};
pub use stats::{paired_t_test, PairedTestResult};

/// Default NSD tolerance in pixels.
pub const DEFAULT_NSD_TOLERANCE: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub sample_id: String,
    pub dsc: f64,
    pub iou: f64,
    pub nsd: f64,
}

impl MetricsRecord {
    pub fn compute(
        sample_id: impl Into<String>,
        pred: &Mask,
        gt: &Mask,
        nsd_tolerance: f64,
    ) -> Result<Self> {
        Ok(Self {
            sample_id: sample_id.into(),
            dsc: dsc(pred, gt)?,
            iou: iou(pred, gt)?,
            nsd: nsd(pred, gt, nsd_tolerance)?,
        })
    }
}

fn check_pair(pred: &Mask, gt: &Mask) -> Result<()> {
    if pred.shape() != gt.shape() {
        return Err(invalid!(
            "prediction {:?} and ground truth {:?} differ in shape",
            pred.shape(),
            gt.shape()
        ));
    }
    Ok(())
}

/// Returns (|P∩G|, |P|, |G|).
fn overlap_counts(pred: &Mask, gt: &Mask) -> (usize, usize, usize) {
    pred.data()
        .iter()
        .zip(gt.data())
        .fold((0, 0, 0), |(i, p, g), (&a, &b)| {
            let a = usize::from(a != 0);
            let b = usize::from(b != 0);
            (i + a * b, p + a, g + b)
        })
}

/// Dice similarity coefficient `2|P∩G| / (|P|+|G|)`; 1 when both masks are empty.
pub fn dsc(pred: &Mask, gt: &Mask) -> Result<f64> {
    check_pair(pred, gt)?;
    let (inter, p, g) = overlap_counts(pred, gt);
    if p + g == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (p + g) as f64)
}

/// Intersection over union; 1 when both masks are empty.
pub fn iou(pred: &Mask, gt: &Mask) -> Result<f64> {
    check_pair(pred, gt)?;
    let (inter, p, g) = overlap_counts(pred, gt);
    let uni = p + g - inter;
    if uni == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / uni as f64)
}

/// Foreground pixels with at least one 4-connected background or off-grid neighbour.
pub fn boundary(mask: &Mask) -> Mask {
    let (h, w) = mask.shape();
    Mask::from_fn(h, w, |y, x| {
        if mask.get(y, x) == 0 {
            return false;
        }
        y == 0
            || x == 0
            || y + 1 == h
            || x + 1 == w
            || mask.get(y - 1, x) == 0
            || mask.get(y + 1, x) == 0
            || mask.get(y, x - 1) == 0
            || mask.get(y, x + 1) == 0
    })
}

/// Normalized surface dice with a Euclidean tolerance in pixels.
pub fn nsd(pred: &Mask, gt: &Mask, tolerance: f64) -> Result<f64> {
    check_pair(pred, gt)?;
    if tolerance.is_nan() || tolerance < 0.0 || !tolerance.is_finite() {
        return Err(invalid!("NSD tolerance must be finite and >= 0, got {tolerance}"));
    }
    let bp = boundary(pred);
    let bg = boundary(gt);
    let (np, ng) = (bp.count(), bg.count());
    if np + ng == 0 {
        return Ok(1.0);
    }
    let tol2 = tolerance * tolerance;
    let within = |from: &Mask, to: &Mask| -> usize {
        if to.count() == 0 {
            return 0;
        }
        let dist2 = squared_distance_transform(to);
        from.data()
            .iter()
            .zip(&dist2)
            .filter(|(&b, &d)| b != 0 && d <= tol2)
            .count()
    };
    let hits = within(&bp, &bg) + within(&bg, &bp);
    Ok(hits as f64 / (np + ng) as f64)
}

/// Exact squared Euclidean distance from every pixel to the nearest set pixel
/// of `mask` (separable lower-envelope algorithm). Pixels are infinitely far
/// when the mask is empty.
pub fn squared_distance_transform(mask: &Mask) -> Vec<f64> {
    let (h, w) = mask.shape();
    let mut grid: Vec<f64> = mask
        .data()
        .iter()
        .map(|&v| if v != 0 { 0.0 } else { f64::INFINITY })
        .collect();
    let mut line = vec![0.0; h.max(w)];
    let mut out = vec![0.0; h.max(w)];
    for x in 0..w {
        for y in 0..h {
            line[y] = grid[y * w + x];
        }
        edt_1d(&line[..h], &mut out[..h]);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        line[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        edt_1d(&line[..w], &mut out[..w]);
        grid[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    grid
}

fn edt_1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    let mut started = false;
    for q in 0..n {
        if f[q].is_infinite() {
            continue;
        }
        if !started {
            v[0] = q;
            z[0] = f64::NEG_INFINITY;
            z[1] = f64::INFINITY;
            started = true;
            continue;
        }
        let qf = q as f64;
        loop {
            let p = v[k];
            let pf = p as f64;
            let s = ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf);
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0: the new parabola dominates everything to the left.
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    if !started {
        d.iter_mut().for_each(|x| *x = f64::INFINITY);
        return;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        *out = (qf - p) * (qf - p) + f[v[k]];
    }
}

/// Writes `sample_id,dsc,iou,nsd` rows with a header line.
pub fn write_metrics_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    std::fs::write(path, metrics_csv(records)).map_err(|e| Error::io(path, e))
}

pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from("sample_id,dsc,iou,nsd\n");
    for r in records {
        let _ = writeln!(out, "{},{},{},{}", r.sample_id, r.dsc, r.iou, r.nsd);
    }
    out
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}
