//! Fixed feature-aware filters: an oriented Gabor bank and Otsu thresholding.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaborConfig {
    pub orientations: usize,
    /// Sinusoid wavelength in pixels.
    pub wavelength: f64,
    /// Gaussian envelope standard deviation in pixels.
    pub sigma: f64,
    /// Spatial aspect ratio of the envelope.
    pub aspect: f64,
    pub phase: f64,
    /// Odd kernel side length.
    pub kernel_size: usize,
}

impl Default for GaborConfig {
    fn default() -> Self {
        Self {
            orientations: 4,
            wavelength: 4.0,
            sigma: 2.0,
            aspect: 0.5,
            phase: 0.0,
            kernel_size: 7,
        }
    }
}

impl GaborConfig {
    pub fn validate(&self) -> Result<()> {
        if self.orientations == 0 {
            return Err(invalid!("gabor.orientations must be >= 1"));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(invalid!("gabor.kernel_size must be odd, got {}", self.kernel_size));
        }
        if !(self.wavelength > 0.0 && self.sigma > 0.0 && self.aspect > 0.0) {
            return Err(invalid!("gabor wavelength, sigma and aspect must be positive"));
        }
        Ok(())
    }

    /// Orientation of bank member `o`, evenly spaced over [0, π).
    pub fn orientation(&self, o: usize) -> f64 {
        std::f64::consts::PI * o as f64 / self.orientations as f64
    }

    /// Row-major `kernel_size²` taps for orientation `theta`; `x` runs along
    /// columns, `y` along rows.
    pub fn kernel(&self, theta: f64) -> Vec<f64> {
        let half = (self.kernel_size / 2) as isize;
        let (s, c) = theta.sin_cos();
        let mut taps = Vec::with_capacity(self.kernel_size * self.kernel_size);
        for yi in -half..=half {
            for xi in -half..=half {
                let (x, y) = (xi as f64, yi as f64);
                let xr = x * c + y * s;
                let yr = -x * s + y * c;
                let envelope = (-(xr * xr + self.aspect * self.aspect * yr * yr)
                    / (2.0 * self.sigma * self.sigma))
                    .exp();
                let carrier = (2.0 * std::f64::consts::PI * xr / self.wavelength + self.phase).cos();
                taps.push(envelope * carrier);
            }
        }
        taps
    }

    /// Bank response averaged over orientations; equal to filtering with the
    /// mean kernel.
    pub fn mean_kernel(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.kernel_size * self.kernel_size];
        for o in 0..self.orientations {
            for (a, k) in acc.iter_mut().zip(self.kernel(self.orientation(o))) {
                *a += k;
            }
        }
        let n = self.orientations as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}

/// Same-size depthwise filtering of every `height × width` plane in `data`
/// with replicate padding.
pub fn depthwise_replicate(data: &[f64], height: usize, width: usize, kernel: &[f64], ksize: usize) -> Vec<f64> {
    let plane = height * width;
    let half = (ksize / 2) as isize;
    let mut out = vec![0.0; data.len()];
    for (src, dst) in data.chunks_exact(plane).zip(out.chunks_exact_mut(plane)) {
        for y in 0..height {
            for x in 0..width {
                let mut acc = 0.0;
                for ky in 0..ksize {
                    let sy = (y as isize + ky as isize - half).clamp(0, height as isize - 1) as usize;
                    for kx in 0..ksize {
                        let sx = (x as isize + kx as isize - half).clamp(0, width as isize - 1) as usize;
                        acc += kernel[ky * ksize + kx] * src[sy * width + sx];
                    }
                }
                dst[y * width + x] = acc;
            }
        }
    }
    out
}

/// Adjoint of [`depthwise_replicate`].
pub(crate) fn depthwise_replicate_adjoint(
    grad_out: &[f64],
    height: usize,
    width: usize,
    kernel: &[f64],
    ksize: usize,
    grad_in: &mut [f64],
) {
    let plane = height * width;
    let half = (ksize / 2) as isize;
    for (go, gi) in grad_out.chunks_exact(plane).zip(grad_in.chunks_exact_mut(plane)) {
        for y in 0..height {
            for x in 0..width {
                let g = go[y * width + x];
                if g == 0.0 {
                    continue;
                }
                for ky in 0..ksize {
                    let sy = (y as isize + ky as isize - half).clamp(0, height as isize - 1) as usize;
                    for kx in 0..ksize {
                        let sx = (x as isize + kx as isize - half).clamp(0, width as isize - 1) as usize;
                        gi[sy * width + sx] += kernel[ky * ksize + kx] * g;
                    }
                }
            }
        }
    }
}

/// Histogram bin of `v` for `bins` equal bins over `[lo, hi]`.
pub fn histogram_bin(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    (((v - lo) / (hi - lo) * bins as f64).floor() as usize).min(bins - 1)
}

/// Otsu threshold over a `bins`-bin histogram spanning `[min, max]`.
///
/// Candidate thresholds are the interior bin edges `min + k (max − min) / bins`
/// for `k = 1..bins`; the lower class holds bins `< k`. The between-class
/// variance `ω₀ ω₁ (μ₀ − μ₁)²` is compared exactly in integer arithmetic over
/// bin indices, and the lowest maximising edge wins. Constant input returns
/// its value.
pub fn otsu_threshold(values: &[f64], bins: usize) -> Result<f64> {
    if values.is_empty() {
        return Err(invalid!("Otsu threshold of an empty array"));
    }
    if bins < 2 {
        return Err(invalid!("Otsu needs at least 2 bins, got {bins}"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid!("Otsu input contains non-finite values"));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok(lo);
    }
    let mut hist = vec![0u64; bins];
    for &v in values {
        hist[histogram_bin(v, lo, hi, bins)] += 1;
    }
    let total_n = values.len() as u64;
    let total_s: u64 = hist.iter().enumerate().map(|(b, &h)| b as u64 * h).sum();
    let (mut n0, mut s0) = (0u64, 0u64);
    let mut best: Option<(usize, BetweenClass)> = None;
    for k in 1..bins {
        n0 += hist[k - 1];
        s0 += (k as u64 - 1) * hist[k - 1];
        let score = BetweenClass::new(n0, s0, total_n - n0, total_s - s0);
        if best.as_ref().is_none_or(|(_, b)| score.greater_than(b)) {
            best = Some((k, score));
        }
    }
    let (k, _) = best.expect("bins >= 2");
    Ok(lo + k as f64 * (hi - lo) / bins as f64)
}

/// Between-class variance up to the constant factor `1 / N²`, held as the
/// exact ratio `(s₀ n₁ − s₁ n₀)² / (n₀ n₁)` over bin indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BetweenClass {
    num: u128,
    den: u128,
}

impl BetweenClass {
    pub fn new(n0: u64, s0: u64, n1: u64, s1: u64) -> Self {
        if n0 == 0 || n1 == 0 {
            return Self { num: 0, den: 1 };
        }
        let diff = (s0 as i128 * n1 as i128 - s1 as i128 * n0 as i128).unsigned_abs();
        Self {
            num: diff * diff,
            den: n0 as u128 * n1 as u128,
        }
    }

    pub fn greater_than(&self, other: &Self) -> bool {
        match (
            self.num.checked_mul(other.den),
            other.num.checked_mul(self.den),
        ) {
            (Some(a), Some(b)) => a > b,
            _ => self.value() > other.value(),
        }
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_groups_take_lowest_edge() {
        let v = [0.0, 0.0, 0.0, 0.0, 10.0, 10.0, 10.0, 10.0];
        let t = otsu_threshold(&v, 256).unwrap();
        assert_eq!(t, 10.0 / 256.0);
        assert!(t > 0.0 && t <= 10.0);
    }

    #[test]
    fn constant_returns_value() {
        assert_eq!(otsu_threshold(&[3.5; 9], 256).unwrap(), 3.5);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(otsu_threshold(&[], 256).is_err());
        assert!(otsu_threshold(&[1.0, 2.0], 1).is_err());
        assert!(otsu_threshold(&[1.0, f64::NAN], 4).is_err());
    }

    #[test]
    fn separates_bimodal_data() {
        let mut v: Vec<f64> = (0..50).map(|i| i as f64 * 0.01).collect();
        v.extend((0..50).map(|i| 5.0 + i as f64 * 0.01));
        let t = otsu_threshold(&v, 64).unwrap();
        assert!(t > 0.49 && t <= 5.0, "{t}");
    }

    #[test]
    fn mean_kernel_is_orientation_average() {
        let g = GaborConfig::default();
        let mean = g.mean_kernel();
        let k0 = g.kernel(0.0);
        assert_eq!(mean.len(), 49);
        // centre tap: envelope 1, carrier cos(0) = 1 for every orientation
        assert!((mean[24] - 1.0).abs() < 1e-15);
        assert!((k0[24] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn replicate_padding_preserves_constants() {
        let g = GaborConfig::default();
        let kernel = g.mean_kernel();
        let sum: f64 = kernel.iter().sum();
        let out = depthwise_replicate(&[2.0; 2 * 9 * 11], 9, 11, &kernel, 7);
        assert!(out.iter().all(|v| (v - 2.0 * sum).abs() < 1e-12));
    }

    #[test]
    fn adjoint_identity() {
        let (h, w) = (6, 5);
        let kernel = GaborConfig::default().kernel(0.7);
        let x: Vec<f64> = (0..h * w).map(|i| (i as f64 * 0.3).sin()).collect();
        let y: Vec<f64> = (0..h * w).map(|i| (i as f64 * 0.17).cos()).collect();
        let ax = depthwise_replicate(&x, h, w, &kernel, 7);
        let mut aty = vec![0.0; h * w];
        depthwise_replicate_adjoint(&y, h, w, &kernel, 7, &mut aty);
        let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
