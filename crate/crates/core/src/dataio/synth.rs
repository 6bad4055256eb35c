//! Synthetic multi-annotator nodules.
//!
//! A nodule is a union of one to three ellipses. Its HU profile ramps from
//! lung background (≈ −850) at the boundary to soft tissue (≈ 0) over a rim of
//! 2–4 px, optionally wrapped in a low-density ground-glass halo (≈ −600).
//! Each annotator dilates or erodes the boundary by up to 2 px and adds a
//! smooth angular jitter, so disagreement concentrates on low-density
//! boundary tissue.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::NoduleSample;
use crate::error::{invalid, Result};
use crate::maskops::{Grid, Mask, MAX_ANNOTATIONS, MIN_ANNOTATIONS};
use crate::metrics::squared_distance_transform;

/// Native side length of generated patches.
pub const SYNTH_PATCH: usize = 50;

const CORE_HU: f64 = 0.0;
const CORE_SD: f64 = 100.0;
const LUNG_HU: f64 = -850.0;
const LUNG_SD: f64 = 50.0;
const GGO_HU: f64 = -600.0;
const GGO_SD: f64 = 60.0;

struct Ellipse {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    angle: f64,
}

impl Ellipse {
    fn contains(&self, y: f64, x: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let dy = y - self.cy;
        let dx = x - self.cx;
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.rx).powi(2) + (v / self.ry).powi(2) <= 1.0
    }
}

/// Signed distance with the zero level between boundary pixels: positive
/// inside the mask, negative outside.
fn signed_distance(mask: &Mask) -> Vec<f64> {
    let inverted = Mask::from_fn(mask.height(), mask.width(), |y, x| mask.get(y, x) == 0);
    let to_outside = squared_distance_transform(&inverted);
    let to_inside = squared_distance_transform(mask);
    mask.data()
        .iter()
        .zip(to_outside.iter().zip(&to_inside))
        .map(|(&m, (&o, &i))| {
            if m != 0 {
                o.sqrt() - 0.5
            } else {
                -(i.sqrt() - 0.5)
            }
        })
        .collect()
}

/// Smooth periodic boundary perturbation as a function of polar angle.
struct AngularJitter {
    terms: Vec<(f64, f64, f64)>,
}

impl AngularJitter {
    fn sample(rng: &mut ChaCha8Rng, amplitude: f64) -> Self {
        let terms = (1..=3)
            .map(|freq| {
                (
                    freq as f64,
                    rng.random_range(0.0..2.0 * PI),
                    amplitude * rng.random_range(0.3..1.0) / freq as f64,
                )
            })
            .collect();
        Self { terms }
    }

    fn at(&self, angle: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(f, phase, amp)| amp * (f * angle + phase).sin())
            .sum()
    }
}

fn generate_one(rng: &mut ChaCha8Rng, sample_id: String, annotators: usize) -> Result<NoduleSample> {
    let n = SYNTH_PATCH;
    let centre = n as f64 / 2.0 - 0.5;
    let first = Ellipse {
        cy: centre + rng.random_range(-3.0..3.0),
        cx: centre + rng.random_range(-3.0..3.0),
        ry: rng.random_range(4.0..15.0),
        rx: rng.random_range(4.0..15.0),
        angle: rng.random_range(0.0..PI),
    };
    let mut ellipses = vec![first];
    let extra = rng.random_range(0..=2);
    for _ in 0..extra {
        let base = &ellipses[0];
        let reach = base.rx.min(base.ry);
        let theta = rng.random_range(0.0..2.0 * PI);
        let dist = rng.random_range(0.0..reach);
        ellipses.push(Ellipse {
            cy: base.cy + dist * theta.sin(),
            cx: base.cx + dist * theta.cos(),
            ry: rng.random_range(4.0..15.0f64).min(12.0),
            rx: rng.random_range(4.0..15.0f64).min(12.0),
            angle: rng.random_range(0.0..PI),
        });
    }
    let base = Mask::from_fn(n, n, |y, x| {
        ellipses.iter().any(|e| e.contains(y as f64, x as f64))
    });
    let sd = signed_distance(&base);

    let rim = rng.random_range(2.0..4.0);
    let ggo_width = if rng.random_bool(0.5) {
        rng.random_range(1.0..3.0)
    } else {
        0.0
    };

    let core = Normal::new(CORE_HU, CORE_SD).expect("valid normal");
    let lung = Normal::new(LUNG_HU, LUNG_SD).expect("valid normal");
    let ggo = Normal::new(GGO_HU, GGO_SD).expect("valid normal");
    let hu: Vec<f64> = sd
        .iter()
        .map(|&d| {
            let v = if d >= 0.0 {
                let t = (d / rim).clamp(0.0, 1.0);
                let c = core.sample(rng);
                let l = lung.sample(rng);
                l + t * (c - l)
            } else if -d <= ggo_width {
                ggo.sample(rng)
            } else {
                lung.sample(rng)
            };
            v.round().clamp(i16::MIN as f64, i16::MAX as f64)
        })
        .collect();

    let (cy, cx) = centroid(&base).unwrap_or((centre, centre));
    let mut masks = Vec::with_capacity(annotators);
    for _ in 0..annotators {
        let offset = rng.random_range(-2.0..=2.0);
        let jitter = AngularJitter::sample(rng, 0.75);
        let mask = Mask::from_fn(n, n, |y, x| {
            let angle = (y as f64 - cy).atan2(x as f64 - cx);
            sd[y * n + x] + offset + jitter.at(angle) > 0.0
        });
        masks.push(if mask.count() == 0 { base.clone() } else { mask });
    }
    NoduleSample::new(sample_id, Grid::new(n, n, hu)?, masks, None)
}

fn centroid(mask: &Mask) -> Option<(f64, f64)> {
    let (mut sy, mut sx, mut count) = (0.0, 0.0, 0usize);
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(y, x) != 0 {
                sy += y as f64;
                sx += x as f64;
                count += 1;
            }
        }
    }
    (count > 0).then(|| (sy / count as f64, sx / count as f64))
}

/// Generates `count` deterministic samples with `annotators` masks each.
pub fn synth_generate(count: usize, annotators: usize, seed: u64) -> Result<Vec<NoduleSample>> {
    if count == 0 {
        return Err(invalid!("synthetic sample count must be >= 1"));
    }
    if !(MIN_ANNOTATIONS..=MAX_ANNOTATIONS).contains(&annotators) {
        return Err(invalid!(
            "annotator count must be in [{MIN_ANNOTATIONS}, {MAX_ANNOTATIONS}], got {annotators}"
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| generate_one(&mut rng, format!("synth-{seed}-{i:04}"), annotators))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maskops::validate_annotation_set;

    #[test]
    fn same_seed_same_samples() {
        let a = synth_generate(6, 3, 11).unwrap();
        let b = synth_generate(6, 3, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synth_generate(6, 3, 12).unwrap());
    }

    #[test]
    fn annotation_sets_are_valid() {
        for s in synth_generate(40, 4, 5).unwrap() {
            assert!(validate_annotation_set(s.annotations.masks()).is_valid());
            assert_eq!(s.annotations.len(), 4);
            assert_eq!(s.hu_patch.shape(), (SYNTH_PATCH, SYNTH_PATCH));
            assert!(s.hu_patch.data.iter().all(|v| v.fract() == 0.0));
        }
    }

    #[test]
    fn lc_is_darker_than_hc() {
        let samples = synth_generate(100, 3, 2024).unwrap();
        let (mut lc_sum, mut lc_n, mut hc_sum, mut hc_n) = (0.0, 0usize, 0.0, 0usize);
        for s in &samples {
            let lc = s.annotations.lc_mask();
            let hc = s.annotations.intersection();
            for (i, &v) in s.hu_patch.data.iter().enumerate() {
                if lc.data()[i] != 0 {
                    lc_sum += v;
                    lc_n += 1;
                }
                if hc.data()[i] != 0 {
                    hc_sum += v;
                    hc_n += 1;
                }
            }
        }
        assert!(lc_n > 0 && hc_n > 0);
        let (lc_mean, hc_mean) = (lc_sum / lc_n as f64, hc_sum / hc_n as f64);
        assert!(lc_mean < hc_mean, "LC {lc_mean} vs HC {hc_mean}");
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(synth_generate(0, 3, 0).is_err());
        assert!(synth_generate(3, 5, 0).is_err());
        assert!(synth_generate(3, 1, 0).is_err());
    }
}
