//! Sample ingestion, HU normalization, resizing and fold assignment.

mod folds;
mod manifest;
mod resize;
mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::maskops::{self, AnnotationSet, Grid, Mask};
use crate::model::Tensor;

pub use folds::{split_folds, FoldSplit};
pub use manifest::{load_manifest, save_manifest, MANIFEST_FILE};
pub use resize::{resize_bilinear, resize_nearest};
pub use synth::{synth_generate, SYNTH_PATCH};

pub const HU_MIN: f64 = -1000.0;
pub const HU_MAX: f64 = 1000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoduleSample {
    pub sample_id: String,
    /// CT patch in Hounsfield units.
    pub hu_patch: Grid,
    pub annotations: AnnotationSet,
    pub fold: Option<usize>,
}

impl NoduleSample {
    pub fn new(
        sample_id: impl Into<String>,
        hu_patch: Grid,
        masks: Vec<Mask>,
        fold: Option<usize>,
    ) -> Result<Self> {
        let sample_id = sample_id.into();
        let annotations = AnnotationSet::new(sample_id.clone(), masks)?;
        if annotations.shape() != hu_patch.shape() {
            return Err(invalid!(
                "sample '{sample_id}': image {:?} and masks {:?} differ in shape",
                hu_patch.shape(),
                annotations.shape()
            ));
        }
        if hu_patch.data.iter().any(|v| !v.is_finite()) {
            return Err(invalid!("sample '{sample_id}': non-finite HU value"));
        }
        Ok(Self {
            sample_id,
            hu_patch,
            annotations,
            fold,
        })
    }
}

/// Network-ready sample: replicated grayscale image and resized targets.
#[derive(Clone, Debug, PartialEq)]
pub struct NetInput {
    pub sample_id: String,
    /// 3 × size × size, values in [0, 1].
    pub image: Tensor,
    pub union: Mask,
    pub intersection: Mask,
    pub annotations: Vec<Mask>,
}

/// Clips to [−1000, 1000] HU and maps linearly onto [0, 1].
pub fn normalize_hu(patch: &Grid) -> Result<Grid> {
    if let Some(v) = patch.data.iter().find(|v| !v.is_finite()) {
        return Err(invalid!("HU patch contains non-finite value {v}"));
    }
    Ok(Grid {
        height: patch.height,
        width: patch.width,
        data: patch
            .data
            .iter()
            .map(|&v| (v.clamp(HU_MIN, HU_MAX) - HU_MIN) / (HU_MAX - HU_MIN))
            .collect(),
    })
}

/// Resizes a sample to `size × size`: bilinear for the image (replicated to
/// three channels), nearest-neighbour for masks. Union and intersection are
/// recomputed from the resized annotations.
pub fn to_net_input(sample: &NoduleSample, size: usize) -> Result<NetInput> {
    if size == 0 {
        return Err(invalid!("network input size must be positive"));
    }
    let norm = normalize_hu(&sample.hu_patch)?;
    let resized = resize_bilinear(&norm, size, size);
    let plane = size * size;
    let mut image = Tensor::zeros(3, size, size);
    for c in 0..3 {
        image.data[c * plane..(c + 1) * plane].copy_from_slice(&resized.data);
    }
    let annotations: Vec<Mask> = sample
        .annotations
        .masks()
        .iter()
        .map(|m| resize_nearest(m, size, size))
        .collect();
    Ok(NetInput {
        sample_id: sample.sample_id.clone(),
        image,
        union: maskops::union(&annotations)?,
        intersection: maskops::intersection(&annotations)?,
        annotations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_with(hu: f64, mask_val: bool) -> NoduleSample {
        let m = Mask::from_fn(50, 50, |_, _| mask_val);
        NoduleSample::new("s", Grid::filled(50, 50, hu), vec![m.clone(), m], None).unwrap()
    }

    #[test]
    fn normalize_endpoints_and_clipping() {
        let g = Grid::new(1, 5, vec![-1000.0, 0.0, 1000.0, 1500.0, -2000.0]).unwrap();
        assert_eq!(normalize_hu(&g).unwrap().data, vec![0.0, 0.5, 1.0, 1.0, 0.0]);
        let bad = Grid::new(1, 1, vec![f64::NAN]).unwrap();
        assert!(normalize_hu(&bad).is_err());
    }

    #[test]
    fn normalize_is_monotone() {
        let vals: Vec<f64> = (-30..30).map(|i| i as f64 * 50.0).collect();
        let out = normalize_hu(&Grid::new(1, vals.len(), vals).unwrap()).unwrap();
        assert!(out.data.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn constant_image_stays_constant() {
        let input = to_net_input(&sample_with(0.0, true), 64).unwrap();
        assert_eq!(input.image.shape(), (3, 64, 64));
        assert!(input.image.data.iter().all(|&v| v == 0.5));
        assert!(input.union.data().iter().all(|&v| v == 1));
        assert_eq!(input.union.shape(), (64, 64));
    }

    #[test]
    fn resized_masks_stay_binary_and_sandwiched() {
        let a = Mask::from_fn(50, 50, |y, x| (y as i32 - 25).pow(2) + (x as i32 - 25).pow(2) < 100);
        let b = Mask::from_fn(50, 50, |y, x| (y as i32 - 23).pow(2) + (x as i32 - 26).pow(2) < 140);
        let s = NoduleSample::new("s", Grid::filled(50, 50, -800.0), vec![a, b], None).unwrap();
        let input = to_net_input(&s, 64).unwrap();
        for m in &input.annotations {
            assert!(m.is_binary());
            assert!(input.intersection.is_subset_of(m));
            assert!(m.is_subset_of(&input.union));
        }
    }

    #[test]
    fn sample_shape_mismatch_rejected() {
        let m = Mask::zeros(50, 50);
        assert!(NoduleSample::new("x", Grid::filled(40, 50, 0.0), vec![m.clone(), m], None).is_err());
    }
}
