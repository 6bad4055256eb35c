//! Binary mask algebra over annotation sets.
//!
//! For an annotation set `GT = {GT_j}` the union marks every pixel any expert
//! labelled, the intersection (high-confidence, HC) marks pixels all experts
//! agree on, and the low-confidence (LC) mask is their difference. A
//! multi-confidence mask folds a union field and an intersection field into a
//! single map with 1 on HC, 0.5 on LC and 0 on background.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Dense 2-D binary mask, row-major.
///
/// Values are expected to be 0 or 1. [`Mask::new`] enforces this;
/// [`Mask::from_raw`] does not, so that [`validate_annotation_set`] can
/// report on arbitrary input.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        let mask = Self::from_raw(height, width, data)?;
        if let Some(v) = mask.data.iter().find(|&&v| v > 1) {
            return Err(invalid!("mask value {v} is not binary"));
        }
        Ok(mask)
    }

    /// Builds a mask without checking binarity.
    pub fn from_raw(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(invalid!("mask dimensions must be positive, got {height}x{width}"));
        }
        if data.len() != height * width {
            return Err(invalid!(
                "mask buffer has {} elements, expected {height}x{width}",
                data.len()
            ));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(u8::from(f(y, x)));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    /// Thresholds a probability grid: 1 where `value >= threshold`.
    pub fn from_grid(grid: &Grid, threshold: f64) -> Self {
        Self {
            height: grid.height,
            width: grid.width,
            data: grid.data.iter().map(|&v| u8::from(v >= threshold)).collect(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, value: bool) {
        self.data[y * self.width + x] = u8::from(value);
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v <= 1)
    }

    /// Pixel-wise `self ⊆ other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.shape() == other.shape()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(&a, &b)| a == 0 || b != 0)
    }

    pub fn to_grid(&self) -> Grid {
        Grid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f64::from(v)).collect(),
        }
    }

    fn zip_with(&self, other: &Mask, f: impl Fn(u8, u8) -> bool) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| u8::from(f(a, b)))
                .collect(),
        }
    }

    pub fn or(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a != 0 || b != 0)
    }

    pub fn and(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a != 0 && b != 0)
    }

    /// Pixels set in `self` but not in `other`.
    pub fn and_not(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a != 0 && b == 0)
    }
}

/// Dense 2-D real-valued field, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(invalid!(
                "grid buffer of {} elements does not match {height}x{width}",
                data.len()
            ));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// The 2–4 expert masks for one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub sample_id: String,
    masks: Vec<Mask>,
}

impl AnnotationSet {
    pub fn new(sample_id: impl Into<String>, masks: Vec<Mask>) -> Result<Self> {
        let sample_id = sample_id.into();
        let report = validate_annotation_set(&masks);
        if !report.is_valid() {
            return Err(invalid!(
                "annotation set '{sample_id}': {}",
                report.violations.join("; ")
            ));
        }
        Ok(Self { sample_id, masks })
    }

    pub fn masks(&self) -> &[Mask] {
        &self.masks
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.masks[0].shape()
    }

    pub fn union(&self) -> Mask {
        union(&self.masks).expect("validated annotation set")
    }

    pub fn intersection(&self) -> Mask {
        intersection(&self.masks).expect("validated annotation set")
    }

    pub fn lc_mask(&self) -> Mask {
        lc_mask(&self.masks).expect("validated annotation set")
    }
}

/// Per-pixel confidence field with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiConfidenceMask {
    pub grid: Grid,
}

fn check_same_shape(masks: &[Mask]) -> Result<(usize, usize)> {
    let first = masks
        .first()
        .ok_or_else(|| invalid!("annotation set is empty"))?;
    for (j, m) in masks.iter().enumerate().skip(1) {
        if m.shape() != first.shape() {
            return Err(invalid!(
                "mask {j} has shape {:?}, mask 0 has {:?}",
                m.shape(),
                first.shape()
            ));
        }
    }
    Ok(first.shape())
}

pub fn union(masks: &[Mask]) -> Result<Mask> {
    check_same_shape(masks)?;
    Ok(masks[1..].iter().fold(masks[0].or(&masks[0]), |acc, m| acc.or(m)))
}

pub fn intersection(masks: &[Mask]) -> Result<Mask> {
    check_same_shape(masks)?;
    Ok(masks[1..]
        .iter()
        .fold(masks[0].and(&masks[0]), |acc, m| acc.and(m)))
}

/// Low-confidence region: union minus intersection.
pub fn lc_mask(masks: &[Mask]) -> Result<Mask> {
    Ok(union(masks)?.and_not(&intersection(masks)?))
}

/// Combines a union field and an intersection field as `(u + i) / 2`.
pub fn compose_mcm(union_field: &Grid, inter_field: &Grid) -> Result<MultiConfidenceMask> {
    if union_field.shape() != inter_field.shape() {
        return Err(invalid!(
            "union field {:?} and intersection field {:?} differ in shape",
            union_field.shape(),
            inter_field.shape()
        ));
    }
    let in_unit = |v: f64| (0.0..=1.0).contains(&v);
    if let Some(v) = union_field
        .data
        .iter()
        .chain(&inter_field.data)
        .find(|&&v| !in_unit(v))
    {
        return Err(invalid!("confidence value {v} outside [0, 1]"));
    }
    let data = union_field
        .data
        .iter()
        .zip(&inter_field.data)
        .map(|(&u, &i)| (u + i) / 2.0)
        .collect();
    Ok(MultiConfidenceMask {
        grid: Grid {
            height: union_field.height,
            width: union_field.width,
            data,
        },
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub mask_count: usize,
    pub shapes_consistent: bool,
    pub all_binary: bool,
    pub count_in_range: bool,
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub const MIN_ANNOTATIONS: usize = 2;
pub const MAX_ANNOTATIONS: usize = 4;

pub fn validate_annotation_set(masks: &[Mask]) -> ValidationReport {
    let mut violations = Vec::new();
    let count_in_range = (MIN_ANNOTATIONS..=MAX_ANNOTATIONS).contains(&masks.len());
    if masks.len() < MIN_ANNOTATIONS {
        violations.push(format!(
            "count < {MIN_ANNOTATIONS}: {} mask(s)",
            masks.len()
        ));
    } else if masks.len() > MAX_ANNOTATIONS {
        violations.push(format!(
            "count > {MAX_ANNOTATIONS}: {} masks",
            masks.len()
        ));
    }
    let shapes_consistent = masks.windows(2).all(|w| w[0].shape() == w[1].shape());
    if !shapes_consistent {
        violations.push("masks differ in shape".to_string());
    }
    let mut all_binary = true;
    for (j, m) in masks.iter().enumerate() {
        if let Some(v) = m.data().iter().find(|&&v| v > 1) {
            all_binary = false;
            violations.push(format!("mask {j} is non-binary (value {v})"));
        }
    }
    ValidationReport {
        mask_count: masks.len(),
        shapes_consistent,
        all_binary,
        count_in_range,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[u8]]) -> Mask {
        let h = rows.len();
        let w = rows[0].len();
        Mask::new(h, w, rows.concat()).unwrap()
    }

    #[test]
    fn union_is_elementwise_or() {
        let u = union(&[m(&[&[1, 0], &[0, 0]]), m(&[&[0, 1], &[0, 0]])]).unwrap();
        assert_eq!(u, m(&[&[1, 1], &[0, 0]]));
    }

    #[test]
    fn union_is_idempotent() {
        let a = m(&[&[1, 0, 1], &[0, 1, 1]]);
        assert_eq!(union(&[a.clone(), a.clone()]).unwrap(), a);
    }

    #[test]
    fn intersection_is_elementwise_and() {
        let i = intersection(&[m(&[&[1, 1], &[0, 0]]), m(&[&[0, 1], &[0, 0]])]).unwrap();
        assert_eq!(i, m(&[&[0, 1], &[0, 0]]));
    }

    #[test]
    fn all_ones_is_intersection_identity() {
        let a = m(&[&[1, 0, 1], &[0, 1, 1]]);
        let ones = Mask::from_fn(2, 3, |_, _| true);
        assert_eq!(intersection(&[a.clone(), ones]).unwrap(), a);
    }

    #[test]
    fn lc_is_set_difference() {
        let lc = lc_mask(&[m(&[&[1, 1], &[0, 0]]), m(&[&[0, 1], &[0, 0]])]).unwrap();
        assert_eq!(lc, m(&[&[1, 0], &[0, 0]]));
        let a = m(&[&[1, 0, 1], &[0, 1, 1]]);
        assert_eq!(lc_mask(&[a.clone(), a]).unwrap().count(), 0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = Mask::zeros(2, 2);
        let b = Mask::zeros(2, 3);
        assert!(union(&[a.clone(), b.clone()]).is_err());
        assert!(intersection(&[a.clone(), b.clone()]).is_err());
        assert!(lc_mask(&[a, b]).is_err());
        assert!(union(&[]).is_err());
    }

    #[test]
    fn compose_mcm_halves_the_sum() {
        let u = Grid::new(1, 2, vec![1.0, 1.0]).unwrap();
        let i = Grid::new(1, 2, vec![0.0, 1.0]).unwrap();
        assert_eq!(compose_mcm(&u, &i).unwrap().grid.data, vec![0.5, 1.0]);

        let z = Grid::filled(3, 3, 0.0);
        assert!(compose_mcm(&z, &z).unwrap().grid.data.iter().all(|&v| v == 0.0));

        let u = Grid::new(1, 1, vec![0.8]).unwrap();
        let i = Grid::new(1, 1, vec![0.4]).unwrap();
        assert!((compose_mcm(&u, &i).unwrap().grid.data[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn compose_mcm_rejects_out_of_range() {
        let u = Grid::new(1, 1, vec![1.2]).unwrap();
        let i = Grid::new(1, 1, vec![0.4]).unwrap();
        assert!(compose_mcm(&u, &i).is_err());
        let i = Grid::new(1, 2, vec![0.4, 0.1]).unwrap();
        assert!(compose_mcm(&Grid::filled(1, 1, 0.5), &i).is_err());
    }

    #[test]
    fn validation_reports_violations() {
        let a = Mask::zeros(64, 64);
        assert!(validate_annotation_set(&[a.clone(), a.clone()]).is_valid());

        let one = validate_annotation_set(std::slice::from_ref(&a));
        assert!(!one.count_in_range);
        assert!(one.violations[0].starts_with("count < 2"));

        let mut raw = vec![0u8; 4];
        raw[1] = 2;
        let bad = Mask::from_raw(2, 2, raw).unwrap();
        let report = validate_annotation_set(&[Mask::zeros(2, 2), bad]);
        assert!(!report.all_binary);
        assert!(report.violations.iter().any(|v| v.contains("non-binary")));

        let mixed = validate_annotation_set(&[Mask::zeros(2, 2), Mask::zeros(3, 2)]);
        assert!(!mixed.shapes_consistent);

        let five = vec![Mask::zeros(2, 2); 5];
        assert!(!validate_annotation_set(&five).is_valid());
    }

    #[test]
    fn mask_new_rejects_non_binary() {
        assert!(Mask::new(1, 2, vec![0, 7]).is_err());
        assert!(Mask::new(2, 2, vec![0, 1]).is_err());
    }
}
