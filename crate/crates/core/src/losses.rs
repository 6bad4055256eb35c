//! Binary cross-entropy, the multi-confidence mask loss, the annotation fusion
//! loss and the weighted total objective.

use serde::{Deserialize, Serialize};

use crate::dataio::NetInput;
use crate::error::{invalid, Error, Result};
use crate::maskops::{Grid, Mask};
use crate::model::{Graph, Tape, Var};

/// Prediction clamp for the logarithms.
pub const BCE_EPS: f64 = 1e-7;

pub fn bce_clamped_pred(p: f64) -> f64 {
    p.clamp(BCE_EPS, 1.0 - BCE_EPS)
}

/// Pixel-mean cross-entropy of clamped predictions against targets in {0, 1}.
pub fn bce_slice(pred: &[f64], target: &[f64]) -> f64 {
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let p = bce_clamped_pred(p);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    sum / pred.len() as f64
}

fn check_shape(pred: &Grid, target: &Mask) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(invalid!(
            "prediction {:?} and target {:?} differ in shape",
            pred.shape(),
            target.shape()
        ));
    }
    Ok(())
}

pub fn bce(pred: &Grid, target: &Mask) -> Result<f64> {
    check_shape(pred, target)?;
    if pred.data.is_empty() {
        return Err(invalid!("cross-entropy of an empty grid"));
    }
    Ok(bce_slice(&pred.data, &target.to_grid().data))
}

/// `bce(∪(X), ∪(GT)) + bce(∩(X), ∩(GT))`.
pub fn mcm_loss(union_pred: &Grid, inter_pred: &Grid, union_gt: &Mask, inter_gt: &Mask) -> Result<f64> {
    Ok(bce(union_pred, union_gt)? + bce(inter_pred, inter_gt)?)
}

/// How per-annotation cross-entropies are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionReduction {
    #[default]
    Mean,
    Sum,
}

impl FusionReduction {
    fn coefficient(self, count: usize) -> f64 {
        match self {
            FusionReduction::Mean => 1.0 / count as f64,
            FusionReduction::Sum => 1.0,
        }
    }
}

/// Cross-entropy of one prediction against every annotation, combined per `reduction`.
pub fn fusion_loss(pred: &Grid, annotations: &[Mask], reduction: FusionReduction) -> Result<f64> {
    if annotations.is_empty() {
        return Err(invalid!("fusion loss needs at least one annotation"));
    }
    let mut total = 0.0;
    for m in annotations {
        total += bce(pred, m)?;
    }
    Ok(total * reduction.coefficient(annotations.len()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha1: 0.5,
            alpha2: 0.5,
            alpha3: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(alpha1: f64, alpha2: f64, alpha3: f64) -> Result<Self> {
        let w = Self { alpha1, alpha2, alpha3 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let a = [self.alpha1, self.alpha2, self.alpha3];
        if a.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config(format!(
                "loss.weights alpha1..alpha3 must be finite and non-negative, got {a:?}"
            )));
        }
        if a.iter().all(|&v| v == 0.0) {
            return Err(Error::Config("loss.weights must not all be zero".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_mcm: f64,
    pub phi_a: f64,
    pub phi_b: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// `step l_mcm phi_a phi_b total`, whitespace separated.
    pub fn log_line(&self, step: usize) -> String {
        format!(
            "{step} {:.9} {:.9} {:.9} {:.9}",
            self.l_mcm, self.phi_a, self.phi_b, self.total
        )
    }
}

pub fn total_loss(l_mcm: f64, phi_a: f64, phi_b: f64, weights: &LossWeights) -> Result<LossBreakdown> {
    weights.validate()?;
    for (v, name) in [(l_mcm, "l_mcm"), (phi_a, "phi_a"), (phi_b, "phi_b")] {
        if !v.is_finite() {
            return Err(Error::NumericFault(format!("loss component {name} is {v}")));
        }
    }
    Ok(LossBreakdown {
        l_mcm,
        phi_a,
        phi_b,
        total: weights.alpha1 * l_mcm + weights.alpha2 * phi_a + weights.alpha3 * phi_b,
    })
}

/// Objective settings: weights, fusion targets and the single-label fallback.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub weights: LossWeights,
    pub fusion_reduction: FusionReduction,
    /// Fuse all annotations for `Φa`; otherwise use `annotation_index` only.
    pub fusion_phi_a: bool,
    /// Fuse all annotations for `Φb`; otherwise use `annotation_index` only.
    pub fusion_phi_b: bool,
    pub annotation_index: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            fusion_reduction: FusionReduction::Mean,
            fusion_phi_a: true,
            fusion_phi_b: true,
            annotation_index: 0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()
    }

    fn targets<'a>(&self, fuse: bool, annotations: &'a [Mask]) -> Result<&'a [Mask]> {
        if fuse {
            return Ok(annotations);
        }
        let i = self.annotation_index;
        if i >= annotations.len() {
            return Err(invalid!(
                "annotation index {i} out of range for {} annotations",
                annotations.len()
            ));
        }
        Ok(&annotations[i..=i])
    }

    /// Loss on plain grids, mirroring the differentiable objective.
    pub fn evaluate(
        &self,
        union_pred: Option<&Grid>,
        inter_pred: Option<&Grid>,
        x_uni: Option<&Grid>,
        x_s: &Grid,
        input: &NetInput,
    ) -> Result<LossBreakdown> {
        let r = self.fusion_reduction;
        let (l_mcm, phi_a) = match (union_pred, inter_pred, x_uni) {
            (Some(u), Some(i), Some(x)) => (
                mcm_loss(u, i, &input.union, &input.intersection)?,
                fusion_loss(x, self.targets(self.fusion_phi_a, &input.annotations)?, r)?,
            ),
            _ => (0.0, 0.0),
        };
        let phi_b = fusion_loss(x_s, self.targets(self.fusion_phi_b, &input.annotations)?, r)?;
        let weights = if union_pred.is_some() {
            self.weights
        } else {
            LossWeights { alpha1: 0.0, alpha2: 0.0, ..self.weights }
        };
        total_loss(l_mcm, phi_a, phi_b, &weights)
    }
}

pub(crate) struct LossVars {
    pub total: Var,
    pub breakdown: LossBreakdown,
}

fn fusion_var(t: &mut Tape, pred: Var, masks: &[Mask], reduction: FusionReduction) -> Result<Var> {
    let n = t.value(pred).plane();
    let c = reduction.coefficient(masks.len());
    let mut terms = Vec::with_capacity(masks.len());
    for m in masks {
        if m.height() * m.width() != n {
            return Err(invalid!("annotation size {:?} does not match the prediction", m.shape()));
        }
        terms.push((t.bce(pred, m.to_grid().data), c));
    }
    Ok(t.lin_comb(&terms))
}

fn head_fault(value: f64, head: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NumericFault(format!("non-finite loss from the {head} output")))
    }
}

/// Records the weighted objective for one sample on `t`.
pub(crate) fn loss_graph(t: &mut Tape, g: &Graph, input: &NetInput, cfg: &LossConfig) -> Result<LossVars> {
    cfg.validate()?;
    let r = cfg.fusion_reduction;
    let w = cfg.weights;
    let phi_b = fusion_var(t, g.x_s, cfg.targets(cfg.fusion_phi_b, &input.annotations)?, r)?;
    head_fault(t.value(phi_b).item(), "X_S")?;
    let Some(u) = &g.uam else {
        let breakdown = total_loss(0.0, 0.0, t.value(phi_b).item(), &LossWeights { alpha1: 0.0, alpha2: 0.0, ..w })?;
        let total = t.lin_comb(&[(phi_b, w.alpha3)]);
        return Ok(LossVars { total, breakdown });
    };
    let lu = t.bce(u.union, input.union.to_grid().data);
    let li = t.bce(u.inter, input.intersection.to_grid().data);
    let l_mcm = t.lin_comb(&[(lu, 1.0), (li, 1.0)]);
    head_fault(t.value(lu).item(), "union")?;
    head_fault(t.value(li).item(), "intersection")?;
    let phi_a = fusion_var(t, u.x_uni, cfg.targets(cfg.fusion_phi_a, &input.annotations)?, r)?;
    head_fault(t.value(phi_a).item(), "X_Uni")?;
    let breakdown = total_loss(
        t.value(l_mcm).item(),
        t.value(phi_a).item(),
        t.value(phi_b).item(),
        &w,
    )?;
    let total = t.lin_comb(&[(l_mcm, w.alpha1), (phi_a, w.alpha2), (phi_b, w.alpha3)]);
    Ok(LossVars { total, breakdown })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(v: &[f64]) -> Grid {
        Grid::new(1, v.len(), v.to_vec()).unwrap()
    }

    fn mask(v: &[u8]) -> Mask {
        Mask::new(1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn bce_reference_values() {
        let t = mask(&[1, 0, 1, 0]);
        let perfect = bce(&grid(&[1.0, 0.0, 1.0, 0.0]), &t).unwrap();
        assert!((perfect - -(1.0 - BCE_EPS).ln()).abs() < 1e-15);
        assert!((perfect - 1e-7).abs() < 1e-12);
        let half = bce(&grid(&[0.5; 4]), &t).unwrap();
        assert!((half - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce(&grid(&[0.5; 3]), &t).is_err());
    }

    #[test]
    fn mcm_loss_is_sum_of_terms() {
        let u = mask(&[1, 1, 0]);
        let i = mask(&[1, 0, 0]);
        let half = grid(&[0.5; 3]);
        let l = mcm_loss(&half, &half, &u, &i).unwrap();
        assert!((l - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
        let pu = grid(&[0.9, 0.3, 0.2]);
        let pi = grid(&[0.7, 0.1, 0.4]);
        let l = mcm_loss(&pu, &pi, &u, &i).unwrap();
        assert_eq!(l, bce(&pu, &u).unwrap() + bce(&pi, &i).unwrap());
    }

    #[test]
    fn fusion_loss_properties() {
        let a = mask(&[1, 1, 0, 0]);
        let b = mask(&[1, 0, 0, 1]);
        let p = grid(&[0.8, 0.6, 0.1, 0.3]);
        let same = fusion_loss(&p, &[a.clone(), a.clone(), a.clone()], FusionReduction::Mean).unwrap();
        assert!((same - bce(&p, &a).unwrap()).abs() < 1e-15);
        let ab = fusion_loss(&p, &[a.clone(), b.clone()], FusionReduction::Mean).unwrap();
        let ba = fusion_loss(&p, &[b.clone(), a.clone()], FusionReduction::Mean).unwrap();
        assert_eq!(ab, ba);
        let sum = fusion_loss(&p, &[a.clone(), b.clone()], FusionReduction::Sum).unwrap();
        assert!((sum - 2.0 * ab).abs() < 1e-15);
        let half = fusion_loss(&grid(&[0.5; 4]), &[a, b], FusionReduction::Mean).unwrap();
        assert!((half - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(fusion_loss(&p, &[], FusionReduction::Mean).is_err());
    }

    #[test]
    fn total_loss_weighting() {
        let b = total_loss(2.0, 1.0, 0.5, &LossWeights::default()).unwrap();
        assert_eq!(b.total, 2.0);
        let only_b = total_loss(2.0, 1.0, 0.5, &LossWeights::new(0.0, 0.0, 1.0).unwrap()).unwrap();
        assert_eq!(only_b.total, 0.5);
        assert!(LossWeights::new(0.0, 0.0, 0.0).is_err());
        assert!(matches!(
            total_loss(f64::NAN, 1.0, 1.0, &LossWeights::default()),
            Err(Error::NumericFault(_))
        ));
    }

    #[test]
    fn log_line_fields() {
        let b = total_loss(2.0, 1.0, 0.5, &LossWeights::default()).unwrap();
        let line = b.log_line(7);
        let fields: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(fields.len(), 5);
        assert_eq!(fields[0], "7");
        assert_eq!(fields[4].parse::<f64>().unwrap(), 2.0);
    }
}
