use std::path::Path;

use serde::{Deserialize, Serialize};

use super::predict;
use crate::dataio::{FoldSplit, NoduleSample};
use crate::error::{invalid, Error, Result};
use crate::maskops::Mask;
use crate::metrics::{kde, mean, KdeCurve};
use crate::model::NetState;

/// Grid size of every HU density curve.
pub const HU_KDE_POINTS: usize = 512;

/// Where predicted regions come from.
#[derive(Clone, Copy, Debug)]
pub enum HuSource<'a> {
    /// Predictions equal the ground truth.
    Oracle,
    /// `∩(X) ≥ 0.5` is the predicted HC region and `∪(X) ≥ 0.5` minus it the LC region.
    Model(&'a NetState),
    /// Each sample is predicted by the model that held its fold out.
    Folds {
        split: &'a FoldSplit,
        models: &'a [NetState],
    },
}

/// HU values pooled over one region across the corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    pub name: String,
    pub count: usize,
    /// `None` when the region is empty across the corpus.
    pub mean_hu: Option<f64>,
    /// `None` when the region has fewer than two values or no spread.
    pub curve: Option<KdeCurve>,
}

impl RegionStats {
    fn from_values(name: &str, values: &[f64]) -> Result<Self> {
        let curve = match kde(values, HU_KDE_POINTS) {
            Ok(c) => Some(c),
            Err(Error::Degenerate(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            name: name.to_string(),
            count: values.len(),
            mean_hu: (!values.is_empty()).then(|| mean(values)),
            curve,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HuReport {
    pub lc_gt: RegionStats,
    pub hc_gt: RegionStats,
    pub lc_pred: RegionStats,
    pub hc_pred: RegionStats,
}

impl HuReport {
    pub fn regions(&self) -> [&RegionStats; 4] {
        [&self.lc_gt, &self.hc_gt, &self.lc_pred, &self.hc_pred]
    }

    /// Mean-HU table, one region per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("{:<8} {:>9} {:>10}\n", "region", "pixels", "mean HU");
        for r in self.regions() {
            let m = r.mean_hu.map_or_else(|| "absent".to_string(), |v| format!("{v:.2}"));
            out.push_str(&format!("{:<8} {:>9} {:>10}\n", r.name, r.count, m));
        }
        out
    }

    /// Writes `<region>.csv` density curves into `dir`; regions without a curve are skipped.
    pub fn write_curves(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for r in self.regions() {
            if let Some(c) = &r.curve {
                let p = dir.join(format!("kde_{}.csv", r.name));
                std::fs::write(&p, c.to_csv()).map_err(|e| Error::io(&p, e))?;
            }
        }
        Ok(())
    }
}

fn pool(values: &mut Vec<f64>, hu: &[f64], region: &Mask) {
    values.extend(
        hu.iter()
            .zip(region.data())
            .filter(|(_, &m)| m != 0)
            .map(|(&v, _)| v),
    );
}

/// Pools HU values of the actual and predicted LC/HC regions over `samples`
/// and estimates their densities.
pub fn hu_distribution_check(samples: &[NoduleSample], source: HuSource) -> Result<HuReport> {
    let (mut lc_gt, mut hc_gt, mut lc_pred, mut hc_pred) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for s in samples {
        let hu = &s.hu_patch.data;
        let union = s.annotations.union();
        let inter = s.annotations.intersection();
        let lc = union.and_not(&inter);
        pool(&mut lc_gt, hu, &lc);
        pool(&mut hc_gt, hu, &inter);
        let model = match source {
            HuSource::Oracle => None,
            HuSource::Model(state) => Some(state),
            HuSource::Folds { split, models } => Some(
                split
                    .fold_of(&s.sample_id)
                    .and_then(|f| models.get(f))
                    .ok_or_else(|| invalid!("no fold model for sample '{}'", s.sample_id))?,
            ),
        };
        match model {
            None => {
                pool(&mut lc_pred, hu, &lc);
                pool(&mut hc_pred, hu, &inter);
            }
            Some(state) => {
                let p = predict(state, s)?;
                let (Some(u), Some(i)) = (p.union, p.intersection) else {
                    return Err(Error::Config(
                        "HU analysis needs a network with uncertainty-aware branches".into(),
                    ));
                };
                pool(&mut lc_pred, hu, &u.and_not(&i));
                pool(&mut hc_pred, hu, &i);
            }
        }
    }
    Ok(HuReport {
        lc_gt: RegionStats::from_values("lc_gt", &lc_gt)?,
        hc_gt: RegionStats::from_values("hc_gt", &hc_gt)?,
        lc_pred: RegionStats::from_values("lc_pred", &lc_pred)?,
        hc_pred: RegionStats::from_values("hc_pred", &hc_pred)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::synth_generate;

    #[test]
    fn oracle_reproduces_ground_truth() {
        let samples = synth_generate(12, 3, 21).unwrap();
        let r = hu_distribution_check(&samples, HuSource::Oracle).unwrap();
        assert_eq!(r.lc_pred.curve, r.lc_gt.curve);
        assert_eq!(r.hc_pred.curve, r.hc_gt.curve);
        assert!(r.lc_gt.mean_hu.unwrap() < r.hc_gt.mean_hu.unwrap());
        for reg in r.regions() {
            let c = reg.curve.as_ref().unwrap();
            assert!((c.integral() - 1.0).abs() < 1e-3);
        }
        assert!(r.to_text().contains("lc_pred"));
    }

    #[test]
    fn empty_region_is_absent() {
        let stats = RegionStats::from_values("x", &[]).unwrap();
        assert_eq!(stats.mean_hu, None);
        assert_eq!(stats.curve, None);
    }
}
