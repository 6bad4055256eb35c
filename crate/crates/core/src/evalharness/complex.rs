use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::RunReport;
use crate::error::{invalid, Result};
use crate::metrics::{mean, MetricsRecord};

/// Baseline DSC cut-offs in percent.
pub const DEFAULT_THRESHOLDS: [u32; 3] = [60, 70, 80];

/// Samples the baseline segments with DSC ≤ `threshold` %, and both models'
/// means over exactly those samples. Means are `None` for an empty bucket.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub threshold: u32,
    pub selected_ids: Vec<String>,
    pub baseline_dsc: Option<f64>,
    pub baseline_iou: Option<f64>,
    pub candidate_dsc: Option<f64>,
    pub candidate_iou: Option<f64>,
    pub delta_dsc: Option<f64>,
    pub delta_iou: Option<f64>,
}

impl BucketReport {
    pub fn count(&self) -> usize {
        self.selected_ids.len()
    }

    pub fn to_text(&self) -> String {
        let f = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
        format!(
            "DSC <= {}%  (n = {})\n{:<10} {:>8} {:>8}\n{:<10} {:>8} {:>8}\n{:<10} {:>8} {:>8}\n{:<10} {:>8} {:>8}\n",
            self.threshold,
            self.count(),
            "",
            "DSC",
            "IoU",
            "baseline",
            f(self.baseline_dsc),
            f(self.baseline_iou),
            "candidate",
            f(self.candidate_dsc),
            f(self.candidate_iou),
            "delta",
            f(self.delta_dsc),
            f(self.delta_iou),
        )
    }
}

/// Whether a DSC falls in the cumulative bucket for `threshold` percent.
pub fn in_bucket(dsc: f64, threshold: u32) -> bool {
    dsc <= f64::from(threshold) / 100.0
}

fn by_id(report: &RunReport) -> BTreeMap<&str, &MetricsRecord> {
    report.records().into_iter().map(|r| (r.sample_id.as_str(), r)).collect()
}

pub fn complex_validation(baseline: &RunReport, candidate: &RunReport, thresholds: &[u32]) -> Result<Vec<BucketReport>> {
    let (base, cand) = (by_id(baseline), by_id(candidate));
    if base.len() != cand.len() || base.keys().any(|id| !cand.contains_key(id)) {
        return Err(invalid!("baseline and candidate reports cover different samples"));
    }
    let mut out = Vec::with_capacity(thresholds.len());
    for &thr in thresholds {
        let ids: Vec<&str> = base
            .iter()
            .filter(|(_, r)| in_bucket(r.dsc, thr))
            .map(|(id, _)| *id)
            .collect();
        let avg = |m: &BTreeMap<&str, &MetricsRecord>, f: fn(&MetricsRecord) -> f64| {
            (!ids.is_empty()).then(|| mean(&ids.iter().map(|id| f(m[id])).collect::<Vec<_>>()))
        };
        let (bd, bi) = (avg(&base, |r| r.dsc), avg(&base, |r| r.iou));
        let (cd, ci) = (avg(&cand, |r| r.dsc), avg(&cand, |r| r.iou));
        let delta = |c: Option<f64>, b: Option<f64>| c.zip(b).map(|(c, b)| c - b);
        out.push(BucketReport {
            threshold: thr,
            selected_ids: ids.iter().map(|s| s.to_string()).collect(),
            baseline_dsc: bd,
            baseline_iou: bi,
            candidate_dsc: cd,
            candidate_iou: ci,
            delta_dsc: delta(cd, bd),
            delta_iou: delta(ci, bi),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalharness::FoldRecord;

    fn report(dscs: &[f64]) -> RunReport {
        let rows = dscs
            .iter()
            .enumerate()
            .map(|(i, &d)| FoldRecord {
                fold: 0,
                metrics: MetricsRecord {
                    sample_id: format!("s{i}"),
                    dsc: d,
                    iou: d / (2.0 - d),
                    nsd: d,
                },
            })
            .collect();
        RunReport::from_rows(0, serde_json::Value::Null, rows).unwrap()
    }

    #[test]
    fn cumulative_buckets() {
        let base = report(&[0.50, 0.65, 0.75, 0.85]);
        let b = complex_validation(&base, &base, &DEFAULT_THRESHOLDS).unwrap();
        assert_eq!(b.iter().map(|x| x.count()).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert!(b.iter().all(|x| x.delta_dsc == Some(0.0) && x.delta_iou == Some(0.0)));
    }

    #[test]
    fn inclusive_threshold_and_empty_bucket() {
        let base = report(&[0.6, 0.95]);
        let cand = report(&[0.7, 0.9]);
        let b = complex_validation(&base, &cand, &[50, 60]).unwrap();
        assert_eq!(b[0].count(), 0);
        assert_eq!(b[0].candidate_dsc, None);
        assert!(b[0].to_text().contains("n/a"));
        assert_eq!(b[1].selected_ids, vec!["s0".to_string()]);
        assert!((b[1].delta_dsc.unwrap() - 0.1).abs() < 1e-12);
    }
}
