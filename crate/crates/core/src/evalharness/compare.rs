use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::RunReport;
use crate::error::{invalid, Result};
use crate::metrics::{paired_t_test, MetricsRecord, PairedTestResult};

/// Paired t-tests of `a − b` over shared samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub n: usize,
    pub dsc: PairedTestResult,
    pub iou: PairedTestResult,
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let mut out = format!("{:<6} {:>12} {:>12}\n", "metric", "t", "p");
        for (name, r) in [("DSC", &self.dsc), ("IoU", &self.iou)] {
            out.push_str(&format!("{name:<6} {:>12.6} {:>12.6e}\n", r.t_value, r.p_value));
        }
        out.push_str(&format!("n = {}\n", self.n));
        out
    }
}

fn by_id(report: &RunReport) -> Result<BTreeMap<&str, &MetricsRecord>> {
    let mut map = BTreeMap::new();
    for r in report.records() {
        if map.insert(r.sample_id.as_str(), r).is_some() {
            return Err(invalid!("report lists sample '{}' twice", r.sample_id));
        }
    }
    Ok(map)
}

pub fn compare_models(a: &RunReport, b: &RunReport) -> Result<Comparison> {
    let (ma, mb) = (by_id(a)?, by_id(b)?);
    if let Some(id) = ma.keys().find(|id| !mb.contains_key(*id)) {
        return Err(invalid!("sample '{id}' is missing from the second report"));
    }
    if let Some(id) = mb.keys().find(|id| !ma.contains_key(*id)) {
        return Err(invalid!("sample '{id}' is missing from the first report"));
    }
    let col = |m: &BTreeMap<&str, &MetricsRecord>, f: fn(&MetricsRecord) -> f64| -> Vec<f64> {
        m.values().map(|r| f(r)).collect()
    };
    Ok(Comparison {
        n: ma.len(),
        dsc: paired_t_test(&col(&ma, |r| r.dsc), &col(&mb, |r| r.dsc))?,
        iou: paired_t_test(&col(&ma, |r| r.iou), &col(&mb, |r| r.iou))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalharness::FoldRecord;

    fn report(dscs: &[f64], shift: f64) -> RunReport {
        let rows = dscs
            .iter()
            .enumerate()
            .map(|(i, &d)| FoldRecord {
                fold: i % 2,
                metrics: MetricsRecord {
                    sample_id: format!("s{i}"),
                    dsc: d + shift,
                    iou: d / 2.0 + shift,
                    nsd: d,
                },
            })
            .collect();
        RunReport::from_rows(0, serde_json::Value::Null, rows).unwrap()
    }

    #[test]
    fn self_comparison_is_degenerate() {
        let r = report(&[0.5, 0.75, 0.25, 0.625, 0.875], 0.0);
        let c = compare_models(&r, &r).unwrap();
        assert_eq!((c.dsc.t_value, c.dsc.p_value), (0.0, 1.0));
        assert_eq!((c.iou.t_value, c.iou.p_value), (0.0, 1.0));
    }

    #[test]
    fn constant_shift_is_significant() {
        let base = [0.5, 0.25, 0.375, 0.625, 0.125];
        let c = compare_models(&report(&base, 0.125), &report(&base, 0.0)).unwrap();
        assert_eq!(c.dsc.t_value, f64::INFINITY);
        assert_eq!(c.dsc.p_value, 0.0);
    }

    #[test]
    fn delegates_to_paired_test() {
        let a = report(&[0.5, 0.7, 0.2, 0.9, 0.4, 0.65], 0.0);
        let b = report(&[0.45, 0.72, 0.1, 0.8, 0.41, 0.5], 0.0);
        let c = compare_models(&a, &b).unwrap();
        let da: Vec<f64> = a.records().iter().map(|r| r.dsc).collect();
        let db: Vec<f64> = b.records().iter().map(|r| r.dsc).collect();
        let want = paired_t_test(&da, &db).unwrap();
        assert!((c.dsc.t_value - want.t_value).abs() < 1e-12);
        assert!((c.dsc.p_value - want.p_value).abs() < 1e-12);
    }

    #[test]
    fn mismatched_ids_rejected() {
        let a = report(&[0.5, 0.7, 0.2], 0.0);
        let b = report(&[0.5, 0.7], 0.0);
        assert!(compare_models(&a, &b).is_err());
    }
}
