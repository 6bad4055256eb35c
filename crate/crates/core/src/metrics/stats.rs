use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedTestResult {
    /// Infinite when every difference is the same nonzero value.
    pub t_value: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Two-sided paired t-test on `a − b`.
///
/// Zero-variance differences: a zero mean gives `t = 0, p = 1`, a nonzero
/// mean gives `t = ±∞, p = 0`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTestResult> {
    if a.len() != b.len() {
        return Err(invalid!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        ));
    }
    let n = a.len();
    if n < 2 {
        return Err(invalid!("paired t-test needs n >= 2, got {n}"));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(invalid!("paired samples contain non-finite values"));
    }
    let mean = super::mean(&diffs);
    let sd = super::std_dev(&diffs);
    if sd == 0.0 {
        return Ok(if mean == 0.0 {
            PairedTestResult {
                t_value: 0.0,
                p_value: 1.0,
                n,
            }
        } else {
            PairedTestResult {
                t_value: f64::INFINITY.copysign(mean),
                p_value: 0.0,
                n,
            }
        });
    }
    let t = mean / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("df >= 1");
    let p = (2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0);
    Ok(PairedTestResult {
        t_value: t,
        p_value: p,
        n,
    })
}
