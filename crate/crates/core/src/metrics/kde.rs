use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Gaussian kernel density estimate sampled on a uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl KdeCurve {
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }

    /// Grid positions of strict local maxima of the density.
    pub fn local_maxima(&self) -> Vec<f64> {
        self.density
            .windows(3)
            .enumerate()
            .filter(|(_, w)| w[1] > w[0] && w[1] > w[2])
            .map(|(i, _)| self.grid[i + 1])
            .collect()
    }

    /// Two-column `hu,density` text with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("hu,density\n");
        for (x, d) in self.grid.iter().zip(&self.density) {
            out.push_str(&format!("{x},{d}\n"));
        }
        out
    }
}

/// Silverman's rule of thumb `1.06 σ n^(-1/5)` with the sample standard deviation.
pub fn silverman_bandwidth(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::Degenerate(format!(
            "KDE needs at least 2 values, got {}",
            values.len()
        )));
    }
    let sd = super::std_dev(values);
    if sd.is_nan() || sd <= 0.0 || !sd.is_finite() {
        return Err(Error::Degenerate("KDE input has zero spread".into()));
    }
    Ok(1.06 * sd * (values.len() as f64).powf(-0.2))
}

/// Estimates the density of `values` on `grid_points` uniform points spanning
/// `[min − 4h, max + 4h]`.
pub fn kde(values: &[f64], grid_points: usize) -> Result<KdeCurve> {
    if grid_points < 2 {
        return Err(invalid!("KDE grid needs at least 2 points"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid!("KDE input contains non-finite values"));
    }
    let h = silverman_bandwidth(values)?;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min) - 4.0 * h;
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 4.0 * h;
    let step = (hi - lo) / (grid_points - 1) as f64;
    let grid: Vec<f64> = (0..grid_points).map(|i| lo + step * i as f64).collect();
    let norm = 1.0 / (values.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let density = grid
        .iter()
        .map(|&x| {
            values
                .iter()
                .map(|&v| {
                    let u = (x - v) / h;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();
    Ok(KdeCurve {
        grid,
        density,
        bandwidth: h,
    })
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}
