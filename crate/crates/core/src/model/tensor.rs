use serde::{Deserialize, Serialize};

use crate::maskops::Grid;

/// Dense channel-major feature map `C × H × W`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), channels * height * width, "tensor buffer size");
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_vec(1, 1, 1, vec![value])
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let p = self.plane();
        &self.data[c * p..(c + 1) * p]
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    /// Channel `c` as a 2-D grid.
    pub fn to_grid(&self, c: usize) -> Grid {
        Grid {
            height: self.height,
            width: self.width,
            data: self.channel(c).to_vec(),
        }
    }

    pub fn from_grid(grid: &Grid) -> Self {
        Self::from_vec(1, grid.height, grid.width, grid.data.clone())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
