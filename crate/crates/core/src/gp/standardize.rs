use serde::{Deserialize, Serialize};

use crate::data::TaskDataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Floor applied to every standard deviation.
pub const STD_FLOOR: f64 = 1e-8;

/// Affine maps between raw and standardized inputs/outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            x_mean: vec![0.0; dim],
            x_std: vec![1.0; dim],
            y_mean: 0.0,
            y_std: 1.0,
        }
    }

    /// Input moments of the uniform distribution on a box; outputs untouched.
    pub fn from_box(bounds: &[(f64, f64)]) -> Self {
        Standardizer {
            x_mean: bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect(),
            x_std: bounds
                .iter()
                .map(|(lo, hi)| ((hi - lo) / 12f64.sqrt()).max(STD_FLOOR))
                .collect(),
            y_mean: 0.0,
            y_std: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.x_mean.len()
    }

    /// Replaces the output moments with those of `y` (population std).
    /// Fewer than two values keep unit scale.
    pub fn with_output_moments(mut self, y: &[f64]) -> Self {
        match y.len() {
            0 => {
                self.y_mean = 0.0;
                self.y_std = 1.0;
            }
            1 => {
                self.y_mean = y[0];
                self.y_std = 1.0;
            }
            n => {
                let mean = y.iter().sum::<f64>() / n as f64;
                let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
                self.y_mean = mean;
                self.y_std = var.sqrt().max(STD_FLOOR);
            }
        }
        self
    }

    pub fn standardize_x(&self, x: &Matrix) -> Matrix {
        Matrix::from_fn(x.rows(), x.cols(), |i, j| {
            (x[(i, j)] - self.x_mean[j]) / self.x_std[j]
        })
    }

    pub fn destandardize_x(&self, x: &Matrix) -> Matrix {
        Matrix::from_fn(x.rows(), x.cols(), |i, j| {
            x[(i, j)] * self.x_std[j] + self.x_mean[j]
        })
    }

    pub fn standardize_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| (v - self.y_mean) / self.y_std).collect()
    }

    pub fn destandardize_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| v * self.y_std + self.y_mean).collect()
    }

    pub fn destandardize_var(&self, var: &[f64]) -> Vec<f64> {
        let s2 = self.y_std * self.y_std;
        var.iter().map(|v| v * s2).collect()
    }

    pub fn standardize(&self, data: &TaskDataset) -> TaskDataset {
        TaskDataset {
            x: self.standardize_x(&data.x),
            y: self.standardize_y(&data.y),
        }
    }
}

/// Per-dimension input and scalar output moments over all pooled points.
pub fn fit_standardizer(datasets: &[TaskDataset]) -> Result<Standardizer> {
    let total: usize = datasets.iter().map(TaskDataset::len).sum();
    if total == 0 {
        return Err(Error::EmptyData("no points to standardize".into()));
    }
    let dim = datasets
        .iter()
        .find(|d| !d.is_empty())
        .map(TaskDataset::dim)
        .unwrap_or(0);
    if datasets.iter().any(|d| !d.is_empty() && d.dim() != dim) {
        return Err(Error::dims("datasets disagree on input dimension"));
    }
    let n = total as f64;
    let mut x_mean = vec![0.0; dim];
    let mut y_mean = 0.0;
    for d in datasets {
        for row in d.x.row_iter() {
            for (m, v) in x_mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        y_mean += d.y.iter().sum::<f64>();
    }
    x_mean.iter_mut().for_each(|m| *m /= n);
    y_mean /= n;
    let mut x_var = vec![0.0; dim];
    let mut y_var = 0.0;
    for d in datasets {
        for row in d.x.row_iter() {
            for ((s, v), m) in x_var.iter_mut().zip(row).zip(&x_mean) {
                *s += (v - m).powi(2);
            }
        }
        y_var += d.y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>();
    }
    Ok(Standardizer {
        x_mean,
        x_std: x_var.iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect(),
        y_mean,
        y_std: (y_var / n).sqrt().max(STD_FLOOR),
    })
}
