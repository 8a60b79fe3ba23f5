use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Observations from one task: inputs (one row per point) and targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskDataset {
    pub x: Matrix,
    pub y: Vec<f64>,
}

impl TaskDataset {
    pub fn new(x: Matrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::dims(format!(
                "{} inputs but {} targets",
                x.rows(),
                y.len()
            )));
        }
        Ok(TaskDataset { x, y })
    }

    pub fn empty(dim: usize) -> Self {
        TaskDataset {
            x: Matrix::zeros(0, dim),
            y: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn push(&mut self, x: &[f64], y: f64) -> Result<()> {
        self.x.push_row(x)?;
        self.y.push(y);
        Ok(())
    }

    pub fn subset(&self, idx: &[usize]) -> TaskDataset {
        TaskDataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// First `k` points and the rest.
    pub fn split_at(&self, k: usize) -> (TaskDataset, TaskDataset) {
        let k = k.min(self.len());
        let head: Vec<usize> = (0..k).collect();
        let tail: Vec<usize> = (k..self.len()).collect();
        (self.subset(&head), self.subset(&tail))
    }
}
