//! Gaussian-process models: the neural-network prior, the SE hyper-prior,
//! the vanilla SE-kernel GP, and input/output standardization.

mod prior;
mod standardize;
mod vanilla;

pub use prior::{gp_mll, gp_posterior, kernel_matrix, GpPrior, HyperPriorGp, PriorNodes};
pub use standardize::{fit_standardizer, Standardizer, STD_FLOOR};
pub use vanilla::{
    vanilla_gp_fit, HyperBounds, ScalarGpParams, ScalarGpSurrogate, Scaling, VanillaGp, VANILLA_BOUNDS,
};
pub(crate) use vanilla::maximize_scalar_mll;

use crate::error::Result;
use crate::linalg::{dot, squared_distance, Cholesky, Matrix, Mvn};

/// Squared-exponential kernel `ν·exp(−‖a − b‖² / divisor)` on feature rows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct SeKernel {
    pub outputscale: f64,
    pub divisor: f64,
}

impl SeKernel {
    pub fn matrix(&self, a: &Matrix, b: &Matrix) -> Matrix {
        Matrix::from_fn(a.rows(), b.rows(), |i, j| {
            self.outputscale * (-squared_distance(a.row(i), b.row(j)) / self.divisor).exp()
        })
    }
}

/// Exact GP conditioned on training features and mean-centred targets.
pub(crate) struct Conditioned {
    train: Matrix,
    chol: Cholesky,
    alpha: Vec<f64>,
    kernel: SeKernel,
    pub noise_var: f64,
}

impl Conditioned {
    pub fn new(train: Matrix, residuals: &[f64], kernel: SeKernel, noise_var: f64) -> Result<Self> {
        let k = kernel.matrix(&train, &train).add_diagonal(noise_var);
        let chol = Cholesky::factor(&k, 0.0)?;
        let alpha = chol.solve(residuals);
        Ok(Conditioned {
            train,
            chol,
            alpha,
            kernel,
            noise_var,
        })
    }

    /// Latent predictive means (added to `prior_mean`) and variances.
    pub fn predict_diag(&self, query: &Matrix, prior_mean: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let kq = self.kernel.matrix(&self.train, query);
        let v = self.chol.solve_lower_mat(&kq);
        let mut mean = prior_mean.to_vec();
        let mut var = vec![self.kernel.outputscale; query.rows()];
        for j in 0..query.rows() {
            let mut acc = 0.0;
            let mut red = 0.0;
            for i in 0..self.train.rows() {
                acc += kq[(i, j)] * self.alpha[i];
                red += v[(i, j)] * v[(i, j)];
            }
            mean[j] += acc;
            var[j] = (var[j] - red).max(0.0);
        }
        (mean, var)
    }

    /// Full latent predictive distribution.
    pub fn predict_full(&self, query: &Matrix, prior_mean: &[f64]) -> Result<Mvn> {
        let kq = self.kernel.matrix(&self.train, query);
        let v = self.chol.solve_lower_mat(&kq);
        let mut cov = self.kernel.matrix(query, query).sub(&v.t_matmul(&v)?)?;
        cov.symmetrize();
        let mean: Vec<f64> = (0..query.rows())
            .map(|j| prior_mean[j] + dot(&kq.column(j), &self.alpha))
            .collect();
        Mvn::with_jitter(mean, cov, 0.0)
    }
}

/// Predictive mean and standard deviation of observations, in raw units.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictive {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Predictive {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// A model conditioned on a task's observations.
pub trait Posterior {
    fn predict(&self, query: &Matrix) -> Result<Predictive>;
}

/// Anything that turns raw observations into a predictive posterior.
pub trait Surrogate: Send + Sync {
    fn condition<'a>(&'a self, data: &crate::data::TaskDataset) -> Result<Box<dyn Posterior + 'a>>;
}
