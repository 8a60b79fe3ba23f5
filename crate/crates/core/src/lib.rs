//! Meta-learning Gaussian-process priors with a function-space
//! regularizer, and using them as surrogates in UCB Bayesian optimization.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`]: dense matrices, Cholesky factors, multivariate normals.
//! * [`nn`], [`autodiff`], [`optim`]: tanh MLPs over a flat parameter
//!   vector, a small reverse-mode tape, and AdamW.
//! * [`gp`]: the neural GP prior, the SE hyper-prior, the vanilla GP.
//! * [`meta`]: meta-training (functional KL, parameter-space and
//!   learned-GP baselines).
//! * [`env`]: simulated task distributions and table-lookup HPO tasks.
//! * [`bo`]: UCB acquisition, BO runs, regret bookkeeping, lifelong BO.
//! * [`metrics`]: calibration error and test log-likelihood.
//! * [`runner`]: experiment configuration, orchestration and aggregation.

pub mod autodiff;
pub mod bo;
pub mod data;
pub mod env;
pub mod error;
pub mod gp;
pub mod learner;
pub mod linalg;
pub mod meta;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod runner;

pub use data::TaskDataset;
pub use error::{Error, Result};
