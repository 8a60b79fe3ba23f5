//! Task distributions: four simulated families and table-lookup HPO.

mod hpo;
mod oracle;
mod simulated;
pub mod sobol;

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use hpo::{
    hpo_env_from_table, load_hpo_table, write_synthetic_fixture, HpoAlgorithm, HpoEnvironment,
    HpoTable, HpoTask, META_TEST_IDS, META_TRAIN_IDS,
};
pub use oracle::{grid_then_refine, local_maximize, multistart_maximize};
pub use simulated::{
    sample_branin_task, sample_camelback_task, sample_hartmann6_task, sample_mixture_task,
    BraninParams, CamelbackParams, HartmannParams, MixtureParams, SimulatedEnvironment,
    SimulatedTask, HARTMANN_A, HARTMANN_P,
};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Absolute tolerance of the per-task optimum oracles.
pub const ORACLE_TOL: f64 = 1e-3;

/// Where a task can be queried.
#[derive(Clone, Debug, PartialEq)]
pub enum Domain {
    /// Axis-aligned box, one `(low, high)` pair per dimension.
    Box(Vec<(f64, f64)>),
    /// Finite candidate set, one row per point.
    Finite(Matrix),
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Box(b) => b.len(),
            Domain::Finite(m) => m.cols(),
        }
    }

    /// Bounding box (column ranges for a finite set).
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        match self {
            Domain::Box(b) => b.clone(),
            Domain::Finite(m) => (0..m.cols())
                .map(|j| {
                    m.row_iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                        (lo.min(r[j]), hi.max(r[j]))
                    })
                })
                .collect(),
        }
    }

    /// `n` i.i.d. uniform draws (uniform over rows for a finite set).
    pub fn sample_uniform(&self, rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        match self {
            Domain::Box(b) => Matrix::from_fn(n, b.len(), |_, j| {
                let (lo, hi) = b[j];
                lo + (hi - lo) * rng.random::<f64>()
            }),
            Domain::Finite(m) => {
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..m.rows())).collect();
                m.select_rows(&idx)
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Box(b) => {
                x.len() == b.len()
                    && x.iter().zip(b).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
            }
            Domain::Finite(m) => m.row_iter().any(|r| r == x),
        }
    }
}

/// Global maximizer of a task and its value.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimum {
    pub x: Vec<f64>,
    pub value: f64,
}

/// One target function drawn from an environment.
pub trait Task: Send + Sync {
    fn evaluate(&self, x: &[f64]) -> Result<f64>;
    fn domain(&self) -> &Domain;
    fn optimum(&self) -> &Optimum;
    /// Human-readable parameter draw, for logs.
    fn describe(&self) -> String;
}

/// A distribution over tasks.
pub trait Environment: Send + Sync {
    fn name(&self) -> &str;
    /// Domain shared by all tasks (a bounding box for finite tasks); used
    /// for measurement sets and input scaling.
    fn domain(&self) -> &Domain;
    /// `(n, T)`: number of meta-training tasks and points per task.
    fn defaults(&self) -> (usize, usize);
    fn meta_train_task(&self, index: usize, rng: &mut ChaCha8Rng) -> Result<Box<dyn Task>>;
    fn meta_test_task(&self, index: usize, rng: &mut ChaCha8Rng) -> Result<Box<dyn Task>>;
}

pub const ENV_NAMES: [&str; 7] = [
    "mixture_1d",
    "random_branin",
    "camelback_sin",
    "random_hartmann6",
    "glmnet",
    "rpart",
    "xgboost",
];

/// Looks an environment up by name. HPO environments read their tables
/// from `hpo_dir`.
pub fn by_name(name: &str, hpo_dir: Option<&Path>) -> Result<Box<dyn Environment>> {
    if let Some(sim) = SimulatedEnvironment::by_name(name) {
        return Ok(Box::new(sim));
    }
    let Some(alg) = HpoAlgorithm::from_name(name) else {
        return Err(Error::config(
            "environment",
            format!("unknown environment `{name}` (known: {})", ENV_NAMES.join(", ")),
        ));
    };
    let dir = hpo_dir.ok_or_else(|| {
        Error::config("hpo_dir", format!("environment `{name}` needs an HPO table directory"))
    })?;
    Ok(Box::new(HpoEnvironment::new(load_hpo_table(dir, alg)?)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn registry_resolves_simulated_names() {
        for name in &ENV_NAMES[..4] {
            let env = by_name(name, None).unwrap();
            assert_eq!(env.name(), *name);
        }
        assert!(matches!(by_name("nope", None), Err(Error::Config { .. })));
        assert!(matches!(by_name("glmnet", None), Err(Error::Config { .. })));
    }

    #[test]
    fn table_one_defaults() {
        let expect = [
            ("mixture_1d", 1, 10, 10),
            ("random_branin", 2, 20, 20),
            ("camelback_sin", 2, 20, 20),
            ("random_hartmann6", 6, 30, 100),
        ];
        for (name, dim, n, t) in expect {
            let env = by_name(name, None).unwrap();
            assert_eq!(env.domain().dim(), dim);
            assert_eq!(env.defaults(), (n, t));
        }
    }

    #[test]
    fn uniform_samples_inside_box() {
        let d = Domain::Box(vec![(-5.0, 10.0), (0.0, 15.0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = d.sample_uniform(&mut rng, 500);
        assert!(s.row_iter().all(|r| d.contains(r)));
        let f = Domain::Finite(Matrix::from_rows(&[[0.0, 1.0], [2.0, 3.0]]).unwrap());
        let s = f.sample_uniform(&mut rng, 20);
        assert!(s.row_iter().all(|r| f.contains(r)));
        assert_eq!(f.bounds(), vec![(0.0, 2.0), (1.0, 3.0)]);
    }
}
