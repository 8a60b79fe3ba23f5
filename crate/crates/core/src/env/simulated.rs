//! The four simulated task families.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::oracle::{grid_then_refine, multistart_maximize};
use super::sobol::Sobol;
use super::{Domain, Environment, Optimum, Task};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const HARTMANN_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];

pub const HARTMANN_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

const HARTMANN_NORMALIZER: f64 = 3.322368;

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, std: f64) -> f64 {
    Normal::new(mean, std).expect("positive std").sample(rng)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureParams {
    pub w: [f64; 3],
    pub mu: [f64; 3],
}

impl MixtureParams {
    pub fn sample(rng: &mut ChaCha8Rng) -> Self {
        let w = [
            uniform(rng, 0.6, 1.4),
            uniform(rng, 0.6, 1.4),
            uniform(rng, 0.6, 1.4),
        ];
        let mu = [
            normal(rng, -2.0, 0.3),
            normal(rng, 3.0, 0.3),
            normal(rng, -8.0, 0.3),
        ];
        MixtureParams { w, mu }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let d1 = x - self.mu[0];
        let d2 = x - self.mu[1];
        let d3 = x - self.mu[2];
        let p1 = 1.0 / (PI * (1.0 + d1 * d1));
        let p2 = (-d2 * d2 / 8.0).exp() / (2.0 * PI).sqrt();
        let p3 = 1.0 / (PI * (1.0 + d3 * d3 / 4.0));
        2.0 * self.w[0] * p1 + 1.5 * self.w[1] * p2 + 1.8 * self.w[2] * p3 + 1.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BraninParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub r: f64,
    pub s: f64,
    pub t: f64,
}

impl BraninParams {
    pub fn canonical() -> Self {
        BraninParams {
            a: 1.0,
            b: 5.1 / (4.0 * PI * PI),
            c: 5.0 / PI,
            r: 6.0,
            s: 10.0,
            t: 1.0 / (8.0 * PI),
        }
    }

    pub fn sample(rng: &mut ChaCha8Rng) -> Self {
        BraninParams {
            a: uniform(rng, 0.5, 1.5),
            b: uniform(rng, 0.1, 0.15),
            c: uniform(rng, 1.0, 2.0),
            r: uniform(rng, 5.0, 7.0),
            s: uniform(rng, 8.0, 12.0),
            t: uniform(rng, 0.03, 0.05),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let (x1, x2) = (x[0], x[1]);
        let q = x2 - self.b * x1 * x1 + self.c * x1 - self.r;
        -(self.a * q * q + self.s * (1.0 - self.t) * x1.cos() + self.s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CamelbackParams {
    pub a: f64,
    pub omega: [f64; 2],
    pub rho: [f64; 2],
}

impl CamelbackParams {
    pub fn sample(rng: &mut ChaCha8Rng) -> Self {
        CamelbackParams {
            a: uniform(rng, 0.3, 0.5),
            omega: [uniform(rng, 0.5, 1.0), uniform(rng, 0.5, 1.0)],
            rho: [normal(rng, 0.0, 0.3), normal(rng, 0.0, 0.3)],
        }
    }

    /// The clipped camelback term without the sinusoid.
    pub fn base(x: &[f64]) -> f64 {
        let (x1, x2) = (x[0], x[1]);
        let x1s = x1 * x1;
        let x2s = x2 * x2;
        let g = -(4.0 - 2.1 * x1s + x1s * x1s / 3.0) * x1s - x1 * x2 - (4.0 * x2s - 4.0) * x2s;
        g.max(-2.5)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        Self::base(x)
            + self.a
                * (self.omega[0] * (x[0] - self.rho[0])).sin()
                * (self.omega[1] * (x[1] - self.rho[1])).sin()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HartmannParams {
    pub alpha: [f64; 4],
}

impl HartmannParams {
    pub fn canonical() -> Self {
        HartmannParams {
            alpha: [1.0, 1.2, 3.0, 3.2],
        }
    }

    pub fn sample(rng: &mut ChaCha8Rng) -> Self {
        HartmannParams {
            alpha: [
                uniform(rng, 0.5, 1.5),
                uniform(rng, 0.6, 1.4),
                uniform(rng, 2.0, 3.0),
                uniform(rng, 2.8, 3.6),
            ],
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..4 {
            let inner: f64 = (0..6)
                .map(|j| HARTMANN_A[i][j] * (x[j] - HARTMANN_P[i][j]).powi(2))
                .sum();
            total += self.alpha[i] * (-inner).exp();
        }
        total / HARTMANN_NORMALIZER
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Family {
    Mixture,
    Branin,
    Camelback,
    Hartmann6,
}

impl Family {
    fn bounds(self) -> Vec<(f64, f64)> {
        match self {
            Family::Mixture => vec![(-10.0, 10.0)],
            Family::Branin => vec![(-5.0, 10.0), (0.0, 15.0)],
            Family::Camelback => vec![(-2.0, 2.0), (-1.0, 2.0)],
            Family::Hartmann6 => vec![(0.0, 1.0); 6],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Params {
    Mixture(MixtureParams),
    Branin(BraninParams),
    Camelback(CamelbackParams),
    Hartmann6(HartmannParams),
}

impl Params {
    fn family(&self) -> Family {
        match self {
            Params::Mixture(_) => Family::Mixture,
            Params::Branin(_) => Family::Branin,
            Params::Camelback(_) => Family::Camelback,
            Params::Hartmann6(_) => Family::Hartmann6,
        }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Params::Mixture(p) => p.eval(x[0]),
            Params::Branin(p) => p.eval(x),
            Params::Camelback(p) => p.eval(x),
            Params::Hartmann6(p) => p.eval(x),
        }
    }
}

/// A frozen parameter draw from one of the simulated families, together with
/// its numerically located maximum.
#[derive(Clone, Debug)]
pub struct SimulatedTask {
    params: Params,
    domain: Domain,
    optimum: Optimum,
}

impl SimulatedTask {
    fn new(params: Params) -> Self {
        let bounds = params.family().bounds();
        let f = |x: &[f64]| params.eval(x);
        let optimum = match params.family() {
            Family::Mixture => grid_then_refine(&f, &bounds, 4001, 8),
            Family::Branin | Family::Camelback => grid_then_refine(&f, &bounds, 201, 8),
            Family::Hartmann6 => {
                let mut sobol = Sobol::new(6);
                let starts: Vec<Vec<f64>> = (0..512).map(|_| sobol.next_point()).collect();
                let starts = Matrix::from_rows(&starts).expect("equal-length points");
                multistart_maximize(&f, &bounds, &starts, 0.05)
            }
        };
        SimulatedTask {
            domain: Domain::Box(bounds),
            params,
            optimum,
        }
    }

    pub fn mixture(p: MixtureParams) -> Self {
        Self::new(Params::Mixture(p))
    }

    pub fn branin(p: BraninParams) -> Self {
        Self::new(Params::Branin(p))
    }

    pub fn camelback(p: CamelbackParams) -> Self {
        Self::new(Params::Camelback(p))
    }

    pub fn hartmann6(p: HartmannParams) -> Self {
        Self::new(Params::Hartmann6(p))
    }

    /// Evaluation without the domain check.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.params.eval(x)
    }
}

impl Task for SimulatedTask {
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.domain.dim() {
            return Err(Error::dims(format!(
                "query has {} coordinates, task is {}-dimensional",
                x.len(),
                self.domain.dim()
            )));
        }
        Ok(self.params.eval(x))
    }

    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn optimum(&self) -> &Optimum {
        &self.optimum
    }

    fn describe(&self) -> String {
        match &self.params {
            Params::Mixture(p) => format!("{p:?}"),
            Params::Branin(p) => format!("{p:?}"),
            Params::Camelback(p) => format!("{p:?}"),
            Params::Hartmann6(p) => format!("{p:?}"),
        }
    }
}

pub fn sample_mixture_task(rng: &mut ChaCha8Rng) -> SimulatedTask {
    SimulatedTask::mixture(MixtureParams::sample(rng))
}

pub fn sample_branin_task(rng: &mut ChaCha8Rng) -> SimulatedTask {
    SimulatedTask::branin(BraninParams::sample(rng))
}

pub fn sample_camelback_task(rng: &mut ChaCha8Rng) -> SimulatedTask {
    SimulatedTask::camelback(CamelbackParams::sample(rng))
}

pub fn sample_hartmann6_task(rng: &mut ChaCha8Rng) -> SimulatedTask {
    SimulatedTask::hartmann6(HartmannParams::sample(rng))
}

/// Environment over one simulated family. Meta-training and meta-test tasks
/// come from the same distribution.
#[derive(Clone, Debug)]
pub struct SimulatedEnvironment {
    name: &'static str,
    family: Family,
    domain: Domain,
    defaults: (usize, usize),
}

impl SimulatedEnvironment {
    pub fn by_name(name: &str) -> Option<Self> {
        let (name, family, defaults) = match name {
            "mixture_1d" => ("mixture_1d", Family::Mixture, (10, 10)),
            "random_branin" => ("random_branin", Family::Branin, (20, 20)),
            "camelback_sin" => ("camelback_sin", Family::Camelback, (20, 20)),
            "random_hartmann6" => ("random_hartmann6", Family::Hartmann6, (30, 100)),
            _ => return None,
        };
        Some(SimulatedEnvironment {
            name,
            family,
            domain: Domain::Box(family.bounds()),
            defaults,
        })
    }

    pub fn sample_task(&self, rng: &mut ChaCha8Rng) -> SimulatedTask {
        match self.family {
            Family::Mixture => sample_mixture_task(rng),
            Family::Branin => sample_branin_task(rng),
            Family::Camelback => sample_camelback_task(rng),
            Family::Hartmann6 => sample_hartmann6_task(rng),
        }
    }
}

impl Environment for SimulatedEnvironment {
    fn name(&self) -> &str {
        self.name
    }

    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn defaults(&self) -> (usize, usize) {
        self.defaults
    }

    fn meta_train_task(&self, _index: usize, rng: &mut ChaCha8Rng) -> Result<Box<dyn Task>> {
        Ok(Box::new(self.sample_task(rng)))
    }

    fn meta_test_task(&self, _index: usize, rng: &mut ChaCha8Rng) -> Result<Box<dyn Task>> {
        Ok(Box::new(self.sample_task(rng)))
    }
}
