//! GP-UCB Bayesian optimization, regret bookkeeping, meta-data collection
//! and the lifelong protocol.

use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::TaskDataset;
use crate::env::{Domain, Environment, Task};
use crate::error::Result;
use crate::gp::{Posterior, Predictive, ScalarGpSurrogate, Surrogate};
use crate::learner::{Learner, Model};
use crate::linalg::Matrix;

pub const UCB_BETA: f64 = 2.0;

/// `μ + β·σ` per query point.
pub fn ucb(pred: &Predictive, beta: f64) -> Vec<f64> {
    pred.mean
        .iter()
        .zip(&pred.std)
        .map(|(m, s)| m + beta * s)
        .collect()
}

/// Candidate search followed by coordinate refinement.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcqOptimizer {
    pub candidates: usize,
    pub refine_steps: usize,
    /// Initial refinement step as a fraction of each box width.
    pub init_step_frac: f64,
    pub beta: f64,
}

impl Default for AcqOptimizer {
    fn default() -> Self {
        AcqOptimizer {
            candidates: 2000,
            refine_steps: 50,
            init_step_frac: 0.05,
            beta: UCB_BETA,
        }
    }
}

fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        // NaN never wins
        if *v > values[best] || values[best].is_nan() && !v.is_nan() {
            best = i;
        }
    }
    best
}

impl AcqOptimizer {
    /// Maximizes a batched objective over `domain`. Finite domains are
    /// scanned exhaustively (lowest index wins ties); boxes use uniform
    /// candidates plus compass refinement of the best one.
    pub fn maximize(
        &self,
        f: &dyn Fn(&Matrix) -> Result<Vec<f64>>,
        domain: &Domain,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<f64>, f64)> {
        match domain {
            Domain::Finite(rows) => {
                let v = f(rows)?;
                let i = argmax_first(&v);
                Ok((rows.row(i).to_vec(), v[i]))
            }
            Domain::Box(bounds) => {
                let cands = domain.sample_uniform(rng, self.candidates.max(1));
                let v = f(&cands)?;
                let i = argmax_first(&v);
                let mut x = cands.row(i).to_vec();
                let mut best = v[i];
                let mut steps: Vec<f64> = bounds
                    .iter()
                    .map(|(lo, hi)| self.init_step_frac * (hi - lo))
                    .collect();
                let d = bounds.len();
                for _ in 0..self.refine_steps {
                    let trial = Matrix::from_fn(2 * d, d, |r, j| {
                        let k = r / 2;
                        if j != k {
                            return x[j];
                        }
                        let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
                        (x[j] + sign * steps[j]).clamp(bounds[j].0, bounds[j].1)
                    });
                    let tv = f(&trial)?;
                    let k = argmax_first(&tv);
                    if tv[k] > best {
                        best = tv[k];
                        x = trial.row(k).to_vec();
                    } else {
                        steps.iter_mut().for_each(|s| *s *= 0.5);
                    }
                }
                Ok((x, best))
            }
        }
    }

    /// Next query: the UCB maximizer under `post`.
    pub fn next_query(
        &self,
        post: &dyn Posterior,
        domain: &Domain,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>> {
        let f = |q: &Matrix| post.predict(q).map(|p| ucb(&p, self.beta));
        Ok(self.maximize(&f, domain, rng)?.0)
    }

    /// Predicted optimum: the maximizer of the posterior mean.
    pub fn predicted_optimum(
        &self,
        post: &dyn Posterior,
        domain: &Domain,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>> {
        let f = |q: &Matrix| post.predict(q).map(|p| p.mean);
        Ok(self.maximize(&f, domain, rng)?.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoStep {
    /// 1-based step index.
    pub t: usize,
    pub x: Vec<f64>,
    pub y: f64,
    /// Predicted optimum before observing `y`; absent for random search.
    pub x_hat: Option<Vec<f64>>,
    pub f_x_hat: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoTrace {
    pub steps: Vec<BoStep>,
    /// `f(x*)` from the task's optimum oracle.
    pub optimum: f64,
}

impl BoTrace {
    pub fn new(optimum: f64) -> Self {
        BoTrace {
            steps: Vec::new(),
            optimum,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `f(x*) − max_{t' ≤ t} f(x_t')`.
    pub fn simple_regrets(&self) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        self.steps
            .iter()
            .map(|s| {
                best = best.max(s.y);
                self.optimum - best
            })
            .collect()
    }

    /// `f(x*) − f(x̂*_t)`; `None` where no prediction was made.
    pub fn inference_regrets(&self) -> Vec<Option<f64>> {
        self.steps
            .iter()
            .map(|s| s.f_x_hat.map(|v| self.optimum - v))
            .collect()
    }

    pub fn dataset(&self) -> Result<TaskDataset> {
        let rows: Vec<&[f64]> = self.steps.iter().map(|s| s.x.as_slice()).collect();
        let dim = rows.first().map_or(0, |r| r.len());
        let x = if rows.is_empty() {
            Matrix::zeros(0, dim)
        } else {
            Matrix::from_rows(&rows)?
        };
        TaskDataset::new(x, self.steps.iter().map(|s| s.y).collect())
    }
}

/// `steps` rounds of GP-UCB on `task`. Observations are exact function
/// values. The predicted optimum of step `t` maximizes the posterior mean
/// given the first `t − 1` observations, the same posterior that picks
/// `x_t`.
pub fn bo_run(
    task: &dyn Task,
    model: &dyn Surrogate,
    steps: usize,
    acq: &AcqOptimizer,
    rng: &mut ChaCha8Rng,
) -> Result<BoTrace> {
    let domain = task.domain();
    let mut data = TaskDataset::empty(domain.dim());
    let mut trace = BoTrace::new(task.optimum().value);
    for t in 1..=steps {
        let post = model.condition(&data)?;
        let x = acq.next_query(post.as_ref(), domain, rng)?;
        let x_hat = acq.predicted_optimum(post.as_ref(), domain, rng)?;
        let y = task.evaluate(&x)?;
        let f_x_hat = task.evaluate(&x_hat)?;
        data.push(&x, y)?;
        trace.steps.push(BoStep {
            t,
            x,
            y,
            x_hat: Some(x_hat),
            f_x_hat: Some(f_x_hat),
        });
    }
    Ok(trace)
}

/// Uniform random queries; only simple regret is defined.
pub fn random_search_run(task: &dyn Task, steps: usize, rng: &mut ChaCha8Rng) -> Result<BoTrace> {
    let xs = task.domain().sample_uniform(rng, steps);
    let mut trace = BoTrace::new(task.optimum().value);
    for (i, x) in xs.row_iter().enumerate() {
        trace.steps.push(BoStep {
            t: i + 1,
            x: x.to_vec(),
            y: task.evaluate(x)?,
            x_hat: None,
            f_x_hat: None,
        });
    }
    Ok(trace)
}

/// Meta-training data: one `steps`-point vanilla GP-UCB trace on each of
/// `n` meta-training tasks.
pub fn collect_meta_data(
    env: &dyn Environment,
    n: usize,
    steps: usize,
    acq: &AcqOptimizer,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<TaskDataset>> {
    let vanilla = ScalarGpSurrogate::vanilla(&env.domain().bounds());
    (0..n)
        .map(|i| {
            let task = env.meta_train_task(i, rng)?;
            bo_run(task.as_ref(), &vanilla, steps, acq, rng)
                .and_then(|t| t.dataset())
                .map_err(|e| e.in_task(i))
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct LifelongResult {
    pub traces: Vec<BoTrace>,
    /// `R_{i,t}`: inference regret summed over every earlier step of every
    /// earlier run, one row per run.
    pub cumulative_inference_regret: Vec<Vec<f64>>,
    /// Simple regret at the last step of each run.
    pub final_simple_regret: Vec<f64>,
    /// Runs that fell back to the vanilla GP because meta-training failed.
    pub fallbacks: Vec<usize>,
}

/// Runs `n_runs` BO runs of `steps` steps on consecutive meta-test tasks.
/// Before run `i` the learner is meta-trained from scratch on the traces of
/// all earlier runs (plus `initial_bank`); with an empty bank the vanilla GP
/// is used. Meta-training run `i` uses seed `meta_seed + i`. Target
/// functions come from `task_rng` alone, so every learner given the same
/// `task_rng` faces the same sequence.
#[allow(clippy::too_many_arguments)]
pub fn lifelong_bo(
    env: &dyn Environment,
    learner: &Learner,
    n_runs: usize,
    steps: usize,
    acq: &AcqOptimizer,
    initial_bank: Vec<TaskDataset>,
    meta_seed: u64,
    task_rng: &mut ChaCha8Rng,
    bo_rng: &mut ChaCha8Rng,
) -> Result<LifelongResult> {
    let bounds = env.domain().bounds();
    let mut bank = initial_bank;
    let mut out = LifelongResult {
        traces: Vec::with_capacity(n_runs),
        cumulative_inference_regret: Vec::with_capacity(n_runs),
        final_simple_regret: Vec::with_capacity(n_runs),
        fallbacks: Vec::new(),
    };
    let mut running = 0.0;
    for run in 0..n_runs {
        let model = if bank.is_empty() || !learner.uses_meta_data() {
            Model::vanilla(&bounds)
        } else {
            match learner.fit(&bank, &bounds, meta_seed.wrapping_add(run as u64)) {
                Ok(m) => m,
                Err(e) => {
                    log::warn!("run {run}: meta-training failed ({e}); using the vanilla GP");
                    out.fallbacks.push(run);
                    Model::vanilla(&bounds)
                }
            }
        };
        let task = env.meta_test_task(run, task_rng)?;
        let trace = bo_run(task.as_ref(), &model, steps, acq, bo_rng)?;
        let cum: Vec<f64> = trace
            .inference_regrets()
            .into_iter()
            .map(|r| {
                running += r.unwrap_or(0.0);
                running
            })
            .collect();
        out.final_simple_regret
            .push(trace.simple_regrets().last().copied().unwrap_or(f64::NAN));
        out.cumulative_inference_regret.push(cum);
        bank.push(trace.dataset()?);
        out.traces.push(trace);
    }
    Ok(out)
}
