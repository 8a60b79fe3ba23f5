//! Calibration error, test log-likelihood, and the meta-test evaluation
//! protocols built on them.

use serde::Serialize;
use statrs::function::erf::erf;

use crate::bo::{collect_meta_data, AcqOptimizer};
use crate::data::TaskDataset;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::gp::{Predictive, Surrogate};
use crate::learner::{Learner, Model};
use crate::linalg::normal_logpdf;
use crate::rng::{meta_seed, stream, Stream};

/// Number of confidence levels in the calibration error.
pub const CALIBRATION_LEVELS: usize = 20;

/// `q_h = h / 21`, `h = 1..=20`.
pub fn calibration_levels() -> Vec<f64> {
    (1..=CALIBRATION_LEVELS)
        .map(|h| h as f64 / (CALIBRATION_LEVELS + 1) as f64)
        .collect()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub levels: Vec<f64>,
    /// `q̂_h`: fraction of points whose predictive CDF value is ≤ `q_h`.
    pub freqs: Vec<f64>,
    pub calib_err: f64,
    /// `F̂(y_j | x_j)` per test point.
    pub cdf: Vec<f64>,
}

impl CalibrationReport {
    /// Fraction of points inside the central `α`-interval for each level.
    pub fn coverage(&self) -> Vec<f64> {
        coverage_curve(&self.cdf, &self.levels)
    }
}

fn check_pred(pred: &Predictive, y: &[f64]) -> Result<()> {
    if pred.mean.len() != y.len() || pred.std.len() != y.len() {
        return Err(Error::dims(format!(
            "{} predictions for {} targets",
            pred.mean.len(),
            y.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::EmptyData("no test points".into()));
    }
    if let Some(i) = pred.std.iter().position(|s| !(*s > 0.0)) {
        return Err(Error::DegenerateVariance(i));
    }
    Ok(())
}

/// Root-mean-square gap between the confidence levels and the empirical
/// frequencies of the Gaussian predictive CDF.
pub fn calibration_error(pred: &Predictive, y: &[f64]) -> Result<CalibrationReport> {
    check_pred(pred, y)?;
    let cdf: Vec<f64> = y
        .iter()
        .zip(pred.mean.iter().zip(&pred.std))
        .map(|(y, (m, s))| normal_cdf((y - m) / s))
        .collect();
    let levels = calibration_levels();
    let m = cdf.len() as f64;
    let freqs: Vec<f64> = levels
        .iter()
        .map(|q| cdf.iter().filter(|&&f| f <= *q).count() as f64 / m)
        .collect();
    let msq = levels
        .iter()
        .zip(&freqs)
        .map(|(q, f)| (f - q).powi(2))
        .sum::<f64>()
        / levels.len() as f64;
    Ok(CalibrationReport {
        levels,
        freqs,
        calib_err: msq.sqrt(),
        cdf,
    })
}

/// For each level `α`, the fraction of CDF values inside the central
/// interval, i.e. with `|2F − 1| ≤ α`. A calibrated predictor tracks the
/// diagonal; under-confidence lies above it.
pub fn coverage_curve(cdf: &[f64], levels: &[f64]) -> Vec<f64> {
    let m = cdf.len() as f64;
    levels
        .iter()
        .map(|a| cdf.iter().filter(|&&f| (2.0 * f - 1.0).abs() <= *a).count() as f64 / m)
        .collect()
}

/// Mean Gaussian predictive log-density of the targets.
pub fn test_log_likelihood(pred: &Predictive, y: &[f64]) -> Result<f64> {
    check_pred(pred, y)?;
    let total: f64 = y
        .iter()
        .zip(pred.mean.iter().zip(&pred.std))
        .map(|(y, (m, s))| normal_logpdf(*y, *m, s * s))
        .sum();
    Ok(total / y.len() as f64)
}

/// Metrics of one model on one held-out task.
#[derive(Clone, Debug, Serialize)]
pub struct TaskEval {
    pub log_likelihood: f64,
    pub calibration: CalibrationReport,
}

pub fn evaluate_split(model: &dyn Surrogate, train: &TaskDataset, test: &TaskDataset) -> Result<TaskEval> {
    let pred = model.condition(train)?.predict(&test.x)?;
    Ok(TaskEval {
        log_likelihood: test_log_likelihood(&pred, &test.y)?,
        calibration: calibration_error(&pred, &test.y)?,
    })
}

/// Averages over meta-test tasks.
#[derive(Clone, Debug, Serialize)]
pub struct EvalSummary {
    pub log_likelihood: f64,
    pub calib_err: f64,
    pub levels: Vec<f64>,
    /// Mean `q̂_h` per level.
    pub freqs: Vec<f64>,
    /// Mean central-interval coverage per level.
    pub coverage: Vec<f64>,
    pub per_task: Vec<TaskEval>,
}

impl EvalSummary {
    pub fn from_tasks(per_task: Vec<TaskEval>) -> Result<Self> {
        if per_task.is_empty() {
            return Err(Error::EmptyData("no evaluation tasks".into()));
        }
        let k = per_task.len() as f64;
        let levels = calibration_levels();
        let mut freqs = vec![0.0; levels.len()];
        let mut coverage = vec![0.0; levels.len()];
        for t in &per_task {
            for (a, b) in freqs.iter_mut().zip(&t.calibration.freqs) {
                *a += b / k;
            }
            for (a, b) in coverage.iter_mut().zip(t.calibration.coverage()) {
                *a += b / k;
            }
        }
        Ok(EvalSummary {
            log_likelihood: per_task.iter().map(|t| t.log_likelihood).sum::<f64>() / k,
            calib_err: per_task.iter().map(|t| t.calibration.calib_err).sum::<f64>() / k,
            levels,
            freqs,
            coverage,
            per_task,
        })
    }
}

/// Sizes of a supervised meta-test protocol.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalProtocol {
    /// Meta-training tasks, each a GP-UCB trace of `meta_points` steps.
    pub meta_tasks: usize,
    pub meta_points: usize,
    pub test_tasks: usize,
    /// Uniform context points given to the model on each test task.
    pub context_points: usize,
    /// Uniform held-out points per test task.
    pub test_points: usize,
}

impl EvalProtocol {
    /// Half of `n` tasks for meta-training, the other half for testing with
    /// `T` uniform points split evenly into context and test.
    pub fn supervised(n: usize, t: usize) -> Self {
        EvalProtocol {
            meta_tasks: n.div_ceil(2),
            meta_points: t,
            test_tasks: (n / 2).max(1),
            context_points: t / 2,
            test_points: (t - t / 2).max(1),
        }
    }

    /// Meta-train on `n` tasks and test calibration on fresh tasks with a
    /// small context set and a dense test set.
    pub fn calibration(n: usize, t: usize) -> Self {
        EvalProtocol {
            meta_tasks: n,
            meta_points: t,
            test_tasks: 10,
            context_points: 8,
            test_points: 200,
        }
    }
}

/// Meta-train data and held-out splits of one protocol cell.
pub struct ProtocolData {
    pub meta: Vec<TaskDataset>,
    pub splits: Vec<(TaskDataset, TaskDataset)>,
}

/// Draws the meta-training traces and held-out tasks for `seed`; every
/// learner evaluated with the same seed sees the same data.
pub fn protocol_data(
    env: &dyn Environment,
    protocol: &EvalProtocol,
    acq: &AcqOptimizer,
    seed: u64,
) -> Result<ProtocolData> {
    let mut data_rng = stream(seed, Stream::DataCollection);
    let meta = collect_meta_data(env, protocol.meta_tasks, protocol.meta_points, acq, &mut data_rng)?;
    let mut test_rng = stream(seed, Stream::TestTasks);
    let mut splits = Vec::with_capacity(protocol.test_tasks);
    for i in 0..protocol.test_tasks {
        let task = env.meta_test_task(i, &mut test_rng)?;
        let total = protocol.context_points + protocol.test_points;
        let x = task.domain().sample_uniform(&mut test_rng, total);
        let y = x
            .row_iter()
            .map(|r| task.evaluate(r))
            .collect::<Result<Vec<_>>>()?;
        let data = TaskDataset::new(x, y)?;
        splits.push(data.split_at(protocol.context_points));
    }
    Ok(ProtocolData { meta, splits })
}

/// Fits `learner` on the protocol's meta-data and evaluates it on every
/// held-out split.
pub fn evaluate_learner(
    env: &dyn Environment,
    learner: &Learner,
    data: &ProtocolData,
    seed: u64,
) -> Result<(Model, EvalSummary)> {
    let model = learner.fit(&data.meta, &env.domain().bounds(), meta_seed(seed))?;
    let per_task = data
        .splits
        .iter()
        .enumerate()
        .map(|(i, (train, test))| evaluate_split(&model, train, test).map_err(|e| e.in_task(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok((model, EvalSummary::from_tasks(per_task)?))
}

/// Supervised evaluation: half of `n` GP-UCB tasks for meta-training, the
/// other half held out with `T` uniform points split 50/50.
pub fn supervised_eval(
    env: &dyn Environment,
    learner: &Learner,
    n: usize,
    t: usize,
    acq: &AcqOptimizer,
    seed: u64,
) -> Result<EvalSummary> {
    let protocol = EvalProtocol::supervised(n, t);
    let data = protocol_data(env, &protocol, acq, seed)?;
    Ok(evaluate_learner(env, learner, &data, seed)?.1)
}
