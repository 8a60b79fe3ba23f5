//! Meta-learning of GP priors from a collection of related tasks.
//!
//! * [`meta_train_fpacoh`]: neural GP prior regularized towards an SE
//!   hyper-prior in function space, through the KL divergence of finite
//!   marginals on random measurement sets.
//! * [`meta_train_pacoh_map`]: the same prior with a Gaussian weight-space
//!   penalty instead.
//! * [`meta_train_learned_gp`]: constant mean and SE kernel scalars fitted
//!   to the summed marginal likelihood.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::TaskDataset;
use crate::error::{Error, Result};
use crate::gp::{
    fit_standardizer, maximize_scalar_mll, GpPrior, HyperPriorGp, ScalarGpParams,
    ScalarGpSurrogate, Scaling, VanillaGp, VANILLA_BOUNDS,
};
use crate::linalg::{kl_mvn, Matrix, DEFAULT_JITTER};
use crate::nn::{MlpSpec, PriorParams};
use crate::optim::AdamW;

/// Points drawn from the task inputs in every measurement set.
pub const MSET_TASK_POINTS: usize = 10;
/// Points drawn uniformly from the domain in every measurement set.
pub const MSET_UNIFORM_POINTS: usize = 10;

/// Consecutive failed steps after which meta-training gives up.
pub const MAX_BAD_STEPS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaTrainConfig {
    pub lr: f64,
    pub lr_decay: f64,
    pub weight_decay: f64,
    pub task_batch: usize,
    pub iterations: usize,
    pub hyperprior_lengthscale: f64,
    pub kl_weight: f64,
    /// Output width of the feature network; `None` picks 2 for inputs of
    /// dimension ≤ 2 and 6 otherwise.
    pub feature_dim: Option<usize>,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub seed: u64,
}

impl Default for MetaTrainConfig {
    fn default() -> Self {
        MetaTrainConfig {
            lr: 1e-3,
            lr_decay: 0.97,
            weight_decay: 1e-4,
            task_batch: 4,
            iterations: 4000,
            hyperprior_lengthscale: 0.3,
            kl_weight: 0.1,
            feature_dim: None,
            hidden_layers: 3,
            hidden_width: 32,
            seed: 0,
        }
    }
}

impl MetaTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("lr_decay", self.lr_decay),
            ("hyperprior_lengthscale", self.hyperprior_lengthscale),
            ("kl_weight", self.kl_weight),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(field, format!("must be positive, got {v}")));
            }
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay", "must be non-negative"));
        }
        for (field, v) in [
            ("task_batch", self.task_batch),
            ("iterations", self.iterations),
            ("hidden_width", self.hidden_width),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if self.feature_dim == Some(0) {
            return Err(Error::config("feature_dim", "must be at least 1"));
        }
        Ok(())
    }

    pub fn feature_dim_for(&self, input_dim: usize) -> usize {
        self.feature_dim
            .unwrap_or(if input_dim <= 2 { 2 } else { 6 })
    }

    pub fn hyperprior(&self) -> HyperPriorGp {
        HyperPriorGp {
            lengthscale: self.hyperprior_lengthscale,
            ..HyperPriorGp::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PacohMapConfig {
    #[serde(flatten)]
    pub base: MetaTrainConfig,
    /// Variance of the zero-mean Gaussian hyper-prior over all weights.
    pub prior_variance: f64,
}

impl Default for PacohMapConfig {
    fn default() -> Self {
        PacohMapConfig {
            base: MetaTrainConfig::default(),
            prior_variance: 10.0,
        }
    }
}

/// Result of a meta-training run.
#[derive(Clone, Debug)]
pub struct MetaTrainResult {
    pub prior: GpPrior,
    /// Objective per iteration; NaN where the step failed.
    pub loss_trace: Vec<f64>,
}

/// `κ/√n + κ/(n·T)`, the per-task weight of the regularizer.
pub fn kl_weight(kappa: f64, n: usize, t: usize) -> f64 {
    let n = n as f64;
    kappa / n.sqrt() + kappa / (n * t as f64)
}

/// Up to ten inputs of `task` without replacement followed by ten uniform
/// points in `bounds`.
pub fn sample_measurement_set(
    task: &TaskDataset,
    bounds: &[(f64, f64)],
    rng: &mut ChaCha8Rng,
) -> Result<Matrix> {
    if task.is_empty() {
        return Err(Error::EmptyData("measurement set of an empty task".into()));
    }
    if task.dim() != bounds.len() {
        return Err(Error::dims(format!(
            "task is {}-dimensional, domain {}",
            task.dim(),
            bounds.len()
        )));
    }
    let k = task.len().min(MSET_TASK_POINTS);
    let idx = sample_indices(rng, task.len(), k).into_vec();
    let mut x = task.x.select_rows(&idx);
    for _ in 0..MSET_UNIFORM_POINTS {
        let row: Vec<f64> = bounds
            .iter()
            .map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
            .collect();
        x.push_row(&row)?;
    }
    Ok(x)
}

/// `KL(p_φ(h^X) ‖ ρ(h^X))` between the latent prior marginal and the
/// hyper-prior marginal at standardized inputs `x`.
pub fn functional_kl(prior: &GpPrior, hp: &HyperPriorGp, x: &Matrix) -> Result<f64> {
    kl_mvn(&prior.marginal(x)?, &hp.marginal(x)?)
}

/// Per-task value and gradient contributions, summed in task order so the
/// result does not depend on thread scheduling.
fn sum_task_terms(
    len: usize,
    n_params: usize,
    term: impl Fn(usize) -> Result<(f64, Vec<f64>)> + Sync,
) -> Result<(f64, Vec<f64>)> {
    let parts: Vec<Result<(f64, Vec<f64>)>> = (0..len)
        .into_par_iter()
        .map(|i| term(i).map_err(|e| e.in_task(i)))
        .collect();
    let mut value = 0.0;
    let mut grad = vec![0.0; n_params];
    for part in parts {
        let (v, g) = part?;
        value += v;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    Ok((value, grad))
}

fn check_batch(batch: &[TaskDataset]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyData("empty task batch".into()));
    }
    Ok(())
}

/// Mini-batch objective of F-PACOH-MAP on standardized data:
///
/// `J = (1/H) Σ_i [ −ln Z(D_i)/T_i + (κ/√n + κ/(n T_i))·KL(p_φ(h^{X_i}) ‖ ρ(h^{X_i})) ]`
///
/// Returns `J` and `∇_φ J`. Errors carry the index of the failing task.
pub fn fpacoh_objective(
    prior: &GpPrior,
    batch: &[TaskDataset],
    msets: &[Matrix],
    hp: &HyperPriorGp,
    n: usize,
    kappa: f64,
) -> Result<(f64, Vec<f64>)> {
    check_batch(batch)?;
    if msets.len() != batch.len() {
        return Err(Error::dims(format!(
            "{} measurement sets for {} tasks",
            msets.len(),
            batch.len()
        )));
    }
    let h = batch.len() as f64;
    let params = prior.params.values();
    sum_task_terms(batch.len(), params.len(), |i| {
        let data = &batch[i];
        let t = data.len();
        let mut tape = Tape::new(params);
        let mll = prior.record_mll(&mut tape, data)?;
        let nodes = prior.record(&mut tape, &msets[i])?;
        let target = hp.marginal(&msets[i])?;
        let kl = tape.kl_to_fixed(nodes.kernel, nodes.mean, &target, DEFAULT_JITTER)?;
        let a = tape.scale(mll, -1.0 / (h * t as f64));
        let b = tape.scale(kl, kl_weight(kappa, n, t) / h);
        let loss = tape.add(a, b)?;
        Ok((tape.scalar(loss), tape.backprop(loss)?))
    })
}

/// Mini-batch objective of PACOH-MAP on standardized data:
///
/// `J = (1/H) Σ_i [ −ln Z(D_i)/T_i + κ(1/√n + 1/(n T_i))·‖φ‖²/(2σ²) ]`
pub fn pacoh_map_objective(
    prior: &GpPrior,
    batch: &[TaskDataset],
    n: usize,
    kappa: f64,
    prior_variance: f64,
) -> Result<(f64, Vec<f64>)> {
    check_batch(batch)?;
    let h = batch.len() as f64;
    let params = prior.params.values();
    let (mut value, mut grad) = sum_task_terms(batch.len(), params.len(), |i| {
        let mut tape = Tape::new(params);
        let mll = prior.record_mll(&mut tape, &batch[i])?;
        let loss = tape.scale(mll, -1.0 / (h * batch[i].len() as f64));
        Ok((tape.scalar(loss), tape.backprop(loss)?))
    })?;
    let weight: f64 = batch
        .iter()
        .map(|d| kl_weight(kappa, n, d.len()))
        .sum::<f64>()
        / h;
    let sq: f64 = params.iter().map(|p| p * p).sum();
    value += weight * sq / (2.0 * prior_variance);
    for (g, p) in grad.iter_mut().zip(params) {
        *g += weight * p / prior_variance;
    }
    Ok((value, grad))
}

fn initial_prior(tasks: &[TaskDataset], cfg: &MetaTrainConfig, rng: &mut ChaCha8Rng) -> Result<GpPrior> {
    let standardizer = fit_standardizer(tasks)?;
    let dim = standardizer.dim();
    let mean_spec = MlpSpec::new(dim, 1).with_hidden(cfg.hidden_layers, cfg.hidden_width);
    let feature_spec = MlpSpec::new(dim, cfg.feature_dim_for(dim))
        .with_hidden(cfg.hidden_layers, cfg.hidden_width);
    mean_spec.validate()?;
    feature_spec.validate()?;
    GpPrior::new(PriorParams::init(mean_spec, feature_spec, rng), standardizer)
}

fn check_tasks(tasks: &[TaskDataset]) -> Result<()> {
    if tasks.is_empty() {
        return Err(Error::EmptyData("no meta-training tasks".into()));
    }
    if let Some(i) = tasks.iter().position(|t| t.is_empty()) {
        return Err(Error::EmptyData("meta-training task without observations".into()).in_task(i));
    }
    Ok(())
}

/// Shared AdamW loop: draws a task batch, evaluates `objective` on it and
/// updates the prior. Failed or non-finite steps are skipped; too many in a
/// row abort the run.
fn train_loop(
    tasks: &[TaskDataset],
    cfg: &MetaTrainConfig,
    objective: impl Fn(&GpPrior, &[usize], &[TaskDataset], &mut ChaCha8Rng) -> Result<(f64, Vec<f64>)>,
) -> Result<MetaTrainResult> {
    cfg.validate()?;
    check_tasks(tasks)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut prior = initial_prior(tasks, cfg, &mut rng)?;
    let std_tasks: Vec<TaskDataset> = tasks.iter().map(|t| prior.standardizer.standardize(t)).collect();
    let batch_size = cfg.task_batch.min(tasks.len());
    let mut opt = AdamW::new(prior.params.len(), cfg.lr, cfg.weight_decay, cfg.lr_decay);
    let mut loss_trace = Vec::with_capacity(cfg.iterations);
    let mut bad = 0;
    for it in 0..cfg.iterations {
        let idx = sample_indices(&mut rng, tasks.len(), batch_size).into_vec();
        let batch: Vec<TaskDataset> = idx.iter().map(|&i| std_tasks[i].clone()).collect();
        let step = objective(&prior, &idx, &batch, &mut rng).and_then(|(loss, grad)| {
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("objective is {loss}")));
            }
            opt.step(prior.params.values_mut(), &grad)?;
            Ok(loss)
        });
        match step {
            Ok(loss) => {
                bad = 0;
                loss_trace.push(loss);
            }
            Err(e) => {
                bad += 1;
                log::debug!("meta-training step {it} skipped: {e}");
                loss_trace.push(f64::NAN);
                if bad >= MAX_BAD_STEPS {
                    return Err(Error::Diverged(format!(
                        "{MAX_BAD_STEPS} consecutive failed steps ending at iteration {it}: {e}"
                    )));
                }
            }
        }
    }
    Ok(MetaTrainResult { prior, loss_trace })
}

/// Meta-trains a neural GP prior with the functional KL regularizer.
/// `bounds` is the raw-unit domain box used for the uniform half of each
/// measurement set.
pub fn meta_train_fpacoh(
    tasks: &[TaskDataset],
    bounds: &[(f64, f64)],
    cfg: &MetaTrainConfig,
) -> Result<MetaTrainResult> {
    let hp = cfg.hyperprior();
    let n = tasks.len();
    train_loop(tasks, cfg, |prior, idx, batch, rng| {
        let msets = idx
            .iter()
            .map(|&i| {
                sample_measurement_set(&tasks[i], bounds, rng)
                    .map(|m| prior.standardizer.standardize_x(&m))
                    .map_err(|e| e.in_task(i))
            })
            .collect::<Result<Vec<_>>>()?;
        fpacoh_objective(prior, batch, &msets, &hp, n, cfg.kl_weight)
    })
}

/// Meta-trains the same prior with a Gaussian penalty on its weights.
pub fn meta_train_pacoh_map(tasks: &[TaskDataset], cfg: &PacohMapConfig) -> Result<MetaTrainResult> {
    if !(cfg.prior_variance.is_finite() && cfg.prior_variance > 0.0) {
        return Err(Error::config("prior_variance", "must be positive"));
    }
    let n = tasks.len();
    train_loop(tasks, &cfg.base, |prior, _, batch, _| {
        pacoh_map_objective(prior, batch, n, cfg.base.kl_weight, cfg.prior_variance)
    })
}

const LEARNED_GP_STEPS: usize = 500;
const LEARNED_GP_LR: f64 = 0.05;

/// Fits a constant mean and SE kernel scalars to all tasks jointly. The
/// result scales data with the pooled meta-training moments and is not
/// refit per task. Falls back to the vanilla defaults if fitting fails.
pub fn meta_train_learned_gp(tasks: &[TaskDataset]) -> Result<ScalarGpSurrogate> {
    check_tasks(tasks)?;
    let standardizer = fit_standardizer(tasks)?;
    let std_tasks: Vec<TaskDataset> = tasks.iter().map(|t| standardizer.standardize(t)).collect();
    let init = VanillaGp {
        fit_hyperparameters: false,
        ..VanillaGp::default()
    };
    let (best, ll) = maximize_scalar_mll(
        ScalarGpParams::from_gp(&init),
        &std_tasks,
        true,
        LEARNED_GP_STEPS,
        LEARNED_GP_LR,
        &VANILLA_BOUNDS,
    );
    let gp = match ll {
        Some(_) => best.apply(&init),
        None => {
            log::warn!("learned GP fit failed; using vanilla defaults");
            init
        }
    };
    Ok(ScalarGpSurrogate {
        gp,
        scaling: Scaling::Fixed(standardizer),
    })
}
