//! Random search over meta-training hyper-parameters.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{ExperimentConfig, ExperimentKind};
use crate::bo::{bo_run, collect_meta_data, lifelong_bo};
use crate::env::{by_name, Environment};
use crate::error::{Error, Result};
use crate::learner::Learner;
use crate::meta::MetaTrainConfig;
use crate::rng::{meta_seed, stream, Stream};

/// Validation tasks per candidate.
pub const VALIDATION_TASKS: usize = 3;
/// Window of late steps whose inference regret is averaged (offline BO).
pub const OFFLINE_WINDOW: usize = 50;
/// Window of late steps per run whose inference regret is averaged
/// (lifelong BO).
pub const LIFELONG_WINDOW: usize = 5;

#[derive(Clone, Debug, Serialize)]
pub struct TuneResult {
    pub best: MetaTrainConfig,
    pub best_index: usize,
    pub candidates: Vec<MetaTrainConfig>,
    /// `[final simple regret, late inference regret]` per candidate; NaN
    /// when the candidate failed.
    pub scores: Vec<[f64; 2]>,
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp()
}

fn choice<T: Copy>(rng: &mut ChaCha8Rng, options: &[T]) -> T {
    options[rng.random_range(0..options.len())]
}

/// One draw from the search space; fields outside it are kept from `base`.
pub fn sample_config(base: &MetaTrainConfig, rng: &mut ChaCha8Rng) -> MetaTrainConfig {
    MetaTrainConfig {
        lr: log_uniform(rng, 1e-4, 5e-3),
        lr_decay: log_uniform(rng, 0.8, 1.0),
        weight_decay: log_uniform(rng, 1e-5, 0.1),
        task_batch: choice(rng, &[4, 10]),
        iterations: choice(rng, &[2000, 4000, 8000]),
        hyperprior_lengthscale: log_uniform(rng, 0.1, 1.0),
        kl_weight: log_uniform(rng, 1e-4, 0.5),
        feature_dim: Some(choice(rng, &[2, 6])),
        ..base.clone()
    }
}

/// 1-based ranks (lower value is better, ties share their mean rank, NaN
/// ranks last).
fn ranks(values: &[f64]) -> Vec<f64> {
    let key = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| key(values[a]).total_cmp(&key(values[b])));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && key(values[order[j + 1]]) == key(values[order[i]]) {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Index with the best average rank over both metrics; the first index
/// wins ties.
pub fn select_by_average_rank(scores: &[[f64; 2]]) -> usize {
    let r0 = ranks(&scores.iter().map(|s| s[0]).collect::<Vec<_>>());
    let r1 = ranks(&scores.iter().map(|s| s[1]).collect::<Vec<_>>());
    let mut best = 0;
    for i in 1..scores.len() {
        if r0[i] + r1[i] < r0[best] + r1[best] {
            best = i;
        }
    }
    best
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn late_mean(regrets: &[Option<f64>], window: usize) -> f64 {
    let tail: Vec<f64> = regrets[regrets.len().saturating_sub(window)..]
        .iter()
        .map(|r| r.unwrap_or(f64::NAN))
        .collect();
    mean(&tail)
}

/// Draws `budget` configurations around `config.meta`, scores each on
/// validation tasks and returns the one with the best average rank.
pub fn tune(config: &ExperimentConfig, budget: usize, seed: u64) -> Result<TuneResult> {
    config.validate()?;
    if budget == 0 {
        return Err(Error::config("budget", "must be at least 1"));
    }
    if !matches!(config.learner.as_str(), "fpacoh" | "pacoh_map") {
        return Err(Error::config("learner", "tuning needs fpacoh or pacoh_map"));
    }
    if !matches!(config.kind, ExperimentKind::OfflineBo | ExperimentKind::LifelongBo) {
        return Err(Error::config("kind", "tuning needs offline_bo or lifelong_bo"));
    }
    let env = by_name(&config.env, config.hpo_dir.as_deref())?;
    let mut rng = stream(seed, Stream::Tuning);
    let candidates: Vec<MetaTrainConfig> =
        (0..budget).map(|_| sample_config(&config.meta, &mut rng)).collect();
    let scores: Vec<[f64; 2]> = candidates
        .par_iter()
        .map(|meta| {
            let cfg = ExperimentConfig {
                meta: meta.clone(),
                ..config.clone()
            };
            score(&cfg, env.as_ref(), seed).unwrap_or_else(|e| {
                log::warn!("tuning candidate failed: {e}");
                [f64::NAN; 2]
            })
        })
        .collect();
    let best_index = select_by_average_rank(&scores);
    Ok(TuneResult {
        best: candidates[best_index].clone(),
        best_index,
        candidates,
        scores,
    })
}

fn score(config: &ExperimentConfig, env: &dyn Environment, seed: u64) -> Result<[f64; 2]> {
    let learner: Learner = config.learner().expect("validated");
    let (n, t) = config.n_t(env);
    let steps = config.bo_steps.unwrap_or(t);
    match config.kind {
        ExperimentKind::OfflineBo => {
            let meta = collect_meta_data(
                env,
                n,
                t,
                &config.acquisition,
                &mut stream(seed, Stream::DataCollection),
            )?;
            let model = learner.fit(&meta, &env.domain().bounds(), meta_seed(seed))?;
            // Validation tasks are extra draws from the training side, so
            // they never coincide with the test tasks.
            let mut rng = stream(seed, Stream::Evaluation);
            let mut simple = Vec::new();
            let mut inference = Vec::new();
            for i in 0..VALIDATION_TASKS {
                let task = env.meta_train_task(n + i, &mut rng)?;
                let trace = bo_run(task.as_ref(), &model, steps, &config.acquisition, &mut rng)?;
                simple.push(*trace.simple_regrets().last().expect("steps ≥ 1"));
                inference.push(late_mean(&trace.inference_regrets(), OFFLINE_WINDOW));
            }
            Ok([mean(&simple), mean(&inference)])
        }
        ExperimentKind::LifelongBo => {
            let res = lifelong_bo(
                env,
                &learner,
                config.lifelong_runs,
                steps,
                &config.acquisition,
                Vec::new(),
                meta_seed(seed),
                &mut stream(seed, Stream::Evaluation),
                &mut stream(seed, Stream::Tuning),
            )?;
            let late: Vec<f64> = res
                .traces
                .iter()
                .map(|t| late_mean(&t.inference_regrets(), LIFELONG_WINDOW))
                .collect();
            Ok([mean(&res.final_simple_regret), mean(&late)])
        }
        _ => unreachable!("checked by tune"),
    }
}
