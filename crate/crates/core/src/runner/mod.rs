//! Experiment configuration, orchestration and result files.
//!
//! A run writes `<out>/<kind>/<env>/<learner>/seed<k>/` per seed, holding
//! `trace.csv` (BO kinds), `calibration.csv` (evaluation kinds),
//! `metrics.json`, `manifest.json` and, for meta-learned priors,
//! `prior.json` and `loss.csv`.

mod aggregate;
mod config;
mod tune;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bo::{bo_run, collect_meta_data, lifelong_bo, random_search_run, BoTrace};
use crate::env::{by_name, Environment};
use crate::error::{Error, Result};
use crate::learner::Model;
use crate::metrics::{evaluate_learner, protocol_data, EvalProtocol, EvalSummary};
use crate::rng::{meta_seed, stream, Stream};

pub use aggregate::{aggregate, mean_ci, write_aggregate, Aggregate, SeriesRow, Stat, SummaryRow};
pub use config::{merge_tables, parse_override, ExperimentConfig, ExperimentKind, Preset, RANDOM_SEARCH};
pub use tune::{sample_config, select_by_average_rank, tune, TuneResult};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Outcome of one seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub dir: PathBuf,
    /// Files written into `dir`, by name.
    pub files: Vec<String>,
    pub wall_seconds: f64,
    /// Set when the seed failed; its directory may be incomplete.
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub code_version: String,
    pub seeds: Vec<SeedRecord>,
    pub wall_seconds: f64,
}

impl RunManifest {
    pub fn all_succeeded(&self) -> bool {
        self.seeds.iter().all(|s| s.error.is_none())
    }
}

/// Contents of `metrics.json`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub kind: String,
    /// Scalar summaries that `aggregate` averages over seeds.
    pub scalars: BTreeMap<String, f64>,
    /// One entry per test task (offline BO, evaluation) or per run
    /// (lifelong BO).
    pub per_task: Vec<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fallbacks: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationCurve>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub levels: Vec<f64>,
    pub freqs: Vec<f64>,
    pub coverage: Vec<f64>,
}

/// Directory of one seed's results.
pub fn seed_dir(config: &ExperimentConfig, seed: u64) -> PathBuf {
    cell_dir(config).join(format!("seed{seed}"))
}

fn cell_dir(config: &ExperimentConfig) -> PathBuf {
    config
        .out_dir
        .join(config.kind.name())
        .join(&config.env)
        .join(&config.learner)
}

/// Validates `config`, runs every seed (in parallel, failures isolated)
/// and writes the run manifest next to the seed directories.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunManifest> {
    config.validate()?;
    let env = by_name(&config.env, config.hpo_dir.as_deref())?;
    let start = Instant::now();
    let run_all = || -> Vec<SeedRecord> {
        config
            .seeds
            .par_iter()
            .map(|&seed| run_seed(config, env.as_ref(), seed))
            .collect()
    };
    let seeds = match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::config("workers", e.to_string()))?
            .install(run_all),
        None => run_all(),
    };
    let manifest = RunManifest {
        config: config.clone(),
        code_version: CODE_VERSION.to_string(),
        seeds,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    let dir = cell_dir(config);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

fn run_seed(config: &ExperimentConfig, env: &dyn Environment, seed: u64) -> SeedRecord {
    let dir = seed_dir(config, seed);
    let start = Instant::now();
    let mut files = Vec::new();
    let result = fs::create_dir_all(&dir)
        .map_err(Error::from)
        .and_then(|_| run_seed_inner(config, env, seed, &dir, &mut files));
    if let Err(e) = &result {
        log::error!("{} seed {seed} failed: {e}", config.label());
    }
    let record = SeedRecord {
        seed,
        dir: dir.clone(),
        files,
        wall_seconds: start.elapsed().as_secs_f64(),
        error: result.err().map(|e| e.to_string()),
    };
    // A seed manifest that cannot be written is reported through the run
    // manifest instead.
    if let Ok(json) = serde_json::to_string_pretty(&record) {
        let _ = fs::write(dir.join("manifest.json"), json);
    }
    record
}

fn run_seed_inner(
    config: &ExperimentConfig,
    env: &dyn Environment,
    seed: u64,
    dir: &Path,
    files: &mut Vec<String>,
) -> Result<()> {
    let (n, t) = config.n_t(env);
    let metrics = match config.kind {
        ExperimentKind::OfflineBo => {
            let steps = config.bo_steps.unwrap_or(t);
            let mut test_rng = stream(seed, Stream::TestTasks);
            let mut bo_rng = stream(seed, Stream::Bo);
            let model = match config.learner() {
                Some(learner) => {
                    let meta = if learner.uses_meta_data() {
                        let mut rng = stream(seed, Stream::DataCollection);
                        collect_meta_data(env, n, t, &config.acquisition, &mut rng)?
                    } else {
                        Vec::new()
                    };
                    let model = learner.fit(&meta, &env.domain().bounds(), meta_seed(seed))?;
                    write_model(&model, dir, files)?;
                    Some(model)
                }
                None => None,
            };
            let mut traces = Vec::with_capacity(config.test_tasks);
            for i in 0..config.test_tasks {
                let task = env.meta_test_task(i, &mut test_rng)?;
                let trace = match &model {
                    Some(m) => bo_run(task.as_ref(), m, steps, &config.acquisition, &mut bo_rng),
                    None => random_search_run(task.as_ref(), steps, &mut bo_rng),
                }
                .map_err(|e| e.in_task(i))?;
                traces.push(trace);
            }
            write_trace(&dir.join("trace.csv"), &traces, false)?;
            files.push("trace.csv".into());
            offline_metrics(&traces)
        }
        ExperimentKind::LifelongBo => {
            let learner = config.learner().expect("validated");
            let steps = config.bo_steps.unwrap_or(t);
            let res = lifelong_bo(
                env,
                &learner,
                config.lifelong_runs,
                steps,
                &config.acquisition,
                Vec::new(),
                meta_seed(seed),
                &mut stream(seed, Stream::TestTasks),
                &mut stream(seed, Stream::Bo),
            )?;
            write_trace(&dir.join("trace.csv"), &res.traces, true)?;
            files.push("trace.csv".into());
            let mut m = SeedMetrics {
                kind: config.kind.name().into(),
                fallbacks: res.fallbacks.clone(),
                ..Default::default()
            };
            for (i, (r, cum)) in res
                .final_simple_regret
                .iter()
                .zip(&res.cumulative_inference_regret)
                .enumerate()
            {
                m.per_task.push(BTreeMap::from([
                    ("run".into(), i as f64),
                    ("final_simple_regret".into(), *r),
                    ("cumulative_inference_regret".into(), cum.last().copied().unwrap_or(0.0)),
                ]));
            }
            let cum_end = res
                .cumulative_inference_regret
                .last()
                .and_then(|c| c.last())
                .copied()
                .unwrap_or(0.0);
            m.scalars.insert("cumulative_inference_regret".into(), cum_end);
            if let (Some(first), Some(last)) =
                (res.final_simple_regret.first(), res.final_simple_regret.last())
            {
                m.scalars.insert("first_run_final_simple_regret".into(), *first);
                m.scalars.insert("last_run_final_simple_regret".into(), *last);
            }
            m
        }
        ExperimentKind::Calibration | ExperimentKind::SupervisedEval => {
            let learner = config.learner().expect("validated");
            let protocol = if config.kind == ExperimentKind::Calibration {
                EvalProtocol::calibration(n, t)
            } else {
                EvalProtocol::supervised(n, t)
            };
            let data = protocol_data(env, &protocol, &config.acquisition, seed)?;
            let (model, summary) = evaluate_learner(env, &learner, &data, seed)?;
            write_model(&model, dir, files)?;
            write_calibration(&dir.join("calibration.csv"), &summary)?;
            files.push("calibration.csv".into());
            eval_metrics(config, &summary)
        }
    };
    fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&metrics)?)?;
    files.push("metrics.json".into());
    Ok(())
}

fn write_model(model: &Model, dir: &Path, files: &mut Vec<String>) -> Result<()> {
    if let Model::Prior { prior, loss_trace } = model {
        prior.save_json(&dir.join("prior.json"))?;
        files.push("prior.json".into());
        let mut w = csv::Writer::from_path(dir.join("loss.csv"))?;
        w.write_record(["iteration", "loss"])?;
        for (i, l) in loss_trace.iter().enumerate() {
            w.write_record([i.to_string(), l.to_string()])?;
        }
        w.flush()?;
        files.push("loss.csv".into());
    }
    Ok(())
}

/// Writes `run,t,x0..,y,simple_regret,inference_regret,cumulative_inference_regret`.
/// The cumulative column restarts with each run unless `carry` is set.
/// Missing inference regrets (random search) are written as empty fields.
pub fn write_trace(path: &Path, traces: &[BoTrace], carry: bool) -> Result<()> {
    let dim = traces
        .iter()
        .find_map(|t| t.steps.first().map(|s| s.x.len()))
        .unwrap_or(0);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["run".to_string(), "t".to_string()];
    header.extend((0..dim).map(|j| format!("x{j}")));
    header.extend(
        ["y", "simple_regret", "inference_regret", "cumulative_inference_regret"].map(String::from),
    );
    w.write_record(&header)?;
    let mut cum = 0.0;
    for (run, trace) in traces.iter().enumerate() {
        if !carry {
            cum = 0.0;
        }
        let simple = trace.simple_regrets();
        let inference = trace.inference_regrets();
        for ((step, r), ir) in trace.steps.iter().zip(simple).zip(inference) {
            let mut rec = vec![run.to_string(), step.t.to_string()];
            rec.extend(step.x.iter().map(f64::to_string));
            rec.push(step.y.to_string());
            rec.push(r.to_string());
            match ir {
                Some(v) => {
                    cum += v;
                    rec.push(v.to_string());
                    rec.push(cum.to_string());
                }
                None => rec.extend([String::new(), String::new()]),
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_calibration(path: &Path, s: &EvalSummary) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["level", "freq", "coverage"])?;
    for ((q, f), c) in s.levels.iter().zip(&s.freqs).zip(&s.coverage) {
        w.write_record([q.to_string(), f.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn offline_metrics(traces: &[BoTrace]) -> SeedMetrics {
    let mut m = SeedMetrics {
        kind: ExperimentKind::OfflineBo.name().into(),
        ..Default::default()
    };
    let mut simple = Vec::new();
    let mut inference = Vec::new();
    for (i, tr) in traces.iter().enumerate() {
        let mut row = BTreeMap::from([("task".to_string(), i as f64)]);
        if let Some(r) = tr.simple_regrets().last() {
            row.insert("final_simple_regret".into(), *r);
            simple.push(*r);
        }
        if let Some(Some(r)) = tr.inference_regrets().last() {
            row.insert("final_inference_regret".into(), *r);
            inference.push(*r);
        }
        m.per_task.push(row);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    if !simple.is_empty() {
        m.scalars.insert("final_simple_regret".into(), mean(&simple));
    }
    if !inference.is_empty() {
        m.scalars.insert("final_inference_regret".into(), mean(&inference));
    }
    m
}

fn eval_metrics(config: &ExperimentConfig, s: &EvalSummary) -> SeedMetrics {
    SeedMetrics {
        kind: config.kind.name().into(),
        scalars: BTreeMap::from([
            ("log_likelihood".into(), s.log_likelihood),
            ("calib_err".into(), s.calib_err),
        ]),
        per_task: s
            .per_task
            .iter()
            .map(|e| {
                BTreeMap::from([
                    ("log_likelihood".into(), e.log_likelihood),
                    ("calib_err".into(), e.calibration.calib_err),
                ])
            })
            .collect(),
        fallbacks: Vec::new(),
        calibration: Some(CalibrationCurve {
            levels: s.levels.clone(),
            freqs: s.freqs.clone(),
            coverage: s.coverage.clone(),
        }),
    }
}
