//! Acceptance suite. Prints one PASS/FAIL line per criterion. With
//! `ACCEPTANCE_STRICT=1` in the environment it exits non-zero when any
//! criterion fails.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use fpacoh::autodiff::finite_difference_gradient;
use fpacoh::bo::{bo_run, AcqOptimizer};
use fpacoh::env::{
    by_name, sample_branin_task, BraninParams, HartmannParams, HpoAlgorithm, SimulatedTask, Task,
};
use fpacoh::gp::{gp_posterior, kernel_matrix, GpPrior, HyperPriorGp, Predictive, ScalarGpSurrogate, Standardizer};
use fpacoh::learner::Learner;
use fpacoh::linalg::{kl_mvn, mvn_logpdf, mvn_sample, Matrix, Mvn};
use fpacoh::meta::{fpacoh_objective, sample_measurement_set, MetaTrainConfig, PacohMapConfig};
use fpacoh::metrics::{calibration_error, calibration_levels, supervised_eval};
use fpacoh::nn::{MlpSpec, PriorParams};
use fpacoh::optim::AdamW;
use fpacoh::runner::{run_experiment, ExperimentConfig, Preset, SeedMetrics};
use fpacoh::TaskDataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

type Check = Result<(bool, String), String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn random_prior(rng: &mut ChaCha8Rng, dim: usize, width: usize) -> GpPrior {
    let ms = MlpSpec::new(dim, 1).with_hidden(3, width);
    let fs = MlpSpec::new(dim, 2).with_hidden(3, width);
    let mut params = PriorParams::init(ms, fs, rng);
    let scalars: [f64; 3] = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-3.0..-1.0)];
    params.set_log_scalars(scalars[0], scalars[1], scalars[2]);
    GpPrior::new(params, Standardizer::identity(dim)).expect("valid prior")
}

fn random_task(rng: &mut ChaCha8Rng, dim: usize, t: usize) -> TaskDataset {
    let x = Matrix::from_fn(t, dim, |_, _| rng.random_range(-2.0..2.0));
    let phase: f64 = rng.random_range(-1.0..1.0);
    let y = x
        .row_iter()
        .map(|r| r.iter().map(|v| (v + phase).sin()).sum::<f64>() + 0.1 * rng.random::<f64>())
        .collect();
    TaskDataset::new(x, y).unwrap()
}

fn gradient_check() -> Check {
    let (worst, plain) = (0..20u64)
        .into_par_iter()
        .map(|inst| -> Result<(f64, f64), String> {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + inst);
            let dim = 1 + (inst as usize % 2);
            let prior = random_prior(&mut rng, dim, 8);
            let tasks: Vec<TaskDataset> = (0..2).map(|_| random_task(&mut rng, dim, 5)).collect();
            let bounds = vec![(-2.0, 2.0); dim];
            let msets: Vec<Matrix> = tasks
                .iter()
                .map(|t| {
                    let m = sample_measurement_set(t, &bounds, &mut rng).unwrap();
                    // three task inputs and three uniform points
                    m.select_rows(&[0, 1, 2, 5, 6, 7])
                })
                .collect();
            let kappa = 10f64.powf(rng.random_range(-3.0..0.0));
            let hp = HyperPriorGp::default();
            let (_, g) = fpacoh_objective(&prior, &tasks, &msets, &hp, 2, kappa).map_err(err)?;
            let central = |h: f64| {
                finite_difference_gradient(prior.params.values(), h, |v| {
                    let mut p = prior.clone();
                    p.params.values_mut().copy_from_slice(v);
                    Ok(fpacoh_objective(&p, &tasks, &msets, &hp, 2, kappa)?.0)
                })
                .map_err(err)
            };
            // Richardson combination of two central differences: truncation
            // error O(h^4) without the roundoff blow-up of a tiny step.
            let (coarse, fine) = (central(1e-3)?, central(5e-4)?);
            let fd: Vec<f64> = coarse.iter().zip(&fine).map(|(c, f)| (4.0 * f - c) / 3.0).collect();
            let plain = central(1e-5)?;
            let worst = |reference: &[f64]| {
                g.iter()
                    .zip(reference)
                    .filter(|(_, b)| b.abs() > 1e-6)
                    .map(|(a, b)| (a - b).abs() / b.abs())
                    .fold(0.0, f64::max)
            };
            Ok((worst(&fd), worst(&plain)))
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (c, d)| (f64::max(a, c), f64::max(b, d)));
    Ok((
        worst < 1e-3,
        format!("max rel err {worst:.2e} over 20 instances (limit 1e-3); single-step h=1e-5 differences give {plain:.2e}"),
    ))
}

/// Gauss-Jordan inverse with partial pivoting.
fn direct_inverse(a: &Matrix) -> Matrix {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = a.row(i).to_vec();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        let d = m[c][c];
        m[c].iter_mut().for_each(|v| *v /= d);
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                let pivot = m[c].clone();
                m[r].iter_mut().zip(&pivot).for_each(|(v, p)| *v -= f * p);
            }
        }
    }
    Matrix::from_fn(n, n, |i, j| m[i][n + j])
}

fn posterior_oracle() -> Check {
    let mut worst: f64 = 0.0;
    for inst in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + inst);
        let dim = 1 + inst as usize % 3;
        let t = rng.random_range(1..=20);
        let prior = random_prior(&mut rng, dim, 8);
        let train = random_task(&mut rng, dim, t);
        let query = Matrix::from_fn(7, dim, |_, _| rng.random_range(-2.5..2.5));
        let post = gp_posterior(&prior, &train, &query).map_err(err)?;

        let kxx = kernel_matrix(&prior, &train.x, &train.x).map_err(err)?.add_diagonal(prior.noise_var());
        let kxq = kernel_matrix(&prior, &train.x, &query).map_err(err)?;
        let kqq = kernel_matrix(&prior, &query, &query).map_err(err)?;
        let inv = direct_inverse(&kxx);
        let mx = prior.mean(&train.x).map_err(err)?;
        let mq = prior.mean(&query).map_err(err)?;
        let resid: Vec<f64> = train.y.iter().zip(&mx).map(|(y, m)| y - m).collect();
        let alpha = inv.matvec(&resid).map_err(err)?;
        let w = inv.matmul(&kxq).map_err(err)?;
        for j in 0..query.rows() {
            let mean = mq[j] + (0..t).map(|i| kxq[(i, j)] * alpha[i]).sum::<f64>();
            let var = kqq[(j, j)] - (0..t).map(|i| kxq[(i, j)] * w[(i, j)]).sum::<f64>();
            worst = worst
                .max((mean - post.mean()[j]).abs())
                .max((var - post.cov()[(j, j)]).abs());
        }
    }
    Ok((worst < 1e-6, format!("max abs diff {worst:.2e} over 50 instances (limit 1e-6)")))
}

fn random_mvn(rng: &mut ChaCha8Rng, dim: usize) -> Mvn {
    let a = Matrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal) / (dim as f64).sqrt());
    let cov = a.matmul_t(&a).unwrap().add_diagonal(0.3);
    let mean = (0..dim).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
    Mvn::new(mean, cov).unwrap()
}

fn kl_monte_carlo() -> Check {
    let rows = (0..10u64)
        .into_par_iter()
        .map(|pair| -> Result<(f64, f64), String> {
            let mut rng = ChaCha8Rng::seed_from_u64(3000 + pair);
            let p = random_mvn(&mut rng, 5);
            let q = random_mvn(&mut rng, 5);
            let exact = kl_mvn(&p, &q).map_err(err)?;
            let mut acc = 0.0;
            let mut eps = [0.0; 5];
            for _ in 0..1_000_000 {
                eps.iter_mut().for_each(|e| *e = rng.sample(StandardNormal));
                let x = mvn_sample(&p, &eps).map_err(err)?;
                acc += mvn_logpdf(&p, &x).map_err(err)? - mvn_logpdf(&q, &x).map_err(err)?;
            }
            Ok((exact, acc / 1e6))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let worst = rows
        .iter()
        .map(|(e, m)| (e - m).abs() / e.abs())
        .fold(0.0, f64::max);
    let range = rows.iter().map(|r| r.0).fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    Ok((
        worst < 0.01,
        format!("max rel err {worst:.2e} (limit 1e-2), KL in [{:.2}, {:.2}]", range.0, range.1),
    ))
}

fn mid_levels() -> Vec<(usize, f64)> {
    calibration_levels()
        .into_iter()
        .enumerate()
        .filter(|(_, q)| (0.3..=0.7).contains(q))
        .collect()
}

fn calibration_ordering() -> Check {
    let env = by_name("mixture_1d", None).map_err(err)?;
    let meta = MetaTrainConfig {
        iterations: 2000,
        ..MetaTrainConfig::default()
    };
    let fpacoh = Learner::Fpacoh(meta.clone());
    let pacoh = Learner::PacohMap(PacohMapConfig {
        base: meta,
        ..PacohMapConfig::default()
    });
    let acq = AcqOptimizer::default();
    let mut wins = 0;
    let mut pairs = Vec::new();
    let mut vanilla_cov = vec![0.0; calibration_levels().len()];
    for seed in 0..5u64 {
        let f = supervised_eval(env.as_ref(), &fpacoh, 10, 10, &acq, seed).map_err(err)?;
        let p = supervised_eval(env.as_ref(), &pacoh, 10, 10, &acq, seed).map_err(err)?;
        let v = supervised_eval(env.as_ref(), &Learner::Vanilla, 10, 10, &acq, seed).map_err(err)?;
        if f.calib_err < p.calib_err {
            wins += 1;
        }
        pairs.push(format!("{:.3}/{:.3}", f.calib_err, p.calib_err));
        vanilla_cov.iter_mut().zip(&v.coverage).for_each(|(a, b)| *a += b / 5.0);
    }
    let mids = mid_levels();
    let above = mids.iter().all(|&(h, q)| vanilla_cov[h] > q);
    let cov: Vec<String> = mids
        .iter()
        .map(|&(h, q)| format!("{q:.2}:{:.2}", vanilla_cov[h]))
        .collect();
    Ok((
        wins >= 4 && above,
        format!(
            "F-PACOH<PACOH-MAP in {wins}/5 seeds (need 4) [{}]; vanilla mean coverage level:freq {} -> {}",
            pairs.join(" "),
            cov.join(" "),
            if above { "above diagonal" } else { "NOT above diagonal (over-confident)" }
        ),
    ))
}

fn branin_calibration() -> Check {
    let env = by_name("random_branin", None).map_err(err)?;
    let learner = Learner::Fpacoh(MetaTrainConfig::default());
    let acq = AcqOptimizer::default();
    let errs = (0..3u64)
        .map(|seed| supervised_eval(env.as_ref(), &learner, 10, 20, &acq, seed).map(|s| s.calib_err))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    let mean = errs.iter().sum::<f64>() / 3.0;
    Ok((
        mean <= 0.15,
        format!(
            "mean calib-err {mean:.4} (limit 0.15), per seed {:.4} {:.4} {:.4}",
            errs[0], errs[1], errs[2]
        ),
    ))
}

fn desk_config(kind: &str, env: &str, learner: &str, out: &Path) -> ExperimentConfig {
    let mut over = toml::Table::new();
    over.insert("kind".into(), kind.into());
    over.insert("env".into(), env.into());
    over.insert("learner".into(), learner.into());
    over.insert("out_dir".into(), out.display().to_string().into());
    ExperimentConfig::from_layers(Some(Preset::Desk), None, over).expect("valid config")
}

fn run_ok(cfg: &ExperimentConfig) -> Result<fpacoh::runner::RunManifest, String> {
    let m = run_experiment(cfg).map_err(err)?;
    match m.seeds.iter().find_map(|s| s.error.clone()) {
        Some(e) => Err(format!("{}: {e}", cfg.label())),
        None => Ok(m),
    }
}

/// `(run, t, simple_regret)` rows of a trace file.
fn read_simple_regrets(path: &Path) -> Result<Vec<(usize, usize, f64)>, String> {
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    let h = r.headers().map_err(err)?.clone();
    let col = |n: &str| h.iter().position(|c| c == n).ok_or(format!("no column {n}"));
    let (cr, ct, cs) = (col("run")?, col("t")?, col("simple_regret")?);
    r.records()
        .map(|rec| {
            let rec = rec.map_err(err)?;
            Ok((
                rec[cr].parse().map_err(err)?,
                rec[ct].parse().map_err(err)?,
                rec[cs].parse().map_err(err)?,
            ))
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn regret_at(rows: &[(usize, usize, f64)], t: usize) -> Vec<f64> {
    rows.iter().filter(|r| r.1 == t).map(|r| r.2).collect()
}

fn offline_bo(out: &Path) -> Check {
    let at = |learner: &str, t: usize| -> Result<Vec<f64>, String> {
        let cfg = desk_config("offline_bo", "random_branin", learner, out);
        if !m_path(&cfg).exists() {
            run_ok(&cfg)?;
        }
        let mut all = Vec::new();
        for &s in &cfg.seeds {
            let rows = read_simple_regrets(&fpacoh::runner::seed_dir(&cfg, s).join("trace.csv"))?;
            all.extend(regret_at(&rows, t));
        }
        Ok(all)
    };
    let f20 = at("fpacoh", 20)?;
    let f5 = at("fpacoh", 5)?;
    let v20 = at("vanilla", 20)?;
    let (mf20, mf5, mv20) = (median(f20.clone()), median(f5), median(v20.clone()));
    Ok((
        mf20 < mv20 && mf20 < mf5,
        format!(
            "median simple regret over {} runs: F-PACOH t=5 {mf5:.4}, t=20 {mf20:.4}; vanilla t=20 {mv20:.4}",
            f20.len()
        ),
    ))
}

fn m_path(cfg: &ExperimentConfig) -> std::path::PathBuf {
    fpacoh::runner::seed_dir(cfg, cfg.seeds[0])
        .parent()
        .unwrap()
        .join("manifest.json")
}

fn read_metrics(cfg: &ExperimentConfig, seed: u64) -> Result<SeedMetrics, String> {
    let p = fpacoh::runner::seed_dir(cfg, seed).join("metrics.json");
    serde_json::from_str(&std::fs::read_to_string(p).map_err(err)?).map_err(err)
}

fn lifelong(out: &Path) -> Check {
    let f_cfg = desk_config("lifelong_bo", "mixture_1d", "fpacoh", out);
    let v_cfg = desk_config("lifelong_bo", "mixture_1d", "vanilla", out);
    run_ok(&f_cfg)?;
    run_ok(&v_cfg)?;
    let mut improved = 0;
    let (mut f_cum, mut v_cum) = (0.0, 0.0);
    let mut fallbacks = 0;
    let k = f_cfg.seeds.len() as f64;
    for &s in &f_cfg.seeds {
        let f = read_metrics(&f_cfg, s)?;
        let v = read_metrics(&v_cfg, s)?;
        let first = f.scalars["first_run_final_simple_regret"];
        let last = f.scalars["last_run_final_simple_regret"];
        if last <= first {
            improved += 1;
        }
        fallbacks += f.fallbacks.len();
        f_cum += f.scalars["cumulative_inference_regret"] / k;
        v_cum += v.scalars["cumulative_inference_regret"] / k;
    }
    Ok((
        improved >= 3 && f_cum <= v_cum,
        format!(
            "run-5 regret ≤ run-1 in {improved}/{} sequences (need 3); mean cumulative inference regret F-PACOH {f_cum:.3} vs vanilla {v_cum:.3}; {fallbacks} fallbacks",
            f_cfg.seeds.len()
        ),
    ))
}

fn properties() -> Check {
    let mut notes = Vec::new();
    let mut ok = true;
    let mut check = |name: &str, pass: bool, note: String| {
        ok &= pass;
        notes.push(format!("{name} {} ({note})", if pass { "ok" } else { "FAILED" }));
    };

    // KL: non-negative, zero at identity
    let mut rng = ChaCha8Rng::seed_from_u64(4000);
    let mut min_kl = f64::INFINITY;
    let mut self_kl: f64 = 0.0;
    for _ in 0..200 {
        let dim = rng.random_range(1..6);
        let p = random_mvn(&mut rng, dim);
        let q = random_mvn(&mut rng, dim);
        min_kl = min_kl.min(kl_mvn(&p, &q).map_err(err)?);
        self_kl = self_kl.max(kl_mvn(&p, &p).map_err(err)?.abs());
    }
    check("kl", min_kl >= -1e-10 && self_kl < 1e-10, format!("min {min_kl:.2e}, |KL(p,p)| ≤ {self_kl:.1e}"));

    // regrets of a vanilla run on a random Branin task
    let task = sample_branin_task(&mut rng);
    let model = ScalarGpSurrogate::vanilla(&task.domain().bounds());
    let trace = bo_run(&task, &model, 15, &AcqOptimizer::default(), &mut rng).map_err(err)?;
    let simple = trace.simple_regrets();
    let monotone = simple.windows(2).all(|w| w[1] <= w[0]);
    let inf_min = trace.inference_regrets().into_iter().flatten().fold(f64::INFINITY, f64::min);
    check("regret", monotone && inf_min >= -1e-3, format!("min inference {inf_min:.2e}"));

    // measurement set of a 20-point task
    let data = random_task(&mut rng, 2, 20);
    let bounds = [(-2.0, 2.0), (-2.0, 2.0)];
    let m = sample_measurement_set(&data, &bounds, &mut rng).map_err(err)?;
    let from_task = (0..10).all(|r| data.x.row_iter().any(|x| x == m.row(r)));
    let inside = (10..20).all(|r| m.row(r).iter().all(|v| (-2.0..=2.0).contains(v)));
    check("mset", m.rows() == 20 && from_task && inside, format!("{} rows", m.rows()));

    // lookup-table transforms
    let mut worst: f64 = 0.0;
    for alg in HpoAlgorithm::ALL {
        for (k, name) in alg.columns().iter().enumerate() {
            let raws: Vec<f64> = if *name == "booster" {
                vec![-1.0, 1.0]
            } else {
                (0..50).map(|_| 10f64.powf(rng.random_range(-3.0..3.0))).collect()
            };
            for raw in raws {
                let back = alg.inverse_transform(k, alg.transform(k, raw));
                worst = worst.max((back - raw).abs() / raw.abs());
            }
        }
    }
    check("transforms", worst < 1e-9, format!("max rel round-trip err {worst:.1e}"));

    let hart = SimulatedTask::hartmann6(HartmannParams::canonical());
    let known = [0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573];
    let hv = hart.optimum().value;
    let hk = hart.value(&known);
    check(
        "hartmann6",
        (hv - 1.0).abs() < 1e-3 && (hk - 1.0).abs() < 1e-3,
        format!("oracle {hv:.5}, at known argmax {hk:.5}"),
    );

    let branin = SimulatedTask::branin(BraninParams::canonical());
    let bv = branin.optimum().value;
    check("branin", (bv + 0.397887).abs() < 1e-4, format!("oracle {bv:.6}"));

    // AdamW decay: with a zero gradient the step is pure decoupled decay
    let (lr, wd) = (0.01, 0.1);
    let mut opt = AdamW::new(3, lr, wd, 1.0);
    let mut p = vec![1.0, -2.0, 0.5];
    let before = p.clone();
    opt.step(&mut p, &[0.0; 3]).map_err(err)?;
    let dev = p
        .iter()
        .zip(&before)
        .map(|(a, b)| (a - b * (1.0 - lr * wd)).abs())
        .fold(0.0, f64::max);
    check("adamw", dev < 1e-15, format!("max dev from (1-αω)·φ {dev:.1e}"));

    // point mass at the predictive mean
    let levels = calibration_levels();
    let hand = (levels
        .iter()
        .map(|&q| if q < 0.5 { q * q } else { (1.0 - q) * (1.0 - q) })
        .sum::<f64>()
        / levels.len() as f64)
        .sqrt();
    let pred = Predictive {
        mean: vec![0.0; 100],
        std: vec![1.0; 100],
    };
    let got = calibration_error(&pred, &[0.0; 100]).map_err(err)?.calib_err;
    check(
        "calib hand case",
        (got - hand).abs() < 1e-4,
        format!("{got:.6} vs hand {hand:.6}; quoted 0.2958 differs from the hand value by {:.1e}", (0.2958 - hand).abs()),
    );
    Ok((ok, notes.join("; ")))
}

fn determinism(out: &Path) -> Check {
    let again = out.join("rerun");
    let mut compared = 0;
    for (kind, env, learner) in [
        ("offline_bo", "random_branin", "fpacoh"),
        ("offline_bo", "random_branin", "vanilla"),
        ("lifelong_bo", "mixture_1d", "fpacoh"),
    ] {
        let first = desk_config(kind, env, learner, out);
        let second = desk_config(kind, env, learner, &again);
        if !m_path(&first).exists() {
            run_ok(&first)?;
        }
        run_ok(&second)?;
        for &s in &first.seeds {
            let a = std::fs::read(fpacoh::runner::seed_dir(&first, s).join("trace.csv")).map_err(err)?;
            let b = std::fs::read(fpacoh::runner::seed_dir(&second, s).join("trace.csv")).map_err(err)?;
            if a != b {
                return Ok((false, format!("{kind}/{env}/{learner} seed {s}: traces differ")));
            }
            compared += 1;
        }
    }
    Ok((true, format!("{compared} trace files byte-identical across reruns")))
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temp dir");
    let out = dir.path().to_path_buf();
    type Run<'a> = Box<dyn FnOnce() -> Check + 'a>;
    let criteria: Vec<(u32, &str, f64, Run)> = vec![
        (1, "gradient vs finite differences", 120.0, Box::new(gradient_check)),
        (2, "posterior vs direct inverse", 30.0, Box::new(posterior_oracle)),
        (3, "closed-form KL vs Monte Carlo", 60.0, Box::new(kl_monte_carlo)),
        (4, "calibration ordering on mixture_1d", 900.0, Box::new(calibration_ordering)),
        (5, "F-PACOH calibration on random_branin", 1200.0, Box::new(branin_calibration)),
        (6, "offline BO on random_branin", 1800.0, Box::new(|| offline_bo(&out))),
        (7, "lifelong BO on mixture_1d", 2700.0, Box::new(|| lifelong(&out))),
        (8, "property checks", 300.0, Box::new(properties)),
        (9, "determinism of trace files", f64::INFINITY, Box::new(|| determinism(&out))),
    ];
    let mut passed = 0;
    let total = criteria.len();
    for (id, name, budget, run) in criteria {
        let start = Instant::now();
        let res = run();
        let secs = start.elapsed().as_secs_f64();
        let in_time = secs <= budget;
        let (pass, detail) = match res {
            Ok((p, d)) => (p && in_time, d),
            Err(e) => (false, format!("error: {e}")),
        };
        let budget = if budget.is_finite() { format!("{budget:.0}s") } else { "none".into() };
        println!(
            "criterion {id} [{}] {name}: {detail} ({secs:.1}s, budget {budget})",
            if pass { "PASS" } else { "FAIL" }
        );
        passed += pass as usize;
    }
    println!("acceptance: {passed}/{total} criteria passed");
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if passed == total || !strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
