use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fpacoh::env::{by_name, HpoAlgorithm, SimulatedEnvironment, ENV_NAMES};
use fpacoh::runner::{
    aggregate, merge_tables, parse_override, run_experiment, tune, write_aggregate, ExperimentConfig, Preset,
};

#[derive(Parser)]
#[command(name = "fpacoh", version, about = "Meta-learned GP priors for Bayesian optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write per-seed results.
    Run(RunArgs),
    /// Pool results below one or more run directories.
    Aggregate {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Where series.csv and summary.csv go (default: the first directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Random search over meta-training hyper-parameters.
    Tune {
        #[command(flatten)]
        config: ConfigArgs,
        /// Number of sampled configurations.
        #[arg(long, default_value_t = 128)]
        budget: usize,
        /// Seed for sampling and validation tasks.
        #[arg(long, default_value_t = 0)]
        tune_seed: u64,
        /// Write the winning `[meta]` table here instead of stdout.
        #[arg(long)]
        write: Option<PathBuf>,
    },
    /// List environments with their default (n, T).
    ListEnvs,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Print the resolved config and exit.
    #[arg(long)]
    dry_run: bool,
}

/// Settings are layered: preset, then `--config`, then flags.
#[derive(Args)]
struct ConfigArgs {
    /// TOML config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Named preset applied beneath the file (`desk`).
    #[arg(long)]
    preset: Option<String>,
    /// calibration | offline_bo | lifelong_bo | supervised_eval
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    env: Option<String>,
    /// fpacoh | pacoh_map | learned_gp | vanilla | random_search
    #[arg(long)]
    learner: Option<String>,
    /// Comma-separated seeds or a range `a..b`.
    #[arg(long)]
    seeds: Option<String>,
    /// Meta-training tasks.
    #[arg(long)]
    n: Option<usize>,
    /// Points per meta-training task.
    #[arg(long)]
    t: Option<usize>,
    /// Output root.
    #[arg(long, env = "FPACOH_OUT")]
    out: Option<PathBuf>,
    /// Directory with HPO lookup tables.
    #[arg(long, env = "FPACOH_HPO_DIR")]
    hpo_dir: Option<PathBuf>,
    /// Worker threads for the seed pool.
    #[arg(long)]
    workers: Option<usize>,
    /// Any other field, e.g. `meta.kl_weight=0.3` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = spec.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        return Ok((a..b).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse().with_context(|| format!("bad seed `{s}`")))
        .collect()
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut over = toml::Table::new();
        let mut put = |k: &str, v: toml::Value| {
            over.insert(k.to_string(), v);
        };
        if let Some(v) = &self.kind {
            put("kind", v.clone().into());
        }
        if let Some(v) = &self.env {
            put("env", v.clone().into());
        }
        if let Some(v) = &self.learner {
            put("learner", v.clone().into());
        }
        if let Some(v) = &self.seeds {
            let seeds = parse_seeds(v)?;
            let seeds: Vec<toml::Value> = seeds
                .into_iter()
                .map(|s| i64::try_from(s).map(toml::Value::Integer))
                .collect::<std::result::Result<_, _>>()?;
            put("seeds", seeds.into());
        }
        for (k, v) in [("n", self.n), ("t", self.t), ("workers", self.workers)] {
            if let Some(v) = v {
                put(k, i64::try_from(v)?.into());
            }
        }
        if let Some(v) = &self.out {
            put("out_dir", v.display().to_string().into());
        }
        if let Some(v) = &self.hpo_dir {
            put("hpo_dir", v.display().to_string().into());
        }
        for s in &self.set {
            let table = parse_override(s)?;
            merge_tables(&mut over, table);
        }
        let preset = match &self.preset {
            Some(p) => Some(Preset::from_name(p).with_context(|| format!("unknown preset `{p}`"))?),
            None => None,
        };
        Ok(ExperimentConfig::from_layers(preset, self.config.as_deref(), over)?)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run(args) => {
            let cfg = args.config.resolve()?;
            if args.dry_run {
                print!("{}", cfg.to_toml());
                return Ok(ExitCode::SUCCESS);
            }
            log::info!("running {} over {} seed(s)", cfg.label(), cfg.seeds.len());
            let manifest = run_experiment(&cfg)?;
            for s in &manifest.seeds {
                match &s.error {
                    None => println!("seed {}: ok ({:.1}s) {}", s.seed, s.wall_seconds, s.dir.display()),
                    Some(e) => println!("seed {}: FAILED: {e}", s.seed),
                }
            }
            Ok(if manifest.all_succeeded() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Aggregate { dirs, out } => {
            let agg = aggregate(&dirs)?;
            let out = out.unwrap_or_else(|| dirs[0].clone());
            for p in write_aggregate(&agg, &out)? {
                println!("{}", p.display());
            }
            for row in &agg.summary {
                let s = &row.stat;
                println!(
                    "{:<34} n={:<3} mean={:.5} std={:.5} stderr={:.5} ci95=[{:.5}, {:.5}]",
                    row.metric, s.n, s.mean, s.std, s.stderr, s.ci_low, s.ci_high
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Tune {
            config,
            budget,
            tune_seed,
            write,
        } => {
            let cfg = config.resolve()?;
            let res = tune(&cfg, budget, tune_seed)?;
            for (i, s) in res.scores.iter().enumerate() {
                log::info!("candidate {i}: final simple {:.5}, late inference {:.5}", s[0], s[1]);
            }
            let mut table = toml::Table::new();
            table.insert("meta".into(), toml::Value::try_from(&res.best)?);
            let text = toml::to_string(&table)?;
            match write {
                Some(p) => std::fs::write(&p, text).with_context(|| p.display().to_string())?,
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ListEnvs => {
            for name in ENV_NAMES {
                let (n, t, dim) = match (SimulatedEnvironment::by_name(name), HpoAlgorithm::from_name(name)) {
                    (Some(_), _) => {
                        let env = by_name(name, None)?;
                        let (n, t) = env.defaults();
                        (n, t, env.domain().dim())
                    }
                    (None, Some(alg)) => {
                        let (n, t) = alg.defaults();
                        (n, t, alg.dim())
                    }
                    (None, None) => bail!("environment `{name}` is not registered"),
                };
                println!("{name:<18} dim={dim:<2} n={n:<3} T={t}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
