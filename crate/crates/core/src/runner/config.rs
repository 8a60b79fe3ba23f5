use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bo::AcqOptimizer;
use crate::env::{Environment, ENV_NAMES};
use crate::error::{Error, Result};
use crate::learner::Learner;
use crate::meta::{MetaTrainConfig, PacohMapConfig};

/// Learner name for uniform random queries (offline BO only).
pub const RANDOM_SEARCH: &str = "random_search";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Calibration,
    OfflineBo,
    LifelongBo,
    SupervisedEval,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::Calibration,
        ExperimentKind::OfflineBo,
        ExperimentKind::LifelongBo,
        ExperimentKind::SupervisedEval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Calibration => "calibration",
            ExperimentKind::OfflineBo => "offline_bo",
            ExperimentKind::LifelongBo => "lifelong_bo",
            ExperimentKind::SupervisedEval => "supervised_eval",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub env: String,
    pub learner: String,
    /// Meta-training tasks; the environment default when absent.
    #[serde(default)]
    pub n: Option<usize>,
    /// Points per meta-training task; the environment default when absent.
    #[serde(default)]
    pub t: Option<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Test tasks per seed in offline BO.
    #[serde(default = "default_test_tasks")]
    pub test_tasks: usize,
    /// BO steps per run; `t` when absent.
    #[serde(default)]
    pub bo_steps: Option<usize>,
    #[serde(default = "default_lifelong_runs")]
    pub lifelong_runs: usize,
    #[serde(default)]
    pub meta: MetaTrainConfig,
    /// Weight-prior variance of the parameter-space baseline.
    #[serde(default = "default_prior_variance")]
    pub prior_variance: f64,
    #[serde(default)]
    pub acquisition: AcqOptimizer,
    #[serde(default)]
    pub hpo_dir: Option<PathBuf>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Worker threads for the seed pool; all cores when absent.
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_test_tasks() -> usize {
    1
}
fn default_lifelong_runs() -> usize {
    10
}
fn default_prior_variance() -> f64 {
    PacohMapConfig::default().prior_variance
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Named bundles of settings applied beneath the config file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Small seed and task counts that finish on a laptop.
    Desk,
}

impl Preset {
    pub fn from_name(name: &str) -> Option<Self> {
        (name == "desk").then_some(Preset::Desk)
    }

    fn table(self, kind: Option<ExperimentKind>, env: Option<&str>) -> toml::Table {
        let mut t = toml::Table::new();
        let five = matches!(kind, Some(ExperimentKind::Calibration | ExperimentKind::LifelongBo));
        let seeds: Vec<toml::Value> = (0..if five { 5 } else { 3 }).map(toml::Value::Integer).collect();
        t.insert("seeds".into(), seeds.into());
        t.insert("test_tasks".into(), 5.into());
        t.insert("lifelong_runs".into(), 5.into());
        let eval = matches!(
            kind,
            Some(ExperimentKind::Calibration | ExperimentKind::SupervisedEval)
        );
        let nt = match env {
            Some("mixture_1d") if eval => Some((10, 10)),
            Some("random_branin") if eval => Some((10, 20)),
            _ => None,
        };
        if kind == Some(ExperimentKind::LifelongBo) {
            t.insert("t".into(), 20.into());
        }
        if let Some((n, tt)) = nt {
            t.insert("n".into(), n.into());
            t.insert("t".into(), tt.into());
        }
        if env == Some("mixture_1d") {
            let mut meta = toml::Table::new();
            meta.insert("iterations".into(), 2000.into());
            t.insert("meta".into(), meta.into());
        }
        t
    }
}

/// Recursively overlays `top` onto `base`; tables merge, other values
/// replace.
pub fn merge_tables(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge_tables(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl ExperimentConfig {
    /// Builds a config from a preset, a TOML file and overrides, later
    /// layers winning.
    pub fn from_layers(
        preset: Option<Preset>,
        file: Option<&Path>,
        overrides: toml::Table,
    ) -> Result<Self> {
        let mut table = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::config(p.display().to_string(), e.message().to_string()))?
            }
            None => toml::Table::new(),
        };
        merge_tables(&mut table, overrides);
        if let Some(preset) = preset {
            let kind = table
                .get("kind")
                .and_then(|v| v.as_str())
                .and_then(ExperimentKind::from_name);
            let env = table.get("env").and_then(|v| v.as_str());
            let mut base = preset.table(kind, env);
            merge_tables(&mut base, table);
            table = base;
        }
        Self::from_table(table)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table = text
            .parse::<toml::Table>()
            .map_err(|e| Error::config("<config>", e.message().to_string()))?;
        Self::from_table(table)
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: Self = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { "<config>".into() } else { path }, e.inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !ENV_NAMES.contains(&self.env.as_str()) {
            return Err(Error::config(
                "env",
                format!("unknown environment `{}` (known: {})", self.env, ENV_NAMES.join(", ")),
            ));
        }
        let random = self.learner == RANDOM_SEARCH;
        if !random && Learner::from_name(&self.learner).is_none() {
            return Err(Error::config(
                "learner",
                format!(
                    "unknown learner `{}` (known: {}, {RANDOM_SEARCH})",
                    self.learner,
                    Learner::NAMES.join(", ")
                ),
            ));
        }
        if random && self.kind != ExperimentKind::OfflineBo {
            return Err(Error::config(
                "learner",
                format!("{RANDOM_SEARCH} only supports offline_bo"),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "must not be empty"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::config("seeds", "must not repeat"));
        }
        for (field, v) in [
            ("n", self.n),
            ("t", self.t),
            ("bo_steps", self.bo_steps),
            ("workers", self.workers),
            ("test_tasks", Some(self.test_tasks)),
            ("lifelong_runs", Some(self.lifelong_runs)),
            ("acquisition.candidates", Some(self.acquisition.candidates)),
        ] {
            if v == Some(0) {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if !(self.prior_variance.is_finite() && self.prior_variance > 0.0) {
            return Err(Error::config("prior_variance", "must be positive"));
        }
        self.meta.validate().map_err(|e| match e {
            Error::Config { field, message } => Error::config(format!("meta.{field}"), message),
            e => e,
        })
    }

    /// `(n, T)` with environment defaults filled in.
    pub fn n_t(&self, env: &dyn Environment) -> (usize, usize) {
        let (n, t) = env.defaults();
        (self.n.unwrap_or(n), self.t.unwrap_or(t))
    }

    /// The configured learner; `None` for random search.
    pub fn learner(&self) -> Option<Learner> {
        Some(match Learner::from_name(&self.learner)? {
            Learner::Fpacoh(_) => Learner::Fpacoh(self.meta.clone()),
            Learner::PacohMap(_) => Learner::PacohMap(PacohMapConfig {
                base: self.meta.clone(),
                prior_variance: self.prior_variance,
            }),
            other => other,
        })
    }

    pub fn label(&self) -> String {
        format!("{}/{}/{}", self.kind.name(), self.env, self.learner)
    }
}

/// Parses `a.b.c=value` into a nested table. The value is read as TOML and
/// taken as a bare string when that fails.
pub fn parse_override(spec: &str) -> Result<toml::Table> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(spec, "override must look like key=value"))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(key, "empty key segment"));
    }
    let last = parts.pop().expect("split yields one part");
    let mut table = toml::Table::from_iter([(last.to_string(), value)]);
    while let Some(p) = parts.pop() {
        table = toml::Table::from_iter([(p.to_string(), toml::Value::Table(table))]);
    }
    Ok(table)
}
