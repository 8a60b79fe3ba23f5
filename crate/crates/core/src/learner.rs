//! Uniform handle over the model families a BO run can use.

use serde::{Deserialize, Serialize};

use crate::data::TaskDataset;
use crate::error::Result;
use crate::gp::{GpPrior, Posterior, ScalarGpSurrogate, Surrogate};
use crate::meta::{
    meta_train_fpacoh, meta_train_learned_gp, meta_train_pacoh_map, MetaTrainConfig, PacohMapConfig,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Learner {
    Fpacoh(MetaTrainConfig),
    PacohMap(PacohMapConfig),
    LearnedGp,
    Vanilla,
}

impl Learner {
    pub const NAMES: [&'static str; 4] = ["fpacoh", "pacoh_map", "learned_gp", "vanilla"];

    /// Learner with default hyper-parameters.
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "fpacoh" => Some(Learner::Fpacoh(MetaTrainConfig::default())),
            "pacoh_map" => Some(Learner::PacohMap(PacohMapConfig::default())),
            "learned_gp" => Some(Learner::LearnedGp),
            "vanilla" => Some(Learner::Vanilla),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Learner::Fpacoh(_) => "fpacoh",
            Learner::PacohMap(_) => "pacoh_map",
            Learner::LearnedGp => "learned_gp",
            Learner::Vanilla => "vanilla",
        }
    }

    pub fn uses_meta_data(&self) -> bool {
        !matches!(self, Learner::Vanilla)
    }

    /// Meta-trains on `tasks` (ignored by the vanilla GP). `bounds` is the
    /// raw domain box; `seed` replaces the seed in the learner's config.
    pub fn fit(&self, tasks: &[TaskDataset], bounds: &[(f64, f64)], seed: u64) -> Result<Model> {
        Ok(match self {
            Learner::Fpacoh(cfg) => {
                let cfg = MetaTrainConfig { seed, ..cfg.clone() };
                let r = meta_train_fpacoh(tasks, bounds, &cfg)?;
                Model::Prior {
                    prior: r.prior,
                    loss_trace: r.loss_trace,
                }
            }
            Learner::PacohMap(cfg) => {
                let mut cfg = cfg.clone();
                cfg.base.seed = seed;
                let r = meta_train_pacoh_map(tasks, &cfg)?;
                Model::Prior {
                    prior: r.prior,
                    loss_trace: r.loss_trace,
                }
            }
            Learner::LearnedGp => Model::Scalar(meta_train_learned_gp(tasks)?),
            Learner::Vanilla => Model::vanilla(bounds),
        })
    }
}

/// A fitted model ready to be conditioned on task data.
#[derive(Clone, Debug)]
pub enum Model {
    Prior { prior: GpPrior, loss_trace: Vec<f64> },
    Scalar(ScalarGpSurrogate),
}

impl Model {
    pub fn vanilla(bounds: &[(f64, f64)]) -> Self {
        Model::Scalar(ScalarGpSurrogate::vanilla(bounds))
    }

    pub fn loss_trace(&self) -> Option<&[f64]> {
        match self {
            Model::Prior { loss_trace, .. } => Some(loss_trace),
            Model::Scalar(_) => None,
        }
    }
}

impl Surrogate for Model {
    fn condition<'a>(&'a self, data: &TaskDataset) -> Result<Box<dyn Posterior + 'a>> {
        match self {
            Model::Prior { prior, .. } => prior.condition(data),
            Model::Scalar(s) => s.condition(data),
        }
    }
}
