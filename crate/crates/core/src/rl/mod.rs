//! Policy learning: featurization of raw observations, replay storage with
//! expert/agent provenance, a soft actor-critic agent over the shared
//! encoder, and the training loops for the extraction policy, the insertion
//! policy, and the supervised and residual baselines.
//!
//! All agents act in a normalized action space: the policy head lives on the
//! unit box and the environment adapters scale by the physical per-component
//! bounds. This keeps entropy targets and critic inputs comparable across
//! tasks regardless of the physical step limits.

use thiserror::Error;

pub mod buffer;
pub mod envs;
pub mod featurize;
pub mod policy;
pub mod sac;
pub mod train;

pub use buffer::{HybridBuffer, Source, StoredTransition};
pub use envs::{PegEnvAdapter, PointGoal, ResidualWrap, RlEnv, StepF};
pub use featurize::{Feat, Featurizer, POS_SCALE, ROT_SCALE};
pub use policy::{peg_meta, Policy, PolicyMeta, SacPolicy, SlPolicy};
pub use sac::{Losses, Sac, SacCfg};
pub use train::{
    collect_dataset, featurize_expert, resolve_objects, train_direct, train_pih, train_point_goal,
    train_pooh, train_residual, train_sl, CollectStats, PihOptions, Trained, TrainLog, TrainRow,
};

#[derive(Debug, Error)]
pub enum RlError {
    #[error("environment: {0}")]
    Env(#[from] crate::env::EnvError),
    #[error("tactile model: {0}")]
    Pca(#[from] crate::sensors::pca::PcaError),
    #[error("network: {0}")]
    Nn(#[from] crate::nn::NnError),
    #[error("action: {0}")]
    Action(#[from] crate::types::TypeError),
    #[error("object catalog: {0}")]
    Catalog(#[from] crate::env::CatalogError),
    #[error("dataset: {0}")]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error("expert store is empty; the trainer requires demonstrations")]
    EmptyExpert,
    #[error("replay store `{0}` is empty but the batch requests draws from it")]
    EmptyStore(&'static str),
    #[error("non-finite {what} at step {step}; training aborted")]
    NonFinite { step: usize, what: String },
    #[error("{what}: got {got}, want {want}")]
    Shape { what: &'static str, got: usize, want: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("policy file: {0}")]
    BadPolicy(String),
    #[error("training log: {0}")]
    BadLog(String),
}

/// Linear interpolation from `start` at step 0 to `end` at step `horizon`,
/// constant afterwards. A zero horizon is already at the end.
#[derive(Debug, Clone, Copy)]
pub struct LinearSchedule {
    start: f64,
    end: f64,
    horizon: usize,
}

impl LinearSchedule {
    pub fn new(start: f64, end: f64, horizon: usize) -> LinearSchedule {
        LinearSchedule { start, end, horizon }
    }

    pub fn constant(v: f64) -> LinearSchedule {
        LinearSchedule { start: v, end: v, horizon: 0 }
    }

    pub fn at(&self, t: usize) -> f64 {
        if self.horizon == 0 || t >= self.horizon {
            return self.end;
        }
        let frac = t as f64 / self.horizon as f64;
        self.start + (self.end - self.start) * frac
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_hits_both_endpoints_and_is_monotone() {
        let s = LinearSchedule::new(0.3, 0.0, 1000);
        assert_eq!(s.at(0), 0.3);
        assert_eq!(s.at(1000), 0.0);
        assert_eq!(s.at(2000), 0.0);
        let mut prev = f64::INFINITY;
        for t in 0..=1000 {
            let v = s.at(t);
            assert!(v <= prev, "schedule increased at {t}");
            prev = v;
        }
    }

    #[test]
    fn constant_schedule_ignores_time() {
        let s = LinearSchedule::constant(0.05);
        assert_eq!(s.at(0), 0.05);
        assert_eq!(s.at(123_456), 0.05);
    }
}
