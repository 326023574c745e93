//! Robust multi-behavior recommendation.
//!
//! Per-behavior LightGCN encoders over a shared user/item universe, a
//! target-anchored contrastive alignment term, a cross-behavior invariance
//! penalty, equal-weight fusion for target prediction, full-ranking
//! evaluation, and the behavioral diagnostics and noise-injection tools used
//! to study robustness.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod graph;
pub mod objectives;
pub mod rng;
pub mod synthetic;
pub mod training;

pub use dataset::{DatasetManifest, InteractionDataset, InteractionRecord, SplitDataset};
pub use error::{Error, ErrorKind, Result};
pub use graph::{BehaviorEmbeddings, BehaviorGraph};
pub use objectives::{Hyperparameters, LossBreakdown, ModelState};
