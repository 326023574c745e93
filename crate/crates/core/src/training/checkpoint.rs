//! Versioned JSON checkpoint.
//!
//! Layout (all keys required):
//!
//! ```text
//! {
//!   "format": "rmbrec-checkpoint",
//!   "version": 1,
//!   "dataset_fingerprint": "<sha-256 hex of manifest and id maps>",
//!   "behaviors": ["view", "buy"],
//!   "target": "buy",
//!   "num_users": U, "num_items": I, "dim": d,
//!   "hyperparameters": { ... },
//!   "users": [U * d numbers, row-major],
//!   "items": [I * d numbers, row-major]
//! }
//! ```
//!
//! Numbers are written with shortest round-trip formatting, so a reload is
//! bit-exact.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::InteractionDataset;
use crate::error::{Error, Result};
use crate::objectives::{Hyperparameters, ModelState};

pub const CHECKPOINT_FORMAT: &str = "rmbrec-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub dataset_fingerprint: String,
    pub behaviors: Vec<String>,
    pub target: String,
    pub num_users: usize,
    pub num_items: usize,
    pub dim: usize,
    pub hyperparameters: Hyperparameters,
    pub users: Vec<f64>,
    pub items: Vec<f64>,
}

impl Checkpoint {
    /// Snapshot of `state` trained on `train`.
    pub fn new(state: &ModelState, train: &InteractionDataset) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            dataset_fingerprint: train.fingerprint(),
            behaviors: train.behaviors().to_vec(),
            target: train.target_name().to_string(),
            num_users: state.users.nrows(),
            num_items: state.items.nrows(),
            dim: state.hp.dim,
            hyperparameters: state.hp.clone(),
            users: state.users.iter().copied().collect(),
            items: state.items.iter().copied().collect(),
        }
    }

    pub fn to_state(&self) -> Result<ModelState> {
        let table = |name: &str, rows: usize, data: &[f64]| {
            Array2::from_shape_vec((rows, self.dim), data.to_vec()).map_err(|_| {
                Error::Checkpoint(format!(
                    "{name} has {} values, expected {rows} x {}",
                    data.len(),
                    self.dim
                ))
            })
        };
        let users = table("users", self.num_users, &self.users)?;
        let items = table("items", self.num_items, &self.items)?;
        ModelState::new(users, items, self.hyperparameters.clone())
    }

    /// Errors unless `ds` has the same manifest and id maps as the training
    /// data.
    pub fn check_compatible(&self, ds: &InteractionDataset) -> Result<()> {
        if ds.fingerprint() != self.dataset_fingerprint {
            return Err(Error::Checkpoint(
                "dataset fingerprint does not match the checkpoint".into(),
            ));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unexpected format '{}'", ckpt.format)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", ckpt.version)));
        }
        Ok(ckpt)
    }
}
