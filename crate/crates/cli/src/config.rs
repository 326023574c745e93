//! Flat run configuration.
//!
//! Every key is optional in the file; missing keys take the library
//! defaults. Command-line flags override the file. The merged result is
//! written back as `config.toml` next to the outputs, and feeding that file
//! to the same command reproduces the run.
//!
//! ```toml
//! dataset = "data/planted"
//! out = "runs/full"
//! seed = 2024
//! dim = 64
//! layers = 2
//! tau = 0.2
//! lambda1 = 0.1
//! lambda2 = 0.1
//! lambda_reg = 0.0001
//! irm_variant = "rex"              # rex | irm_v1 | irm_v2
//! orm_scope = "all_behaviors"      # all_behaviors | aux_only
//! rrm_denominator = "with_positive" # with_positive | literal
//! lr = 0.001
//! batch_size = 1024
//! max_epochs = 200
//! patience = 10
//! eval_every = 5
//! ks = [5, 10, 20]
//! exclude_train = true
//! disable_rrm = false
//! disable_orm = false
//! drop_behaviors = []
//! record_timing = true
//! ratios = [0.1, 0.3, 0.5]         # sweep only
//! modes = ["add", "remove"]        # sweep only
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rmbrec::dataset::PerturbationMode;
use rmbrec::objectives::{IrmVariant, OrmScope, RrmDenominator};
use rmbrec::training::TrainConfig;
use rmbrec::{Error, Hyperparameters, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub dim: usize,
    pub layers: usize,
    pub tau: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda_reg: f64,
    pub irm_variant: IrmVariant,
    pub orm_scope: OrmScope,
    pub rrm_denominator: RrmDenominator,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub eval_every: usize,
    pub ks: Vec<usize>,
    pub exclude_train: bool,
    /// Forces `lambda1` to 0.
    pub disable_rrm: bool,
    /// Forces `lambda2` to 0.
    pub disable_orm: bool,
    /// Auxiliary behaviors removed before training.
    pub drop_behaviors: Vec<String>,
    pub record_timing: bool,
    pub ratios: Vec<f64>,
    pub modes: Vec<PerturbationMode>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let hp = Hyperparameters::default();
        let tc = TrainConfig::default();
        Self {
            dataset: None,
            out: None,
            seed: hp.seed,
            dim: hp.dim,
            layers: hp.layers,
            tau: hp.tau,
            lambda1: hp.lambda1,
            lambda2: hp.lambda2,
            lambda_reg: hp.lambda_reg,
            irm_variant: hp.irm_variant,
            orm_scope: hp.orm_scope,
            rrm_denominator: hp.rrm_denominator,
            lr: hp.lr,
            batch_size: hp.batch_size,
            max_epochs: hp.max_epochs,
            patience: hp.patience,
            eval_every: tc.eval_every,
            ks: tc.ks,
            exclude_train: tc.exclude_train,
            disable_rrm: false,
            disable_orm: false,
            drop_behaviors: Vec::new(),
            record_timing: tc.record_timing,
            ratios: vec![0.1, 0.3, 0.5],
            modes: vec![PerturbationMode::Add, PerturbationMode::Remove],
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies the ablation switches.
    pub fn hyperparameters(&self) -> Hyperparameters {
        Hyperparameters {
            dim: self.dim,
            layers: self.layers,
            tau: self.tau,
            lambda1: if self.disable_rrm { 0.0 } else { self.lambda1 },
            lambda2: if self.disable_orm { 0.0 } else { self.lambda2 },
            lambda_reg: self.lambda_reg,
            irm_variant: self.irm_variant,
            orm_scope: self.orm_scope,
            rrm_denominator: self.rrm_denominator,
            lr: self.lr,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed,
        }
    }

    pub fn train_config(&self, log_path: Option<PathBuf>) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            hp: self.hyperparameters(),
            eval_every: self.eval_every,
            ks: self.ks.clone(),
            exclude_train: self.exclude_train,
            log_path,
            record_timing: self.record_timing,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dataset(&self) -> Result<&Path> {
        self.dataset
            .as_deref()
            .ok_or_else(|| Error::Config("no dataset given (argument or `dataset` key)".into()))
    }

    pub fn out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::Config("no output directory given (--out or `out` key)".into()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Writes the effective configuration into the output directory.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        let path = dir.join("config.toml");
        fs::write(&path, self.to_toml()).map_err(|e| Error::io(path, e))
    }
}
