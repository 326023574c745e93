//! Losses and their analytic gradients with respect to the base embedding
//! tables.
//!
//! Every loss here comes in two forms: a convenience function returning the
//! value with dense gradients, and a crate-internal `*_accumulate` variant
//! that adds `scale * gradient` into caller-owned buffers. [`total_loss`]
//! composes the accumulating forms and pulls the per-behavior cotangents back
//! through [`crate::graph::propagate_adjoint`].

mod bpr;
mod fusion;
mod orm;
mod rrm;
mod total;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::{ItemId, UserId};
use crate::error::{Error, Result};

pub use bpr::{bpr_loss, bpr_value, log_sigmoid, sigmoid, BprOutput};
pub use fusion::{fuse, fuse_adjoint};
pub use orm::{irm_v1_penalty, irm_v2_penalty, orm_loss, IrmEnvironment, IrmPenalty};
pub use rrm::{rrm_loss, RrmOutput};
pub use total::{main_loss, total_loss, GradientBuffer, LossBreakdown, MainOutput};
pub(crate) use total::{total_loss_weighted, PathWeights};

/// Invariance penalty filling the λ2 slot of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IrmVariant {
    /// Variance of per-behavior risks.
    #[default]
    Rex,
    /// Squared gradient of each risk w.r.t. a score multiplier at 1.
    IrmV1,
    /// Same penalty with the multiplier permanently fixed at 1.
    IrmV2,
}

/// Which behaviors enter the risk variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OrmScope {
    /// Population variance over every behavior.
    #[default]
    AllBehaviors,
    /// Squared deviations of auxiliary risks only, normalized by
    /// `|B| - 1`, around the all-behavior mean.
    AuxOnly,
}

/// Denominator of the contrastive term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RrmDenominator {
    /// Positive plus in-batch negatives (bounded below).
    #[default]
    WithPositive,
    /// In-batch negatives only.
    Literal,
}

macro_rules! string_enum {
    ($ty:ty { $($name:literal => $variant:expr),+ $(,)? }) => {
        impl std::str::FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($ty), " '{}'"), other
                    ))),
                }
            }
        }

        impl std::fmt::Display for $ty {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                $(if *self == $variant { return f.write_str($name); })+
                unreachable!()
            }
        }
    };
}

string_enum!(IrmVariant { "rex" => IrmVariant::Rex, "irm_v1" => IrmVariant::IrmV1, "irm_v2" => IrmVariant::IrmV2 });
string_enum!(OrmScope { "all_behaviors" => OrmScope::AllBehaviors, "aux_only" => OrmScope::AuxOnly });
string_enum!(RrmDenominator { "with_positive" => RrmDenominator::WithPositive, "literal" => RrmDenominator::Literal });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
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
    pub seed: u64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            dim: 64,
            layers: 2,
            tau: 0.2,
            lambda1: 0.1,
            lambda2: 0.1,
            lambda_reg: 1e-4,
            irm_variant: IrmVariant::Rex,
            orm_scope: OrmScope::AllBehaviors,
            rrm_denominator: RrmDenominator::WithPositive,
            lr: 1e-3,
            batch_size: 1024,
            max_epochs: 200,
            patience: 10,
            seed: 2024,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.dim == 0 {
            return bad("dim must be >= 1".into());
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be > 0, got {}", self.tau));
        }
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda_reg", self.lambda_reg),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.patience == 0 {
            return bad("patience must be >= 1".into());
        }
        Ok(())
    }
}

/// Trainable parameters: the base user and item tables.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub users: Array2<f64>,
    pub items: Array2<f64>,
    pub hp: Hyperparameters,
}

impl ModelState {
    pub fn new(users: Array2<f64>, items: Array2<f64>, hp: Hyperparameters) -> Result<Self> {
        if users.ncols() != hp.dim || items.ncols() != hp.dim {
            return Err(Error::Shape {
                context: "ModelState::new",
                expected: (users.nrows(), hp.dim),
                actual: users.dim(),
            });
        }
        Ok(Self { users, items, hp })
    }

    pub fn num_parameters(&self) -> usize {
        self.users.len() + self.items.len()
    }

    pub fn squared_norm(&self) -> f64 {
        self.users.iter().chain(self.items.iter()).map(|v| v * v).sum()
    }
}

/// A BPR training triplet: `user` prefers `pos` over `neg`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub user: UserId,
    pub pos: ItemId,
    pub neg: ItemId,
}

impl Triplet {
    pub fn new(user: UserId, pos: ItemId, neg: ItemId) -> Self {
        Self { user, pos, neg }
    }
}

/// Triplets for one step: one list per behavior (manifest order) plus the
/// target-behavior list for the fused main loss.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TripletBatch {
    pub per_behavior: Vec<Vec<Triplet>>,
    pub main: Vec<Triplet>,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += alpha * x;
    }
}
