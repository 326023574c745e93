use ndarray::{Array2, ArrayView2};
use serde::Serialize;

use super::bpr::{bpr_accumulate, require_triplets};
use super::fusion::{fuse, fuse_adjoint};
use super::orm::{irm_accumulate, orm_loss, IrmEnvironment};
use super::rrm::rrm_accumulate;
use super::{IrmVariant, ModelState, OrmScope, Triplet, TripletBatch};
use crate::error::{Error, Result};
use crate::graph::{propagate, propagate_adjoint, BehaviorGraph};

/// Scalar parts of one batch objective.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub behaviors: Vec<String>,
    /// BPR risk per behavior in manifest order; `None` when the behavior had
    /// no triplets in the batch.
    pub bpr_per_behavior: Vec<Option<f64>>,
    pub rrm: f64,
    pub orm: f64,
    /// Fused BPR plus `reg`.
    pub main: f64,
    pub reg: f64,
    pub total: f64,
    /// Set when fewer than two behaviors were sampled and the invariance
    /// term was left at 0.
    pub orm_skipped: bool,
}

impl LossBreakdown {
    pub fn recompose(&self, lambda1: f64, lambda2: f64) -> f64 {
        self.main + lambda1 * self.rrm + lambda2 * self.orm
    }
}

/// Gradient of the objective with respect to the base tables.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer {
    pub d_users: Array2<f64>,
    pub d_items: Array2<f64>,
}

impl GradientBuffer {
    pub fn zeros(num_users: usize, num_items: usize, dim: usize) -> Self {
        Self {
            d_users: Array2::zeros((num_users, dim)),
            d_items: Array2::zeros((num_items, dim)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MainOutput {
    /// Fused BPR plus `reg`.
    pub loss: f64,
    pub reg: f64,
    /// Gradient of the BPR part w.r.t. the fused embeddings. The regularizer
    /// contributes `2 λ_reg Θ` directly on the base tables.
    pub d_users: Array2<f64>,
    pub d_items: Array2<f64>,
}

fn regularizer(state: &ModelState) -> f64 {
    state.hp.lambda_reg * state.squared_norm()
}

/// Target-only BPR on fused scores plus `λ_reg (‖Zu‖² + ‖Zi‖²)`.
pub fn main_loss(
    fused_users: ArrayView2<f64>,
    fused_items: ArrayView2<f64>,
    triplets: &[Triplet],
    state: &ModelState,
) -> Result<MainOutput> {
    let mut d_users = Array2::zeros(fused_users.raw_dim());
    let mut d_items = Array2::zeros(fused_items.raw_dim());
    let bpr = bpr_accumulate(fused_users, fused_items, triplets, 1.0, &mut d_users, &mut d_items)
        .map_err(|e| rename(e, "main"))?;
    let reg = regularizer(state);
    Ok(MainOutput {
        loss: bpr + reg,
        reg,
        d_users,
        d_items,
    })
}

fn rename(e: Error, component: &'static str) -> Error {
    match e {
        Error::Objective { message, .. } => Error::Objective { component, message },
        other => other,
    }
}

/// Multipliers on each gradient path. The loss values are unaffected; only
/// what is accumulated into the buffer changes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct PathWeights {
    pub main: f64,
    pub rrm: f64,
    pub orm: f64,
}

impl PathWeights {
    pub const ALL: Self = Self {
        main: 1.0,
        rrm: 1.0,
        orm: 1.0,
    };
}

/// Forward pass over every behavior graph followed by the full backward
/// pass into the base tables.
///
/// `graphs` are in manifest order and `target` indexes the target graph.
/// Per-behavior BPR risks reach the objective only through the invariance
/// term.
pub fn total_loss(
    state: &ModelState,
    graphs: &[BehaviorGraph],
    target: usize,
    batch: &TripletBatch,
    batch_users: &[u32],
) -> Result<(LossBreakdown, GradientBuffer)> {
    total_loss_weighted(state, graphs, target, batch, batch_users, PathWeights::ALL)
}

pub(crate) fn total_loss_weighted(
    state: &ModelState,
    graphs: &[BehaviorGraph],
    target: usize,
    batch: &TripletBatch,
    batch_users: &[u32],
    paths: PathWeights,
) -> Result<(LossBreakdown, GradientBuffer)> {
    let hp = &state.hp;
    let nb = graphs.len();
    if target >= nb {
        return Err(Error::objective("total", format!("target index {target} out of range")));
    }
    if batch.per_behavior.len() != nb {
        return Err(Error::objective(
            "total",
            format!("batch has {} behavior lists for {nb} graphs", batch.per_behavior.len()),
        ));
    }
    require_triplets("main", &batch.main)?;

    let emb = graphs
        .iter()
        .map(|g| propagate(g, state.users.view(), state.items.view(), hp.layers))
        .collect::<Result<Vec<_>>>()?;
    let mut d_p: Vec<Array2<f64>> = emb.iter().map(|e| Array2::zeros(e.users.raw_dim())).collect();
    let mut d_q: Vec<Array2<f64>> = emb.iter().map(|e| Array2::zeros(e.items.raw_dim())).collect();

    // Per-behavior risks and the invariance term.
    let sampled: Vec<usize> = (0..nb).filter(|&b| !batch.per_behavior[b].is_empty()).collect();
    let mut bpr_per_behavior = vec![None; nb];
    let mut risks = Vec::with_capacity(sampled.len());
    for &b in &sampled {
        let e = &emb[b];
        let r = super::bpr_value(e.users.view(), e.items.view(), &batch.per_behavior[b])?;
        bpr_per_behavior[b] = Some(r);
        risks.push(r);
    }
    let orm_scale = hp.lambda2 * paths.orm;
    let orm_skipped = sampled.len() < 2;
    let orm = if orm_skipped {
        log::debug!("orm: {} sampled behavior(s), penalty skipped", sampled.len());
        0.0
    } else {
        match hp.irm_variant {
            IrmVariant::Rex => {
                let target_pos = sampled.iter().position(|&b| b == target);
                let (value, partials) = orm_loss(&risks, target_pos, hp.orm_scope)?;
                if orm_scale != 0.0 {
                    for (&b, dl) in sampled.iter().zip(&partials) {
                        if *dl != 0.0 {
                            let e = &emb[b];
                            bpr_accumulate(
                                e.users.view(),
                                e.items.view(),
                                &batch.per_behavior[b],
                                orm_scale * dl,
                                &mut d_p[b],
                                &mut d_q[b],
                            )?;
                        }
                    }
                }
                value
            }
            IrmVariant::IrmV1 | IrmVariant::IrmV2 => {
                let mut value = 0.0;
                for &b in &sampled {
                    if hp.orm_scope == OrmScope::AuxOnly && b == target {
                        continue;
                    }
                    let env = IrmEnvironment {
                        users: emb[b].users.view(),
                        items: emb[b].items.view(),
                        triplets: &batch.per_behavior[b],
                    };
                    let g = irm_accumulate(&env, orm_scale, &mut d_p[b], &mut d_q[b])?;
                    value += g * g;
                }
                value
            }
        }
    };

    let user_views: Vec<_> = emb.iter().map(|e| e.users.view()).collect();
    let rrm_scale = hp.lambda1 * paths.rrm;
    let rrm = rrm_accumulate(
        &user_views,
        target,
        batch_users,
        hp.tau,
        hp.rrm_denominator,
        rrm_scale,
        (rrm_scale != 0.0).then_some(&mut d_p[..]),
    )?;

    let fused_users = fuse(&user_views)?;
    let item_views: Vec<_> = emb.iter().map(|e| e.items.view()).collect();
    let fused_items = fuse(&item_views)?;
    let main = main_loss(fused_users.view(), fused_items.view(), &batch.main, state)?;
    if paths.main != 0.0 {
        let du = fuse_adjoint(main.d_users.view(), nb);
        let di = fuse_adjoint(main.d_items.view(), nb);
        for b in 0..nb {
            d_p[b].scaled_add(paths.main, &du);
            d_q[b].scaled_add(paths.main, &di);
        }
    }

    let mut grads = GradientBuffer {
        d_users: state.users.mapv(|z| 2.0 * hp.lambda_reg * paths.main * z),
        d_items: state.items.mapv(|z| 2.0 * hp.lambda_reg * paths.main * z),
    };
    for (b, g) in graphs.iter().enumerate() {
        let (du, di) = propagate_adjoint(g, d_p[b].view(), d_q[b].view(), hp.layers)?;
        grads.d_users += &du;
        grads.d_items += &di;
    }

    let mut breakdown = LossBreakdown {
        behaviors: graphs.iter().map(|g| g.behavior().to_string()).collect(),
        bpr_per_behavior,
        rrm,
        orm,
        main: main.loss,
        reg: main.reg,
        total: 0.0,
        orm_skipped,
    };
    breakdown.total = breakdown.recompose(hp.lambda1, hp.lambda2);
    if !breakdown.total.is_finite() {
        return Err(Error::NonFinite { tensor: "total loss".into() });
    }
    Ok((breakdown, grads))
}
