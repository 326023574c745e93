//! Cross-behavior invariance penalties: risk variance (REx) and the
//! gradient-norm penalties of IRMv1/IRMv2.
//!
//! The predictor is a parameter-free dot product, so the IRM classifier is a
//! scalar multiplier `w` on every score. Its gradient at `w = 1` for one
//! behavior is `g = -(1/|T|) Σ m σ(-m)` over triplet margins `m`, and the
//! penalty is `Σ_b g_b²`. IRMv1 and IRMv2 differ only in whether `w` would be
//! trainable; with `w` pinned to 1 in both, their numerics coincide.

use ndarray::{Array2, ArrayView2};

use super::bpr::{accumulate_margin_grads, margin, require_triplets};
use super::{sigmoid, OrmScope, Triplet};
use crate::error::{Error, Result};

/// Risk variance and its partial derivative with respect to every risk.
///
/// `target` is the position of the target behavior's risk in `risks`, if it
/// was sampled. Under [`OrmScope::AuxOnly`] the sum runs over the other
/// risks, normalized by `|B| - 1`, around the mean of all risks.
pub fn orm_loss(risks: &[f64], target: Option<usize>, scope: OrmScope) -> Result<(f64, Vec<f64>)> {
    let n = risks.len();
    if n < 2 {
        return Err(Error::objective(
            "orm",
            format!("variance needs at least 2 risks, got {n}"),
        ));
    }
    let nf = n as f64;
    // Shifted by the first risk so that equal risks give an exact zero.
    let mean = risks[0] + risks.iter().map(|r| r - risks[0]).sum::<f64>() / nf;
    let in_scope = |k: usize| scope == OrmScope::AllBehaviors || Some(k) != target;
    let norm = match scope {
        OrmScope::AllBehaviors => nf,
        OrmScope::AuxOnly => nf - 1.0,
    };
    let value = (0..n)
        .filter(|&k| in_scope(k))
        .map(|k| (risks[k] - mean).powi(2))
        .sum::<f64>()
        / norm;
    // ∂/∂L_k = (2/norm) [1{k in scope}(L_k - mean) - (1/n) Σ_{in scope}(L_b - mean)]
    let dev_sum: f64 = (0..n).filter(|&k| in_scope(k)).map(|k| risks[k] - mean).sum();
    let partials = (0..n)
        .map(|k| {
            let own = if in_scope(k) { risks[k] - mean } else { 0.0 };
            2.0 / norm * (own - dev_sum / nf)
        })
        .collect();
    Ok((value, partials))
}

/// One environment for the IRM penalties: a behavior's embeddings and its
/// sampled triplets.
#[derive(Debug, Clone, Copy)]
pub struct IrmEnvironment<'a> {
    pub users: ArrayView2<'a, f64>,
    pub items: ArrayView2<'a, f64>,
    pub triplets: &'a [Triplet],
}

/// `dR/dw` at `w = 1` for the BPR risk with scores scaled by `w`.
pub(crate) fn classifier_gradient(env: &IrmEnvironment<'_>) -> Result<f64> {
    require_triplets("irm", env.triplets)?;
    let sum: f64 = env
        .triplets
        .iter()
        .map(|t| {
            let m = margin(&env.users, &env.items, t);
            m * sigmoid(-m)
        })
        .sum();
    Ok(-sum / env.triplets.len() as f64)
}

/// Adds `scale * ∂(g²)/∂(P, Q)` for one environment and returns `g`.
pub(crate) fn irm_accumulate(
    env: &IrmEnvironment<'_>,
    scale: f64,
    d_users: &mut Array2<f64>,
    d_items: &mut Array2<f64>,
) -> Result<f64> {
    let g = classifier_gradient(env)?;
    if scale != 0.0 && g != 0.0 {
        // d/dm [m σ(-m)] = σ(-m) - m σ(-m) σ(m)
        let k = -2.0 * g * scale / env.triplets.len() as f64;
        accumulate_margin_grads(
            &env.users,
            &env.items,
            env.triplets,
            |m| {
                let s = sigmoid(-m);
                k * (s - m * s * sigmoid(m))
            },
            d_users,
            d_items,
        );
    }
    Ok(g)
}

#[derive(Debug, Clone)]
pub struct IrmPenalty {
    pub value: f64,
    /// Per-environment classifier gradients `g_b`.
    pub classifier_gradients: Vec<f64>,
    pub d_users: Vec<Array2<f64>>,
    pub d_items: Vec<Array2<f64>>,
}

fn irm_penalty(envs: &[IrmEnvironment<'_>]) -> Result<IrmPenalty> {
    let mut out = IrmPenalty {
        value: 0.0,
        classifier_gradients: Vec::with_capacity(envs.len()),
        d_users: Vec::with_capacity(envs.len()),
        d_items: Vec::with_capacity(envs.len()),
    };
    for env in envs {
        let mut du = Array2::zeros(env.users.raw_dim());
        let mut di = Array2::zeros(env.items.raw_dim());
        let g = irm_accumulate(env, 1.0, &mut du, &mut di)?;
        out.value += g * g;
        out.classifier_gradients.push(g);
        out.d_users.push(du);
        out.d_items.push(di);
    }
    Ok(out)
}

/// IRMv1 penalty `Σ_b (∂R_b/∂w |_{w=1})²`.
pub fn irm_v1_penalty(envs: &[IrmEnvironment<'_>]) -> Result<IrmPenalty> {
    irm_penalty(envs)
}

/// IRMv2 penalty: the classifier is fixed at `w = 1` and only the encoder
/// is optimized, which leaves the penalty itself unchanged.
pub fn irm_v2_penalty(envs: &[IrmEnvironment<'_>]) -> Result<IrmPenalty> {
    irm_penalty(envs)
}
