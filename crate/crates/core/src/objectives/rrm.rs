//! Target-anchored contrastive alignment of auxiliary user embeddings.
//!
//! For auxiliary behavior `b` and batch user `u`, the positive pair is
//! `(p_u^b, p_u^target)` and the negatives are `(p_u^b, p_v^b)` for the other
//! batch users `v`. Similarities are cosines scaled by `1/τ`. The loss is
//! averaged with weight `1 / ((|B| - 1) · |batch|)`.
//!
//! Gradients are accumulated with respect to the unit vectors first and then
//! pulled back through normalization with `(I - x̂x̂ᵀ) / ‖x‖`.

use ndarray::{Array2, ArrayView2};

use super::bpr::{row, row_mut};
use super::{axpy, dot, RrmDenominator};
use crate::error::{Error, Result};

/// Norm floor that keeps cosine similarity defined at the origin.
const MIN_NORM: f64 = 1e-12;

struct Normalized {
    unit: Vec<f64>,
    norms: Vec<f64>,
}

fn normalize_rows(m: &ArrayView2<f64>, users: &[u32]) -> Normalized {
    let dim = m.ncols();
    let mut unit = Vec::with_capacity(users.len() * dim);
    let mut norms = Vec::with_capacity(users.len());
    for &u in users {
        let r = row(m, u as usize);
        let n = dot(r, r).sqrt().max(MIN_NORM);
        unit.extend(r.iter().map(|x| x / n));
        norms.push(n);
    }
    Normalized { unit, norms }
}

/// Adds `(I - x̂x̂ᵀ) g / ‖x‖` to `out`.
fn pull_back(g: &[f64], unit: &[f64], norm: f64, out: &mut [f64]) {
    let radial = dot(g, unit);
    for ((o, g), x) in out.iter_mut().zip(g).zip(unit) {
        *o += (g - radial * x) / norm;
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn validate(user_embeddings: &[ArrayView2<f64>], target: usize, batch_users: &[u32], tau: f64) -> Result<()> {
    if target >= user_embeddings.len() {
        return Err(Error::objective("rrm", format!("target index {target} out of range")));
    }
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::objective("rrm", "temperature must be positive"));
    }
    if user_embeddings.len() > 1 && batch_users.len() < 2 {
        return Err(Error::objective(
            "rrm",
            format!("batch of {} user(s) has no in-batch negatives", batch_users.len()),
        ));
    }
    Ok(())
}

/// Adds `scale * ∂L_RRM/∂P^b` into `d_users[b]` for every behavior and
/// returns the loss. Without auxiliary behaviors the loss is 0.
pub(crate) fn rrm_accumulate(
    user_embeddings: &[ArrayView2<f64>],
    target: usize,
    batch_users: &[u32],
    tau: f64,
    mode: RrmDenominator,
    scale: f64,
    mut d_users: Option<&mut [Array2<f64>]>,
) -> Result<f64> {
    validate(user_embeddings, target, batch_users, tau)?;
    let num_behaviors = user_embeddings.len();
    if num_behaviors < 2 {
        log::debug!("rrm: no auxiliary behaviors, loss is 0");
        return Ok(0.0);
    }
    let n = batch_users.len();
    let dim = user_embeddings[target].ncols();
    let weight = 1.0 / ((num_behaviors - 1) as f64 * n as f64);
    let anchors = normalize_rows(&user_embeddings[target], batch_users);

    let mut total = 0.0;
    let mut logits = Vec::with_capacity(n);
    for (b, emb) in user_embeddings.iter().enumerate() {
        if b == target {
            continue;
        }
        let aux = normalize_rows(emb, batch_users);
        let unit = |k: usize| &aux.unit[k * dim..(k + 1) * dim];
        let anchor = |k: usize| &anchors.unit[k * dim..(k + 1) * dim];
        let want_grad = d_users.is_some() && scale != 0.0;
        let mut g_aux = vec![0.0; if want_grad { n * dim } else { 0 }];
        let mut g_anchor = vec![0.0; if want_grad { n * dim } else { 0 }];

        for k in 0..n {
            let pos = dot(unit(k), anchor(k)) / tau;
            logits.clear();
            if mode == RrmDenominator::WithPositive {
                logits.push(pos);
            }
            for j in (0..n).filter(|&j| j != k) {
                logits.push(dot(unit(k), unit(j)) / tau);
            }
            let lse = log_sum_exp(&logits);
            total += lse - pos;
            if !want_grad {
                continue;
            }

            // ∂loss/∂logit = softmax weight, minus 1 on the positive.
            let c = scale * weight / tau;
            let mut w = logits.iter().map(|l| (l - lse).exp());
            let d_pos = match mode {
                RrmDenominator::WithPositive => w.next().expect("positive logit") - 1.0,
                RrmDenominator::Literal => -1.0,
            };
            let ak = k * dim;
            axpy(c * d_pos, anchor(k), &mut g_aux[ak..ak + dim]);
            axpy(c * d_pos, unit(k), &mut g_anchor[ak..ak + dim]);
            for (j, wj) in (0..n).filter(|&j| j != k).zip(w) {
                let aj = j * dim;
                axpy(c * wj, unit(j), &mut g_aux[ak..ak + dim]);
                axpy(c * wj, unit(k), &mut g_aux[aj..aj + dim]);
            }
        }

        if let Some(d) = d_users.as_deref_mut() {
            if want_grad {
                for (k, &u) in batch_users.iter().enumerate() {
                    let span = k * dim..(k + 1) * dim;
                    pull_back(&g_aux[span.clone()], unit(k), aux.norms[k], row_mut(&mut d[b], u as usize));
                    pull_back(
                        &g_anchor[span],
                        anchor(k),
                        anchors.norms[k],
                        row_mut(&mut d[target], u as usize),
                    );
                }
            }
        }
    }
    Ok(total * weight)
}

#[derive(Debug, Clone)]
pub struct RrmOutput {
    pub loss: f64,
    /// Gradient w.r.t. each behavior's user embeddings, in input order.
    pub d_users: Vec<Array2<f64>>,
}

/// Contrastive alignment loss over `batch_users`, with gradients for every
/// behavior's user embedding matrix (the target's collects the anchor terms).
pub fn rrm_loss(
    user_embeddings: &[ArrayView2<f64>],
    target: usize,
    batch_users: &[u32],
    tau: f64,
    mode: RrmDenominator,
) -> Result<RrmOutput> {
    let mut d_users: Vec<Array2<f64>> = user_embeddings.iter().map(|m| Array2::zeros(m.raw_dim())).collect();
    let loss = rrm_accumulate(user_embeddings, target, batch_users, tau, mode, 1.0, Some(&mut d_users))?;
    Ok(RrmOutput { loss, d_users })
}
