use ndarray::{Array2, ArrayView2};

use super::{axpy, dot, Triplet};
use crate::error::{Error, Result};

/// Logistic function, evaluated without overflow on either tail.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x) = -(max(-x, 0) + ln(1 + e^{-|x|}))`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    -((-x).max(0.0) + (-x.abs()).exp().ln_1p())
}

/// Score margin `p_u·q_pos − p_u·q_neg`.
#[inline]
pub(crate) fn margin(users: &ArrayView2<f64>, items: &ArrayView2<f64>, t: &Triplet) -> f64 {
    let p = row(users, t.user as usize);
    dot(p, row(items, t.pos as usize)) - dot(p, row(items, t.neg as usize))
}

#[inline]
pub(crate) fn row<'a>(m: &'a ArrayView2<f64>, r: usize) -> &'a [f64] {
    let d = m.ncols();
    &m.as_slice().expect("standard layout")[r * d..(r + 1) * d]
}

#[inline]
pub(crate) fn row_mut(m: &mut Array2<f64>, r: usize) -> &mut [f64] {
    let d = m.ncols();
    &mut m.as_slice_mut().expect("standard layout")[r * d..(r + 1) * d]
}

pub(crate) fn require_triplets(component: &'static str, triplets: &[Triplet]) -> Result<()> {
    if triplets.is_empty() {
        return Err(Error::objective(component, "empty triplet list"));
    }
    Ok(())
}

/// Adds `coef(t, margin) * ∂margin/∂(P, Q)` for every triplet.
pub(crate) fn accumulate_margin_grads<F>(
    users: &ArrayView2<f64>,
    items: &ArrayView2<f64>,
    triplets: &[Triplet],
    mut coef: F,
    d_users: &mut Array2<f64>,
    d_items: &mut Array2<f64>,
) where
    F: FnMut(f64) -> f64,
{
    let dim = users.ncols();
    let mut diff = vec![0.0; dim];
    for t in triplets {
        let c = coef(margin(users, items, t));
        if c == 0.0 {
            continue;
        }
        let p = row(users, t.user as usize);
        let qi = row(items, t.pos as usize);
        let qj = row(items, t.neg as usize);
        for ((d, a), b) in diff.iter_mut().zip(qi).zip(qj) {
            *d = a - b;
        }
        axpy(c, &diff, row_mut(d_users, t.user as usize));
        axpy(c, p, row_mut(d_items, t.pos as usize));
        axpy(-c, p, row_mut(d_items, t.neg as usize));
    }
}

/// `-(1/|T|) Σ ln σ(margin)`.
pub fn bpr_value(users: ArrayView2<f64>, items: ArrayView2<f64>, triplets: &[Triplet]) -> Result<f64> {
    require_triplets("bpr", triplets)?;
    let sum: f64 = triplets.iter().map(|t| log_sigmoid(margin(&users, &items, t))).sum();
    Ok(-sum / triplets.len() as f64)
}

/// Adds `scale * ∂BPR/∂(P, Q)` and returns the loss.
pub(crate) fn bpr_accumulate(
    users: ArrayView2<f64>,
    items: ArrayView2<f64>,
    triplets: &[Triplet],
    scale: f64,
    d_users: &mut Array2<f64>,
    d_items: &mut Array2<f64>,
) -> Result<f64> {
    let loss = bpr_value(users, items, triplets)?;
    if scale != 0.0 {
        let k = -scale / triplets.len() as f64;
        // d/dm [-ln σ(m)] = -σ(-m)
        accumulate_margin_grads(&users, &items, triplets, |m| k * sigmoid(-m), d_users, d_items);
    }
    Ok(loss)
}

#[derive(Debug, Clone)]
pub struct BprOutput {
    pub loss: f64,
    pub d_users: Array2<f64>,
    pub d_items: Array2<f64>,
}

/// Behavior-specific BPR loss with its gradient.
pub fn bpr_loss(users: ArrayView2<f64>, items: ArrayView2<f64>, triplets: &[Triplet]) -> Result<BprOutput> {
    let mut d_users = Array2::zeros(users.raw_dim());
    let mut d_items = Array2::zeros(items.raw_dim());
    let loss = bpr_accumulate(users, items, triplets, 1.0, &mut d_users, &mut d_items)?;
    Ok(BprOutput {
        loss,
        d_users,
        d_items,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{central_difference, max_relative_error, random_matrix};
    use ndarray::array;

    #[test]
    fn stable_sigmoid_tails() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) == 1.0);
        assert!((log_sigmoid(0.0) + std::f64::consts::LN_2).abs() < 1e-15);
        assert!(log_sigmoid(-800.0).is_finite());
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-9);
    }

    #[test]
    fn equal_scores_give_ln2() {
        let users = array![[1.0, 0.0]];
        let items = array![[0.5, 0.5], [0.5, -0.5]];
        let t = [Triplet::new(0, 0, 1), Triplet::new(0, 1, 0)];
        // p·q0 = 0.5 = p·q1
        let loss = bpr_value(users.view(), items.view(), &t).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn saturated_margin() {
        let users = array![[100.0]];
        let items = array![[100.0], [-100.0]];
        let out = bpr_loss(users.view(), items.view(), &[Triplet::new(0, 0, 1)]).unwrap();
        assert!(out.loss < 1e-300);
        assert!(out.d_users.iter().chain(out.d_items.iter()).all(|g| g.abs() < 1e-300));
    }

    #[test]
    fn empty_triplets_error() {
        let m = Array2::<f64>::zeros((1, 1));
        assert!(bpr_value(m.view(), m.view(), &[]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let users = random_matrix(3, 4, 1);
        let items = random_matrix(5, 4, 2);
        let t = [Triplet::new(0, 1, 2), Triplet::new(1, 3, 4), Triplet::new(2, 0, 1)];
        let out = bpr_loss(users.view(), items.view(), &t).unwrap();
        let fd_u = central_difference(&users, 1e-5, |u| bpr_value(u.view(), items.view(), &t).unwrap());
        let fd_i = central_difference(&items, 1e-5, |i| bpr_value(users.view(), i.view(), &t).unwrap());
        assert!(max_relative_error(&out.d_users, &fd_u) <= 1e-6);
        assert!(max_relative_error(&out.d_items, &fd_i) <= 1e-6);
    }
}
