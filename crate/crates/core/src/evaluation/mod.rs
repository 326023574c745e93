//! Full-ranking evaluation under the leave-one-out protocol.
//!
//! Every user with a held-out item is scored against all items; the user's
//! training-target items are removed from the candidate set unless exclusion
//! is disabled. Ties in score are broken by ascending item id.

mod sweep;

use std::collections::BTreeMap;

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{ItemId, SplitDataset, UserId};
use crate::error::{Error, Result};
use crate::graph::{build_all, propagate, BehaviorGraph};
use crate::objectives::{dot, fuse, ModelState};

pub use sweep::{robustness_sweep, SweepRow, SweepTable};

/// Fused user and item embeddings used for scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedEmbeddings {
    pub users: Array2<f64>,
    pub items: Array2<f64>,
}

impl FusedEmbeddings {
    /// Scores of every item for `user`.
    pub fn scores(&self, user: UserId) -> Vec<f64> {
        let p = self.users.row(user as usize);
        let p = p.as_slice().expect("standard layout");
        self.items
            .outer_iter()
            .map(|q| dot(p, q.as_slice().expect("standard layout")))
            .collect()
    }
}

/// Propagates every behavior graph and fuses the results.
pub fn fused_embeddings(state: &ModelState, graphs: &[BehaviorGraph]) -> Result<FusedEmbeddings> {
    let emb = graphs
        .iter()
        .map(|g| propagate(g, state.users.view(), state.items.view(), state.hp.layers))
        .collect::<Result<Vec<_>>>()?;
    let users: Vec<_> = emb.iter().map(|e| e.users.view()).collect();
    let items: Vec<_> = emb.iter().map(|e| e.items.view()).collect();
    Ok(FusedEmbeddings {
        users: fuse(&users)?,
        items: fuse(&items)?,
    })
}

/// 1-based rank of `held_out` among all items not in the sorted
/// `exclusions`.
pub fn rank_of(scores: &[f64], held_out: ItemId, exclusions: &[ItemId]) -> Result<usize> {
    let h = held_out as usize;
    if h >= scores.len() {
        return Err(Error::Evaluation(format!("held-out item {held_out} out of range")));
    }
    if exclusions.binary_search(&held_out).is_ok() {
        return Err(Error::Evaluation(format!(
            "held-out item {held_out} is among the excluded training items"
        )));
    }
    let sh = scores[h];
    if !sh.is_finite() {
        return Err(Error::NonFinite {
            tensor: format!("score of item {held_out}"),
        });
    }
    let mut ex = exclusions.iter().peekable();
    let mut rank = 1;
    for (j, &s) in scores.iter().enumerate() {
        while ex.next_if(|&&e| (e as usize) < j).is_some() {}
        if ex.peek().is_some_and(|&&e| e as usize == j) {
            continue;
        }
        if s > sh || (s == sh && j < h) {
            rank += 1;
        }
    }
    Ok(rank)
}

/// Rank of `held_out` for `user` under the fused scores.
pub fn rank_user(fused: &FusedEmbeddings, user: UserId, held_out: ItemId, exclusions: &[ItemId]) -> Result<usize> {
    rank_of(&fused.scores(user), held_out, exclusions)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub ks: Vec<usize>,
    /// Remove each user's training-target items from the candidates.
    pub exclude_train: bool,
    pub record_ranks: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            ks: vec![5, 10, 20],
            exclude_train: true,
            record_ranks: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub ks: Vec<usize>,
    pub hr: BTreeMap<usize, f64>,
    pub ndcg: BTreeMap<usize, f64>,
    #[serde(rename = "users")]
    pub num_evaluated_users: usize,
    pub exclude_train: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_user_ranks: Option<Vec<(UserId, usize)>>,
}

impl EvalReport {
    pub fn hr_at(&self, k: usize) -> Option<f64> {
        self.hr.get(&k).copied()
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.ndcg.get(&k).copied()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// HR@K and NDCG@K from 1-based ranks, accumulated in the given order.
pub fn metrics_from_ranks(ranks: &[usize], ks: &[usize]) -> (BTreeMap<usize, f64>, BTreeMap<usize, f64>) {
    let n = ranks.len() as f64;
    let mut hr = BTreeMap::new();
    let mut ndcg = BTreeMap::new();
    for &k in ks {
        let mut hits = 0usize;
        let mut gain = 0.0;
        for &r in ranks {
            if r <= k {
                hits += 1;
                gain += 1.0 / ((r + 1) as f64).log2();
            }
        }
        hr.insert(k, hits as f64 / n);
        ndcg.insert(k, gain / n);
    }
    (hr, ndcg)
}

fn validate_ks(ks: &[usize]) -> Result<Vec<usize>> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Config("cutoffs must be a nonempty list of positive integers".into()));
    }
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    Ok(ks)
}

/// Evaluates the held-out `pairs` against `fused` scores.
pub fn evaluate_pairs(
    fused: &FusedEmbeddings,
    split: &SplitDataset,
    pairs: &[(UserId, ItemId)],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::Evaluation("no held-out pairs to evaluate".into()));
    }
    let ks = validate_ks(&opts.ks)?;
    let ranks = pairs
        .par_iter()
        .map(|&(u, i)| {
            let exclusions = if opts.exclude_train {
                split.train_target_items(u)
            } else {
                Vec::new()
            };
            rank_user(fused, u, i, &exclusions)
        })
        .collect::<Result<Vec<_>>>()?;
    let (hr, ndcg) = metrics_from_ranks(&ranks, &ks);
    Ok(EvalReport {
        ks,
        hr,
        ndcg,
        num_evaluated_users: pairs.len(),
        exclude_train: opts.exclude_train,
        per_user_ranks: opts
            .record_ranks
            .then(|| pairs.iter().map(|p| p.0).zip(ranks).collect()),
    })
}

/// Test-set evaluation of `state` with graphs built from the training split.
pub fn evaluate(state: &ModelState, split: &SplitDataset, opts: &EvalOptions) -> Result<EvalReport> {
    if split.test.is_empty() {
        return Err(Error::Evaluation("empty test set".into()));
    }
    let graphs = build_all(&split.train);
    let fused = fused_embeddings(state, &graphs)?;
    evaluate_pairs(&fused, split, &split.test, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strictly_best_is_rank_one() {
        assert_eq!(rank_of(&[0.1, 0.9, 0.3], 1, &[]).unwrap(), 1);
    }

    #[test]
    fn all_ties_follow_item_order() {
        let s = [0.5; 6];
        for h in 0..6 {
            assert_eq!(rank_of(&s, h, &[]).unwrap(), h as usize + 1);
        }
        // excluded items carry no rank
        assert_eq!(rank_of(&s, 4, &[0, 2]).unwrap(), 3);
    }

    #[test]
    fn exclusions() {
        let s = [0.9, 0.8, 0.1, 0.5];
        assert_eq!(rank_of(&s, 3, &[]).unwrap(), 3);
        assert_eq!(rank_of(&s, 3, &[0, 1]).unwrap(), 1);
        assert!(rank_of(&s, 1, &[1]).is_err());
    }

    #[test]
    fn hand_set_embeddings_match_sort() {
        let fused = FusedEmbeddings {
            users: ndarray::array![[1.0, 2.0]],
            items: ndarray::array![[0.0, 1.0], [1.0, 0.0], [1.0, 1.0], [-1.0, 2.0], [2.0, 0.5], [0.5, 0.0]],
        };
        // scores: 2, 1, 3, 3, 3, 0.5
        let mut order: Vec<usize> = (0..6).collect();
        let s = fused.scores(0);
        order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap().then(a.cmp(&b)));
        for (pos, &item) in order.iter().enumerate() {
            assert_eq!(rank_user(&fused, 0, item as ItemId, &[]).unwrap(), pos + 1);
        }
        assert_eq!(rank_user(&fused, 0, 3, &[]).unwrap(), 2);
    }

    #[test]
    fn closed_form_metrics() {
        let (hr, ndcg) = metrics_from_ranks(&[2], &[10]);
        assert_eq!(hr[&10], 1.0);
        assert!((ndcg[&10] - 1.0 / 3f64.log2()).abs() < 1e-15);
        assert!((ndcg[&10] - 0.6309).abs() < 1e-4);

        let (hr, ndcg) = metrics_from_ranks(&[1, 3, 11, 2, 7], &[10]);
        assert_eq!(hr[&10], 0.8);
        let expected = (1.0 + 0.5 + 0.0 + 1.0 / 3f64.log2() + 1.0 / 8f64.log2()) / 5.0;
        assert!((ndcg[&10] - expected).abs() < 1e-15);

        let (hr, ndcg) = metrics_from_ranks(&[1, 1, 1], &[1, 5]);
        assert!(hr.values().chain(ndcg.values()).all(|v| *v == 1.0));
    }

    #[test]
    fn ks_are_validated() {
        assert!(validate_ks(&[]).is_err());
        assert!(validate_ks(&[0, 10]).is_err());
        assert_eq!(validate_ks(&[20, 5, 5]).unwrap(), [5, 20]);
    }
}
