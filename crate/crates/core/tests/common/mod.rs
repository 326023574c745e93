#![allow(dead_code)]

pub mod reference;

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use proptest::prelude::*;
use rmbrec::dataset::Edge;
use rmbrec::InteractionDataset;

/// Raw interactions for one behavior: (user, item, timestamp).
pub type RawEdges = Vec<(u32, u32, Option<u64>)>;

#[derive(Debug, Clone)]
pub struct RawDataset {
    pub num_users: usize,
    pub num_items: usize,
    /// Last entry is the target.
    pub behaviors: Vec<RawEdges>,
}

impl RawDataset {
    pub fn names(&self) -> Vec<String> {
        let n = self.behaviors.len();
        (0..n).map(|b| if b + 1 == n { "buy".to_string() } else { format!("aux{b}") }).collect()
    }

    pub fn build(&self) -> InteractionDataset {
        let edges = self
            .behaviors
            .iter()
            .map(|list| list.iter().map(|&(u, i, t)| Edge::new(u, i, t)).collect())
            .collect();
        InteractionDataset::from_dense(self.names(), "buy", self.num_users, self.num_items, edges).unwrap()
    }

    /// Deduplicated pairs of behavior `b`, keeping the earliest timestamp.
    pub fn pairs(&self, b: usize) -> BTreeMap<(u32, u32), Option<u64>> {
        let mut out: BTreeMap<(u32, u32), Option<u64>> = BTreeMap::new();
        for &(u, i, t) in &self.behaviors[b] {
            out.entry((u, i))
                .and_modify(|old| {
                    *old = match (*old, t) {
                        (Some(a), Some(b)) => Some(a.min(b)),
                        (a, b) => a.or(b),
                    }
                })
                .or_insert(t);
        }
        out
    }
}

fn raw_edges(nu: usize, ni: usize, max: usize, timestamps: bool) -> impl Strategy<Value = RawEdges> {
    let ts = if timestamps { prop::option::weighted(0.95, 0..20u64).boxed() } else { Just(None).boxed() };
    prop::collection::vec((0..nu as u32, 0..ni as u32, ts), 0..max)
}

/// Small random datasets with 2-3 behaviors and a nonempty target.
pub fn small_dataset(max_users: usize, max_items: usize) -> impl Strategy<Value = RawDataset> {
    (1..=max_users, 1..=max_items, 2..=3usize, any::<bool>()).prop_flat_map(|(nu, ni, nb, ts)| {
        let aux = prop::collection::vec(raw_edges(nu, ni, 3 * nu * ni / 2 + 1, ts), nb - 1);
        let target = raw_edges(nu, ni, 2 * nu * ni, ts).prop_filter("nonempty target", |t| !t.is_empty());
        (aux, target).prop_map(move |(mut behaviors, target)| {
            behaviors.push(target);
            RawDataset { num_users: nu, num_items: ni, behaviors }
        })
    })
}

/// Dense `D^{-1/2} A D^{-1/2}` over users then items; isolated nodes stay 0.
pub fn dense_adjacency(nu: usize, ni: usize, pairs: &[(u32, u32)]) -> Array2<f64> {
    let n = nu + ni;
    let mut a = Array2::<f64>::zeros((n, n));
    for &(u, i) in pairs {
        a[[u as usize, nu + i as usize]] = 1.0;
        a[[nu + i as usize, u as usize]] = 1.0;
    }
    let deg: Vec<f64> = a.rows().into_iter().map(|r| r.sum()).collect();
    for r in 0..n {
        for c in 0..n {
            if a[[r, c]] != 0.0 {
                a[[r, c]] /= (deg[r] * deg[c]).sqrt();
            }
        }
    }
    a
}

/// `mean(E, ÂE, ..., Â^L E)` by repeated dense products.
pub fn dense_propagate(a: &Array2<f64>, e0: &Array2<f64>, layers: usize) -> Array2<f64> {
    let mut acc = e0.clone();
    let mut cur = e0.clone();
    for _ in 0..layers {
        cur = a.dot(&cur);
        acc += &cur;
    }
    acc / (layers + 1) as f64
}

/// Stacks users on top of items.
pub fn stack(users: &Array2<f64>, items: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(ndarray::Axis(0), &[users.view(), items.view()]).unwrap()
}

/// Target pairs whose exact pair also occurs in `aux`, over all target pairs.
pub fn brute_bar(raw: &RawDataset, aux: usize) -> f64 {
    let target = raw.pairs(raw.behaviors.len() - 1);
    let other = raw.pairs(aux);
    let hits = target.keys().filter(|p| other.contains_key(p)).count();
    hits as f64 / target.len() as f64
}

/// Direct-target share by scanning every auxiliary pair for each target pair.
pub fn brute_dt(raw: &RawDataset) -> (f64, bool) {
    let nb = raw.behaviors.len();
    let target = raw.pairs(nb - 1);
    let aux: Vec<_> = (0..nb - 1).map(|b| raw.pairs(b)).collect();
    let all_ts = target.values().all(Option::is_some) && aux.iter().all(|a| a.values().all(Option::is_some));
    let mut direct = 0;
    for (pair, t) in &target {
        let mut preceded = false;
        for a in &aux {
            for (p, ta) in a {
                if p == pair {
                    preceded |= if all_ts { ta.unwrap() < t.unwrap() } else { true };
                }
            }
        }
        if !preceded {
            direct += 1;
        }
    }
    (direct as f64 / target.len() as f64, !all_ts)
}

/// Rank by sorting every candidate: score descending, item id ascending.
pub fn brute_rank(scores: &[f64], held_out: u32, excluded: &BTreeSet<u32>) -> usize {
    let mut order: Vec<u32> = (0..scores.len() as u32).filter(|i| !excluded.contains(i)).collect();
    order.sort_by(|&a, &b| {
        scores[b as usize]
            .partial_cmp(&scores[a as usize])
            .unwrap()
            .then(a.cmp(&b))
    });
    order.iter().position(|&i| i == held_out).unwrap() + 1
}

pub fn brute_metrics(ranks: &[usize], k: usize) -> (f64, f64) {
    let n = ranks.len() as f64;
    let hits = ranks.iter().filter(|&&r| r <= k).count() as f64;
    let gain: f64 = ranks.iter().filter(|&&r| r <= k).map(|&r| 1.0 / ((r + 1) as f64).log2()).sum();
    (hits / n, gain / n)
}

/// Training setup used on the planted-preference fixtures.
pub fn planted_config(seed: u64) -> rmbrec::training::TrainConfig {
    let hp = rmbrec::Hyperparameters {
        dim: 16,
        layers: 2,
        lr: 0.01,
        batch_size: 8,
        lambda1: 0.1,
        lambda2: 0.1,
        max_epochs: 200,
        patience: 10,
        seed,
        ..Default::default()
    };
    rmbrec::training::TrainConfig { hp, eval_every: 5, record_timing: false, ..Default::default() }
}
