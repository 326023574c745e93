//! Seeded edge perturbation of auxiliary behaviors.
//!
//! For each perturbed behavior, `ceil(ratio * |edges|)` pairs are chosen
//! uniformly without replacement: from the complement of the behavior's edge
//! set (add) or from the edge set itself (remove). The complement is never
//! materialized. Candidates are addressed by their rank in row-major
//! `(user, item)` order and mapped back through the sorted edge list.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{Edge, InteractionDataset};
use crate::error::{Error, Result};
use crate::rng::sub_stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationMode {
    Add,
    Remove,
}

impl std::fmt::Display for PerturbationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PerturbationMode::Add => "add",
            PerturbationMode::Remove => "remove",
        })
    }
}

impl std::str::FromStr for PerturbationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "add" => Ok(PerturbationMode::Add),
            "remove" => Ok(PerturbationMode::Remove),
            other => Err(Error::Config(format!("unknown perturbation mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub mode: PerturbationMode,
    pub ratio: f64,
    pub behaviors: Vec<String>,
    pub seed: u64,
}

impl PerturbationSpec {
    /// Perturbs every auxiliary behavior of `ds`.
    pub fn all_auxiliary(ds: &InteractionDataset, mode: PerturbationMode, ratio: f64, seed: u64) -> Self {
        Self {
            mode,
            ratio,
            behaviors: ds.auxiliary_indices().into_iter().map(|b| ds.behaviors()[b].clone()).collect(),
            seed,
        }
    }

    fn validate(&self, ds: &InteractionDataset) -> Result<Vec<usize>> {
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::Perturbation(format!("ratio {} is outside (0, 1]", self.ratio)));
        }
        self.behaviors
            .iter()
            .map(|name| {
                let b = ds.behavior_index(name)?;
                if b == ds.target_index() {
                    return Err(Error::Perturbation(format!(
                        "the target behavior '{name}' cannot be perturbed"
                    )));
                }
                Ok(b)
            })
            .collect()
    }
}

/// Number of edges touched for `ratio` of `n` edges. The small slack keeps
/// products such as `0.3 * 10` from rounding up past the exact count.
pub(crate) fn perturbation_count(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Maps rank `c` in the row-major complement of `edges` to its (user, item).
/// `linear` holds the sorted row-major positions `user * num_items + item`.
fn complement_pair(linear: &[usize], c: usize, num_items: usize) -> (u32, u32) {
    // The j-th edge has linear[j] - j complement cells before it; that count
    // is non-decreasing in j, so binary search for the edges it does not
    // exceed c.
    let (mut lo, mut hi) = (0, linear.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if linear[mid] - mid <= c {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    let pos = c + lo;
    ((pos / num_items) as u32, (pos % num_items) as u32)
}

pub fn perturb(ds: &InteractionDataset, spec: &PerturbationSpec) -> Result<InteractionDataset> {
    let targets = spec.validate(ds)?;
    let mut out = ds.clone();
    for b in targets {
        let name = &ds.behaviors()[b];
        let edges = ds.edges(b).as_slice();
        let k = perturbation_count(spec.ratio, edges.len());
        let mut rng = sub_stream(spec.seed, &format!("perturb/{name}"));
        let new_edges: Vec<Edge> = match spec.mode {
            PerturbationMode::Remove => {
                let mut keep = vec![true; edges.len()];
                for i in index::sample(&mut rng, edges.len(), k) {
                    keep[i] = false;
                }
                edges.iter().zip(keep).filter(|(_, k)| *k).map(|(e, _)| *e).collect()
            }
            PerturbationMode::Add => {
                let cells = ds.num_users() * ds.num_items();
                let free = cells - edges.len();
                if k > free {
                    return Err(Error::Perturbation(format!(
                        "cannot add {k} edges to '{name}': only {free} non-edges exist"
                    )));
                }
                let linear: Vec<usize> = edges
                    .iter()
                    .map(|e| e.user as usize * ds.num_items() + e.item as usize)
                    .collect();
                let mut added: Vec<Edge> = index::sample(&mut rng, free, k)
                    .into_iter()
                    .map(|c| {
                        let (u, i) = complement_pair(&linear, c, ds.num_items());
                        Edge::new(u, i, Some(0))
                    })
                    .collect();
                added.extend_from_slice(edges);
                added
            }
        };
        out = out.with_behavior_edges(b, new_edges)?;
    }
    Ok(out)
}
