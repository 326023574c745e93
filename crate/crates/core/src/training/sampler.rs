use rand::Rng;

use crate::dataset::{InteractionDataset, ItemId, SplitDataset, UserId};
use crate::objectives::{Triplet, TripletBatch};

/// Rejection-sampling attempts before a negative is drawn from the
/// enumerated complement.
pub const NEGATIVE_RETRIES: usize = 100;

/// Per-user sorted item lists for every behavior of a training dataset.
#[derive(Debug, Clone)]
struct Adjacency {
    offsets: Vec<usize>,
    items: Vec<ItemId>,
}

impl Adjacency {
    fn items_of(&self, user: UserId) -> &[ItemId] {
        let u = user as usize;
        &self.items[self.offsets[u]..self.offsets[u + 1]]
    }
}

/// Uniform positive/negative sampler over the training split.
#[derive(Debug, Clone)]
pub struct TripletSampler {
    num_items: usize,
    target: usize,
    behaviors: Vec<Adjacency>,
}

/// Users skipped because every item was a positive, per behavior, plus the
/// same count for the main list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SampleStats {
    pub saturated: Vec<usize>,
    pub saturated_main: usize,
}

impl TripletSampler {
    pub fn new(train: &InteractionDataset) -> Self {
        let nu = train.num_users();
        let behaviors = (0..train.num_behaviors())
            .map(|b| {
                // Edges are sorted by (user, item).
                let edges = train.edges(b).as_slice();
                let mut offsets = vec![0usize; nu + 1];
                for e in edges {
                    offsets[e.user as usize + 1] += 1;
                }
                for u in 0..nu {
                    offsets[u + 1] += offsets[u];
                }
                Adjacency {
                    offsets,
                    items: edges.iter().map(|e| e.item).collect(),
                }
            })
            .collect();
        Self {
            num_items: train.num_items(),
            target: train.target_index(),
            behaviors,
        }
    }

    pub fn num_behaviors(&self) -> usize {
        self.behaviors.len()
    }

    /// Users with at least one training edge in any behavior, ascending.
    pub fn active_users(&self) -> Vec<UserId> {
        let nu = self.behaviors.first().map_or(0, |a| a.offsets.len() - 1);
        (0..nu as UserId)
            .filter(|&u| self.behaviors.iter().any(|a| !a.items_of(u).is_empty()))
            .collect()
    }

    fn draw<R: Rng + ?Sized>(&self, b: usize, user: UserId, rng: &mut R) -> Option<Option<Triplet>> {
        let positives = self.behaviors[b].items_of(user);
        if positives.is_empty() {
            return Some(None);
        }
        let pos = positives[rng.random_range(0..positives.len())];
        let neg = sample_negative(positives, self.num_items, rng)?;
        Some(Some(Triplet::new(user, pos, neg)))
    }

    /// One triplet per (user, behavior) where the user has a training edge,
    /// then one main triplet from the target behavior. The draw order is
    /// fixed: users in the given order, behaviors in manifest order, main
    /// last.
    pub fn sample<R: Rng + ?Sized>(&self, batch_users: &[UserId], rng: &mut R) -> (TripletBatch, SampleStats) {
        let nb = self.behaviors.len();
        let mut batch = TripletBatch {
            per_behavior: vec![Vec::new(); nb],
            main: Vec::new(),
        };
        let mut stats = SampleStats {
            saturated: vec![0; nb],
            saturated_main: 0,
        };
        for &u in batch_users {
            for b in 0..nb {
                match self.draw(b, u, rng) {
                    Some(Some(t)) => batch.per_behavior[b].push(t),
                    Some(None) => {}
                    None => stats.saturated[b] += 1,
                }
            }
            match self.draw(self.target, u, rng) {
                Some(Some(t)) => batch.main.push(t),
                Some(None) => {}
                None => stats.saturated_main += 1,
            }
        }
        (batch, stats)
    }
}

/// Uniform item outside the sorted `positives`, or `None` if there is none.
fn sample_negative<R: Rng + ?Sized>(positives: &[ItemId], num_items: usize, rng: &mut R) -> Option<ItemId> {
    if positives.len() >= num_items {
        return None;
    }
    for _ in 0..NEGATIVE_RETRIES {
        let j = rng.random_range(0..num_items as ItemId);
        if positives.binary_search(&j).is_err() {
            return Some(j);
        }
    }
    let k = rng.random_range(0..num_items - positives.len());
    Some(nth_free(positives, k))
}

/// The `k`-th item (0-based) not in the sorted `positives`.
fn nth_free(positives: &[ItemId], k: usize) -> ItemId {
    let mut candidate = k as ItemId;
    for &p in positives {
        if p <= candidate {
            candidate += 1;
        } else {
            break;
        }
    }
    candidate
}

/// Convenience wrapper that indexes `split.train` and samples one batch.
pub fn sample_batch<R: Rng + ?Sized>(
    split: &SplitDataset,
    batch_users: &[UserId],
    rng: &mut R,
) -> (TripletBatch, SampleStats) {
    TripletSampler::new(&split.train).sample(batch_users, rng)
}
