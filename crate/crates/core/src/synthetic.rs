//! Planted-preference datasets with known group structure.
//!
//! Users and items are split into equal contiguous groups; user group `g`
//! prefers item group `g`. Target edges are drawn inside the matched group,
//! so a model that recovers the groups ranks every held-out item above all
//! out-of-group items.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::dataset::{Edge, InteractionDataset, ItemId, UserId};
use crate::error::{Error, Result};
use crate::rng::sub_stream;

/// Name of the target behavior in every planted dataset.
pub const TARGET: &str = "buy";

#[derive(Debug, Clone, PartialEq)]
pub enum AuxKind {
    /// `per_user` draws, each inside the user's group with probability
    /// `in_group` and uniform over the other groups otherwise.
    Grouped { per_user: usize, in_group: f64 },
    /// Every target pair of the user plus `extra_per_user` further items from
    /// the user's group.
    Aligned { extra_per_user: usize },
    /// `per_user` items uniform over items outside the user's target set.
    Noise { per_user: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxSpec {
    pub name: String,
    pub kind: AuxKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub num_users: usize,
    pub num_items: usize,
    pub groups: usize,
    /// Distinct in-group target items per user.
    pub target_per_user: usize,
    pub auxiliary: Vec<AuxSpec>,
    pub seed: u64,
}

impl PlantedSpec {
    /// 40 users and 40 items in 4 groups; auxiliary edges 90% in-group.
    pub fn learnability(seed: u64) -> Self {
        Self {
            num_users: 40,
            num_items: 40,
            groups: 4,
            target_per_user: 5,
            auxiliary: vec![
                AuxSpec {
                    name: "view".into(),
                    kind: AuxKind::Grouped { per_user: 8, in_group: 0.9 },
                },
                AuxSpec {
                    name: "cart".into(),
                    kind: AuxKind::Grouped { per_user: 4, in_group: 0.9 },
                },
            ],
            seed,
        }
    }

    /// Sparse target signal with one auxiliary behavior that repeats it and
    /// one that never overlaps it.
    pub fn alignment(seed: u64) -> Self {
        Self {
            num_users: 40,
            num_items: 40,
            groups: 4,
            target_per_user: 3,
            auxiliary: vec![
                AuxSpec {
                    name: "aligned".into(),
                    kind: AuxKind::Aligned { extra_per_user: 4 },
                },
                AuxSpec {
                    name: "noise".into(),
                    kind: AuxKind::Noise { per_user: 6 },
                },
            ],
            seed,
        }
    }

    /// Same structure with every count multiplied by `factor`.
    pub fn scaled(mut self, factor: usize) -> Self {
        self.num_users *= factor;
        self.num_items *= factor;
        self
    }

    pub fn user_group(&self, user: UserId) -> usize {
        user as usize * self.groups / self.num_users
    }

    pub fn item_group(&self, item: ItemId) -> usize {
        item as usize * self.groups / self.num_items
    }

    fn group_items(&self, g: usize) -> Vec<ItemId> {
        (0..self.num_items as ItemId).filter(|&i| self.item_group(i) == g).collect()
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("planted dataset: {m}")));
        if self.groups == 0 || self.num_users < self.groups || self.num_items < self.groups {
            return bad("need at least one user and one item per group");
        }
        let smallest = (0..self.groups).map(|g| self.group_items(g).len()).min().unwrap_or(0);
        if self.target_per_user == 0 || self.target_per_user > smallest {
            return bad("target_per_user must be between 1 and the item group size");
        }
        if self.auxiliary.iter().any(|a| a.name == TARGET) {
            return bad("auxiliary behaviors must not be named like the target");
        }
        Ok(())
    }
}

/// Builds the dataset. Behaviors are the auxiliary ones in order, then the
/// target. Auxiliary timestamps precede all target timestamps.
pub fn planted_dataset(spec: &PlantedSpec) -> Result<InteractionDataset> {
    spec.validate()?;
    let mut rng = sub_stream(spec.seed, "planted");
    let groups: Vec<Vec<ItemId>> = (0..spec.groups).map(|g| spec.group_items(g)).collect();
    let mut target = Vec::new();
    let mut targets_of: Vec<Vec<ItemId>> = Vec::with_capacity(spec.num_users);
    let mut ts: Vec<u64> = (0..spec.target_per_user as u64).map(|t| 1000 + t).collect();
    for u in 0..spec.num_users as UserId {
        let own = &groups[spec.user_group(u)];
        let items: Vec<ItemId> = own.choose_multiple(&mut rng, spec.target_per_user).copied().collect();
        ts.shuffle(&mut rng);
        target.extend(items.iter().zip(&ts).map(|(&i, &t)| Edge::new(u, i, Some(t))));
        let mut sorted = items;
        sorted.sort_unstable();
        targets_of.push(sorted);
    }

    let mut behaviors: Vec<String> = spec.auxiliary.iter().map(|a| a.name.clone()).collect();
    behaviors.push(TARGET.into());
    let mut edges = Vec::with_capacity(behaviors.len());
    for aux in &spec.auxiliary {
        let mut list = Vec::new();
        for u in 0..spec.num_users as UserId {
            let g = spec.user_group(u);
            let mut chosen = BTreeSet::new();
            match aux.kind {
                AuxKind::Grouped { per_user, in_group } => {
                    for _ in 0..per_user {
                        let item = if spec.groups == 1 || rng.random_bool(in_group) {
                            *groups[g].choose(&mut rng).expect("nonempty group")
                        } else {
                            let mut other = rng.random_range(0..spec.groups - 1);
                            if other >= g {
                                other += 1;
                            }
                            *groups[other].choose(&mut rng).expect("nonempty group")
                        };
                        chosen.insert(item);
                    }
                }
                AuxKind::Aligned { extra_per_user } => {
                    chosen.extend(targets_of[u as usize].iter().copied());
                    let rest: Vec<ItemId> = groups[g]
                        .iter()
                        .copied()
                        .filter(|i| targets_of[u as usize].binary_search(i).is_err())
                        .collect();
                    chosen.extend(rest.choose_multiple(&mut rng, extra_per_user));
                }
                AuxKind::Noise { per_user } => {
                    let rest: Vec<ItemId> = (0..spec.num_items as ItemId)
                        .filter(|i| targets_of[u as usize].binary_search(i).is_err())
                        .collect();
                    chosen.extend(rest.choose_multiple(&mut rng, per_user));
                }
            }
            for i in chosen {
                list.push(Edge::new(u, i, Some(rng.random_range(1..1000))));
            }
        }
        edges.push(list);
    }
    edges.push(target);
    InteractionDataset::from_dense(behaviors, TARGET, spec.num_users, spec.num_items, edges)
}
