use super::{Edge, InteractionDataset, ItemId, UserId};

/// Leave-one-out split of the target behavior. Auxiliary behaviors are kept
/// whole in `train`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitDataset {
    pub train: InteractionDataset,
    pub validation: Vec<(UserId, ItemId)>,
    pub test: Vec<(UserId, ItemId)>,
    /// Users with target interactions but fewer than three of them.
    pub users_without_holdout: usize,
}

impl SplitDataset {
    pub(crate) fn from_parts(
        train: InteractionDataset,
        validation: Vec<(UserId, ItemId)>,
        test: Vec<(UserId, ItemId)>,
    ) -> Self {
        let held: std::collections::BTreeSet<UserId> = test.iter().map(|p| p.0).collect();
        let mut users_with_target: Vec<UserId> = train.target_edges().iter().map(|e| e.user).collect();
        users_with_target.dedup();
        let users_without_holdout = users_with_target.iter().filter(|u| !held.contains(u)).count();
        Self {
            train,
            validation,
            test,
            users_without_holdout,
        }
    }

    /// Training-target items of `user`, sorted ascending.
    pub fn train_target_items(&self, user: UserId) -> Vec<ItemId> {
        let edges = self.train.target_edges().as_slice();
        let start = edges.partition_point(|e| e.user < user);
        edges[start..]
            .iter()
            .take_while(|e| e.user == user)
            .map(|e| e.item)
            .collect()
    }
}

/// Holds out, per user with at least three target interactions, the latest
/// one for test and the second latest for validation. Order is by
/// `(timestamp, item id)`; a missing timestamp sorts as 0.
pub fn split_leave_one_out(ds: &InteractionDataset) -> SplitDataset {
    let target = ds.target_index();
    let edges = ds.target_edges().as_slice();
    let mut train_target: Vec<Edge> = Vec::with_capacity(edges.len());
    let mut validation = Vec::new();
    let mut test = Vec::new();
    let mut short_users = 0;

    let mut start = 0;
    while start < edges.len() {
        let user = edges[start].user;
        let end = start + edges[start..].iter().take_while(|e| e.user == user).count();
        let mut group: Vec<Edge> = edges[start..end].to_vec();
        if group.len() >= 3 {
            group.sort_by_key(|e| (e.timestamp.unwrap_or(0), e.item));
            let last = group.pop().expect("len >= 3");
            let second = group.pop().expect("len >= 3");
            test.push((user, last.item));
            validation.push((user, second.item));
        } else {
            short_users += 1;
        }
        train_target.extend(group);
        start = end;
    }

    let train = ds
        .with_behavior_edges(target, train_target)
        .expect("held-out edges stay within bounds");
    SplitDataset {
        train,
        validation,
        test,
        users_without_holdout: short_users,
    }
}
