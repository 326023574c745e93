//! Multi-behavior interaction data: loading, id compaction, leave-one-out
//! splitting, alignment diagnostics and seeded edge perturbation.
//!
//! Every behavior shares one user/item universe. Raw string ids are mapped to
//! dense `u32` ids by sorting the raw ids, so the same input always yields
//! the same dense ids; the maps are persisted next to derived files.

mod diagnostics;
mod io;
mod perturb;
mod split;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use diagnostics::{compute_bar, compute_dt, diagnose, diagnose_behaviors, DiagnosticsReport, DtRatio};
pub use io::{is_split_dir, load_dataset, read_split, write_dataset, write_split};
pub use perturb::{perturb, PerturbationMode, PerturbationSpec};
pub use split::{split_leave_one_out, SplitDataset};

pub type UserId = u32;
pub type ItemId = u32;

/// One raw log line before id compaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionRecord {
    pub user: String,
    pub item: String,
    pub behavior: String,
    pub timestamp: Option<u64>,
}

/// A deduplicated (user, item) edge of one behavior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub user: UserId,
    pub item: ItemId,
    pub timestamp: Option<u64>,
}

impl Edge {
    pub fn new(user: UserId, item: ItemId, timestamp: Option<u64>) -> Self {
        Self {
            user,
            item,
            timestamp,
        }
    }

    #[inline]
    pub fn pair(&self) -> (UserId, ItemId) {
        (self.user, self.item)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub behaviors: Vec<String>,
    pub target: String,
    #[serde(default)]
    pub num_users: usize,
    #[serde(default)]
    pub num_items: usize,
}

impl DatasetManifest {
    pub fn new(behaviors: Vec<String>, target: impl Into<String>) -> Result<Self> {
        let manifest = Self {
            behaviors,
            target: target.into(),
            num_users: 0,
            num_items: 0,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.behaviors.is_empty() {
            return Err(Error::Manifest("no behaviors declared".into()));
        }
        let mut seen = BTreeSet::new();
        for b in &self.behaviors {
            if b.is_empty() || b.contains(['/', '\\', '\t', '\n']) {
                return Err(Error::Manifest(format!("invalid behavior name '{b}'")));
            }
            if !seen.insert(b.as_str()) {
                return Err(Error::Manifest(format!("duplicate behavior '{b}'")));
            }
        }
        if !seen.contains(self.target.as_str()) {
            return Err(Error::Manifest(format!(
                "target '{}' is not a declared behavior",
                self.target
            )));
        }
        Ok(())
    }

    pub fn behavior_index(&self, name: &str) -> Result<usize> {
        self.behaviors
            .iter()
            .position(|b| b == name)
            .ok_or_else(|| Error::UnknownBehavior(name.to_string()))
    }

    pub fn target_index(&self) -> usize {
        self.behavior_index(&self.target)
            .expect("validated manifest contains its target")
    }
}

/// Sorted, duplicate-free edge list of one behavior.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BehaviorEdges {
    edges: Vec<Edge>,
}

impl BehaviorEdges {
    /// Sorts by (user, item) and keeps the earliest timestamp of each pair.
    pub fn from_unsorted(mut edges: Vec<Edge>) -> Self {
        edges.sort_by_key(|e| (e.user, e.item));
        let mut out: Vec<Edge> = Vec::with_capacity(edges.len());
        for e in edges {
            match out.last_mut() {
                Some(last) if last.pair() == e.pair() => {
                    last.timestamp = match (last.timestamp, e.timestamp) {
                        (Some(a), Some(b)) => Some(a.min(b)),
                        (a, b) => a.or(b),
                    };
                }
                _ => out.push(e),
            }
        }
        Self { edges: out }
    }

    pub fn as_slice(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn find(&self, user: UserId, item: ItemId) -> Option<&Edge> {
        self.edges
            .binary_search_by_key(&(user, item), Edge::pair)
            .ok()
            .map(|i| &self.edges[i])
    }

    pub fn contains(&self, user: UserId, item: ItemId) -> bool {
        self.find(user, item).is_some()
    }

    pub fn all_timestamped(&self) -> bool {
        self.edges.iter().all(|e| e.timestamp.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionDataset {
    manifest: DatasetManifest,
    users: Vec<String>,
    items: Vec<String>,
    edges: Vec<BehaviorEdges>,
}

impl InteractionDataset {
    /// Compacts raw records into dense ids. Ids are assigned in sorted raw-id
    /// order across all behaviors.
    pub fn from_records<I>(behaviors: Vec<String>, target: &str, records: I) -> Result<Self>
    where
        I: IntoIterator<Item = InteractionRecord>,
    {
        let manifest = DatasetManifest::new(behaviors, target)?;
        let records: Vec<InteractionRecord> = records.into_iter().collect();
        let mut users = BTreeSet::new();
        let mut items = BTreeSet::new();
        for r in &records {
            manifest
                .behavior_index(&r.behavior)
                .map_err(|_| Error::UndeclaredBehavior(r.behavior.clone()))?;
            users.insert(r.user.clone());
            items.insert(r.item.clone());
        }
        let users: Vec<String> = users.into_iter().collect();
        let items: Vec<String> = items.into_iter().collect();
        Self::from_records_with_maps(manifest, users, items, records)
    }

    /// Compacts raw records against fixed, sorted id maps.
    pub(crate) fn from_records_with_maps(
        manifest: DatasetManifest,
        users: Vec<String>,
        items: Vec<String>,
        records: Vec<InteractionRecord>,
    ) -> Result<Self> {
        let user_ids: BTreeMap<&str, UserId> = users
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i as UserId))
            .collect();
        let item_ids: BTreeMap<&str, ItemId> = items
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i as ItemId))
            .collect();
        let mut per_behavior: Vec<Vec<Edge>> = vec![Vec::new(); manifest.behaviors.len()];
        for r in &records {
            let b = manifest
                .behavior_index(&r.behavior)
                .map_err(|_| Error::UndeclaredBehavior(r.behavior.clone()))?;
            let user = *user_ids
                .get(r.user.as_str())
                .ok_or_else(|| Error::Manifest(format!("user '{}' missing from id map", r.user)))?;
            let item = *item_ids
                .get(r.item.as_str())
                .ok_or_else(|| Error::Manifest(format!("item '{}' missing from id map", r.item)))?;
            per_behavior[b].push(Edge::new(user, item, r.timestamp));
        }
        let edges = per_behavior
            .into_iter()
            .map(BehaviorEdges::from_unsorted)
            .collect();
        let ds = Self::assemble(manifest, users, items, edges)?;
        if ds.target_edges().is_empty() {
            return Err(Error::EmptyTarget(ds.manifest.target.clone()));
        }
        Ok(ds)
    }

    /// Builds a dataset directly from dense ids. Raw ids are generated as
    /// zero-padded decimal strings (`u007`, `i012`) so that their sort order
    /// matches the dense order.
    pub fn from_dense(
        behaviors: Vec<String>,
        target: &str,
        num_users: usize,
        num_items: usize,
        edges: Vec<Vec<Edge>>,
    ) -> Result<Self> {
        let manifest = DatasetManifest::new(behaviors, target)?;
        if edges.len() != manifest.behaviors.len() {
            return Err(Error::Manifest(format!(
                "{} edge lists for {} behaviors",
                edges.len(),
                manifest.behaviors.len()
            )));
        }
        let users = padded_ids('u', num_users);
        let items = padded_ids('i', num_items);
        let edges = edges.into_iter().map(BehaviorEdges::from_unsorted).collect();
        Self::assemble(manifest, users, items, edges)
    }

    fn assemble(
        mut manifest: DatasetManifest,
        users: Vec<String>,
        items: Vec<String>,
        edges: Vec<BehaviorEdges>,
    ) -> Result<Self> {
        manifest.num_users = users.len();
        manifest.num_items = items.len();
        for (b, list) in edges.iter().enumerate() {
            if let Some(e) = list
                .iter()
                .find(|e| e.user as usize >= users.len() || e.item as usize >= items.len())
            {
                return Err(Error::Manifest(format!(
                    "edge ({}, {}) of '{}' is out of bounds",
                    e.user, e.item, manifest.behaviors[b]
                )));
            }
        }
        Ok(Self {
            manifest,
            users,
            items,
            edges,
        })
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn behaviors(&self) -> &[String] {
        &self.manifest.behaviors
    }

    pub fn num_behaviors(&self) -> usize {
        self.manifest.behaviors.len()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn user_ids(&self) -> &[String] {
        &self.users
    }

    pub fn item_ids(&self) -> &[String] {
        &self.items
    }

    pub fn target_index(&self) -> usize {
        self.manifest.target_index()
    }

    pub fn target_name(&self) -> &str {
        &self.manifest.target
    }

    /// Indices of all non-target behaviors, in manifest order.
    pub fn auxiliary_indices(&self) -> Vec<usize> {
        let t = self.target_index();
        (0..self.num_behaviors()).filter(|&b| b != t).collect()
    }

    pub fn behavior_index(&self, name: &str) -> Result<usize> {
        self.manifest.behavior_index(name)
    }

    pub fn edges(&self, behavior: usize) -> &BehaviorEdges {
        &self.edges[behavior]
    }

    pub fn edges_named(&self, name: &str) -> Result<&BehaviorEdges> {
        Ok(&self.edges[self.behavior_index(name)?])
    }

    pub fn target_edges(&self) -> &BehaviorEdges {
        &self.edges[self.target_index()]
    }

    pub fn total_edges(&self) -> usize {
        self.edges.iter().map(BehaviorEdges::len).sum()
    }

    /// Same universe, one behavior's edges replaced.
    pub fn with_behavior_edges(&self, behavior: usize, edges: Vec<Edge>) -> Result<Self> {
        let mut all = self.edges.clone();
        all[behavior] = BehaviorEdges::from_unsorted(edges);
        Self::assemble(
            self.manifest.clone(),
            self.users.clone(),
            self.items.clone(),
            all,
        )
    }

    /// Same universe with the named behaviors removed. The target cannot be
    /// dropped.
    pub fn without_behaviors(&self, drop: &[String]) -> Result<Self> {
        for name in drop {
            self.behavior_index(name)?;
            if *name == self.manifest.target {
                return Err(Error::Config(format!(
                    "cannot drop the target behavior '{name}'"
                )));
            }
        }
        let mut behaviors = Vec::new();
        let mut edges = Vec::new();
        for (name, list) in self.manifest.behaviors.iter().zip(&self.edges) {
            if !drop.contains(name) {
                behaviors.push(name.clone());
                edges.push(list.clone());
            }
        }
        let manifest = DatasetManifest::new(behaviors, self.manifest.target.clone())?;
        Self::assemble(manifest, self.users.clone(), self.items.clone(), edges)
    }

    /// Restricts the dataset to `keep`, in the given order.
    pub fn select_behaviors(&self, keep: &[String]) -> Result<Self> {
        let drop: Vec<String> = self
            .manifest
            .behaviors
            .iter()
            .filter(|b| !keep.contains(b))
            .cloned()
            .collect();
        let ds = self.without_behaviors(&drop)?;
        if ds.manifest.behaviors != keep {
            let mut edges = Vec::new();
            for name in keep {
                edges.push(ds.edges[ds.behavior_index(name)?].clone());
            }
            let manifest = DatasetManifest::new(keep.to_vec(), ds.manifest.target.clone())?;
            return Self::assemble(manifest, ds.users, ds.items, edges);
        }
        Ok(ds)
    }

    /// SHA-256 over the manifest and both id maps; identifies the id space a
    /// checkpoint was trained against.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for b in &self.manifest.behaviors {
            h.update(b.as_bytes());
            h.update([0u8]);
        }
        h.update([1u8]);
        h.update(self.manifest.target.as_bytes());
        for (tag, ids) in [(2u8, &self.users), (3u8, &self.items)] {
            h.update([tag]);
            for id in ids {
                h.update(id.as_bytes());
                h.update([0u8]);
            }
        }
        hex::encode(h.finalize())
    }
}

fn padded_ids(prefix: char, n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len();
    (0..n).map(|i| format!("{prefix}{i:0width$}")).collect()
}
