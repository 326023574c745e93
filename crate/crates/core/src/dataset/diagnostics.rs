//! Behavioral alignment ratio (BAR) and direct-target ratio (DT).
//!
//! BAR is computed over exact (user, item) pairs: the share of target pairs
//! that also occur in behavior `b`. Timestamps play no role in BAR.

use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};

use super::{BehaviorEdges, InteractionDataset};
use crate::error::{Error, Result};

fn intersection_size(a: &BehaviorEdges, b: &BehaviorEdges) -> usize {
    let (a, b) = (a.as_slice(), b.as_slice());
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].pair().cmp(&b[j].pair()) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn nonempty_target(ds: &InteractionDataset) -> Result<&BehaviorEdges> {
    let target = ds.target_edges();
    if target.is_empty() {
        return Err(Error::EmptyTarget(ds.target_name().to_string()));
    }
    Ok(target)
}

/// |edges(b) ∩ edges(target)| / |edges(target)|.
pub fn compute_bar(ds: &InteractionDataset, behavior: &str) -> Result<f64> {
    let b = ds.behavior_index(behavior)?;
    let target = nonempty_target(ds)?;
    if b == ds.target_index() {
        return Ok(1.0);
    }
    Ok(intersection_size(ds.edges(b), target) as f64 / target.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtRatio {
    pub value: f64,
    /// True when timestamps were incomplete and "preceded by" degraded to
    /// "co-occurs with".
    pub approximate: bool,
}

/// Share of target pairs with no auxiliary interaction on the same pair at a
/// strictly earlier time.
pub fn compute_dt(ds: &InteractionDataset) -> Result<DtRatio> {
    let target = nonempty_target(ds)?;
    let aux: Vec<&BehaviorEdges> = ds.auxiliary_indices().into_iter().map(|b| ds.edges(b)).collect();
    let approximate = !target.all_timestamped() || aux.iter().any(|a| !a.all_timestamped());

    let direct = target
        .iter()
        .filter(|t| {
            !aux.iter().any(|edges| match edges.find(t.user, t.item) {
                None => false,
                Some(_) if approximate => true,
                Some(a) => a.timestamp < t.timestamp,
            })
        })
        .count();
    Ok(DtRatio {
        value: direct as f64 / target.len() as f64,
        approximate,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub num_users: usize,
    pub num_items: usize,
    /// Per-behavior edge counts in manifest order.
    pub counts: Vec<(String, usize)>,
    pub bar: Vec<(String, f64)>,
    pub dt: f64,
    pub dt_approximate: bool,
}

impl DiagnosticsReport {
    pub fn bar_of(&self, behavior: &str) -> Option<f64> {
        self.bar.iter().find(|(b, _)| b == behavior).map(|p| p.1)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

struct Ordered<'a, T>(&'a [(String, T)]);

impl<T: Serialize> Serialize for Ordered<'_, T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl Serialize for DiagnosticsReport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("DiagnosticsReport", 6)?;
        st.serialize_field("num_users", &self.num_users)?;
        st.serialize_field("num_items", &self.num_items)?;
        st.serialize_field("counts", &Ordered(&self.counts))?;
        st.serialize_field("bar", &Ordered(&self.bar))?;
        st.serialize_field("dt", &self.dt)?;
        st.serialize_field("dt_approximate", &self.dt_approximate)?;
        st.end()
    }
}

pub fn diagnose(ds: &InteractionDataset) -> Result<DiagnosticsReport> {
    diagnose_behaviors(ds, None)
}

/// Like [`diagnose`], with the per-behavior entries restricted to `only`
/// (manifest order is kept).
pub fn diagnose_behaviors(ds: &InteractionDataset, only: Option<&[String]>) -> Result<DiagnosticsReport> {
    if let Some(names) = only {
        for n in names {
            ds.behavior_index(n)?;
        }
    }
    let selected: Vec<(usize, &String)> = ds
        .behaviors()
        .iter()
        .enumerate()
        .filter(|(_, b)| only.is_none_or(|names| names.contains(b)))
        .collect();
    let mut counts = Vec::new();
    let mut bar = Vec::new();
    for (b, name) in selected {
        counts.push((name.clone(), ds.edges(b).len()));
        bar.push((name.clone(), compute_bar(ds, name)?));
    }
    let dt = compute_dt(ds)?;
    Ok(DiagnosticsReport {
        num_users: ds.num_users(),
        num_items: ds.num_items(),
        counts,
        bar,
        dt: dt.value,
        dt_approximate: dt.approximate,
    })
}
