mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;

use common::{brute_bar, brute_dt, small_dataset};
use proptest::prelude::*;
use rmbrec::dataset::{
    compute_bar, compute_dt, diagnose, load_dataset, perturb, read_split, split_leave_one_out, write_dataset,
    write_split, Edge, PerturbationMode, PerturbationSpec,
};
use rmbrec::InteractionDataset;

fn file_bytes(dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn three_user_fixture_loads_like_a_hand_parse() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("manifest.json"), r#"{"behaviors": ["view", "buy"], "target": "buy"}"#).unwrap();
    let view = "alice\tpen\t3\nbob\tink\t1\nalice\tpen\t2\ncarol\tpad\t5\n";
    let buy = "alice\tpen\t4\nbob\tpad\t6\ncarol\tpad\t7\n";
    fs::write(dir.path().join("view.tsv"), view).unwrap();
    fs::write(dir.path().join("buy.tsv"), buy).unwrap();
    let ds = load_dataset(dir.path()).unwrap();

    // Parse, dedup keeping the earliest timestamp, and sort, by hand.
    let mut users = BTreeSet::new();
    let mut items = BTreeSet::new();
    let mut per: Vec<BTreeMap<(String, String), u64>> = vec![BTreeMap::new(), BTreeMap::new()];
    for (b, text) in [view, buy].iter().enumerate() {
        for line in text.lines() {
            let c: Vec<&str> = line.split('\t').collect();
            users.insert(c[0].to_string());
            items.insert(c[1].to_string());
            let t: u64 = c[2].parse().unwrap();
            let e = per[b].entry((c[0].into(), c[1].into())).or_insert(t);
            *e = (*e).min(t);
        }
    }
    let users: Vec<String> = users.into_iter().collect();
    let items: Vec<String> = items.into_iter().collect();
    assert_eq!(ds.user_ids(), users);
    assert_eq!(ds.item_ids(), items);
    assert_eq!(ds.num_users(), 3);
    assert_eq!(ds.num_items(), 3);
    let total: usize = per.iter().map(BTreeMap::len).sum();
    assert_eq!(total, 6);
    assert_eq!(ds.total_edges(), total);
    for (b, expected) in per.iter().enumerate() {
        let got: Vec<(String, String, Option<u64>)> = ds
            .edges(b)
            .iter()
            .map(|e| (users[e.user as usize].clone(), items[e.item as usize].clone(), e.timestamp))
            .collect();
        let want: Vec<(String, String, Option<u64>)> =
            expected.iter().map(|((u, i), t)| (u.clone(), i.clone(), Some(*t))).collect();
        assert_eq!(got, want);
    }
}

#[test]
fn split_round_trips_through_disk() {
    let ds = rmbrec::synthetic::planted_dataset(&rmbrec::synthetic::PlantedSpec::learnability(1)).unwrap();
    let split = split_leave_one_out(&ds);
    let dir = tempfile::tempdir().unwrap();
    write_split(&split, dir.path()).unwrap();
    assert!(rmbrec::dataset::is_split_dir(dir.path()));
    let back = read_split(dir.path()).unwrap();
    assert_eq!(back, split);
}

#[test]
fn bar_grows_when_target_pairs_are_copied() {
    let ds = InteractionDataset::from_dense(
        vec!["view".into(), "buy".into()],
        "buy",
        3,
        3,
        vec![
            vec![Edge::new(0, 0, None)],
            vec![Edge::new(0, 0, None), Edge::new(1, 1, None), Edge::new(2, 2, None)],
        ],
    )
    .unwrap();
    let mut last = compute_bar(&ds, "view").unwrap();
    let mut view: Vec<Edge> = ds.edges(0).as_slice().to_vec();
    for e in ds.target_edges().iter().skip(1) {
        view.push(*e);
        let next = ds.with_behavior_edges(0, view.clone()).unwrap();
        let bar = compute_bar(&next, "view").unwrap();
        assert!(bar >= last);
        last = bar;
    }
    assert_eq!(last, 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn load_write_load_is_idempotent(raw in small_dataset(8, 8)) {
        let ds = raw.build();
        let a = tempfile::tempdir().unwrap();
        write_dataset(&ds, a.path()).unwrap();
        let once = load_dataset(a.path()).unwrap();
        prop_assert_eq!(&once, &ds);
        let b = tempfile::tempdir().unwrap();
        write_dataset(&once, b.path()).unwrap();
        let twice = load_dataset(b.path()).unwrap();
        prop_assert_eq!(&twice, &once);
        prop_assert_eq!(file_bytes(a.path()), file_bytes(b.path()));
    }

    #[test]
    fn bar_and_dt_match_pair_enumeration(raw in small_dataset(10, 10)) {
        let ds = raw.build();
        let names = raw.names();
        for (b, name) in names.iter().enumerate() {
            let bar = compute_bar(&ds, name).unwrap();
            prop_assert!((0.0..=1.0).contains(&bar));
            if b + 1 == names.len() {
                prop_assert_eq!(bar, 1.0);
            } else {
                prop_assert_eq!(bar, brute_bar(&raw, b));
            }
        }
        let dt = compute_dt(&ds).unwrap();
        let (value, approximate) = brute_dt(&raw);
        prop_assert_eq!(dt.value, value);
        prop_assert_eq!(dt.approximate, approximate);
        let report = diagnose(&ds).unwrap();
        prop_assert_eq!(report.dt, value);
    }

    #[test]
    fn bar_is_monotone_under_target_edge_additions(raw in small_dataset(6, 6), pick in any::<prop::sample::Index>()) {
        let ds = raw.build();
        let target: Vec<Edge> = ds.target_edges().as_slice().to_vec();
        let before = compute_bar(&ds, "aux0").unwrap();
        let mut aux = ds.edges(0).as_slice().to_vec();
        aux.push(target[pick.index(target.len())]);
        let after = compute_bar(&ds.with_behavior_edges(0, aux).unwrap(), "aux0").unwrap();
        prop_assert!(after >= before);
    }

    #[test]
    fn perturbation_counts_are_exact(
        raw in small_dataset(8, 8),
        ratio in 0.01f64..=1.0,
        add in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let ds = raw.build();
        let mode = if add { PerturbationMode::Add } else { PerturbationMode::Remove };
        let spec = PerturbationSpec::all_auxiliary(&ds, mode, ratio, seed);
        let cells = ds.num_users() * ds.num_items();
        let result = perturb(&ds, &spec);
        for b in ds.auxiliary_indices() {
            let n = ds.edges(b).len();
            let k = (ratio * n as f64 - 1e-9).ceil() as usize;
            if add && k > cells - n {
                prop_assert!(result.is_err());
                return Ok(());
            }
        }
        let out = result.unwrap();
        prop_assert_eq!(out.target_edges(), ds.target_edges());
        for b in ds.auxiliary_indices() {
            let (old, new) = (ds.edges(b), out.edges(b));
            let k = (ratio * old.len() as f64 - 1e-9).ceil() as usize;
            let old_pairs: BTreeSet<_> = old.iter().map(Edge::pair).collect();
            let new_pairs: BTreeSet<_> = new.iter().map(Edge::pair).collect();
            prop_assert_eq!(new_pairs.len(), new.len());
            if add {
                prop_assert_eq!(new.len(), old.len() + k);
                prop_assert!(old_pairs.is_subset(&new_pairs));
                for e in new.iter().filter(|e| !old_pairs.contains(&e.pair())) {
                    prop_assert_eq!(e.timestamp, Some(0));
                }
            } else {
                prop_assert_eq!(new.len(), old.len() - k);
                prop_assert!(new_pairs.is_subset(&old_pairs));
            }
        }
    }

    #[test]
    fn split_conserves_target_edges(raw in small_dataset(8, 8)) {
        let ds = raw.build();
        let split = split_leave_one_out(&ds);
        let mut original: BTreeMap<u32, usize> = BTreeMap::new();
        for e in ds.target_edges().iter() {
            *original.entry(e.user).or_default() += 1;
        }
        let mut after: BTreeMap<u32, usize> = BTreeMap::new();
        for e in split.train.target_edges().iter() {
            *after.entry(e.user).or_default() += 1;
        }
        for &(u, i) in split.validation.iter().chain(&split.test) {
            *after.entry(u).or_default() += 1;
            prop_assert!(!split.train.target_edges().contains(u, i));
        }
        prop_assert_eq!(after, original.clone());
        let held: usize = original.values().filter(|&&c| c >= 3).count();
        prop_assert_eq!(split.test.len(), held);
        prop_assert_eq!(split.validation.len(), held);
        for b in ds.auxiliary_indices() {
            prop_assert_eq!(split.train.edges(b), ds.edges(b));
        }
    }
}
