mod common;

use std::collections::BTreeSet;

use common::{brute_metrics, brute_rank, small_dataset};
use ndarray::Array2;
use proptest::prelude::*;
use rmbrec::dataset::split_leave_one_out;
use rmbrec::evaluation::{evaluate, evaluate_pairs, fused_embeddings, EvalOptions, FusedEmbeddings};
use rmbrec::gradcheck::random_matrix;
use rmbrec::graph::build_all;
use rmbrec::{Hyperparameters, ModelState};

/// Integer-valued tables so every score is exact and ties are common.
fn integer_table(rows: usize, dim: usize, values: &[i8]) -> Array2<f64> {
    Array2::from_shape_fn((rows, dim), |(r, c)| values[(r * dim + c) % values.len()] as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn evaluate_matches_sort_oracle(
        raw in small_dataset(20, 20),
        values in prop::collection::vec(-2i8..=2, 1..64),
        exclude in any::<bool>(),
        ks in prop::collection::vec(1usize..25, 1..4),
    ) {
        let ds = raw.build();
        let split = split_leave_one_out(&ds);
        prop_assume!(!split.test.is_empty());
        let fused = FusedEmbeddings {
            users: integer_table(ds.num_users(), 2, &values),
            items: integer_table(ds.num_items(), 2, &values[values.len() / 2..]),
        };
        let opts = EvalOptions { ks: ks.clone(), exclude_train: exclude, record_ranks: true };
        let report = evaluate_pairs(&fused, &split, &split.test, &opts).unwrap();

        let mut ranks = Vec::new();
        for &(u, i) in &split.test {
            let scores: Vec<f64> = (0..ds.num_items())
                .map(|j| (0..2).map(|c| fused.users[[u as usize, c]] * fused.items[[j, c]]).sum())
                .collect();
            let excluded: BTreeSet<u32> = if exclude {
                split.train.target_edges().iter().filter(|e| e.user == u).map(|e| e.item).collect()
            } else {
                BTreeSet::new()
            };
            ranks.push(brute_rank(&scores, i, &excluded));
        }
        let recorded: Vec<usize> = report.per_user_ranks.as_ref().unwrap().iter().map(|p| p.1).collect();
        prop_assert_eq!(&recorded, &ranks);
        for &k in &ks {
            let (hr, ndcg) = brute_metrics(&ranks, k);
            prop_assert_eq!(report.hr_at(k).unwrap(), hr);
            prop_assert_eq!(report.ndcg_at(k).unwrap(), ndcg);
        }

        // Metrics never decrease with K.
        let mut last = (0.0, 0.0);
        for &k in &report.ks {
            let cur = (report.hr_at(k).unwrap(), report.ndcg_at(k).unwrap());
            prop_assert!(cur.0 >= last.0 && cur.1 >= last.1);
            last = cur;
        }
    }

    #[test]
    fn evaluate_uses_fused_training_graphs(raw in small_dataset(10, 10), seed in any::<u64>()) {
        let ds = raw.build();
        let split = split_leave_one_out(&ds);
        prop_assume!(!split.test.is_empty());
        let hp = Hyperparameters { dim: 3, layers: 2, ..Default::default() };
        let state = ModelState::new(
            random_matrix(ds.num_users(), 3, seed),
            random_matrix(ds.num_items(), 3, seed ^ 1),
            hp,
        ).unwrap();
        let opts = EvalOptions::default();
        let direct = evaluate(&state, &split, &opts).unwrap();
        let fused = fused_embeddings(&state, &build_all(&split.train)).unwrap();
        prop_assert_eq!(direct, evaluate_pairs(&fused, &split, &split.test, &opts).unwrap());
    }
}

#[test]
fn rank_two_closed_form() {
    let (hr, ndcg) = rmbrec::evaluation::metrics_from_ranks(&[2], &[10]);
    assert_eq!(hr[&10], 1.0);
    let ndcg = ndcg[&10];
    assert!((ndcg - 1.0 / 3f64.log2()).abs() < 1e-15);
    assert!((ndcg - 0.6309).abs() < 1e-4);
}
