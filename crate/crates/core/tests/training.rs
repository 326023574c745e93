mod common;

use common::planted_config;
use common::reference::{max_rel_error, DenseProblem};
use rmbrec::dataset::{split_leave_one_out, Edge};
use rmbrec::evaluation::{evaluate, evaluate_pairs, fused_embeddings, EvalOptions};
use rmbrec::gradcheck::{gradcheck_hyperparameters, random_fixture, GradcheckConfig, Variant};
use rmbrec::graph::build_all;
use rmbrec::objectives::{total_loss, IrmVariant};
use rmbrec::rng::sub_stream;
use rmbrec::synthetic::{planted_dataset, PlantedSpec};
use rmbrec::training::{initialize, train, Checkpoint, TripletSampler};
use rmbrec::InteractionDataset;

#[test]
fn sampled_items_are_uniform() {
    // User 0 buys 5 of 12 items; the other users keep batches realistic.
    let buy: Vec<Edge> = [1, 3, 4, 8, 11]
        .into_iter()
        .map(|i| Edge::new(0, i, None))
        .chain((1..4).map(|u| Edge::new(u, u, None)))
        .collect();
    let view = vec![Edge::new(0, 0, None), Edge::new(2, 5, None)];
    let ds = InteractionDataset::from_dense(vec!["view".into(), "buy".into()], "buy", 4, 12, vec![view, buy]).unwrap();
    let sampler = TripletSampler::new(&ds);
    let mut rng = sub_stream(5, "sampling");
    let mut pos = [0usize; 12];
    let mut neg = [0usize; 12];
    let draws = 100;
    for _ in 0..draws {
        let (batch, stats) = sampler.sample(&[0, 1, 2, 3], &mut rng);
        assert_eq!(stats.saturated_main, 0);
        let t = batch.main.iter().find(|t| t.user == 0).unwrap();
        pos[t.pos as usize] += 1;
        neg[t.neg as usize] += 1;
    }
    let positives = [1usize, 3, 4, 8, 11];
    let check = |counts: &[usize; 12], support: &[usize]| {
        let p = 1.0 / support.len() as f64;
        let (mean, sd) = (draws as f64 * p, (draws as f64 * p * (1.0 - p)).sqrt());
        for (i, &n) in counts.iter().enumerate() {
            if support.contains(&i) {
                assert!((n as f64 - mean).abs() <= 3.0 * sd, "item {i}: {n} vs {mean}");
            } else {
                assert_eq!(n, 0, "item {i} outside the support");
            }
        }
    };
    check(&pos, &positives);
    let negatives: Vec<usize> = (0..12).filter(|i| !positives.contains(i)).collect();
    check(&neg, &negatives);
}

#[test]
fn zero_epochs_returns_the_initialization() {
    let split = split_leave_one_out(&planted_dataset(&PlantedSpec::learnability(0)).unwrap());
    let mut cfg = planted_config(4);
    cfg.hp.max_epochs = 0;
    let out = train(&split, &cfg).unwrap();
    let init = initialize(split.train.num_users(), split.train.num_items(), &cfg.hp).unwrap();
    assert_eq!(out.state, init);
    assert!(out.log.records.is_empty());
    assert_eq!((out.epochs_run, out.best_epoch, out.best_val_hr10), (0, 0, None));
}

#[test]
fn identical_seeds_give_identical_logs() {
    let split = split_leave_one_out(&planted_dataset(&PlantedSpec::learnability(2)).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: u64, name: &str| {
        let mut cfg = planted_config(seed);
        cfg.hp.max_epochs = 12;
        cfg.log_path = Some(dir.path().join(name));
        let out = train(&split, &cfg).unwrap();
        (std::fs::read(dir.path().join(name)).unwrap(), out.state)
    };
    let (a, sa) = run(9, "a.csv");
    let (b, sb) = run(9, "b.csv");
    let (c, _) = run(10, "c.csv");
    assert_eq!(a, b);
    assert_eq!(sa, sb);
    assert_ne!(a, c);
}

#[test]
fn returned_checkpoint_dominates_the_final_epoch() {
    for seed in 0..3 {
        let split = split_leave_one_out(&planted_dataset(&PlantedSpec::alignment(seed)).unwrap());
        let mut cfg = planted_config(seed);
        cfg.hp.max_epochs = 40;
        cfg.hp.patience = 3;
        let out = train(&split, &cfg).unwrap();
        let last = out.log.records.last().unwrap().val_hr10.unwrap();
        let fused = fused_embeddings(&out.state, &build_all(&split.train)).unwrap();
        let opts = EvalOptions { ks: vec![10], ..Default::default() };
        let hr = evaluate_pairs(&fused, &split, &split.validation, &opts).unwrap().hr_at(10).unwrap();
        assert_eq!(Some(hr), out.best_val_hr10);
        assert!(hr >= last, "seed {seed}: {hr} < {last}");
    }
}

#[test]
fn small_steps_descend() {
    let split = split_leave_one_out(&planted_dataset(&PlantedSpec::learnability(0)).unwrap());
    let mut cfg = planted_config(0);
    cfg.hp.lr = 1e-3;
    cfg.hp.max_epochs = 5;
    let out = train(&split, &cfg).unwrap();
    let totals: Vec<f64> = out.log.records.iter().map(|r| r.total).collect();
    assert!(totals.windows(2).all(|w| w[1] < w[0]), "{totals:?}");
}

#[test]
fn rex_and_irm_trajectories_differ() {
    let split = split_leave_one_out(&planted_dataset(&PlantedSpec::learnability(1)).unwrap());
    let mut cfg = planted_config(1);
    cfg.hp.max_epochs = 5;
    let rex = train(&split, &cfg).unwrap();
    cfg.hp.irm_variant = IrmVariant::IrmV1;
    let irm = train(&split, &cfg).unwrap();
    let totals = |o: &rmbrec::training::TrainOutcome| o.log.records.iter().map(|r| r.total).collect::<Vec<_>>();
    assert_ne!(totals(&rex), totals(&irm));
}

#[test]
fn empty_validation_trains_to_the_end() {
    let split = split_leave_one_out(&planted_dataset(&PlantedSpec::learnability(0)).unwrap());
    let split = rmbrec::SplitDataset { validation: Vec::new(), ..split };
    let mut cfg = planted_config(0);
    cfg.hp.max_epochs = 7;
    cfg.hp.patience = 1;
    let out = train(&split, &cfg).unwrap();
    assert_eq!(out.epochs_run, 7);
    assert_eq!(out.best_epoch, 7);
    assert!(!out.stopped_early);
    assert!(out.log.records.iter().all(|r| r.val_hr10.is_none()));
}

#[test]
fn saved_checkpoint_evaluates_identically() {
    let split = split_leave_one_out(&planted_dataset(&PlantedSpec::learnability(3)).unwrap());
    let mut cfg = planted_config(3);
    cfg.hp.max_epochs = 10;
    let out = train(&split, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    Checkpoint::new(&out.state, &split.train).save(&path).unwrap();
    let ckpt = Checkpoint::load(&path).unwrap();
    ckpt.check_compatible(&split.train).unwrap();
    let opts = EvalOptions::default();
    assert_eq!(
        evaluate(&ckpt.to_state().unwrap(), &split, &opts).unwrap(),
        evaluate(&out.state, &split, &opts).unwrap()
    );
}

#[test]
fn keystone_gradient_six_by_six() {
    let cfg = GradcheckConfig {
        seed: 21,
        num_users: 6,
        num_items: 6,
        num_behaviors: 2,
        dim: 4,
        layers: 1,
        ..Default::default()
    };
    for variant in Variant::all() {
        let hp = gradcheck_hyperparameters(&cfg, variant);
        let fx = random_fixture(&cfg, hp).unwrap();
        assert_eq!(fx.state.num_parameters(), 48);
        let (lb, grads) = total_loss(&fx.state, &fx.graphs, fx.target, &fx.batch, &fx.batch_users).unwrap();
        let problem = DenseProblem::new(fx);
        let value = problem.total(&problem.fx.state.users, &problem.fx.state.items);
        assert!((value - lb.total).abs() <= 1e-12 * value.abs().max(1.0), "{variant}: {value} vs {}", lb.total);
        let (nu, ni) = problem.numeric_gradient(1e-5);
        let err = max_rel_error(&grads.d_users, &nu, 1e-6).max(max_rel_error(&grads.d_items, &ni, 1e-6));
        assert!(err <= 1e-5, "{variant}: {err:e}");
    }
}
