use std::fmt::Write as _;

use serde::Serialize;

use super::{evaluate, EvalOptions, EvalReport};
use crate::dataset::{perturb, PerturbationMode, PerturbationSpec, SplitDataset};
use crate::error::Result;
use crate::training::{train, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    /// `None` for the clean baseline.
    pub mode: Option<PerturbationMode>,
    pub ratio: f64,
    pub report: EvalReport,
    pub rel_drop_hr10: f64,
    pub rel_drop_ndcg10: f64,
    /// Auxiliary behaviors emptied by the perturbation and left out of
    /// training.
    pub dropped_behaviors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn baseline(&self) -> &SweepRow {
        &self.rows[0]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("mode,ratio,hr10,ndcg10,rel_drop_hr10,rel_drop_ndcg10\n");
        for r in &self.rows {
            let mode = r.mode.map_or_else(|| "none".to_string(), |m| m.to_string());
            let _ = writeln!(
                out,
                "{mode},{},{},{},{},{}",
                r.ratio,
                r.report.hr_at(10).expect("k = 10 present"),
                r.report.ndcg_at(10).expect("k = 10 present"),
                r.rel_drop_hr10,
                r.rel_drop_ndcg10
            );
        }
        out
    }
}

/// `(baseline - perturbed) / baseline`; NaN when the baseline is 0.
fn relative_drop(baseline: f64, perturbed: f64) -> f64 {
    if baseline == 0.0 {
        f64::NAN
    } else {
        (baseline - perturbed) / baseline
    }
}

fn run(split: &SplitDataset, cfg: &TrainConfig, opts: &EvalOptions) -> Result<EvalReport> {
    let outcome = train(split, cfg)?;
    evaluate(&outcome.state, split, opts)
}

/// Trains on the clean split, then once per (mode, ratio) on a split whose
/// auxiliary behaviors were perturbed with `seed`, always from the same
/// training seed and always evaluated on the untouched test pairs.
pub fn robustness_sweep(
    split: &SplitDataset,
    cfg: &TrainConfig,
    ratios: &[f64],
    modes: &[PerturbationMode],
    seed: u64,
) -> Result<SweepTable> {
    let mut cfg = cfg.clone();
    cfg.log_path = None;
    let mut ks = cfg.ks.clone();
    ks.push(10);
    let opts = EvalOptions {
        ks,
        exclude_train: cfg.exclude_train,
        record_ranks: false,
    };

    let base = run(split, &cfg, &opts)?;
    let (base_hr, base_ndcg) = (base.hr_at(10).expect("k = 10"), base.ndcg_at(10).expect("k = 10"));
    let mut rows = vec![SweepRow {
        mode: None,
        ratio: 0.0,
        report: base,
        rel_drop_hr10: 0.0,
        rel_drop_ndcg10: 0.0,
        dropped_behaviors: Vec::new(),
    }];

    for &mode in modes {
        for &ratio in ratios {
            let spec = PerturbationSpec::all_auxiliary(&split.train, mode, ratio, seed);
            let mut train_ds = perturb(&split.train, &spec)?;
            let emptied: Vec<String> = train_ds
                .auxiliary_indices()
                .into_iter()
                .filter(|&b| train_ds.edges(b).is_empty())
                .map(|b| train_ds.behaviors()[b].clone())
                .collect();
            if !emptied.is_empty() {
                log::warn!("{mode} {ratio}: {} emptied, dropped from training", emptied.join(", "));
                train_ds = train_ds.without_behaviors(&emptied)?;
            }
            let perturbed = SplitDataset {
                train: train_ds,
                validation: split.validation.clone(),
                test: split.test.clone(),
                users_without_holdout: split.users_without_holdout,
            };
            let report = run(&perturbed, &cfg, &opts)?;
            let (hr, ndcg) = (report.hr_at(10).expect("k = 10"), report.ndcg_at(10).expect("k = 10"));
            rows.push(SweepRow {
                mode: Some(mode),
                ratio,
                report,
                rel_drop_hr10: relative_drop(base_hr, hr),
                rel_drop_ndcg10: relative_drop(base_ndcg, ndcg),
                dropped_behaviors: emptied,
            });
        }
    }
    Ok(SweepTable { rows })
}
