//! Mini-batch training: uniform triplet sampling, Adam, and early stopping
//! on validation HR@10.

mod adam;
mod checkpoint;
mod sampler;

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::dataset::{SplitDataset, UserId};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_pairs, fused_embeddings, EvalOptions};
use crate::graph::build_all;
use crate::objectives::{total_loss, Hyperparameters, LossBreakdown, ModelState};
use crate::rng::{sub_stream, INIT_STREAM, SAMPLING_STREAM};

pub use adam::{adam_step, OptimizerState};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use sampler::{sample_batch, SampleStats, TripletSampler, NEGATIVE_RETRIES};

/// Standard deviation of the Gaussian initializer.
pub const INIT_STD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hp: Hyperparameters,
    /// Epochs between validation passes.
    pub eval_every: usize,
    /// Cutoffs for reports produced from the trained model.
    pub ks: Vec<usize>,
    /// Exclude training-target items when ranking validation items.
    pub exclude_train: bool,
    /// Stream the epoch log here as CSV.
    pub log_path: Option<PathBuf>,
    /// Write measured wall time into the `seconds` column; otherwise 0.
    pub record_timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hp: Hyperparameters::default(),
            eval_every: 5,
            ks: vec![5, 10, 20],
            exclude_train: true,
            log_path: None,
            record_timing: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.hp.validate()?;
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// Epoch means of the batch loss components, plus validation metrics on
/// evaluation epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub bpr: Vec<Option<f64>>,
    pub rrm: f64,
    pub orm: f64,
    pub main: f64,
    pub total: f64,
    pub val_hr10: Option<f64>,
    pub val_ndcg10: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub behaviors: Vec<String>,
    pub records: Vec<EpochRecord>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrainingLog {
    pub fn header(&self) -> String {
        let mut cols = vec!["epoch".to_string()];
        cols.extend(self.behaviors.iter().map(|b| format!("bpr_{b}")));
        cols.extend(
            ["rrm", "orm", "main", "total", "val_hr10", "val_ndcg10", "seconds"].map(String::from),
        );
        cols.join(",")
    }

    pub fn row(r: &EpochRecord) -> String {
        let mut s = r.epoch.to_string();
        for b in &r.bpr {
            let _ = write!(s, ",{}", opt(*b));
        }
        let _ = write!(
            s,
            ",{},{},{},{},{},{},{}",
            r.rrm,
            r.orm,
            r.main,
            r.total,
            opt(r.val_hr10),
            opt(r.val_ndcg10),
            r.seconds
        );
        s
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for r in &self.records {
            out.push_str(&Self::row(r));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the best validation HR@10 (the final parameters when
    /// no validation pass ran).
    pub state: ModelState,
    pub log: TrainingLog,
    /// Epoch of `state`; 0 is the initialization.
    pub best_epoch: usize,
    pub best_val_hr10: Option<f64>,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

/// Gaussian initialization of both tables from the `init` stream.
pub fn initialize(num_users: usize, num_items: usize, hp: &Hyperparameters) -> Result<ModelState> {
    let mut rng = sub_stream(hp.seed, INIT_STREAM);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let users = Array2::from_shape_simple_fn((num_users, hp.dim), || normal.sample(&mut rng));
    let items = Array2::from_shape_simple_fn((num_items, hp.dim), || normal.sample(&mut rng));
    ModelState::new(users, items, hp.clone())
}

/// Splits shuffled users into batches; a trailing single user joins the
/// previous batch so every batch has in-batch negatives.
fn batches(users: &[UserId], size: usize) -> Vec<&[UserId]> {
    let mut out: Vec<&[UserId]> = users.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = users.len() - 1 - out.last().expect("nonempty").len();
        *out.last_mut().expect("nonempty") = &users[start..];
    }
    out
}

#[derive(Default)]
struct EpochAccumulator {
    batches: usize,
    bpr_sum: Vec<f64>,
    bpr_count: Vec<usize>,
    rrm: f64,
    orm: f64,
    main: f64,
    total: f64,
}

impl EpochAccumulator {
    fn new(nb: usize) -> Self {
        Self {
            bpr_sum: vec![0.0; nb],
            bpr_count: vec![0; nb],
            ..Default::default()
        }
    }

    fn add(&mut self, lb: &LossBreakdown) {
        self.batches += 1;
        for (b, r) in lb.bpr_per_behavior.iter().enumerate() {
            if let Some(r) = r {
                self.bpr_sum[b] += r;
                self.bpr_count[b] += 1;
            }
        }
        self.rrm += lb.rrm;
        self.orm += lb.orm;
        self.main += lb.main;
        self.total += lb.total;
    }

    fn record(&self, epoch: usize) -> EpochRecord {
        let n = self.batches.max(1) as f64;
        EpochRecord {
            epoch,
            bpr: self
                .bpr_sum
                .iter()
                .zip(&self.bpr_count)
                .map(|(s, &c)| (c > 0).then(|| s / c as f64))
                .collect(),
            rrm: self.rrm / n,
            orm: self.orm / n,
            main: self.main / n,
            total: self.total / n,
            val_hr10: None,
            val_ndcg10: None,
            seconds: 0.0,
        }
    }
}

struct LogSink {
    writer: Option<BufWriter<File>>,
    path: Option<PathBuf>,
}

impl LogSink {
    fn open(path: Option<&PathBuf>, header: &str) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self { writer: None, path: None });
        };
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut sink = Self {
            writer: Some(BufWriter::new(file)),
            path: Some(path.clone()),
        };
        sink.line(header)?;
        Ok(sink)
    }

    fn line(&mut self, line: &str) -> Result<()> {
        if let (Some(w), Some(p)) = (self.writer.as_mut(), self.path.as_ref()) {
            writeln!(w, "{line}")
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(p, e))?;
        }
        Ok(())
    }
}

/// Trains on `split.train` with early stopping on `split.validation`.
pub fn train(split: &SplitDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let ds = &split.train;
    if ds.target_edges().is_empty() {
        return Err(Error::EmptyTarget(ds.target_name().to_string()));
    }
    let hp = &cfg.hp;
    let graphs = build_all(ds);
    let target = ds.target_index();
    let sampler = TripletSampler::new(ds);
    let mut users = sampler.active_users();
    let mut rng = sub_stream(hp.seed, SAMPLING_STREAM);
    let mut state = initialize(ds.num_users(), ds.num_items(), hp)?;
    let mut optimizer = OptimizerState::new(&state);

    let mut log = TrainingLog {
        behaviors: ds.behaviors().to_vec(),
        records: Vec::new(),
    };
    let mut sink = LogSink::open(cfg.log_path.as_ref(), &log.header())?;
    let validate = !split.validation.is_empty();
    if !validate && hp.max_epochs > 0 {
        log::warn!("empty validation set: early stopping disabled, training for {} epochs", hp.max_epochs);
    }
    let val_opts = EvalOptions {
        ks: vec![10],
        exclude_train: cfg.exclude_train,
        record_ranks: false,
    };

    let mut best_state = state.clone();
    let mut best_epoch = 0;
    let mut best_hr: Option<f64> = None;
    let mut stale = 0;
    let mut stopped_early = false;
    let mut epochs_run = 0;

    for epoch in 1..=hp.max_epochs {
        let started = Instant::now();
        users.shuffle(&mut rng);
        let mut acc = EpochAccumulator::new(graphs.len());
        let mut skipped_batches = 0;
        let mut orm_skipped = 0;
        let mut saturated = 0;
        for batch_users in batches(&users, hp.batch_size) {
            let (batch, stats) = sampler.sample(batch_users, &mut rng);
            saturated += stats.saturated.iter().sum::<usize>() + stats.saturated_main;
            if batch.main.is_empty() {
                skipped_batches += 1;
                continue;
            }
            let (lb, grads) = total_loss(&state, &graphs, target, &batch, batch_users)?;
            orm_skipped += usize::from(lb.orm_skipped);
            acc.add(&lb);
            adam_step(&mut state, &mut optimizer, &grads, hp.lr)?;
        }
        if skipped_batches > 0 {
            log::debug!("epoch {epoch}: {skipped_batches} batch(es) without target triplets skipped");
        }
        if orm_skipped > 0 {
            log::warn!("epoch {epoch}: invariance penalty skipped in {orm_skipped} batch(es) with fewer than 2 sampled behaviors");
        }
        if saturated > 0 {
            log::debug!("epoch {epoch}: {saturated} (user, behavior) draw(s) without any negative item");
        }

        let mut record = acc.record(epoch);
        epochs_run = epoch;
        let evaluate_now = validate && (epoch % cfg.eval_every == 0 || epoch == hp.max_epochs);
        if evaluate_now {
            let fused = fused_embeddings(&state, &graphs)?;
            let report = evaluate_pairs(&fused, split, &split.validation, &val_opts)?;
            let hr = report.hr_at(10).expect("k = 10 requested");
            record.val_hr10 = Some(hr);
            record.val_ndcg10 = report.ndcg_at(10);
            // Ties move the checkpoint forward but do not reset patience.
            match best_hr {
                Some(b) if hr < b => stale += 1,
                Some(b) if hr == b => {
                    stale += 1;
                    best_state = state.clone();
                    best_epoch = epoch;
                }
                _ => {
                    best_hr = Some(hr);
                    best_state = state.clone();
                    best_epoch = epoch;
                    stale = 0;
                }
            }
        }
        if cfg.record_timing {
            record.seconds = started.elapsed().as_secs_f64();
        }
        sink.line(&TrainingLog::row(&record))?;
        log::info!(
            "epoch {epoch}: total {:.6}{}",
            record.total,
            record.val_hr10.map(|h| format!(", val HR@10 {h:.4}")).unwrap_or_default()
        );
        log.records.push(record);
        if validate && stale >= hp.patience {
            stopped_early = true;
            break;
        }
    }

    if !validate {
        best_state = state;
        best_epoch = epochs_run;
    }
    Ok(TrainOutcome {
        state: best_state,
        log,
        best_epoch,
        best_val_hr10: best_hr,
        epochs_run,
        stopped_early,
    })
}
