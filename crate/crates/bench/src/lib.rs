//! Shared inputs for the benchmarks.

use rmbrec::dataset::split_leave_one_out;
use rmbrec::graph::{build_all, BehaviorGraph};
use rmbrec::objectives::TripletBatch;
use rmbrec::rng::sub_stream;
use rmbrec::synthetic::{planted_dataset, PlantedSpec};
use rmbrec::training::{initialize, TripletSampler};
use rmbrec::{Hyperparameters, ModelState};

pub struct Workload {
    pub state: ModelState,
    pub graphs: Vec<BehaviorGraph>,
    pub target: usize,
    pub batch: TripletBatch,
    pub batch_users: Vec<u32>,
}

/// Planted data with `40 * scale` users and items, default-sized model and
/// one batch of `batch_size` users.
pub fn workload(scale: usize, batch_size: usize) -> Workload {
    let ds = planted_dataset(&PlantedSpec::learnability(0).scaled(scale)).expect("planted data");
    let train = split_leave_one_out(&ds).train;
    let hp = Hyperparameters { batch_size, ..Default::default() };
    let state = initialize(train.num_users(), train.num_items(), &hp).expect("valid hyperparameters");
    let sampler = TripletSampler::new(&train);
    let users = sampler.active_users();
    let batch_users: Vec<u32> = users.into_iter().take(batch_size).collect();
    let (batch, _) = sampler.sample(&batch_users, &mut sub_stream(0, "bench"));
    Workload {
        state,
        graphs: build_all(&train),
        target: train.target_index(),
        batch,
        batch_users,
    }
}
