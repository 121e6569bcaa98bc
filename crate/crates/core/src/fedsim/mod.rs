//! Exactly computable federated learning task: Gaussian class clusters split
//! across centers with Dirichlet label skew, and a multinomial logistic
//! regression model trained by per-epoch averaged local SGD.

mod model;
mod task;
mod train;

pub use model::{exact_gradient, loss, ModelState};
pub use task::{generate_task, read_datasets, write_datasets, Dataset, FederatedData, SyntheticTask};
pub use train::{
    full_participation_trajectory, probe_gradient, probe_size, probe_snapshot, run_local_round,
    slot_start_models, Aggregation, TrainConfig,
};
