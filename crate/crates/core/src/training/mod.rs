//! Dataset construction and score-augmented ratio training.

mod alpha;
mod dataset;
mod loss;
mod trainer;

pub use alpha::{gradient_norm_ratio, AlphaController};
pub use dataset::{cells_per_dim, generate_dataset, simulate_at, stratified_thetas, Dataset};
pub use loss::{
    bce_loss, bce_term, calibrate_epsilon, fd_score_estimate, max_relative_error, score_loss, softplus, FdConfig,
    Reduction,
};
pub use trainer::{
    calibrate_on, fixed_pairing, make_batch, min_epochs, paired_bce, score_mse, train, AlphaRecord, Batch, Clock,
    EpochRecord, FrozenClock, History, LossMode, TrainConfig, Trained,
};
