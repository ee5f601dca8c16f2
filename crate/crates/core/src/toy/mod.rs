//! Desk-scale autoencoder around the band split and modulator, trained
//! with hand-written backpropagation.

pub mod config;
pub mod forward;
pub mod gradcheck;
pub mod model;
pub mod train;

pub use config::{parse_key_values, RunConfig, TrainConfig};
pub use forward::{backward, forward_with_noise, ForwardCache, LossWeights};
pub use gradcheck::{gradcheck, perturb_for_check, GradCheckReport, TensorCheck};
pub use model::{ModelConfig, ToyModel, PARAM_NAMES};
pub use train::{evaluate, log_csv, run, synthetic_dataset, train, Evaluation, LogRow, StageSummary, TrainOutcome};
