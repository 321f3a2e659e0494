//! Joint diffusion over the attributes of every table in a relational
//! database, conditioned on the entity graph.
//!
//! Numerics follow a variance-exploding Gaussian process and categoricals an
//! absorbing-mask process; a single graph-conditioned network denoises both
//! at once across all tables. Training minimizes the weighted sum of the
//! epsilon-regression loss and the masked cross-entropy.

pub mod batch;
pub mod checkpoint;
pub mod denoiser;
pub mod hyper;
pub mod kernels;
pub mod loss;
pub mod schedule;
pub mod state;
pub mod synthesizer;
pub mod trainer;

pub use batch::{Batch, BatchGraph, SamplingMode};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use denoiser::{DenoiserModel, TableOutput};
pub use hyper::HyperParams;
pub use kernels::{forward_cat, forward_num, reverse_cat_step, reverse_num_step};
pub use loss::{joint_loss_value, LossTargets};
pub use schedule::NoiseSchedule;
pub use state::{MixedState, TableState};
pub use synthesizer::{synthesize, StructureMode, SynthesisConfig};
pub use trainer::{train, TrainConfig, TrainOutcome};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training diverged at step {step}: loss is not finite")]
    Diverged { step: usize },

    #[error("invalid simplex: probabilities sum to {sum}")]
    InvalidSimplex { sum: f64 },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("a masked state survived the final reverse step")]
    ResidualMask,

    #[error(transparent)]
    Core(#[from] reldiff_core::CoreError),

    #[error(transparent)]
    Struct(#[from] reldiff_structgen::StructError),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;
