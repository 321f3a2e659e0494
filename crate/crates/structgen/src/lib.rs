//! Foreign-key structure generation.
//!
//! Samples a fresh edge set for every relation of an entity graph while
//! keeping the node set, the per-node degree sequences and the block-level
//! edge counts of a degree-corrected block model exactly fixed. The block
//! partition is inferred by greedy description-length minimization under the
//! hard constraint that blocks never mix node types.

pub mod dl;
pub mod generate;
pub mod partition;
pub mod sample;
pub mod view;

pub use dl::{
    description_length, graph_description_length, BlockEdgeMatrix, LnFact, RelationDegrees,
};
pub use generate::{generate_structure, GeneratedStructure, RelationSummary, StructureSummary};
pub use partition::{infer_partition, BlockPartition, InferenceReport};
pub use sample::{rewire_to_simple, sample_edge_set, EdgeSampleConfig};
pub use view::{GraphView, RelationView};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StructError {
    #[error("block edge matrix inconsistent with degrees: {0}")]
    InconsistentInputs(String),

    #[error("simple-graph rewiring failed after {attempts} swap attempts")]
    RewiringFailed { attempts: usize },

    #[error("empty graph")]
    EmptyGraph,

    #[error(transparent)]
    Core(#[from] reldiff_core::CoreError),
}

pub type Result<T> = std::result::Result<T, StructError>;

/// Knobs for partition inference and edge sampling.
#[derive(Debug, Clone)]
pub struct StructConfig {
    /// Maximum move sweeps per restart before giving up on improvement.
    pub max_sweeps: usize,
    /// Independent greedy restarts (best description length wins).
    pub restarts: usize,
    /// Initial per-type split count (degree quantiles).
    pub init_splits: usize,
    /// Nested levels above the node partition (0 disables the hierarchy).
    pub hierarchy_levels: usize,
    /// Swap-attempt cap for simple-graph rewiring, as a multiple of the
    /// relation's edge count.
    pub swap_cap_factor: usize,
    /// Optional simulated-annealing acceptance; `None` is greedy descent.
    pub annealing: Option<AnnealConfig>,
}

#[derive(Debug, Clone)]
pub struct AnnealConfig {
    /// Inverse temperature at the first sweep.
    pub beta_start: f64,
    /// Multiplicative increase per sweep.
    pub beta_growth: f64,
    pub sweeps: usize,
}

impl Default for StructConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 40,
            restarts: 3,
            init_splits: 10,
            hierarchy_levels: 3,
            swap_cap_factor: 100,
            annealing: None,
        }
    }
}
