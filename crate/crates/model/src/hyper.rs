use serde::{Deserialize, Serialize};

/// Model and training hyperparameters. The defaults are the values used for
/// every experiment; only epochs and batch shape vary by dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyperParams {
    /// Column token width.
    pub token_dim: usize,
    /// Hidden width of the graph layers and MLP backbones.
    pub hidden_dim: usize,
    /// Message-passing rounds; also the neighborhood radius of subgraph
    /// sampling.
    pub gnn_rounds: usize,
    pub mlp_depth: usize,
    pub transformer_layers: usize,
    /// Feed-forward expansion inside the column transformers.
    pub ffn_mult: usize,
    /// Reverse-diffusion discretization steps.
    pub sampling_steps: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Time clamp: diffusion time lives in [delta, 1].
    pub delta: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Geometric exponent of the sampling grid.
    pub rho: f64,
    /// Stochastic-sampler churn factor (0 disables noise injection).
    pub churn: f64,
    /// Number of final steps sampled without churn.
    pub churn_skip_last: usize,
    pub lambda_cat: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            token_dim: 4,
            hidden_dim: 128,
            gnn_rounds: 2,
            mlp_depth: 5,
            transformer_layers: 2,
            ffn_mult: 4,
            sampling_steps: 100,
            lr: 6e-4,
            weight_decay: 1e-5,
            delta: 1e-3,
            sigma_min: 0.002,
            sigma_max: 80.0,
            rho: 7.0,
            churn: 0.1,
            churn_skip_last: 10,
            lambda_cat: 1.0,
        }
    }
}
