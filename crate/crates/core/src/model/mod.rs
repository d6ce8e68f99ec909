//! The global-attributed session graph network: parameters, forward and
//! backward passes, Adam, ranking and checkpoints.

mod adam;
mod backward;
pub mod checkpoint;
mod forward;
mod params;
mod ranking;
mod train;

pub use adam::{adam_update, AdamHyper};
pub use backward::{cross_entropy, LOG_CLAMP};
pub use forward::{
    aggregate_nodes, edge_messages, global_update, EdgeMessage, ForwardTrace, GlobalUpdate,
    LayerActivations, NodeUpdate, PredictionDistribution,
};
pub use params::{
    axpy, dot, AdamState, Affine, GagModel, LayerWeights, Matrix, ModelConfig, Weights,
};
pub use ranking::{recommend_topk, target_rank};
pub use train::{last_click_example, prefix_examples, Example};
