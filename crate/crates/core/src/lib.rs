//! Streaming session-based recommendation.
//!
//! Sessions become weighted directed graphs carrying the user embedding as a
//! global attribute; a graph network turns them into a catalog-wide
//! prediction. In the streaming setting a bounded reservoir of past sessions
//! is mixed with newly arrived ones, sampled by how badly the current model
//! predicts them, and used for incremental updates.

pub mod error;
pub mod harness;
pub mod model;
pub mod reservoir;
pub mod session_graph;

pub use error::{Error, Result};
pub use model::{GagModel, ModelConfig, PredictionDistribution};
pub use session_graph::{build_session_graph, node_degrees, Session, SessionGraph};
