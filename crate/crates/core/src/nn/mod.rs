//! Minimal neural-network toolkit: parameter storage, layers with cached
//! forward state and exact hand-written backward passes, and Adam.

pub mod act;
pub mod adam;
pub mod attention;
pub mod checkpoint;
pub mod conv;
pub mod dropout;
pub mod linalg;
pub mod linear;
pub mod norm;
pub mod params;

pub use adam::Adam;
pub use attention::{AttentionCache, MultiHeadAttention};
pub use checkpoint::{CheckpointData, CheckpointError};
pub use conv::Conv1d;
pub use linear::Linear;
pub use norm::LayerNorm;
pub use params::{Grads, Param, ParamId, ParamStore};
