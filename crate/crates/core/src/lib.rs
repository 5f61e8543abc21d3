//! Heart-failure risk modeling from day-long single-lead Holter ECG.
//!
//! The network and its training loop are generic over [`scalar::Scalar`]
//! (`f32` or `f64`); the aliases below pin the precision used in practice.

pub mod clinical;
pub mod cohort;
pub mod eval;
pub mod explain;
pub mod model;
pub mod nn;
pub mod sampling;
pub mod scalar;
pub mod signal;
pub mod synthetic;
pub mod training;

pub use scalar::Scalar;

/// Network in training/inference precision.
pub type Model = model::DeepHhf<f32>;
/// Network in double precision, used for gradient verification.
pub type Model64 = model::DeepHhf<f64>;
pub type Params = nn::ParamStore<f32>;
pub type Grads = nn::Grads<f32>;

/// Lower-case hex SHA-256 of `data`.
pub fn sha256_hex(data: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(data).iter().map(|b| format!("{b:02x}")).collect()
}
