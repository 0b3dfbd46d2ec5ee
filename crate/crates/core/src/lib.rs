//! 3D feature-reductionist change detection: network, training, data
//! handling and evaluation.

pub mod data;
pub mod metrics;
pub mod net;
pub mod ops;
pub mod tensor;
pub mod trainer;
pub mod verify;
