//! PointManifold: point-cloud classification with manifold-learning feature
//! augmentation.
//!
//! The pipeline standardizes each cloud, optionally augments the xyz
//! coordinates with a locally linear embedding ([`manifold`]) and/or a
//! learnable gated plane projection ([`projection`], [`network::mp`]), and
//! classifies the result with a dynamic-graph EdgeConv network
//! ([`network`]) trained by SGD with momentum under cosine annealing
//! ([`training`]).

pub mod error;
pub mod linalg;
pub mod manifold;
pub mod neighbors;
pub mod network;
pub mod pointset;
pub mod projection;
pub mod training;

pub use error::{Error, Result};
