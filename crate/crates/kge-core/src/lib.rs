//! Heterogeneous knowledge-graph-embedding engine.
//!
//! The crate trains translation-family models (plain translation, projected,
//! and anchored-projection) over typed edge lists, evaluates them by ranking
//! held-out positives against sampled corruptions, exports embeddings into a
//! single anchor space, and fine-tunes the resulting tables inside a small
//! ranking model — frozen, directly, or through a self-attention layer.

pub mod error;
pub mod eval;
pub mod loss;
pub mod math;
pub mod model;
pub mod ranker;
pub mod rng;
pub mod sampling;
pub mod schema;
pub mod store;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
