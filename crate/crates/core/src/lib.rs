//! Cell-free massive MIMO uplink under probabilistic line-of-sight channels.

pub mod analytics;
pub mod channel;
pub mod detection;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod geometry;
pub mod linalg;
pub mod rng;

pub use error::{Error, Result};
