//! Edge CDN simulation with fixed and vehicular caches and a double deep Q-learning agent
//! that decides content placement, migration and request redirection.

pub mod agent;
pub mod baselines;
pub mod cache_net;
pub mod cost;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod mobility;
pub mod neural;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double precision network, the default for training.
pub type QNetwork64 = neural::QNetwork<f64>;
pub type QNetwork32 = neural::QNetwork<f32>;
pub type Agent64 = agent::Agent<f64>;
pub type Agent32 = agent::Agent<f32>;
