//! Online container scheduling during a rolling upgrade of an edge cluster.
//!
//! The crate contains a seeded slotted-time simulator of the cluster
//! ([`simulator`]), the closed-form latency model it charges tasks with
//! ([`latency`]), four Kubernetes-style placement heuristics ([`baselines`]),
//! and a PPO actor-critic scheduler ([`encoder`], [`nn`], [`ppo`]).
//! [`toolkit`] ties these together into scenario generation, sweeps, and
//! plotting.

pub mod baselines;
pub mod domain;
pub mod encoder;
mod error;
pub mod latency;
pub mod nn;
pub mod ppo;
pub mod simulator;
pub mod toolkit;

pub use error::{Error, Result};
