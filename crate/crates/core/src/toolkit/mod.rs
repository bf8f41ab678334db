//! Scenario generation, episode driving, policy comparison and plotting.

pub mod compare;
pub mod plot;
pub mod runner;
pub mod scenario;

pub use compare::{run_compare, CompareResult, SweepSpec, SweepVariable};
pub use plot::emit_plots;
pub use runner::{run_episode, run_scenario, EpisodeResult, Policy, PolicyKind};
pub use scenario::{generate_scenario, Scenario};
