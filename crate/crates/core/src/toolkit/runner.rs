//! Drives one episode under a chosen policy.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::domain::ScenarioConfig;
use crate::ppo::Agent;
use crate::simulator::{ClusterState, EpisodeMetrics, EventRow};
use crate::toolkit::scenario::{generate_scenario, Scenario};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "EQ")]
    Eq,
    #[serde(rename = "RB")]
    Rb,
    #[serde(rename = "LA")]
    La,
    #[serde(rename = "IL")]
    Il,
    #[serde(rename = "OCS")]
    Ocs,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [Self::Eq, Self::Rb, Self::La, Self::Il, Self::Ocs];
    pub const BASELINES: [PolicyKind; 4] = [Self::Eq, Self::Rb, Self::La, Self::Il];

    pub fn name(self) -> &'static str {
        match self {
            Self::Eq => "EQ",
            Self::Rb => "RB",
            Self::La => "LA",
            Self::Il => "IL",
            Self::Ocs => "OCS",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownPolicy(s.to_string()))
    }
}

/// A placement policy ready to run. The learned scheduler is evaluated
/// greedily.
#[derive(Debug, Clone)]
pub enum Policy {
    Eq,
    Rb,
    La,
    Il,
    Ocs(Box<Agent>),
}

impl Policy {
    /// Baseline policy for `kind`; the learned scheduler needs an agent.
    pub fn baseline(kind: PolicyKind) -> Result<Self> {
        match kind {
            PolicyKind::Eq => Ok(Self::Eq),
            PolicyKind::Rb => Ok(Self::Rb),
            PolicyKind::La => Ok(Self::La),
            PolicyKind::Il => Ok(Self::Il),
            PolicyKind::Ocs => Err(Error::UnknownPolicy("OCS requires a trained agent".into())),
        }
    }

    pub fn kind(&self) -> PolicyKind {
        match self {
            Self::Eq => PolicyKind::Eq,
            Self::Rb => PolicyKind::Rb,
            Self::La => PolicyKind::La,
            Self::Il => PolicyKind::Il,
            Self::Ocs(_) => PolicyKind::Ocs,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub policy: PolicyKind,
    pub seed: u64,
    pub metrics: EpisodeMetrics,
    pub log: Vec<EventRow>,
    pub total_reward: f64,
}

/// Generates the scenario for `seed` and plays it to completion.
pub fn run_episode(cfg: &ScenarioConfig, seed: u64, policy: &Policy) -> Result<EpisodeResult> {
    run_scenario(cfg, generate_scenario(cfg, seed)?, policy, false)
}

/// Plays `scenario` to completion. With `audit`, every simulator invariant
/// is checked after every event.
pub fn run_scenario(cfg: &ScenarioConfig, scenario: Scenario, policy: &Policy, audit: bool) -> Result<EpisodeResult> {
    let seed = scenario.seed;
    let (mut state, mut obs) = if audit {
        ClusterState::from_scenario_audited(cfg, scenario)?
    } else {
        ClusterState::from_scenario(cfg, scenario)?
    };
    // Random tie-breaking gets its own stream so it never perturbs generation.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut total_reward = 0.0;
    while let Some(o) = obs {
        let action = match policy {
            Policy::Ocs(agent) => agent.act_greedy(&o, cfg)?,
            other => {
                let feasible: Vec<usize> = (0..o.mask.len()).filter(|&i| o.mask[i]).collect();
                match other {
                    Policy::Eq => baselines::eq_select(&feasible, &mut rng)?,
                    Policy::Rb => baselines::rb_select(&feasible, &state, &o.task)?,
                    Policy::La => baselines::la_select(&feasible, &state, &o.task)?,
                    Policy::Il => baselines::il_select(&feasible, &state, &o.task)?,
                    Policy::Ocs(_) => unreachable!(),
                }
            }
        };
        let out = state.step(action)?;
        total_reward += out.reward;
        obs = out.observation;
    }
    Ok(EpisodeResult {
        policy: policy.kind(),
        seed,
        metrics: state.episode_metrics()?,
        log: std::mem::take(&mut state.log),
        total_reward,
    })
}
