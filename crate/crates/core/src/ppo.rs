//! Proximal policy optimization over the scheduling MDP.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Hyperparams, NodeId, ScenarioConfig};
use crate::encoder::{Layout, Normalizer, Observation};
use crate::nn::{self, Checkpoint, PolicyParams};
use crate::simulator::{ClusterState, EpisodeMetrics};
use crate::{Error, Result};

/// Generalized advantage estimation.
///
/// `values` has one more entry than `rewards`: the bootstrap value after the
/// last step. A `done` step does not bootstrap from its successor.
/// Returns `(advantages, returns)` with `returns = advantages + values[..T]`.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = rewards.len();
    if values.len() != t + 1 || dones.len() != t {
        return Err(Error::LengthMismatch(format!(
            "{t} rewards, {} values, {} dones",
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; t];
    let mut running = 0.0;
    for i in (0..t).rev() {
        let next = if dones[i] { 0.0 } else { 1.0 };
        let delta = rewards[i] + gamma * values[i + 1] * next - values[i];
        running = delta + gamma * lambda * next * running;
        adv[i] = running;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, ret))
}

/// `clip(ratio, 1-ε, 1+ε)`.
pub fn clip_ratio(ratio: f64, epsilon: f64) -> f64 {
    ratio.clamp(1.0 - epsilon, 1.0 + epsilon)
}

/// Per-sample clipped surrogate `min(ρA, clip(ρ, 1-ε, 1+ε)A)` with
/// `ρ = exp(log_prob_new - log_prob_old)`.
pub fn clipped_objective(log_prob_new: f64, log_prob_old: f64, advantage: f64, epsilon: f64) -> f64 {
    surrogate((log_prob_new - log_prob_old).exp(), advantage, epsilon)
}

fn surrogate(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    (ratio * advantage).min(clip_ratio(ratio, epsilon) * advantage)
}

/// Mean squared error between value predictions and return targets.
pub fn value_loss(values: &[f64], targets: &[f64]) -> Result<f64> {
    if values.len() != targets.len() {
        return Err(Error::LengthMismatch(format!("{} values, {} targets", values.len(), targets.len())));
    }
    let n = values.len().max(1) as f64;
    Ok(values.iter().zip(targets).map(|(v, r)| (v - r).powi(2)).sum::<f64>() / n)
}

fn normalize_advantages(adv: &mut [f64]) {
    if adv.len() < 2 {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    for a in adv {
        *a = (*a - mean) / (std + 1e-8);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Normalized state vector as fed to the networks.
    pub state: Vec<f64>,
    pub mask: Vec<bool>,
    pub action: NodeId,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
}

/// Transitions of the current rollout, cleared after each update.
#[derive(Debug, Clone, Default)]
pub struct ReplayMemory {
    pub transitions: Vec<Transition>,
}

impl ReplayMemory {
    pub fn push(&mut self, t: Transition) {
        self.transitions.push(t);
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn clear(&mut self) {
        self.transitions.clear();
    }
}

/// The learned scheduler: networks, optimizers and the state normalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub params: PolicyParams,
    pub normalizer: Normalizer,
    pub hyper: Hyperparams,
    pub node_count: usize,
}

impl Agent {
    pub fn new(cfg: &ScenarioConfig, hyper: Hyperparams, rng: &mut impl Rng) -> Result<Self> {
        hyper.validate()?;
        cfg.ensure_valid()?;
        let node_count = cfg.node_count;
        let input = Layout::new(node_count).width();
        let params = PolicyParams::new(input, &hyper.hidden, node_count, hyper.actor_lr, hyper.critic_lr, rng);
        Ok(Self {
            params,
            normalizer: Normalizer::for_config(cfg),
            hyper,
            node_count,
        })
    }

    pub fn seeded(cfg: &ScenarioConfig, hyper: Hyperparams, seed: u64) -> Result<Self> {
        Self::new(cfg, hyper, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn check_width(&self, obs: &Observation) -> Result<()> {
        if obs.mask.len() != self.node_count {
            return Err(Error::ShapeMismatch {
                expected: self.node_count,
                actual: obs.mask.len(),
            });
        }
        Ok(())
    }

    /// Action probabilities for `obs`.
    pub fn probabilities(&self, obs: &Observation, cfg: &ScenarioConfig) -> Result<Vec<f64>> {
        self.check_width(obs)?;
        let x = self.normalizer.apply(&obs.state, cfg);
        Ok(self.params.actor_forward(&x, &obs.mask)?.0)
    }

    /// Most probable feasible node; ties go to the lowest id.
    pub fn act_greedy(&self, obs: &Observation, cfg: &ScenarioConfig) -> Result<NodeId> {
        let p = self.probabilities(obs, cfg)?;
        let mut best: Option<NodeId> = None;
        for (i, (&pi, &ok)) in p.iter().zip(&obs.mask).enumerate() {
            if ok && best.is_none_or(|b| pi > p[b]) {
                best = Some(i);
            }
        }
        best.ok_or(Error::NoFeasibleAction)
    }

    /// Samples an action for training. Returns the transition with reward
    /// and done still unset.
    pub fn act_sample(&self, obs: &Observation, cfg: &ScenarioConfig, rng: &mut impl Rng) -> Result<Transition> {
        self.check_width(obs)?;
        let x = self.normalizer.apply(&obs.state, cfg);
        let (probs, _) = self.params.actor_forward(&x, &obs.mask)?;
        let (action, log_prob) = nn::sample(&probs, rng);
        let value = self.params.critic_forward(&x);
        Ok(Transition {
            state: x,
            mask: obs.mask.clone(),
            action,
            log_prob,
            value,
            reward: 0.0,
            done: false,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            node_count: self.node_count,
            hidden: self.hyper.hidden.clone(),
            download_scale: self.normalizer.download_scale,
            actor: self.params.actor.clone(),
            critic: self.params.critic.clone(),
        }
    }

    /// Restores an agent for inference or further training. Optimizer state
    /// is not stored and starts fresh.
    pub fn from_checkpoint(ck: Checkpoint, mut hyper: Hyperparams) -> Result<Self> {
        hyper.hidden = ck.hidden.clone();
        let params = PolicyParams::from_nets(ck.actor, ck.critic, hyper.actor_lr, hyper.critic_lr);
        Ok(Self {
            params,
            normalizer: Normalizer {
                download_scale: ck.download_scale,
            },
            hyper,
            node_count: ck.node_count,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint().save(path)
    }

    pub fn load(path: &Path, hyper: Hyperparams) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::load(path)?, hyper)
    }
}

/// Result of one sampled episode.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub memory: ReplayMemory,
    pub metrics: EpisodeMetrics,
    pub mean_reward: f64,
}

/// Plays one episode on the scenario for `seed`, sampling actions.
pub fn collect_rollout(agent: &Agent, cfg: &ScenarioConfig, seed: u64, rng: &mut impl Rng) -> Result<Rollout> {
    let (mut state, mut obs) = ClusterState::reset(cfg, seed)?;
    let mut memory = ReplayMemory::default();
    while let Some(o) = obs {
        let mut tr = agent.act_sample(&o, cfg, rng)?;
        let out = state.step(tr.action)?;
        tr.reward = out.reward;
        tr.done = out.done;
        memory.push(tr);
        obs = out.observation;
    }
    let metrics = state.episode_metrics()?;
    let mean_reward = memory.transitions.iter().map(|t| t.reward).sum::<f64>() / memory.len().max(1) as f64;
    Ok(Rollout {
        memory,
        metrics,
        mean_reward,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
}

/// Runs `epochs` passes of shuffled minibatch updates over `memory`.
///
/// The last transition is treated as terminal (bootstrap value 0). If any
/// minibatch loss is non-finite, both networks are restored to their state
/// before the update and [`Error::NonFiniteLoss`] is returned.
pub fn update(agent: &mut Agent, memory: &ReplayMemory, rng: &mut impl Rng) -> Result<UpdateStats> {
    if memory.is_empty() {
        return Ok(UpdateStats::default());
    }
    let snapshot = agent.params.clone();
    match update_inner(agent, memory, rng) {
        Ok(s) => Ok(s),
        Err(e) => {
            agent.params = snapshot;
            Err(e)
        }
    }
}

fn update_inner(agent: &mut Agent, memory: &ReplayMemory, rng: &mut impl Rng) -> Result<UpdateStats> {
    let hp = agent.hyper.clone();
    let tr = &memory.transitions;
    let rewards: Vec<f64> = tr.iter().map(|t| t.reward).collect();
    let dones: Vec<bool> = tr.iter().map(|t| t.done).collect();
    let mut values: Vec<f64> = tr.iter().map(|t| t.value).collect();
    values.push(0.0);
    let (mut adv, returns) = gae(&rewards, &values, &dones, hp.gamma, hp.gae_lambda)?;
    normalize_advantages(&mut adv);

    let mut order: Vec<usize> = (0..tr.len()).collect();
    let (mut pl_sum, mut vl_sum, mut batches) = (0.0, 0.0, 0usize);
    for _ in 0..hp.epochs {
        order.shuffle(rng);
        for batch in order.chunks(hp.batch_size) {
            let b = batch.len() as f64;
            let inputs: Vec<&[f64]> = batch.iter().map(|&i| tr[i].state.as_slice()).collect();

            let (policy_loss, mut g_actor) = agent.params.actor.gradients(&inputs, |k, logits| {
                let t = &tr[batch[k]];
                surrogate_grad(logits, t, adv[batch[k]], &hp, b)
            })?;

            let (v_loss, mut g_critic) = agent.params.critic.gradients(&inputs, |k, out| {
                let e = out[0] - returns[batch[k]];
                (e * e / b, vec![2.0 * e / b])
            })?;

            nn::clip_grad_norm(&mut g_actor, hp.max_grad_norm);
            nn::clip_grad_norm(&mut g_critic, hp.max_grad_norm);
            let p = &mut agent.params;
            p.actor_opt.step(p.actor.params_mut(), &g_actor)?;
            p.critic_opt.step(p.critic.params_mut(), &g_critic)?;
            if p.actor.params().iter().chain(p.critic.params()).any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteLoss(f64::NAN));
            }
            pl_sum += policy_loss;
            vl_sum += v_loss;
            batches += 1;
        }
    }
    let n = batches.max(1) as f64;
    Ok(UpdateStats {
        policy_loss: pl_sum / n,
        value_loss: vl_sum / n,
    })
}

/// Loss contribution `-(surrogate + c·H) / b` of one transition and its
/// gradient w.r.t. the actor logits.
fn surrogate_grad(logits: &[f64], t: &Transition, advantage: f64, hp: &Hyperparams, b: f64) -> (f64, Vec<f64>) {
    let (probs, logp) = match nn::masked_softmax(logits, &t.mask) {
        Ok(x) => x,
        Err(_) => return (f64::NAN, vec![0.0; logits.len()]),
    };
    let ratio = (logp[t.action] - t.log_prob).exp();
    let objective = surrogate(ratio, advantage, hp.clip_epsilon);
    // Gradient flows only where the unclipped term is the minimum.
    let unclipped = ratio * advantage <= clip_ratio(ratio, hp.clip_epsilon) * advantage;
    let d_logp = if unclipped { -ratio * advantage / b } else { 0.0 };
    let entropy: f64 = probs.iter().zip(&logp).filter(|(p, _)| **p > 0.0).map(|(p, l)| -p * l).sum();
    let mut d = vec![0.0; logits.len()];
    for j in 0..logits.len() {
        if !t.mask[j] {
            continue;
        }
        let onehot = if j == t.action { 1.0 } else { 0.0 };
        d[j] = d_logp * (onehot - probs[j]);
        if hp.entropy_coef != 0.0 && probs[j] > 0.0 {
            // d(-c·H)/dz_j = c·p_j·(log p_j + H)
            d[j] += hp.entropy_coef * probs[j] * (logp[j] + entropy) / b;
        }
    }
    ((-objective - hp.entropy_coef * entropy) / b, d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRow {
    pub update_idx: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub mean_reward: f64,
    pub mean_total_latency_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub rows: Vec<TrainRow>,
}

impl TrainReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        crate::simulator::write_rows(w, &self.rows)
    }
}

/// Trains a fresh agent for `hyper.episodes` episodes, one update per
/// episode. Scenario seeds, network initialization and action sampling all
/// derive from `seed`.
pub fn train(cfg: &ScenarioConfig, hyper: &Hyperparams, seed: u64) -> Result<(Agent, TrainReport)> {
    train_with(cfg, hyper, seed, |_| {})
}

/// Like [`train`], calling `progress` after every update.
pub fn train_with(
    cfg: &ScenarioConfig,
    hyper: &Hyperparams,
    seed: u64,
    mut progress: impl FnMut(&TrainRow),
) -> Result<(Agent, TrainReport)> {
    cfg.ensure_valid()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent = Agent::new(cfg, hyper.clone(), &mut rng)?;
    let mut report = TrainReport::default();
    for update_idx in 0..hyper.episodes {
        let episode_seed: u64 = rng.random();
        let rollout = collect_rollout(&agent, cfg, episode_seed, &mut rng)?;
        let stats = update(&mut agent, &rollout.memory, &mut rng)?;
        let row = TrainRow {
            update_idx,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            mean_reward: rollout.mean_reward,
            mean_total_latency_s: rollout.metrics.means.total,
        };
        progress(&row);
        report.rows.push(row);
    }
    Ok((agent, report))
}
