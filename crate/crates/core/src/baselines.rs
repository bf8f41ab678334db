//! Kubernetes-style placement heuristics used as comparison policies.
//!
//! Every selector picks from a precomputed feasible set and breaks score ties
//! toward the lowest node id.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::domain::{NodeId, NodeRecord, TaskRecord};
use crate::simulator::ClusterState;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredNode {
    pub node: NodeId,
    pub score: f64,
}

fn argmax(scores: &[ScoredNode]) -> Result<NodeId> {
    scores
        .iter()
        .copied()
        .reduce(|best, s| {
            if s.score > best.score || (s.score == best.score && s.node < best.node) {
                s
            } else {
                best
            }
        })
        .map(|b| b.node)
        .ok_or(Error::EmptyFeasibleSet)
}

fn post_placement_fractions(node: &NodeRecord, task: &TaskRecord) -> (f64, f64) {
    let cpu_used = (node.cpu_capacity_m - node.cpu_free_m + task.cpu_req_m) as f64;
    let mem_used = (node.mem_capacity_mb - node.mem_free_mb + task.mem_req_mb) as f64;
    (
        cpu_used / node.cpu_capacity_m as f64,
        mem_used / node.mem_capacity_mb as f64,
    )
}

/// EqualPriority: every feasible node weighs the same; pick uniformly.
pub fn eq_select(feasible: &[NodeId], rng: &mut impl Rng) -> Result<NodeId> {
    feasible.choose(rng).copied().ok_or(Error::EmptyFeasibleSet)
}

/// `1 - |u_cpu - u_mem|` after hypothetically placing `task`.
pub fn rb_scores(feasible: &[NodeId], state: &ClusterState, task: &TaskRecord) -> Vec<ScoredNode> {
    feasible
        .iter()
        .map(|&node| {
            let (u_cpu, u_mem) = post_placement_fractions(&state.nodes[node], task);
            ScoredNode {
                node,
                score: (1.0 - (u_cpu - u_mem).abs()).clamp(0.0, 1.0),
            }
        })
        .collect()
}

/// ResourcesBalanced: prefer nodes whose CPU and memory utilization stay
/// closest to each other.
pub fn rb_select(feasible: &[NodeId], state: &ClusterState, task: &TaskRecord) -> Result<NodeId> {
    argmax(&rb_scores(feasible, state, task))
}

/// Mean free fraction of CPU and memory after hypothetically placing `task`.
pub fn la_scores(feasible: &[NodeId], state: &ClusterState, task: &TaskRecord) -> Vec<ScoredNode> {
    feasible
        .iter()
        .map(|&node| {
            let (u_cpu, u_mem) = post_placement_fractions(&state.nodes[node], task);
            ScoredNode {
                node,
                score: (((1.0 - u_cpu) + (1.0 - u_mem)) / 2.0).clamp(0.0, 1.0),
            }
        })
        .collect()
}

/// LeastAllocated: prefer the node with the most free resources.
pub fn la_select(feasible: &[NodeId], state: &ClusterState, task: &TaskRecord) -> Result<NodeId> {
    argmax(&la_scores(feasible, state, task))
}

/// ImageLocality: restrict to nodes already caching the requested image
/// when there are any, then fall back to LeastAllocated.
pub fn il_select(feasible: &[NodeId], state: &ClusterState, task: &TaskRecord) -> Result<NodeId> {
    let local: Vec<NodeId> = feasible
        .iter()
        .copied()
        .filter(|&n| state.nodes[n].is_cached(task.image))
        .collect();
    if local.is_empty() {
        la_select(feasible, state, task)
    } else {
        la_select(&local, state, task)
    }
}
