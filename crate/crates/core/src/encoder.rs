//! MDP view of the simulator: state vector, action mask and reward.
//!
//! The state vector for a cluster of `N` nodes has `8N + 5` entries:
//!
//! ```text
//! [free cpu × N][free mem × N][free storage × N][freq × N][bandwidth × N]
//! [upgrade phase × N][image cached × N][image download time × N]
//! [task cpu, task mem, task work, task data size, task image label]
//! ```
//!
//! Raw vectors carry physical units (cores, GB, Gb, GHz, Mb/s, seconds,
//! gigacycles, Mb). [`Normalizer`] rescales them for the networks.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::domain::{ScenarioConfig, TaskRecord};
use crate::latency::{self, LatencyBreakdown};
use crate::simulator::ClusterState;

pub const TASK_FEATURES: usize = 5;
pub const NODE_FEATURE_BLOCKS: usize = 8;

/// Index arithmetic for the state vector of an `n`-node cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub nodes: usize,
}

impl Layout {
    pub fn new(nodes: usize) -> Self {
        Self { nodes }
    }

    pub fn width(&self) -> usize {
        NODE_FEATURE_BLOCKS * self.nodes + TASK_FEATURES
    }

    fn block(&self, b: usize, node: usize) -> usize {
        debug_assert!(node < self.nodes);
        b * self.nodes + node
    }

    pub fn cpu(&self, n: usize) -> usize {
        self.block(0, n)
    }
    pub fn mem(&self, n: usize) -> usize {
        self.block(1, n)
    }
    pub fn storage(&self, n: usize) -> usize {
        self.block(2, n)
    }
    pub fn freq(&self, n: usize) -> usize {
        self.block(3, n)
    }
    pub fn bandwidth(&self, n: usize) -> usize {
        self.block(4, n)
    }
    pub fn phase(&self, n: usize) -> usize {
        self.block(5, n)
    }
    pub fn cached(&self, n: usize) -> usize {
        self.block(6, n)
    }
    pub fn download(&self, n: usize) -> usize {
        self.block(7, n)
    }
    pub fn task_cpu(&self) -> usize {
        NODE_FEATURE_BLOCKS * self.nodes
    }
    pub fn task_mem(&self) -> usize {
        self.task_cpu() + 1
    }
    pub fn task_work(&self) -> usize {
        self.task_cpu() + 2
    }
    pub fn task_data(&self) -> usize {
        self.task_cpu() + 3
    }
    pub fn task_image(&self) -> usize {
        self.task_cpu() + 4
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector(pub Vec<f64>);

impl Deref for StateVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// `mask[n]` is true when node `n` may host the task.
pub type ActionMask = Vec<bool>;

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub task: TaskRecord,
    pub state: StateVector,
    pub mask: ActionMask,
}

/// Raw state vector for deciding `task` in `state`.
pub fn encode(state: &ClusterState, task: &TaskRecord) -> StateVector {
    let layout = Layout::new(state.nodes.len());
    let mut v = vec![0.0; layout.width()];
    let image = state.image(task.image);
    for (i, n) in state.nodes.iter().enumerate() {
        v[layout.cpu(i)] = n.cpu_free_cores();
        v[layout.mem(i)] = n.mem_free_gb();
        v[layout.storage(i)] = n.storage_free_gbit();
        v[layout.freq(i)] = n.cpu_freq_ghz;
        v[layout.bandwidth(i)] = n.bandwidth_mbps;
        v[layout.phase(i)] = n.upgrade_phase.code() as f64;
        v[layout.cached(i)] = if n.is_cached(task.image) { 1.0 } else { 0.0 };
        v[layout.download(i)] = latency::download_latency(n, image);
    }
    v[layout.task_cpu()] = task.cpu_req_cores();
    v[layout.task_mem()] = task.mem_req_gb();
    v[layout.task_work()] = task.work_gcycles;
    v[layout.task_data()] = task.data_mbit;
    v[layout.task_image()] = (task.image + 1) as f64;
    StateVector(v)
}

pub fn mask(state: &ClusterState, task: &TaskRecord) -> ActionMask {
    state
        .nodes
        .iter()
        .map(|n| state.infeasibility(n, task).is_none())
        .collect()
}

pub fn observe(state: &ClusterState, task: &TaskRecord) -> Observation {
    Observation {
        task: task.clone(),
        state: encode(state, task),
        mask: mask(state, task),
    }
}

/// Expected latency on the slowest node minus the latency actually incurred.
pub fn reward(task: &TaskRecord, breakdown: &LatencyBreakdown, min_freq_ghz: f64) -> f64 {
    task.work_gcycles / min_freq_ghz - breakdown.total
}

/// Max-scaling of raw state vectors into roughly `[0, 1]`.
///
/// Capacities and task demands are divided by the upper end of their
/// configured range, upgrade phases by 2, image labels by the catalog size.
/// Download times are divided by `download_scale`, by default the time to
/// pull the largest image over the slowest link. Queueing can push a
/// normalized download time above 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub download_scale: f64,
}

impl Default for Normalizer {
    fn default() -> Self {
        Self { download_scale: 1.0 }
    }
}

impl Normalizer {
    pub fn for_config(cfg: &ScenarioConfig) -> Self {
        let largest_mbit = cfg.image_size_gbit.max * crate::domain::MBIT_PER_GBIT;
        Self {
            download_scale: (largest_mbit / cfg.node_bandwidth_mbps.min).max(1e-9),
        }
    }

    pub fn apply(&self, v: &StateVector, cfg: &ScenarioConfig) -> Vec<f64> {
        let nodes = (v.len() - TASK_FEATURES) / NODE_FEATURE_BLOCKS;
        let layout = Layout::new(nodes);
        let mut out = v.0.clone();
        for i in 0..nodes {
            out[layout.cpu(i)] /= cfg.node_cpu_cores.max;
            out[layout.mem(i)] /= cfg.node_mem_gb.max;
            out[layout.storage(i)] /= cfg.node_storage_gbit.max;
            out[layout.freq(i)] /= cfg.node_freq_ghz.max;
            out[layout.bandwidth(i)] /= cfg.node_bandwidth_mbps.max;
            out[layout.phase(i)] /= 2.0;
            out[layout.download(i)] /= self.download_scale;
        }
        out[layout.task_cpu()] /= cfg.task_cpu_cores.max;
        out[layout.task_mem()] /= cfg.task_mem_gb.max;
        out[layout.task_work()] /= cfg.task_work_gcycles.max;
        out[layout.task_data()] /= cfg.task_size_mbit.max;
        out[layout.task_image()] /= cfg.image_count as f64;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ImageRecord, NodeRecord, Position, UpgradePhase};
    use crate::toolkit::scenario::Scenario;

    fn cluster(nodes: usize) -> ClusterState {
        let cfg = ScenarioConfig::with_nodes(nodes);
        let nodes = (0..nodes)
            .map(|i| NodeRecord::new(i, 120_000, 130_000, 80_000, 15.0 + i as f64, 150.0, Position::default()))
            .collect();
        let images = (0..4).map(|id| ImageRecord { id, size_mbit: 1000 }).collect();
        let tasks = vec![TaskRecord {
            id: 0,
            cpu_req_m: 2000,
            mem_req_mb: 1500,
            work_gcycles: 30.0,
            data_mbit: 8.0,
            image: 2,
            position: Position::new(1.0, 1.0),
            arrival_s: 0.0,
            tx_power_w: 0.2,
        }];
        ClusterState::build(&cfg, Scenario { seed: 0, nodes, images, tasks }, false).unwrap()
    }

    #[test]
    fn width_matches_component_count() {
        assert_eq!(Layout::new(15).width(), 125);
        let s = cluster(15);
        let v = encode(&s, &s.pending[0].task);
        assert_eq!(v.len(), 125);
    }

    #[test]
    fn golden_indices() {
        let l = Layout::new(3);
        let idx = [
            l.cpu(0), l.cpu(2), l.mem(0), l.storage(1), l.freq(2), l.bandwidth(0),
            l.phase(1), l.cached(2), l.download(0), l.task_cpu(), l.task_mem(),
            l.task_work(), l.task_data(), l.task_image(),
        ];
        assert_eq!(idx, [0, 2, 3, 7, 11, 12, 16, 20, 21, 24, 25, 26, 27, 28]);
        assert_eq!(l.width(), 29);
    }

    #[test]
    fn cached_indicator_and_zero_download() {
        let mut s = cluster(4);
        s.nodes[2].cached_images.insert(2);
        let task = s.pending[0].task.clone();
        let v = encode(&s, &task);
        let l = Layout::new(4);
        let x: Vec<f64> = (0..4).map(|i| v[l.cached(i)]).collect();
        assert_eq!(x, vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(v[l.download(2)], 0.0);
        assert!(v[l.download(0)] > 0.0);
        assert_eq!(v[l.task_image()], 3.0);
        assert_eq!(v[l.task_cpu()], 2.0);
        assert_eq!(v[l.task_mem()], 1.5);
    }

    #[test]
    fn encode_is_pure() {
        let s = cluster(5);
        let t = s.pending[0].task.clone();
        assert_eq!(encode(&s, &t), encode(&s, &t));
    }

    #[test]
    fn normalize_endpoints() {
        let mut s = cluster(3);
        s.nodes[1].upgrade_phase = UpgradePhase::Upgraded;
        s.nodes[0].cached_images.insert(2);
        let cfg = ScenarioConfig::with_nodes(3);
        let t = s.pending[0].task.clone();
        let raw = encode(&s, &t);
        let norm = Normalizer::for_config(&cfg);
        assert_eq!(norm.download_scale, 40.0);
        let v = norm.apply(&raw, &cfg);
        let l = Layout::new(3);
        assert_eq!(v[l.cpu(0)], 1.0);
        assert_eq!(v[l.phase(1)], 1.0);
        assert_eq!(v[l.cached(0)], 1.0);
        assert_eq!(v[l.cached(1)], 0.0);
        assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn reward_examples() {
        let s = cluster(2);
        let t = s.pending[0].task.clone();
        let b = LatencyBreakdown::new(0.0, 0.0, 2.0).unwrap();
        assert_eq!(reward(&t, &b, 15.0), 0.0);
        let b = LatencyBreakdown::new(0.2, 0.3, 0.5).unwrap();
        assert_eq!(reward(&t, &b, 15.0), 1.0);
        let b = LatencyBreakdown::new(0.0, 5.0, 2.0).unwrap();
        assert!(reward(&t, &b, 15.0) < 0.0);
    }

    #[test]
    fn mask_cases() {
        let mut s = cluster(3);
        let t = s.pending[0].task.clone();
        assert_eq!(mask(&s, &t), vec![true, true, true]);
        s.nodes[1].upgrade_phase = UpgradePhase::Upgrading;
        assert!(mask(&s, &t).iter().filter(|&&m| m).count() <= 2);
        for n in &mut s.nodes {
            n.cpu_free_m = 0;
        }
        assert_eq!(mask(&s, &t), vec![false, false, false]);
    }
}
