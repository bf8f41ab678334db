//! Records shared by every other module: nodes, tasks, images, the scenario
//! configuration and PPO hyperparameters.
//!
//! Units: CPU is tracked in millicores, memory in megabytes, storage and
//! image sizes in megabits, task payloads in megabits, work in gigacycles,
//! frequencies in GHz, bandwidth in Mb/s, distances in meters, time in
//! seconds. Integer resource units keep the per-node accounting exact.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type NodeId = usize;
pub type TaskId = usize;
pub type ImageId = usize;

pub const MILLICORES_PER_CORE: f64 = 1000.0;
pub const MB_PER_GB: f64 = 1000.0;
pub const MBIT_PER_GBIT: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UpgradePhase {
    NotUpgraded,
    Upgrading,
    Upgraded,
}

impl UpgradePhase {
    /// Numeric code used in the state vector (0, 1, 2).
    pub fn code(self) -> u8 {
        match self {
            UpgradePhase::NotUpgraded => 0,
            UpgradePhase::Upgrading => 1,
            UpgradePhase::Upgraded => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuedDownload {
    pub image: ImageId,
    pub remaining_mbit: f64,
}

/// Static capacities plus the dynamic state of one edge node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub cpu_capacity_m: u64,
    pub mem_capacity_mb: u64,
    pub storage_capacity_mbit: u64,
    pub cpu_freq_ghz: f64,
    pub bandwidth_mbps: f64,
    pub position: Position,
    pub cpu_free_m: u64,
    pub mem_free_mb: u64,
    pub storage_free_mbit: u64,
    pub cached_images: BTreeSet<ImageId>,
    pub download_queue: VecDeque<QueuedDownload>,
    pub upgrade_phase: UpgradePhase,
    pub running: BTreeSet<TaskId>,
}

impl NodeRecord {
    /// A node with all resources free, nothing cached and no upgrade yet.
    pub fn new(
        id: NodeId,
        cpu_capacity_m: u64,
        mem_capacity_mb: u64,
        storage_capacity_mbit: u64,
        cpu_freq_ghz: f64,
        bandwidth_mbps: f64,
        position: Position,
    ) -> Self {
        Self {
            id,
            cpu_capacity_m,
            mem_capacity_mb,
            storage_capacity_mbit,
            cpu_freq_ghz,
            bandwidth_mbps,
            position,
            cpu_free_m: cpu_capacity_m,
            mem_free_mb: mem_capacity_mb,
            storage_free_mbit: storage_capacity_mbit,
            cached_images: BTreeSet::new(),
            download_queue: VecDeque::new(),
            upgrade_phase: UpgradePhase::NotUpgraded,
            running: BTreeSet::new(),
        }
    }

    pub fn cpu_capacity_cores(&self) -> f64 {
        self.cpu_capacity_m as f64 / MILLICORES_PER_CORE
    }

    pub fn cpu_free_cores(&self) -> f64 {
        self.cpu_free_m as f64 / MILLICORES_PER_CORE
    }

    pub fn mem_capacity_gb(&self) -> f64 {
        self.mem_capacity_mb as f64 / MB_PER_GB
    }

    pub fn mem_free_gb(&self) -> f64 {
        self.mem_free_mb as f64 / MB_PER_GB
    }

    pub fn storage_capacity_gbit(&self) -> f64 {
        self.storage_capacity_mbit as f64 / MBIT_PER_GBIT
    }

    pub fn storage_free_gbit(&self) -> f64 {
        self.storage_free_mbit as f64 / MBIT_PER_GBIT
    }

    pub fn is_cached(&self, image: ImageId) -> bool {
        self.cached_images.contains(&image)
    }

    pub fn is_queued(&self, image: ImageId) -> bool {
        self.download_queue.iter().any(|d| d.image == image)
    }

    /// Stores `image` locally if it is neither cached nor already being
    /// downloaded. Returns false when there is not enough free storage.
    pub fn preload(&mut self, image: &ImageRecord) -> bool {
        if self.is_cached(image.id) || self.is_queued(image.id) {
            return true;
        }
        if self.storage_free_mbit < image.size_mbit {
            return false;
        }
        self.storage_free_mbit -= image.size_mbit;
        self.cached_images.insert(image.id);
        true
    }
}

/// One task offloaded by an IoT device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub id: TaskId,
    pub cpu_req_m: u64,
    pub mem_req_mb: u64,
    /// Work amount in gigacycles.
    pub work_gcycles: f64,
    pub data_mbit: f64,
    pub image: ImageId,
    pub position: Position,
    pub arrival_s: f64,
    pub tx_power_w: f64,
}

impl TaskRecord {
    pub fn cpu_req_cores(&self) -> f64 {
        self.cpu_req_m as f64 / MILLICORES_PER_CORE
    }

    pub fn mem_req_gb(&self) -> f64 {
        self.mem_req_mb as f64 / MB_PER_GB
    }

    pub fn check(&self, image_count: usize) -> Result<()> {
        let mut bad = Vec::new();
        if self.cpu_req_m == 0 {
            bad.push(format!("task {}: cpu_req > 0", self.id));
        }
        if self.mem_req_mb == 0 {
            bad.push(format!("task {}: mem_req > 0", self.id));
        }
        if !(self.work_gcycles > 0.0) {
            bad.push(format!("task {}: work > 0", self.id));
        }
        if !(self.data_mbit > 0.0) {
            bad.push(format!("task {}: data_size > 0", self.id));
        }
        if self.image >= image_count {
            bad.push(format!("task {}: image {} not in catalog", self.id, self.image));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidScenario(bad))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: ImageId,
    pub size_mbit: u64,
}

impl ImageRecord {
    pub fn size_gbit(&self) -> f64 {
        self.size_mbit as f64 / MBIT_PER_GBIT
    }
}

/// Minimum CPU frequency across the cluster, the reference speed used for a
/// task's expected latency.
pub fn min_frequency(nodes: &[NodeRecord]) -> Result<f64> {
    nodes
        .iter()
        .map(|n| n.cpu_freq_ghz)
        .reduce(f64::min)
        .ok_or(Error::NoNodes)
}

/// Closed interval used for every sampled scenario quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub min: f64,
    pub max: f64,
}

impl Span {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

/// Full generative description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub node_count: usize,
    pub task_count: usize,
    pub image_count: usize,
    pub area_side_m: f64,
    pub node_cpu_cores: Span,
    pub node_freq_ghz: Span,
    pub node_mem_gb: Span,
    pub node_storage_gbit: Span,
    pub node_bandwidth_mbps: Span,
    pub task_cpu_cores: Span,
    pub task_mem_gb: Span,
    pub task_work_gcycles: Span,
    pub task_size_mbit: Span,
    pub image_size_gbit: Span,
    /// Mean of the image-popularity normal, as a fraction of the catalog size.
    pub image_mean_frac: f64,
    /// Standard deviation of the image-popularity normal, as a fraction of the catalog size.
    pub image_std_frac: f64,
    pub initial_cached_images: usize,
    pub noise_density_dbm_hz: f64,
    pub path_loss_exponent: f64,
    pub tx_power_dbm: f64,
    pub upgrade_duration_s: f64,
    pub slot_s: f64,
    pub seed: u64,
    /// When set, nodes and images are drawn from this seed and only the task
    /// stream follows the episode seed, so every episode shares one cluster.
    pub cluster_seed: Option<u64>,
}

pub const DEFAULT_NODE_COUNT: usize = 15;
pub const DEFAULT_AREA_SIDE_M: f64 = 100.0;

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            node_count: DEFAULT_NODE_COUNT,
            task_count: 200,
            image_count: 20,
            area_side_m: DEFAULT_AREA_SIDE_M,
            node_cpu_cores: Span::new(80.0, 120.0),
            node_freq_ghz: Span::new(15.0, 35.0),
            node_mem_gb: Span::new(70.0, 130.0),
            node_storage_gbit: Span::new(40.0, 80.0),
            node_bandwidth_mbps: Span::new(100.0, 200.0),
            task_cpu_cores: Span::new(1.0, 8.0),
            task_mem_gb: Span::new(0.5, 8.0),
            task_work_gcycles: Span::new(5.0, 50.0),
            // 10 KB .. 10 MB
            task_size_mbit: Span::new(0.08, 80.0),
            image_size_gbit: Span::new(0.4, 4.0),
            image_mean_frac: 0.5,
            image_std_frac: 1.0 / 6.0,
            initial_cached_images: 3,
            noise_density_dbm_hz: -174.0,
            path_loss_exponent: 4.0,
            tx_power_dbm: 23.0,
            upgrade_duration_s: 60.0,
            slot_s: 1.0,
            seed: 0,
            cluster_seed: None,
        }
    }
}

/// A single failed check reported by [`ScenarioConfig::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub key: &'static str,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.rule)
    }
}

impl ScenarioConfig {
    /// Default configuration with `nodes` nodes on an area that keeps the
    /// default node density.
    pub fn with_nodes(nodes: usize) -> Self {
        let mut cfg = Self::default();
        cfg.set_node_count(nodes);
        cfg
    }

    /// Changes the node count and rescales the area side to
    /// `100 * sqrt(nodes / 15)` meters.
    pub fn set_node_count(&mut self, nodes: usize) {
        self.node_count = nodes;
        self.area_side_m = DEFAULT_AREA_SIDE_M * (nodes as f64 / DEFAULT_NODE_COUNT as f64).sqrt();
    }

    /// Spacing between consecutive arrivals: the tasks are spread evenly
    /// over the nominal upgrade window of `node_count * upgrade_duration`.
    pub fn arrival_interval_s(&self) -> f64 {
        self.node_count as f64 * self.upgrade_duration_s / self.task_count.max(1) as f64
    }

    pub fn tx_power_w(&self) -> f64 {
        dbm_to_watts(self.tx_power_dbm)
    }

    pub fn noise_density_w_hz(&self) -> f64 {
        dbm_to_watts(self.noise_density_dbm_hz)
    }

    /// Every violated invariant; empty when the configuration is usable.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |key: &'static str, rule: &str| {
            out.push(Violation {
                key,
                rule: rule.to_string(),
            })
        };
        if self.node_count < 1 {
            push("node_count", "node_count ≥ 1");
        }
        if self.task_count < 1 {
            push("task_count", "task_count ≥ 1");
        }
        if self.image_count < 1 {
            push("image_count", "image_count ≥ 1");
        }
        if self.initial_cached_images > self.image_count {
            push("initial_cached_images", "initial_cached_images ≤ image_count");
        }
        if !(self.area_side_m > 0.0) {
            push("area_side_m", "area_side_m > 0");
        }
        let positive_spans: [(&'static str, Span); 10] = [
            ("node_cpu_cores", self.node_cpu_cores),
            ("node_freq_ghz", self.node_freq_ghz),
            ("node_mem_gb", self.node_mem_gb),
            ("node_storage_gbit", self.node_storage_gbit),
            ("node_bandwidth_mbps", self.node_bandwidth_mbps),
            ("task_cpu_cores", self.task_cpu_cores),
            ("task_mem_gb", self.task_mem_gb),
            ("task_work_gcycles", self.task_work_gcycles),
            ("task_size", self.task_size_mbit),
            ("image_size_gbit", self.image_size_gbit),
        ];
        for (key, span) in positive_spans {
            if !(span.min.is_finite() && span.max.is_finite()) {
                push(key, "range bounds finite");
            } else if span.min > span.max {
                push(key, "min ≤ max");
            } else if span.min <= 0.0 {
                push(key, "min > 0");
            }
        }
        if self.task_cpu_cores.max > self.node_cpu_cores.min {
            push("task_cpu_cores", "task max ≤ smallest node capacity");
        }
        if self.task_mem_gb.max > self.node_mem_gb.min {
            push("task_mem_gb", "task max ≤ smallest node capacity");
        }
        if self.image_size_gbit.max > self.node_storage_gbit.min {
            push("image_size_gbit", "image max ≤ smallest node storage");
        }
        if !(self.image_std_frac > 0.0) {
            push("image_std_frac", "image_std_frac > 0");
        }
        if !self.image_mean_frac.is_finite() {
            push("image_mean_frac", "image_mean_frac finite");
        }
        if !(self.path_loss_exponent > 0.0) {
            push("path_loss_exponent", "path_loss_exponent > 0");
        }
        if !self.noise_density_dbm_hz.is_finite() {
            push("noise_density_dbm_hz", "noise density finite");
        }
        if !self.tx_power_dbm.is_finite() {
            push("tx_power_dbm", "tx power finite");
        }
        if !(self.upgrade_duration_s > 0.0) {
            push("upgrade_duration_s", "upgrade_duration_s > 0");
        }
        if !(self.slot_s > 0.0) {
            push("slot_s", "slot_s > 0");
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidScenario(v.iter().map(|v| v.to_string()).collect()))
        }
    }

    /// Serializes to the flat `key = value` text format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        line("node_count", self.node_count.to_string());
        line("task_count", self.task_count.to_string());
        line("image_count", self.image_count.to_string());
        line("area_side_m", self.area_side_m.to_string());
        for (k, span) in self.spans() {
            let unit = if k == "task_size" { "Mb" } else { "" };
            line(&format!("{k}_min"), format!("{}{unit}", span.min));
            line(&format!("{k}_max"), format!("{}{unit}", span.max));
        }
        line("image_mean_frac", self.image_mean_frac.to_string());
        line("image_std_frac", self.image_std_frac.to_string());
        line("initial_cached_images", self.initial_cached_images.to_string());
        line("noise_density_dbm_hz", self.noise_density_dbm_hz.to_string());
        line("path_loss_exponent", self.path_loss_exponent.to_string());
        line("tx_power_dbm", self.tx_power_dbm.to_string());
        line("upgrade_duration_s", self.upgrade_duration_s.to_string());
        line("slot_s", self.slot_s.to_string());
        line("seed", self.seed.to_string());
        if let Some(c) = self.cluster_seed {
            line("cluster_seed", c.to_string());
        }
        s
    }

    fn spans(&self) -> [(&'static str, Span); 10] {
        [
            ("node_cpu_cores", self.node_cpu_cores),
            ("node_freq_ghz", self.node_freq_ghz),
            ("node_mem_gb", self.node_mem_gb),
            ("node_storage_gbit", self.node_storage_gbit),
            ("node_bandwidth_mbps", self.node_bandwidth_mbps),
            ("task_cpu_cores", self.task_cpu_cores),
            ("task_mem_gb", self.task_mem_gb),
            ("task_work_gcycles", self.task_work_gcycles),
            ("task_size", self.task_size_mbit),
            ("image_size_gbit", self.image_size_gbit),
        ]
    }

    fn span_mut(&mut self, key: &str) -> Option<&mut Span> {
        Some(match key {
            "node_cpu_cores" => &mut self.node_cpu_cores,
            "node_freq_ghz" => &mut self.node_freq_ghz,
            "node_mem_gb" => &mut self.node_mem_gb,
            "node_storage_gbit" => &mut self.node_storage_gbit,
            "node_bandwidth_mbps" => &mut self.node_bandwidth_mbps,
            "task_cpu_cores" => &mut self.task_cpu_cores,
            "task_mem_gb" => &mut self.task_mem_gb,
            "task_work_gcycles" => &mut self.task_work_gcycles,
            "task_size" => &mut self.task_size_mbit,
            "image_size_gbit" => &mut self.image_size_gbit,
            _ => return None,
        })
    }

    /// Parses the flat text format. Keys not present keep their default;
    /// unknown or repeated keys are rejected.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let err = |message: String| Error::ConfigParse {
                line: line_no,
                message,
            };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key {key}")));
            }
            let float = |v: &str| -> Result<f64> {
                v.parse::<f64>()
                    .map_err(|e| err(format!("{key}: {e}")))
            };
            let count = |v: &str| -> Result<usize> {
                v.parse::<usize>()
                    .map_err(|e| err(format!("{key}: {e}")))
            };
            match key {
                "node_count" => cfg.node_count = count(value)?,
                "task_count" => cfg.task_count = count(value)?,
                "image_count" => cfg.image_count = count(value)?,
                "area_side_m" => cfg.area_side_m = float(value)?,
                "image_mean_frac" => cfg.image_mean_frac = float(value)?,
                "image_std_frac" => cfg.image_std_frac = float(value)?,
                "initial_cached_images" => cfg.initial_cached_images = count(value)?,
                "noise_density_dbm_hz" => cfg.noise_density_dbm_hz = float(value)?,
                "path_loss_exponent" => cfg.path_loss_exponent = float(value)?,
                "tx_power_dbm" => cfg.tx_power_dbm = float(value)?,
                "upgrade_duration_s" => cfg.upgrade_duration_s = float(value)?,
                "slot_s" => cfg.slot_s = float(value)?,
                "seed" => {
                    cfg.seed = value
                        .parse::<u64>()
                        .map_err(|e| err(format!("{key}: {e}")))?
                }
                "cluster_seed" => {
                    cfg.cluster_seed = Some(
                        value
                            .parse::<u64>()
                            .map_err(|e| err(format!("{key}: {e}")))?,
                    )
                }
                _ => {
                    let (base, is_min) = if let Some(b) = key.strip_suffix("_min") {
                        (b, true)
                    } else if let Some(b) = key.strip_suffix("_max") {
                        (b, false)
                    } else {
                        return Err(err(format!("unknown key {key}")));
                    };
                    let parsed = if base == "task_size" {
                        parse_data_size_mbit(value).map_err(err)?
                    } else {
                        float(value)?
                    };
                    let span = cfg
                        .span_mut(base)
                        .ok_or_else(|| err(format!("unknown key {key}")))?;
                    if is_min {
                        span.min = parsed;
                    } else {
                        span.max = parsed;
                    }
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Parses a data size such as `10KB`, `10MB`, `80Mb` or a bare number
/// (megabits) into megabits. Byte units use 8 bits per byte; prefixes are
/// decimal.
pub fn parse_data_size_mbit(value: &str) -> std::result::Result<f64, String> {
    let v = value.trim();
    let split = v
        .find(|c: char| c.is_ascii_alphabetic())
        .unwrap_or(v.len());
    let (num, unit) = v.split_at(split);
    let num: f64 = num
        .trim()
        .parse()
        .map_err(|e| format!("data size {value:?}: {e}"))?;
    let bits_per_unit = match unit.trim() {
        "" | "Mb" => 1e6,
        "b" => 1.0,
        "Kb" | "kb" => 1e3,
        "Gb" => 1e9,
        "B" => 8.0,
        "KB" | "kB" => 8e3,
        "MB" => 8e6,
        "GB" => 8e9,
        other => return Err(format!("unknown data size unit {other:?}")),
    };
    if unit.trim().is_empty() || unit.trim() == "Mb" {
        Ok(num)
    } else {
        Ok(num * bits_per_unit / 1e6)
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) / 1000.0
}

/// PPO and network hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub hidden: Vec<usize>,
    pub episodes: usize,
    pub entropy_coef: f64,
    /// Global L2 norm cap on each network's gradient; 0 disables clipping.
    pub max_grad_norm: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            actor_lr: 1e-4,
            critic_lr: 3e-4,
            gamma: 0.98,
            gae_lambda: 0.95,
            clip_epsilon: 0.2,
            batch_size: 32,
            epochs: 10,
            hidden: vec![128, 64],
            episodes: 1000,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(0.0..=1.0).contains(&self.gamma) {
            bad.push("0 ≤ gamma ≤ 1");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            bad.push("0 ≤ lambda ≤ 1");
        }
        if !(self.clip_epsilon > 0.0) {
            bad.push("clip epsilon > 0");
        }
        if self.batch_size == 0 {
            bad.push("batch size ≥ 1");
        }
        if self.hidden.contains(&0) {
            bad.push("hidden widths ≥ 1");
        }
        if !(self.actor_lr >= 0.0 && self.critic_lr >= 0.0) {
            bad.push("learning rates ≥ 0");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidHyperparams(bad.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: usize, freq: f64) -> NodeRecord {
        NodeRecord::new(id, 100_000, 100_000, 50_000, freq, 150.0, Position::default())
    }

    #[test]
    fn default_config_is_valid() {
        let cfg = ScenarioConfig::default();
        assert_eq!(cfg.node_count, 15);
        assert!(cfg.validate().is_empty(), "{:?}", cfg.validate());
    }

    #[test]
    fn zero_nodes_is_reported() {
        let cfg = ScenarioConfig {
            node_count: 0,
            ..Default::default()
        };
        let v = cfg.validate();
        assert!(v.iter().any(|v| v.rule == "node_count ≥ 1"));
    }

    #[test]
    fn inverted_range_is_reported() {
        let cfg = ScenarioConfig {
            node_cpu_cores: Span::new(120.0, 80.0),
            ..Default::default()
        };
        let v = cfg.validate();
        assert!(v
            .iter()
            .any(|v| v.key == "node_cpu_cores" && v.rule == "min ≤ max"));
    }

    #[test]
    fn all_violations_are_listed() {
        let cfg = ScenarioConfig {
            node_count: 0,
            slot_s: 0.0,
            node_freq_ghz: Span::new(35.0, 15.0),
            ..Default::default()
        };
        assert_eq!(cfg.validate().len(), 3);
        assert!(matches!(cfg.ensure_valid(), Err(Error::InvalidScenario(v)) if v.len() == 3));
    }

    #[test]
    fn min_frequency_cases() {
        assert_eq!(min_frequency(&[node(0, 15.0), node(1, 35.0)]).unwrap(), 15.0);
        assert_eq!(min_frequency(&[node(0, 20.0)]).unwrap(), 20.0);
        let same: Vec<_> = (0..4).map(|i| node(i, 25.0)).collect();
        assert_eq!(min_frequency(&same).unwrap(), 25.0);
        assert!(matches!(min_frequency(&[]), Err(Error::NoNodes)));
    }

    #[test]
    fn data_size_units() {
        assert_eq!(parse_data_size_mbit("10KB").unwrap(), 0.08);
        assert_eq!(parse_data_size_mbit("10MB").unwrap(), 80.0);
        assert_eq!(parse_data_size_mbit("80Mb").unwrap(), 80.0);
        assert_eq!(parse_data_size_mbit("1.5").unwrap(), 1.5);
        assert_eq!(parse_data_size_mbit("2Gb").unwrap(), 2000.0);
        assert!(parse_data_size_mbit("3 parsecs").is_err());
    }

    #[test]
    fn config_text_accepts_byte_units() {
        let cfg = ScenarioConfig::from_text("task_size_min = 10KB\ntask_size_max = 10MB\n").unwrap();
        assert_eq!(cfg.task_size_mbit, Span::new(0.08, 80.0));
    }

    #[test]
    fn config_text_rejects_unknown_and_duplicate_keys() {
        let e = ScenarioConfig::from_text("nodes = 3\n").unwrap_err();
        assert!(matches!(e, Error::ConfigParse { line: 1, .. }));
        let e = ScenarioConfig::from_text("# c\nseed = 1\nseed = 2\n").unwrap_err();
        assert!(matches!(e, Error::ConfigParse { line: 3, .. }));
        let e = ScenarioConfig::from_text("foo_min = 1\n").unwrap_err();
        assert!(matches!(e, Error::ConfigParse { .. }));
    }

    #[test]
    fn area_scales_with_node_count() {
        let cfg = ScenarioConfig::with_nodes(15);
        assert_eq!(cfg.area_side_m, 100.0);
        let cfg = ScenarioConfig::with_nodes(60);
        assert!((cfg.area_side_m - 200.0).abs() < 1e-12);
    }

    #[test]
    fn dbm_conversion() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-12);
        assert!((dbm_to_watts(23.0) - 0.199_526_231_496_887_9).abs() < 1e-12);
    }

    #[test]
    fn preload_respects_storage() {
        let mut n = NodeRecord::new(0, 1000, 1000, 1000, 20.0, 100.0, Position::default());
        assert!(n.preload(&ImageRecord { id: 0, size_mbit: 600 }));
        assert!(!n.preload(&ImageRecord { id: 1, size_mbit: 600 }));
        assert!(n.preload(&ImageRecord { id: 0, size_mbit: 600 }));
        assert_eq!(n.storage_free_mbit, 400);
    }

    #[test]
    fn hyperparams_defaults() {
        let hp = Hyperparams::default();
        assert_eq!((hp.actor_lr, hp.critic_lr), (1e-4, 3e-4));
        assert_eq!((hp.gamma, hp.gae_lambda, hp.clip_epsilon), (0.98, 0.95, 0.2));
        assert_eq!(hp.batch_size, 32);
        assert_eq!(hp.hidden, vec![128, 64]);
        hp.validate().unwrap();
        let bad = Hyperparams {
            gamma: 1.5,
            clip_epsilon: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn config_text_round_trip(
                nodes in 1usize..64,
                tasks in 1usize..1000,
                lo in 0.001f64..50.0,
                width in 0.0f64..100.0,
                frac in 0.0f64..1.0,
                seed in any::<u64>(),
                cluster_seed in proptest::option::of(any::<u64>()),
            ) {
                let cfg = ScenarioConfig {
                    node_count: nodes,
                    task_count: tasks,
                    task_size_mbit: Span::new(lo, lo + width),
                    node_freq_ghz: Span::new(lo, lo + width),
                    image_std_frac: frac,
                    area_side_m: lo * 3.0,
                    seed,
                    cluster_seed,
                    ..Default::default()
                };
                let back = ScenarioConfig::from_text(&cfg.to_text()).unwrap();
                prop_assert_eq!(back, cfg);
            }
        }
    }
}
