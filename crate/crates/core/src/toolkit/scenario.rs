//! Seeded scenario generation.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{
    ImageId, ImageRecord, NodeRecord, Position, ScenarioConfig, Span, TaskRecord, MBIT_PER_GBIT,
    MB_PER_GB, MILLICORES_PER_CORE,
};
use crate::Result;

/// A concrete cluster plus the ordered task stream it will receive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub nodes: Vec<NodeRecord>,
    pub images: Vec<ImageRecord>,
    pub tasks: Vec<TaskRecord>,
}

impl Scenario {
    /// Canonical byte encoding; identical `(cfg, seed)` give identical bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("scenario serializes")
    }
}

fn uniform(rng: &mut impl Rng, span: Span) -> f64 {
    if span.min == span.max {
        span.min
    } else {
        rng.random_range(span.min..=span.max)
    }
}

fn scaled(rng: &mut impl Rng, span: Span, per_unit: f64) -> u64 {
    // Rounding may step just outside the configured span; clamp back inside.
    let lo = (span.min * per_unit).ceil();
    let hi = (span.max * per_unit).floor().max(lo);
    (uniform(rng, span) * per_unit).round().clamp(lo, hi) as u64
}

/// Popularity sampler for requested images: a normal over the 1-based
/// catalog labels, rounded to the nearest label and clamped to `[1, |I|]`.
#[derive(Debug, Clone, Copy)]
pub struct ImagePopularity {
    normal: Normal<f64>,
    count: usize,
}

impl ImagePopularity {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        let n = cfg.image_count as f64;
        let normal = Normal::new(cfg.image_mean_frac * n, cfg.image_std_frac * n)
            .expect("validated std > 0");
        Self {
            normal,
            count: cfg.image_count,
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> ImageId {
        let label = self.normal.sample(rng).round().clamp(1.0, self.count as f64);
        label as usize - 1
    }
}

/// Builds a heterogeneous cluster and its task stream from `cfg` and `seed`.
///
/// Nodes and tasks are placed uniformly in the square area. Node capacities
/// and task demands are uniform over their configured ranges; requested
/// images follow [`ImagePopularity`]. Tasks arrive at a fixed rate spread
/// over the nominal upgrade window. Each node starts with a few randomly
/// chosen images already cached.
///
/// With `cfg.cluster_seed` set, images and nodes come from that seed and the
/// tasks from `seed`; otherwise everything comes from `seed`.
pub fn generate_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    cfg.ensure_valid()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.cluster_seed.unwrap_or(seed));
    let side = Span::new(0.0, cfg.area_side_m);

    let images: Vec<ImageRecord> = (0..cfg.image_count)
        .map(|id| ImageRecord {
            id,
            size_mbit: scaled(&mut rng, cfg.image_size_gbit, MBIT_PER_GBIT).max(1),
        })
        .collect();

    let mut nodes = Vec::with_capacity(cfg.node_count);
    for id in 0..cfg.node_count {
        let position = Position::new(uniform(&mut rng, side), uniform(&mut rng, side));
        let cpu = scaled(&mut rng, cfg.node_cpu_cores, MILLICORES_PER_CORE);
        let freq = uniform(&mut rng, cfg.node_freq_ghz);
        let mem = scaled(&mut rng, cfg.node_mem_gb, MB_PER_GB);
        let storage = scaled(&mut rng, cfg.node_storage_gbit, MBIT_PER_GBIT);
        let bandwidth = uniform(&mut rng, cfg.node_bandwidth_mbps);
        let mut node = NodeRecord::new(id, cpu, mem, storage, freq, bandwidth, position);
        let mut picks = index::sample(&mut rng, cfg.image_count, cfg.initial_cached_images).into_vec();
        picks.sort_unstable();
        for image in picks {
            node.preload(&images[image]);
        }
        nodes.push(node);
    }

    if cfg.cluster_seed.is_some() {
        rng = ChaCha8Rng::seed_from_u64(seed);
    }
    let popularity = ImagePopularity::new(cfg);
    let interval = cfg.arrival_interval_s();
    let tx_power_w = cfg.tx_power_w();
    let tasks = (0..cfg.task_count)
        .map(|id| {
            let position = Position::new(uniform(&mut rng, side), uniform(&mut rng, side));
            TaskRecord {
                id,
                cpu_req_m: scaled(&mut rng, cfg.task_cpu_cores, MILLICORES_PER_CORE).max(1),
                mem_req_mb: scaled(&mut rng, cfg.task_mem_gb, MB_PER_GB).max(1),
                work_gcycles: uniform(&mut rng, cfg.task_work_gcycles),
                data_mbit: uniform(&mut rng, cfg.task_size_mbit),
                image: popularity.sample(&mut rng),
                position,
                arrival_s: id as f64 * interval,
                tx_power_w,
            }
        })
        .collect();

    Ok(Scenario {
        seed,
        nodes,
        images,
        tasks,
    })
}
