//! Closed-form task latency: uplink communication, image download and
//! computation.

use serde::{Deserialize, Serialize};

use crate::domain::{ImageRecord, NodeRecord, TaskRecord};
use crate::{Error, Result};

/// Distances below this are clamped so the channel gain never exceeds 1.
pub const MIN_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub comm: f64,
    pub download: f64,
    pub compute: f64,
    pub total: f64,
}

impl LatencyBreakdown {
    /// Sums the three components. Negative or NaN components are rejected.
    pub fn new(comm: f64, download: f64, compute: f64) -> Result<Self> {
        for part in [comm, download, compute] {
            if !(part >= 0.0) {
                return Err(Error::NegativeLatency(part));
            }
        }
        Ok(Self {
            comm,
            download,
            compute,
            total: comm + download + compute,
        })
    }
}

/// Radio constants for the uplink.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Noise power spectral density in W/Hz.
    pub noise_density_w_hz: f64,
    pub path_loss_exponent: f64,
    pub tx_power_w: f64,
}

impl ChannelParams {
    /// Noise power over a channel of `bandwidth_mbps` (treated as MHz).
    pub fn noise_power_w(&self, bandwidth_mbps: f64) -> f64 {
        self.noise_density_w_hz * bandwidth_mbps * 1e6
    }

    pub fn snr(&self, tx_power_w: f64, distance_m: f64, bandwidth_mbps: f64) -> Result<f64> {
        let gain = channel_gain(distance_m, self.path_loss_exponent)?;
        Ok(tx_power_w * gain / self.noise_power_w(bandwidth_mbps))
    }
}

/// `distance^-alpha`, with distances under one meter clamped to one meter.
pub fn channel_gain(distance_m: f64, alpha: f64) -> Result<f64> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(Error::DegenerateDistance(distance_m));
    }
    Ok(distance_m.max(MIN_DISTANCE_M).powf(-alpha))
}

/// Shannon rate shared equally among `concurrent` uplinks, in Mb/s.
pub fn uplink_rate(bandwidth_mbps: f64, concurrent: usize, snr: f64) -> Result<f64> {
    if concurrent == 0 {
        return Err(Error::ZeroConcurrency);
    }
    Ok(bandwidth_mbps / concurrent as f64 * (1.0 + snr).log2())
}

pub fn comm_latency(data_mbit: f64, rate_mbps: f64) -> Result<f64> {
    if data_mbit == 0.0 {
        return Ok(0.0);
    }
    if !(rate_mbps > 0.0) {
        return Err(Error::UnreachableNode(rate_mbps));
    }
    Ok(data_mbit / rate_mbps)
}

/// Time to drain every download already queued on `node`.
pub fn queue_delay(node: &NodeRecord) -> f64 {
    node.download_queue
        .iter()
        .map(|d| d.remaining_mbit / node.bandwidth_mbps)
        .sum()
}

/// Time until `image` is usable on `node`: zero when cached, the position in
/// the FIFO when it is already being fetched, otherwise its own transfer time
/// behind the whole queue.
pub fn download_latency(node: &NodeRecord, image: &ImageRecord) -> f64 {
    if node.is_cached(image.id) {
        return 0.0;
    }
    if let Some(pos) = node.download_queue.iter().position(|d| d.image == image.id) {
        return node.download_queue
            .iter()
            .take(pos + 1)
            .map(|d| d.remaining_mbit / node.bandwidth_mbps)
            .sum();
    }
    image.size_mbit as f64 / node.bandwidth_mbps + queue_delay(node)
}

pub fn comp_latency(work_gcycles: f64, freq_ghz: f64) -> Result<f64> {
    if !(freq_ghz > 0.0) {
        return Err(Error::NonPositiveFrequency(freq_ghz));
    }
    Ok(work_gcycles / freq_ghz)
}

/// Full breakdown for running `task` on `node` right now, with `concurrent`
/// uplinks (including this one) sharing the node's bandwidth. Tasks whose
/// payload already reached the edge pass `comm_waived`.
pub fn estimate(
    node: &NodeRecord,
    task: &TaskRecord,
    image: &ImageRecord,
    concurrent: usize,
    channel: &ChannelParams,
    comm_waived: bool,
) -> Result<LatencyBreakdown> {
    let comm = if comm_waived {
        0.0
    } else {
        let distance = node.position.distance(&task.position).max(MIN_DISTANCE_M);
        let snr = channel.snr(task.tx_power_w, distance, node.bandwidth_mbps)?;
        let rate = uplink_rate(node.bandwidth_mbps, concurrent, snr)?;
        comm_latency(task.data_mbit, rate)?
    };
    let download = download_latency(node, image);
    let compute = comp_latency(task.work_gcycles, node.cpu_freq_ghz)?;
    LatencyBreakdown::new(comm, download, compute)
}
