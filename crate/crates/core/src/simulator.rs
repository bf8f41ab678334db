//! Slotted-time rolling-upgrade environment.
//!
//! Nodes are upgraded one at a time in index order. Before a node enters
//! the upgrade it is drained: its running tasks are cancelled and go back
//! to the pending queue, where they are re-decided (they restart from
//! scratch on the new node but do not pay the uplink again). The next
//! upgrade starts once the previous one finished and every drained task
//! has been placed again.
//!
//! Between decisions the clock jumps straight to the next event: a task
//! completion, an image download completing, the end of an upgrade, or the
//! next pending task becoming ready. A pending task whose feasible set is
//! empty is deferred by one slot.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{
    min_frequency, ImageRecord, NodeId, NodeRecord, QueuedDownload, ScenarioConfig, TaskId,
    TaskRecord, UpgradePhase,
};
use crate::encoder::{self, Observation};
use crate::latency::{self, ChannelParams, LatencyBreakdown};
use crate::toolkit::scenario::{generate_scenario, Scenario};
use crate::{Error, Result};

/// A task waiting for a placement decision.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingTask {
    pub task: TaskRecord,
    pub ready_s: f64,
    pub evicted: bool,
    /// Uplink latency already paid by an evicted task.
    pub comm_paid: Option<f64>,
    seq: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub task: TaskRecord,
    pub node: NodeId,
    pub start_s: f64,
    pub comm_end_s: f64,
    pub finish_s: f64,
    pub breakdown: LatencyBreakdown,
    pub comm_paid: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletedTask {
    pub task_id: TaskId,
    pub node: NodeId,
    pub finish_s: f64,
    /// Latency of the final placement; for evicted tasks `comm` is the
    /// uplink latency of their first placement.
    pub breakdown: LatencyBreakdown,
}

/// One row of the decision log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub episode: usize,
    pub step: usize,
    pub clock_s: f64,
    pub task_id: TaskId,
    pub node_id: NodeId,
    pub t_comm_s: f64,
    pub t_down_s: f64,
    pub t_comp_s: f64,
    pub t_total_s: f64,
    pub reward: f64,
    pub evicted_flag: u8,
}

pub const EVENT_LOG_HEADER: [&str; 11] = [
    "episode",
    "step",
    "clock_s",
    "task_id",
    "node_id",
    "t_comm_s",
    "t_down_s",
    "t_comp_s",
    "t_total_s",
    "reward",
    "evicted_flag",
];

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub task_id: TaskId,
    pub node: NodeId,
    pub breakdown: LatencyBreakdown,
    pub evicted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Next decision; `None` once the episode is done.
    pub observation: Option<Observation>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Completion(TaskId),
    DownloadDone(NodeId),
    UpgradeDone,
}

impl Event {
    fn rank(&self) -> (u8, usize) {
        match *self {
            Event::Completion(id) => (0, id),
            Event::DownloadDone(n) => (1, n),
            Event::UpgradeDone => (2, 0),
        }
    }
}

/// The whole mutable environment for one episode.
#[derive(Debug, Clone)]
pub struct ClusterState {
    pub nodes: Vec<NodeRecord>,
    pub images: Vec<ImageRecord>,
    pub clock: f64,
    pub pending: Vec<PendingTask>,
    pub in_flight: BTreeMap<TaskId, Placement>,
    pub upgrade_cursor: usize,
    pub upgrade_ends_at: Option<f64>,
    pub completed: Vec<CompletedTask>,
    pub log: Vec<EventRow>,
    pub episode: usize,
    channel: ChannelParams,
    upgrade_duration_s: f64,
    slot_s: f64,
    min_freq_ghz: f64,
    task_count: usize,
    next_seq: u64,
    step: usize,
    audit: bool,
}

impl ClusterState {
    /// Generates the scenario for `seed`, starts the first upgrade and
    /// advances to the first decision.
    pub fn reset(cfg: &ScenarioConfig, seed: u64) -> Result<(Self, Option<Observation>)> {
        let scenario = generate_scenario(cfg, seed)?;
        Self::from_scenario(cfg, scenario)
    }

    pub fn from_scenario(cfg: &ScenarioConfig, scenario: Scenario) -> Result<(Self, Option<Observation>)> {
        let mut state = Self::build(cfg, scenario, false)?;
        state.advance()?;
        let obs = state.observe();
        Ok((state, obs))
    }

    /// Like [`from_scenario`](Self::from_scenario) but checks every
    /// invariant after every event, failing with [`Error::Invariant`].
    pub fn from_scenario_audited(
        cfg: &ScenarioConfig,
        scenario: Scenario,
    ) -> Result<(Self, Option<Observation>)> {
        let mut state = Self::build(cfg, scenario, true)?;
        state.check_invariants()?;
        state.advance()?;
        let obs = state.observe();
        Ok((state, obs))
    }

    /// Builds the state without advancing the clock or starting upgrades.
    pub fn build(cfg: &ScenarioConfig, scenario: Scenario, audit: bool) -> Result<Self> {
        cfg.ensure_valid()?;
        let Scenario {
            nodes,
            images,
            tasks,
            ..
        } = scenario;
        let min_freq_ghz = min_frequency(&nodes)?;
        for t in &tasks {
            t.check(images.len())?;
        }
        let task_count = tasks.len();
        let pending: Vec<PendingTask> = tasks
            .into_iter()
            .enumerate()
            .map(|(i, task)| PendingTask {
                ready_s: task.arrival_s,
                task,
                evicted: false,
                comm_paid: None,
                seq: i as u64,
            })
            .collect();
        let mut state = Self {
            nodes,
            images,
            clock: 0.0,
            pending: Vec::new(),
            in_flight: BTreeMap::new(),
            upgrade_cursor: 0,
            upgrade_ends_at: None,
            completed: Vec::new(),
            log: Vec::new(),
            episode: 0,
            channel: ChannelParams {
                noise_density_w_hz: cfg.noise_density_w_hz(),
                path_loss_exponent: cfg.path_loss_exponent,
                tx_power_w: cfg.tx_power_w(),
            },
            upgrade_duration_s: cfg.upgrade_duration_s,
            slot_s: cfg.slot_s,
            min_freq_ghz,
            task_count,
            next_seq: task_count as u64,
            step: 0,
            audit,
        };
        for p in pending {
            state.insert_pending(p);
        }
        Ok(state)
    }

    pub fn set_episode(&mut self, episode: usize) {
        self.episode = episode;
    }

    pub fn min_freq_ghz(&self) -> f64 {
        self.min_freq_ghz
    }

    pub fn channel(&self) -> &ChannelParams {
        &self.channel
    }

    pub fn task_count(&self) -> usize {
        self.task_count
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn image(&self, id: usize) -> &ImageRecord {
        &self.images[id]
    }

    /// The task awaiting a decision, if the episode is not done.
    pub fn head_task(&self) -> Option<&TaskRecord> {
        if self.is_done() {
            None
        } else {
            self.pending.first().map(|p| &p.task)
        }
    }

    pub fn head(&self) -> Option<&PendingTask> {
        self.pending.first()
    }

    pub fn is_done(&self) -> bool {
        self.upgrade_cursor >= self.nodes.len() && self.pending.is_empty() && self.in_flight.is_empty()
    }

    pub fn upgrading_node(&self) -> Option<NodeId> {
        self.nodes
            .iter()
            .position(|n| n.upgrade_phase == UpgradePhase::Upgrading)
    }

    fn observe(&self) -> Option<Observation> {
        self.head_task().map(|t| encoder::observe(self, t))
    }

    /// Why `node` cannot host `task` right now, or `None` if it can.
    pub fn infeasibility(&self, node: &NodeRecord, task: &TaskRecord) -> Option<&'static str> {
        if node.upgrade_phase == UpgradePhase::Upgrading {
            return Some("node is upgrading");
        }
        if node.cpu_free_m < task.cpu_req_m {
            return Some("insufficient cpu");
        }
        if node.mem_free_mb < task.mem_req_mb {
            return Some("insufficient memory");
        }
        let image = &self.images[task.image];
        if !node.is_cached(image.id)
            && !node.is_queued(image.id)
            && node.storage_free_mbit < image.size_mbit
        {
            return Some("insufficient storage for image");
        }
        None
    }

    /// Nodes satisfying the CPU, memory and storage constraints that are not
    /// upgrading, in ascending id order.
    pub fn feasible_nodes(&self, task: &TaskRecord) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| self.infeasibility(n, task).is_none())
            .map(|n| n.id)
            .collect()
    }

    /// Uplinks to `node` still transmitting at the current instant, plus one
    /// for the task being scheduled.
    pub fn concurrent_uplinks(&self, node: NodeId) -> usize {
        1 + self
            .in_flight
            .values()
            .filter(|p| p.node == node && p.comm_end_s > self.clock)
            .count()
    }

    /// Latency `task` would see on `node` if placed now.
    pub fn breakdown_for(&self, node: NodeId, pending: &PendingTask) -> Result<LatencyBreakdown> {
        let n = &self.nodes[node];
        latency::estimate(
            n,
            &pending.task,
            &self.images[pending.task.image],
            self.concurrent_uplinks(node),
            &self.channel,
            pending.evicted,
        )
    }

    /// Places the head pending task on `action`, then advances the clock to
    /// the next decision.
    pub fn step(&mut self, action: NodeId) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::EpisodeDone);
        }
        let head = self
            .pending
            .first()
            .cloned()
            .ok_or_else(|| Error::Invariant("no pending task at a decision point".into()))?;
        let node = self.nodes.get(action).ok_or_else(|| {
            Error::ConstraintViolation(format!("node {action} does not exist"))
        })?;
        if let Some(why) = self.infeasibility(node, &head.task) {
            return Err(Error::ConstraintViolation(format!(
                "task {} on node {action}: {why}",
                head.task.id
            )));
        }
        let breakdown = self.breakdown_for(action, &head)?;
        let reward = encoder::reward(&head.task, &breakdown, self.min_freq_ghz);

        self.pending.remove(0);
        let image = self.images[head.task.image];
        let node = &mut self.nodes[action];
        node.cpu_free_m -= head.task.cpu_req_m;
        node.mem_free_mb -= head.task.mem_req_mb;
        if !node.is_cached(image.id) && !node.is_queued(image.id) {
            node.storage_free_mbit -= image.size_mbit;
            node.download_queue.push_back(QueuedDownload {
                image: image.id,
                remaining_mbit: image.size_mbit as f64,
            });
        }
        node.running.insert(head.task.id);

        self.log.push(EventRow {
            episode: self.episode,
            step: self.step,
            clock_s: self.clock,
            task_id: head.task.id,
            node_id: action,
            t_comm_s: breakdown.comm,
            t_down_s: breakdown.download,
            t_comp_s: breakdown.compute,
            t_total_s: breakdown.total,
            reward,
            evicted_flag: head.evicted as u8,
        });
        self.step += 1;

        let task_id = head.task.id;
        self.in_flight.insert(
            task_id,
            Placement {
                node: action,
                start_s: self.clock,
                comm_end_s: self.clock + breakdown.comm,
                finish_s: self.clock + breakdown.total,
                breakdown,
                comm_paid: head.comm_paid.unwrap_or(breakdown.comm),
                task: head.task,
            },
        );
        self.audit_point()?;
        self.advance()?;

        Ok(StepOutcome {
            observation: self.observe(),
            reward,
            done: self.is_done(),
            info: StepInfo {
                task_id,
                node: action,
                breakdown,
                evicted: head.evicted,
            },
        })
    }

    /// Drains the node at the upgrade cursor and marks it upgrading.
    pub fn begin_upgrade(&mut self) -> Result<()> {
        if let Some(n) = self.upgrading_node() {
            return Err(Error::Upgrade(format!("node {n} is already upgrading")));
        }
        if self.upgrade_cursor >= self.nodes.len() {
            return Err(Error::Upgrade("every node has been upgraded".into()));
        }
        let target = self.upgrade_cursor;
        let running: Vec<TaskId> = self.nodes[target].running.iter().copied().collect();
        for task_id in running {
            let placement = self
                .in_flight
                .remove(&task_id)
                .ok_or_else(|| Error::Invariant(format!("running task {task_id} not in flight")))?;
            let node = &mut self.nodes[target];
            node.running.remove(&task_id);
            node.cpu_free_m += placement.task.cpu_req_m;
            node.mem_free_mb += placement.task.mem_req_mb;
            let seq = self.next_seq;
            self.next_seq += 1;
            self.insert_pending(PendingTask {
                task: placement.task,
                ready_s: self.clock,
                evicted: true,
                comm_paid: Some(placement.comm_paid),
                seq,
            });
        }
        self.nodes[target].upgrade_phase = UpgradePhase::Upgrading;
        self.upgrade_ends_at = Some(self.clock + self.upgrade_duration_s);
        self.audit_point()
    }

    /// Completes the active upgrade once its duration has elapsed.
    pub fn finish_upgrade(&mut self) -> Result<()> {
        let ends = self
            .upgrade_ends_at
            .ok_or_else(|| Error::Upgrade("no upgrade in progress".into()))?;
        if self.clock < ends {
            return Err(Error::Upgrade(format!(
                "upgrade ends at {ends}s, clock is {}s",
                self.clock
            )));
        }
        let node = self
            .upgrading_node()
            .ok_or_else(|| Error::Invariant("upgrade timer without upgrading node".into()))?;
        self.nodes[node].upgrade_phase = UpgradePhase::Upgraded;
        self.upgrade_ends_at = None;
        self.upgrade_cursor += 1;
        self.audit_point()
    }

    fn insert_pending(&mut self, p: PendingTask) {
        let idx = self
            .pending
            .partition_point(|q| (q.ready_s, q.seq) < (p.ready_s, p.seq));
        self.pending.insert(idx, p);
    }

    fn upgrade_may_start(&self) -> bool {
        self.upgrade_ends_at.is_none()
            && self.upgrading_node().is_none()
            && self.upgrade_cursor < self.nodes.len()
            && !self.pending.iter().any(|p| p.evicted)
    }

    fn next_event(&self) -> Option<(f64, Event)> {
        let completions = self
            .in_flight
            .iter()
            .map(|(&id, p)| (p.finish_s, Event::Completion(id)));
        let downloads = self.nodes.iter().filter_map(|n| {
            n.download_queue.front().map(|d| {
                (
                    self.clock + d.remaining_mbit / n.bandwidth_mbps,
                    Event::DownloadDone(n.id),
                )
            })
        });
        let upgrade = self.upgrade_ends_at.map(|t| (t, Event::UpgradeDone));
        completions
            .chain(downloads)
            .chain(upgrade)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.rank().cmp(&b.1.rank())))
    }

    fn set_clock(&mut self, t: f64) {
        let dt = t - self.clock;
        if dt > 0.0 {
            for node in &mut self.nodes {
                if let Some(head) = node.download_queue.front_mut() {
                    head.remaining_mbit = (head.remaining_mbit - dt * node.bandwidth_mbps).max(0.0);
                }
            }
            self.clock = t;
        }
    }

    fn apply(&mut self, event: Event) -> Result<()> {
        match event {
            Event::Completion(task_id) => {
                let p = self
                    .in_flight
                    .remove(&task_id)
                    .ok_or_else(|| Error::Invariant(format!("completion of unknown task {task_id}")))?;
                let node = &mut self.nodes[p.node];
                node.running.remove(&task_id);
                node.cpu_free_m += p.task.cpu_req_m;
                node.mem_free_mb += p.task.mem_req_mb;
                let breakdown = LatencyBreakdown::new(
                    p.comm_paid,
                    p.breakdown.download,
                    p.breakdown.compute,
                )?;
                self.completed.push(CompletedTask {
                    task_id,
                    node: p.node,
                    finish_s: p.finish_s,
                    breakdown,
                });
            }
            Event::DownloadDone(n) => {
                let node = &mut self.nodes[n];
                let done = node
                    .download_queue
                    .pop_front()
                    .ok_or_else(|| Error::Invariant(format!("empty download queue on node {n}")))?;
                node.cached_images.insert(done.image);
            }
            Event::UpgradeDone => self.finish_upgrade()?,
        }
        self.audit_point()
    }

    /// Runs events until the head pending task is ready and has a feasible
    /// node, or the episode is done.
    fn advance(&mut self) -> Result<()> {
        loop {
            if self.upgrade_may_start() {
                self.begin_upgrade()?;
            }
            if self.is_done() {
                return Ok(());
            }
            let next_event = self.next_event();
            let ready = self.pending.first().map(|p| p.ready_s);
            let decide_first = match (ready, next_event) {
                (Some(r), Some((t, _))) => r < t,
                (Some(_), None) => true,
                (None, _) => false,
            };
            if decide_first {
                let r = ready.unwrap();
                self.set_clock(r.max(self.clock));
                let head = &self.pending[0];
                if !self.feasible_nodes(&head.task).is_empty() {
                    return Ok(());
                }
                if self.upgrade_ends_at.is_none() && self.in_flight.is_empty() {
                    return Err(Error::Deadlock {
                        clock: self.clock,
                        task: head.task.id,
                    });
                }
                let mut deferred = self.pending.remove(0);
                deferred.ready_s = self.clock + self.slot_s;
                self.insert_pending(deferred);
            } else if let Some((t, event)) = next_event {
                self.set_clock(t.max(self.clock));
                self.apply(event)?;
            } else {
                return Err(Error::Invariant("simulation stalled with work outstanding".into()));
            }
        }
    }

    fn audit_point(&self) -> Result<()> {
        if self.audit {
            self.check_invariants()
        } else {
            Ok(())
        }
    }

    /// Verifies the rolling-upgrade, resource and single-assignment
    /// invariants on the current state.
    pub fn check_invariants(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Invariant(m));
        let upgrading: Vec<_> = self
            .nodes
            .iter()
            .filter(|n| n.upgrade_phase == UpgradePhase::Upgrading)
            .collect();
        if upgrading.len() > 1 {
            return fail(format!("{} nodes upgrading at once", upgrading.len()));
        }
        if upgrading.len() == 1 && self.upgrade_ends_at.is_none() {
            return fail("upgrading node without timer".into());
        }
        let mut placed = 0;
        for n in &self.nodes {
            if n.upgrade_phase == UpgradePhase::Upgrading && !n.running.is_empty() {
                return fail(format!("node {} upgrading with running tasks", n.id));
            }
            let (mut cpu, mut mem) = (0u64, 0u64);
            for id in &n.running {
                let Some(p) = self.in_flight.get(id) else {
                    return fail(format!("node {} runs unknown task {id}", n.id));
                };
                if p.node != n.id {
                    return fail(format!("task {id} placed on {} but running on {}", p.node, n.id));
                }
                cpu += p.task.cpu_req_m;
                mem += p.task.mem_req_mb;
            }
            placed += n.running.len();
            if cpu + n.cpu_free_m != n.cpu_capacity_m {
                return fail(format!("cpu not conserved on node {}", n.id));
            }
            if mem + n.mem_free_mb != n.mem_capacity_mb {
                return fail(format!("memory not conserved on node {}", n.id));
            }
            let stored: u64 = n
                .cached_images
                .iter()
                .chain(n.download_queue.iter().map(|d| &d.image))
                .map(|&i| self.images[i].size_mbit)
                .sum();
            if stored > n.storage_capacity_mbit || stored + n.storage_free_mbit != n.storage_capacity_mbit {
                return fail(format!("storage accounting broken on node {}", n.id));
            }
        }
        if placed != self.in_flight.len() {
            return fail("in-flight task not running on any node".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.completed {
            if !seen.insert(c.task_id) {
                return fail(format!("task {} completed twice", c.task_id));
            }
        }
        for id in self
            .in_flight
            .keys()
            .chain(self.pending.iter().map(|p| &p.task.id))
        {
            if !seen.insert(*id) {
                return fail(format!("task {id} tracked twice"));
            }
        }
        if seen.len() != self.task_count {
            return fail(format!("{} tasks tracked, expected {}", seen.len(), self.task_count));
        }
        Ok(())
    }

    /// Per-task latencies of the finished episode and their means.
    pub fn episode_metrics(&self) -> Result<EpisodeMetrics> {
        if !self.is_done() {
            return Err(Error::EpisodeNotDone);
        }
        let mut rows: Vec<TaskLatencyRow> = self
            .completed
            .iter()
            .map(|c| TaskLatencyRow {
                task_id: c.task_id,
                node_id: c.node,
                t_comm_s: c.breakdown.comm,
                t_down_s: c.breakdown.download,
                t_comp_s: c.breakdown.compute,
                t_total_s: c.breakdown.total,
            })
            .collect();
        rows.sort_by_key(|r| r.task_id);
        Ok(EpisodeMetrics::from_rows(rows))
    }

    pub fn write_event_log<W: Write>(&self, w: W) -> Result<()> {
        write_rows(w, &self.log)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskLatencyRow {
    pub task_id: TaskId,
    pub node_id: NodeId,
    pub t_comm_s: f64,
    pub t_down_s: f64,
    pub t_comp_s: f64,
    pub t_total_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyMeans {
    pub comm: f64,
    pub download: f64,
    pub compute: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    pub rows: Vec<TaskLatencyRow>,
    pub means: LatencyMeans,
}

impl EpisodeMetrics {
    pub fn from_rows(rows: Vec<TaskLatencyRow>) -> Self {
        let n = rows.len().max(1) as f64;
        let mut m = LatencyMeans::default();
        for r in &rows {
            m.comm += r.t_comm_s;
            m.download += r.t_down_s;
            m.compute += r.t_comp_s;
            m.total += r.t_total_s;
        }
        m.comm /= n;
        m.download /= n;
        m.compute /= n;
        m.total /= n;
        Self { rows, means: m }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_rows(w, &self.rows)
    }
}

pub(crate) fn write_rows<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_csv_file<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_rows(std::io::BufWriter::new(f), rows)
}
