//! Policy sweeps over cluster size or task count.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::ScenarioConfig;
use crate::ppo::Agent;
use crate::simulator::write_csv_file;
use crate::toolkit::runner::{run_episode, Policy, PolicyKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    NodeCount,
    TaskCount,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            Self::NodeCount => "node_count",
            Self::TaskCount => "task_count",
        }
    }

    pub fn apply(self, base: &ScenarioConfig, value: usize) -> ScenarioConfig {
        let mut cfg = base.clone();
        match self {
            Self::NodeCount => cfg.set_node_count(value),
            Self::TaskCount => cfg.task_count = value,
        }
        cfg
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "node_count" | "nodes" => Ok(Self::NodeCount),
            "task_count" | "tasks" => Ok(Self::TaskCount),
            _ => Err(Error::ConfigParse {
                line: 0,
                message: format!("unknown sweep variable {s:?}"),
            }),
        }
    }
}

/// Latency component reported by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Comm,
    Download,
    Compute,
    Total,
}

impl Component {
    pub const ALL: [Component; 4] = [Self::Comm, Self::Download, Self::Compute, Self::Total];

    pub fn name(self) -> &'static str {
        match self {
            Self::Comm => "comm",
            Self::Download => "download",
            Self::Compute => "compute",
            Self::Total => "total",
        }
    }

    fn of(self, row: &CompareRow) -> f64 {
        match self {
            Self::Comm => row.mean_comm_s,
            Self::Download => row.mean_down_s,
            Self::Compute => row.mean_comp_s,
            Self::Total => row.mean_total_s,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: ScenarioConfig,
    pub variable: SweepVariable,
    pub values: Vec<usize>,
    pub policies: Vec<PolicyKind>,
    pub seeds: Vec<u64>,
    /// Trained agents keyed by sweep value, needed when OCS is compared.
    pub agents: BTreeMap<usize, Agent>,
}

/// Mean latencies of one episode in a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub variable: SweepVariable,
    pub value: usize,
    pub policy: PolicyKind,
    pub seed: u64,
    pub mean_comm_s: f64,
    pub mean_down_s: f64,
    pub mean_comp_s: f64,
    pub mean_total_s: f64,
}

/// Seed-averaged means: `cells[i][j]` is value `values[i]` under
/// `policies[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub component: Component,
    pub values: Vec<usize>,
    pub policies: Vec<PolicyKind>,
    pub cells: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, policy: PolicyKind) -> Option<Vec<f64>> {
        let j = self.policies.iter().position(|&p| p == policy)?;
        Some(self.cells.iter().map(|r| r[j]).collect())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["value".to_string()];
        header.extend(self.policies.iter().map(|p| p.name().to_string()));
        w.write_record(&header)?;
        for (v, row) in self.values.iter().zip(&self.cells) {
            let mut rec = vec![v.to_string()];
            rec.extend(row.iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompareResult {
    pub rows: Vec<CompareRow>,
}

impl CompareResult {
    pub fn variable(&self) -> Option<SweepVariable> {
        self.rows.first().map(|r| r.variable)
    }

    pub fn table(&self, component: Component) -> Result<Table> {
        if self.rows.is_empty() {
            return Err(Error::EmptyTable);
        }
        let mut values: Vec<usize> = self.rows.iter().map(|r| r.value).collect();
        values.sort_unstable();
        values.dedup();
        let mut policies: Vec<PolicyKind> = self.rows.iter().map(|r| r.policy).collect();
        policies.sort_unstable();
        policies.dedup();
        let mut acc: BTreeMap<(usize, PolicyKind), (f64, usize)> = BTreeMap::new();
        for r in &self.rows {
            let e = acc.entry((r.value, r.policy)).or_default();
            e.0 += component.of(r);
            e.1 += 1;
        }
        let cells = values
            .iter()
            .map(|&v| {
                policies
                    .iter()
                    .map(|&p| acc.get(&(v, p)).map_or(f64::NAN, |(s, n)| s / *n as f64))
                    .collect()
            })
            .collect();
        Ok(Table {
            component,
            values,
            policies,
            cells,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_csv_file(path, &self.rows)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let rows = r.deserialize().collect::<std::result::Result<Vec<CompareRow>, _>>()?;
        Ok(Self { rows })
    }

    /// Writes `episodes.csv` plus one `<variable>_<component>.csv` table per
    /// latency component into `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let var = self.variable().ok_or(Error::EmptyTable)?;
        let mut written = vec![dir.join("episodes.csv")];
        self.write_csv(&written[0])?;
        for c in Component::ALL {
            let path = dir.join(format!("{}_{}.csv", var.name(), c.name()));
            self.table(c)?.write_csv(&path)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Runs every (value, policy, seed) combination of `spec`.
pub fn run_compare(spec: &SweepSpec) -> Result<CompareResult> {
    let mut rows = Vec::new();
    for &value in &spec.values {
        let cfg = spec.variable.apply(&spec.base, value);
        cfg.ensure_valid()?;
        for &kind in &spec.policies {
            let policy = match kind {
                PolicyKind::Ocs => {
                    let agent = spec.agents.get(&value).ok_or_else(|| Error::MissingCheckpoint {
                        variable: spec.variable.name().to_string(),
                        value,
                    })?;
                    Policy::Ocs(Box::new(agent.clone()))
                }
                k => Policy::baseline(k)?,
            };
            for &seed in &spec.seeds {
                let m = run_episode(&cfg, seed, &policy)?.metrics.means;
                rows.push(CompareRow {
                    variable: spec.variable,
                    value,
                    policy: kind,
                    seed,
                    mean_comm_s: m.comm,
                    mean_down_s: m.download,
                    mean_comp_s: m.compute,
                    mean_total_s: m.total,
                });
            }
        }
    }
    Ok(CompareResult { rows })
}
