use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ocs_core::domain::{Hyperparams, ScenarioConfig};
use ocs_core::ppo::{self, Agent};
use ocs_core::simulator::{write_csv_file, EventRow, TaskLatencyRow};
use ocs_core::toolkit::compare::Component;
use ocs_core::toolkit::{
    emit_plots, generate_scenario, run_compare, run_episode, CompareResult, Policy, PolicyKind, SweepSpec,
    SweepVariable,
};
use ocs_core::{Error, Result};

#[derive(Parser)]
#[command(name = "ocs", version, about = "Rolling-upgrade edge scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario config file (`key = value` lines)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    tasks: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn scenario_config(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(p) => ScenarioConfig::load(p)?,
            None => ScenarioConfig::default(),
        };
        if let Some(n) = self.nodes {
            cfg.set_node_count(n);
        }
        if let Some(t) = self.tasks {
            cfg.task_count = t;
        }
        cfg.seed = self.seed;
        cfg.ensure_valid()?;
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::Io {
            path: self.out.clone(),
            source: e,
        })?;
        Ok(&self.out)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated scenario (and the config that produced it)
    GenScenario {
        #[command(flatten)]
        common: Common,
    },
    /// Train the learned scheduler
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        episodes: Option<usize>,
        /// Where to write the checkpoint (default `<out>/checkpoint.bin`)
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run one policy over consecutive seeds and write per-task latencies
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "il")]
        policy: String,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Compare policies across node or task counts
    Compare {
        #[command(flatten)]
        common: Common,
        /// `node_count` or `task_count`
        #[arg(long, default_value = "node_count")]
        sweep: String,
        #[arg(long, value_delimiter = ',', default_value = "10,15,20")]
        values: Vec<usize>,
        /// Comma-separated policies (default: all baselines, plus OCS with --checkpoint)
        #[arg(long, value_delimiter = ',')]
        policy: Vec<String>,
        /// Seeds per cell, starting at --seed
        #[arg(long, default_value_t = 5)]
        episodes: usize,
        /// OCS checkpoint; `{value}` is replaced by each sweep value
        #[arg(long)]
        checkpoint: Option<String>,
    },
    /// Render SVG charts from a compare run's `episodes.csv`
    Plot {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Compare CSV to plot (default `<out>/episodes.csv`)
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn load_agent(path: &Path) -> Result<Agent> {
    Agent::load(path, Hyperparams::default())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenScenario { common } => {
            let cfg = common.scenario_config()?;
            let out = common.out_dir()?;
            let scenario = generate_scenario(&cfg, common.seed)?;
            let path = out.join("scenario.json");
            std::fs::write(&path, scenario.to_bytes()).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            cfg.save(&out.join("config.txt"))?;
            println!("{}", path.display());
        }
        Command::Train {
            common,
            episodes,
            checkpoint,
        } => {
            let cfg = common.scenario_config()?;
            let out = common.out_dir()?;
            let mut hp = Hyperparams::default();
            if let Some(e) = episodes {
                hp.episodes = e;
            }
            let (agent, report) = ppo::train_with(&cfg, &hp, common.seed, |row| {
                if row.update_idx % 50 == 0 {
                    eprintln!(
                        "update {:>5}  reward {:>9.3}  latency {:>8.3}s  value loss {:.4}",
                        row.update_idx, row.mean_reward, row.mean_total_latency_s, row.value_loss
                    );
                }
            })?;
            let ck = checkpoint.unwrap_or_else(|| out.join("checkpoint.bin"));
            agent.save(&ck)?;
            write_csv_file(&out.join("train_log.csv"), &report.rows)?;
            println!("{}", ck.display());
        }
        Command::Eval {
            common,
            policy,
            episodes,
            checkpoint,
        } => {
            let cfg = common.scenario_config()?;
            let out = common.out_dir()?;
            let kind: PolicyKind = policy.parse()?;
            let policy = match kind {
                PolicyKind::Ocs => {
                    let path = checkpoint.ok_or_else(|| Error::MissingCheckpoint {
                        variable: "node_count".into(),
                        value: cfg.node_count,
                    })?;
                    Policy::Ocs(Box::new(load_agent(&path)?))
                }
                k => Policy::baseline(k)?,
            };
            let mut events: Vec<EventRow> = Vec::new();
            let mut latencies: Vec<TaskLatencyRow> = Vec::new();
            let mut totals = Vec::new();
            for (i, seed) in (common.seed..).take(episodes).enumerate() {
                let mut r = run_episode(&cfg, seed, &policy)?;
                for row in &mut r.log {
                    row.episode = i;
                }
                events.extend(r.log);
                totals.push(r.metrics.means.total);
                latencies.extend(r.metrics.rows);
            }
            write_csv_file(&out.join("events.csv"), &events)?;
            write_csv_file(&out.join("latencies.csv"), &latencies)?;
            let mean = totals.iter().sum::<f64>() / totals.len().max(1) as f64;
            println!("{} mean_total_latency_s={mean:.6}", kind.name());
        }
        Command::Compare {
            common,
            sweep,
            values,
            policy,
            episodes,
            checkpoint,
        } => {
            let base = common.scenario_config()?;
            let out = common.out_dir()?;
            let variable: SweepVariable = sweep.parse()?;
            let mut policies = policy
                .iter()
                .map(|p| p.parse())
                .collect::<Result<Vec<PolicyKind>>>()?;
            if policies.is_empty() {
                policies = PolicyKind::BASELINES.to_vec();
                if checkpoint.is_some() {
                    policies.push(PolicyKind::Ocs);
                }
            }
            let mut agents = BTreeMap::new();
            if let (true, Some(template)) = (policies.contains(&PolicyKind::Ocs), &checkpoint) {
                for &v in &values {
                    let path = PathBuf::from(template.replace("{value}", &v.to_string()));
                    if !path.exists() {
                        return Err(Error::MissingCheckpoint {
                            variable: variable.name().into(),
                            value: v,
                        });
                    }
                    agents.insert(v, load_agent(&path)?);
                }
            }
            let spec = SweepSpec {
                base,
                variable,
                values,
                policies,
                seeds: (common.seed..).take(episodes.max(1)).collect(),
                agents,
            };
            let result = run_compare(&spec)?;
            result.write_all(out)?;
            emit_plots(&result, out)?;
            let table = result.table(Component::Total)?;
            let names: Vec<&str> = table.policies.iter().map(|p| p.name()).collect();
            println!("{}\t{}", variable.name(), names.join("\t"));
            for (v, row) in table.values.iter().zip(&table.cells) {
                let cells: Vec<String> = row.iter().map(|x| format!("{x:.4}")).collect();
                println!("{v}\t{}", cells.join("\t"));
            }
        }
        Command::Plot { out, input } => {
            let input = input.unwrap_or_else(|| out.join("episodes.csv"));
            let result = CompareResult::read_csv(&input)?;
            for p in emit_plots(&result, &out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::from(2)
        }
    }
}
