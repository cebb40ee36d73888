//! Command-line interface.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use lexprobe_core::{
    prior, select_bundle, NoiseConfig, PolicyKind, PolicySummary, SessionConfig, Simulation, Status,
};
use serde::Serialize;

use crate::kgfile::{self, load_kg};
use crate::wire;

#[derive(Debug, Parser)]
#[command(name = "lexprobe", version, about = "Learn what an unknown query word means by asking for clicks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Eig,
    Random,
    /// Both policies on the same seeds.
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a taxonomy file.
    ValidateKg { file: PathBuf },
    /// Print every bundle ranked by expected information gain under the prior.
    EigTable {
        #[arg(long)]
        kg: PathBuf,
        #[arg(long, default_value_t = 2)]
        bundle_size: usize,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        /// No-click noise; defaults to --epsilon.
        #[arg(long)]
        epsilon_noclick: Option<f64>,
        /// Emit the JSON table instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Run seeded trials against a simulated user.
    Simulate {
        #[arg(long)]
        kg: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long)]
        true_node: String,
        #[arg(long, value_enum)]
        policy: PolicyArg,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.95)]
        threshold: f64,
        #[arg(long, default_value_t = 20)]
        max_steps: usize,
        #[arg(long, default_value_t = 2)]
        bundle_size: usize,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        /// Noise of the simulated user, if it should differ from the engine's.
        #[arg(long)]
        user_epsilon: Option<f64>,
        /// Write the JSON summary here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write one CSV row per trial.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long)]
        kg_dir: PathBuf,
        #[arg(long)]
        log_dir: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Load(#[from] kgfile::LoadError),
    #[error(transparent)]
    Engine(#[from] lexprobe_core::Error),
    #[error(transparent)]
    Serve(#[from] crate::server::ServeError),
    #[error("{}: {source}", path.display())]
    Write { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Serialize)]
struct SummaryJson {
    policy: &'static str,
    trials: usize,
    mean_steps: f64,
    median_steps: f64,
    convergence_rate: f64,
    correct_rate: f64,
    mean_true_node_mass: f64,
}

impl From<&PolicySummary> for SummaryJson {
    fn from(s: &PolicySummary) -> Self {
        Self {
            policy: s.policy.name(),
            trials: s.trials,
            mean_steps: s.mean_steps,
            median_steps: s.median_steps,
            convergence_rate: s.convergence_rate,
            correct_rate: s.correct_rate,
            mean_true_node_mass: s.mean_true_node_mass,
        }
    }
}

/// Session settings shared by every trial; each summary names its policy.
#[derive(Debug, Serialize)]
struct TrialConfigJson {
    bundle_size: usize,
    epsilon: f64,
    epsilon_noclick: f64,
    threshold: f64,
    max_steps: usize,
    od_min: f64,
    max_candidates: usize,
}

impl From<&SessionConfig> for TrialConfigJson {
    fn from(c: &SessionConfig) -> Self {
        Self {
            bundle_size: c.bundle_size,
            epsilon: c.noise.epsilon,
            epsilon_noclick: c.noise.epsilon_noclick,
            threshold: c.convergence_threshold,
            max_steps: c.max_steps,
            od_min: c.od.od_min,
            max_candidates: c.max_candidates,
        }
    }
}

#[derive(Debug, Serialize)]
struct SimulationJson {
    kg: String,
    query: String,
    true_node: String,
    base_seed: u64,
    config: TrialConfigJson,
    user_epsilon: Option<f64>,
    summaries: Vec<SummaryJson>,
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    seed: u64,
    policy: &'a str,
    steps: usize,
    status: String,
    true_node_mass: f64,
}

fn status_label(s: &Status) -> String {
    match s {
        Status::Active => "active".into(),
        Status::Converged(node) => format!("converged:{node}"),
        Status::Exhausted => "exhausted".into(),
    }
}

fn write_file(path: &PathBuf, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|source| CliError::Write {
        path: path.clone(),
        source,
    })
}

/// Runs one command, writing normal output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::ValidateKg { file } => {
            let kg = load_kg(&file)?;
            writeln!(
                out,
                "ok: {} ({} products, {} nodes, root `{}`)",
                kg.id(),
                kg.products().len(),
                kg.nodes().len(),
                kg.root().id
            )?;
        }
        Command::EigTable {
            kg,
            bundle_size,
            epsilon,
            epsilon_noclick,
            json,
        } => {
            let kg = load_kg(&kg)?;
            let noise = NoiseConfig::new(epsilon, epsilon_noclick.unwrap_or(epsilon))?;
            let config = SessionConfig::default();
            let belief = prior(&kg, &config.od);
            let table = select_bundle(&belief, &kg, bundle_size, &noise, config.max_candidates)?.table;
            if json {
                serde_json::to_writer_pretty(&mut *out, &wire::eig_rows(&table)).map_err(std::io::Error::from)?;
                writeln!(out)?;
            } else {
                writeln!(out, "{:>4}  {:<24}  {:>10}", "rank", "bundle", "eig (nats)")?;
                for (i, row) in table.iter().enumerate() {
                    writeln!(out, "{:>4}  {:<24}  {:>10.6}", i + 1, row.bundle.to_string(), row.eig)?;
                }
            }
        }
        Command::Simulate {
            kg,
            query,
            true_node,
            policy,
            trials,
            seed,
            threshold,
            max_steps,
            bundle_size,
            epsilon,
            user_epsilon,
            out: out_path,
            csv: csv_path,
        } => {
            let kg = load_kg(&kg)?;
            let config = SessionConfig {
                bundle_size,
                noise: NoiseConfig::with_epsilon(epsilon)?,
                convergence_threshold: threshold,
                max_steps,
                ..SessionConfig::default()
            };
            let mut sim = Simulation::new(&kg, query.as_str(), &true_node, config)?;
            if let Some(ue) = user_epsilon {
                sim = sim.with_user_noise(NoiseConfig::with_epsilon(ue)?)?;
            }
            let policies: &[PolicyKind] = match policy {
                PolicyArg::Eig => &[PolicyKind::Eig],
                PolicyArg::Random => &[PolicyKind::Random],
                PolicyArg::Both => &[PolicyKind::Eig, PolicyKind::Random],
            };
            let summaries = policies
                .iter()
                .map(|&p| sim.summarize(p, trials, seed))
                .collect::<Result<Vec<_>, _>>()?;

            let doc = SimulationJson {
                kg: kg.id().to_string(),
                query,
                true_node,
                base_seed: seed,
                config: TrialConfigJson::from(&config),
                user_epsilon,
                summaries: summaries.iter().map(SummaryJson::from).collect(),
            };
            let mut text = serde_json::to_string_pretty(&doc).map_err(std::io::Error::from)?;
            text.push('\n');
            match &out_path {
                Some(path) => write_file(path, text.as_bytes())?,
                None => out.write_all(text.as_bytes())?,
            }
            if let Some(path) = &csv_path {
                let mut w = csv::Writer::from_writer(Vec::new());
                for s in &summaries {
                    for o in &s.outcomes {
                        w.serialize(CsvRow {
                            seed: o.seed,
                            policy: o.policy.name(),
                            steps: o.steps,
                            status: status_label(&o.status),
                            true_node_mass: o.true_node_mass,
                        })?;
                    }
                }
                let bytes = w.into_inner().map_err(|e| e.into_error())?;
                write_file(path, &bytes)?;
            }
        }
        Command::Serve { bind, kg_dir, log_dir } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::server::serve(&bind, &kg_dir, &log_dir))?;
        }
    }
    Ok(())
}
