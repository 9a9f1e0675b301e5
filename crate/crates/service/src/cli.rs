use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rebuild_core::agents::{AgentConfig, AgentKind};
use rebuild_core::bench::{compare_algorithms, digest, emit_report, BenchConfig};
use rebuild_core::city::{load_dataset, save_dataset};
use rebuild_core::planner::{GeneratorConfig, Lineage, Plan};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{ErrorKind, ServiceError};
use crate::ops::{self, DatasetView, TrainRequest};

/// Plan post-disaster reconstruction cycle by cycle.
#[derive(Debug, Parser)]
#[command(name = "rebuild", version)]
pub struct Cli {
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Directory holding the dataset lineage.
    #[arg(long, global = true, env = "REBUILD_DATA_DIR", default_value = "rebuild-data")]
    pub data_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a dataset file and start a lineage from it.
    Ingest {
        file: PathBuf,
        /// Replace an existing lineage.
        #[arg(long)]
        force: bool,
    },
    /// Generate a synthetic city and start a lineage from it.
    Generate(GenerateArgs),
    /// Train an agent on the current cycle and store candidate plans.
    Train(TrainArgs),
    /// Inspect candidate plans.
    Plan {
        #[command(subcommand)]
        command: PlanCommand,
    },
    /// Apply a candidate plan and advance to the next cycle.
    Apply { plan_id: String },
    /// Show the cycle history.
    Cycles,
    /// Compare all algorithms on the current snapshot.
    Bench(BenchArgs),
    /// Run the HTTP API.
    Serve {
        #[arg(long, env = "REBUILD_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
}

#[derive(Debug, Subcommand)]
pub enum PlanCommand {
    /// List the candidates of a cycle, or print one plan in full.
    Show {
        plan_id: Option<String>,
        /// Cycle to list; defaults to the current one.
        #[arg(long)]
        cycle: Option<u32>,
    },
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 20)]
    pub units: usize,
    /// Fraction of buildings damaged [default: 37/133].
    #[arg(long)]
    pub damage_rate: Option<f64>,
    /// Chance of a declared dependency per damaged building [default: 0.2].
    #[arg(long)]
    pub dependency_rate: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the dataset to this file instead of starting a lineage.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace an existing lineage.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Budget for this cycle [default: 100000].
    #[arg(long)]
    pub budget: Option<f64>,
    /// Time horizon in months [default: 60].
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Training episodes [default: 15000].
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long, default_value = "ddqn")]
    pub agent: AgentKind,
    /// Number of alternative plans to extract [default: 2].
    #[arg(long)]
    pub alternatives: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON file with agent hyperparameters; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 2000)]
    pub episodes: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    /// Algorithms to compare [default: all].
    #[arg(long, value_delimiter = ',')]
    pub agents: Vec<AgentKind>,
    #[arg(long)]
    pub budget: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Output directory [default: <data-dir>/bench/cycle-<n>].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Result of a command: a JSON value and its human-readable rendering.
#[derive(Debug, Clone)]
pub struct Output {
    pub value: Value,
    pub text: String,
}

impl Output {
    fn new(value: impl Serialize, text: String) -> Result<Self, ServiceError> {
        let value = serde_json::to_value(value).map_err(|e| ServiceError::internal(e.to_string()))?;
        Ok(Output { value, text })
    }
}

/// Runs every verb except `serve`.
pub fn run(cli: &Cli) -> Result<Output, ServiceError> {
    let dir = &cli.data_dir;
    match &cli.command {
        Command::Ingest { file, force } => {
            let dataset = load_dataset(file).map_err(ServiceError::from_input)?;
            let lineage = ops::init_lineage(dir, dataset, *force)?;
            lineage_created(&lineage)
        }
        Command::Generate(args) => generate(cli, args),
        Command::Train(args) => train(cli, args),
        Command::Plan {
            command: PlanCommand::Show { plan_id, cycle },
        } => {
            let lineage = Lineage::open(dir)?;
            match plan_id {
                Some(id) => {
                    let (_, plan) = lineage
                        .find_plan(id)
                        .ok_or_else(|| ServiceError::not_found("unknown_plan", format!("unknown plan `{id}`")))?;
                    Output::new(plan, describe_plan(plan))
                }
                None => {
                    let list = ops::plans(&lineage, *cycle);
                    let mut text = format!("cycle {}: {} candidate plan(s)\n", list.cycle, list.plans.len());
                    for p in &list.plans {
                        text.push_str(&plan_line(p));
                    }
                    Output::new(list, text)
                }
            }
        }
        Command::Apply { plan_id } => {
            let mut lineage = Lineage::open(dir)?;
            let applied = ops::apply(&mut lineage, plan_id)?;
            let text = format!(
                "applied {}; now at cycle {} with {} damaged item(s)\n",
                applied.plan, applied.cycle, applied.dataset.damaged_items
            );
            Output::new(applied, text)
        }
        Command::Cycles => {
            let lineage = Lineage::open(dir)?;
            let history = ops::cycles(&lineage);
            let mut text = String::new();
            for c in &history {
                let _ = writeln!(
                    text,
                    "cycle {:>2}  threshold {:.1}  candidates {}  selected {}",
                    c.cycle,
                    c.threshold,
                    c.candidates.len(),
                    c.selected.as_deref().unwrap_or("-")
                );
            }
            Output::new(history, text)
        }
        Command::Bench(args) => bench(cli, args),
        Command::Serve { .. } => Err(ServiceError::internal("serve is handled by the binary")),
    }
}

fn lineage_created(lineage: &Lineage) -> Result<Output, ServiceError> {
    let view = DatasetView::of(lineage.current());
    let text = format!(
        "lineage at {}: cycle {}, {} units, {} roads, {} damaged item(s)\n",
        lineage.root().display(),
        view.cycle,
        view.units.len(),
        view.roads.len(),
        view.damaged_items
    );
    Output::new(json!({ "data_dir": lineage.root(), "dataset": view }), text)
}

fn generate(cli: &Cli, args: &GenerateArgs) -> Result<Output, ServiceError> {
    let defaults = GeneratorConfig::default();
    let config = GeneratorConfig {
        units: args.units,
        damage_rate: args.damage_rate.unwrap_or(defaults.damage_rate),
        dependency_rate: args.dependency_rate.unwrap_or(defaults.dependency_rate),
        seed: args.seed,
        ..defaults
    };
    let dataset = config
        .generate()
        .map_err(|e| ServiceError::validation("invalid_generator", e.to_string()))?;
    match &args.out {
        Some(path) => {
            save_dataset(&dataset, path).map_err(|e| ServiceError::internal(e.to_string()))?;
            let text = format!("wrote {} ({} damaged item(s))\n", path.display(), dataset.damaged_count());
            Output::new(json!({ "file": path, "dataset": DatasetView::of(&dataset) }), text)
        }
        None => lineage_created(&ops::init_lineage(&cli.data_dir, dataset, args.force)?),
    }
}

fn train(cli: &Cli, args: &TrainArgs) -> Result<Output, ServiceError> {
    let mut lineage = Lineage::open(&cli.data_dir)?;
    let mut request = TrainRequest::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| ServiceError::validation("unreadable_input", format!("{}: {e}", path.display())))?;
        request.config = serde_json::from_str::<AgentConfig>(&text)
            .map_err(|e| ServiceError::validation("invalid_config", format!("{}: {e}", path.display())))?;
    }
    request.budget = args.budget.unwrap_or(request.budget);
    request.horizon = args.horizon.unwrap_or(request.horizon);
    request.alternatives = args.alternatives.unwrap_or(request.alternatives);
    request.config.kind = args.agent;
    request.config.seed = args.seed;
    if let Some(n) = args.episodes {
        request.config.episodes = n;
    }

    let total = request.config.episodes;
    let quiet = cli.json;
    let dataset = lineage.current().clone();
    let outcome = ops::train(&dataset, &request, &mut |r| {
        if !quiet && (r.episode % (total / 10).max(1) == 0) {
            eprintln!("episode {}/{total}  reward {:.1}  epsilon {:.3}", r.episode, r.reward, r.epsilon);
        }
    })?;
    let summary = ops::record_outcome(&mut lineage, dataset.cycle(), outcome)?;

    if summary.plans.is_empty() {
        let details = serde_json::to_value(&summary.diagnostics).unwrap_or(Value::Null);
        let binding = summary
            .diagnostics
            .as_ref()
            .map(|d| d.binding.join(", "))
            .unwrap_or_default();
        return Err(ServiceError::new(
            ErrorKind::NoPlan,
            "no_feasible_plan",
            format!("no feasible plan under the constraints (binding: {binding})"),
        )
        .with_details(details));
    }

    let mut text = format!(
        "cycle {} (threshold {:.1}): {} plan(s) from {} {} episodes{}\n",
        summary.cycle,
        summary.threshold,
        summary.plans.len(),
        summary.episodes,
        args.agent,
        if summary.diverged { ", training diverged" } else { "" }
    );
    for (p, file) in summary.plans.iter().zip(&summary.plan_files) {
        text.push_str(&plan_line(p));
        let _ = writeln!(text, "    {}", file.display());
    }
    if let Some(v) = &summary.verification {
        let _ = writeln!(
            text,
            "greedy agent mean reward {:.1} vs random {:.1}",
            v.agent.mean_reward, v.random.mean_reward
        );
    }
    Output::new(summary, text)
}

fn bench(cli: &Cli, args: &BenchArgs) -> Result<Output, ServiceError> {
    let lineage = Lineage::open(&cli.data_dir)?;
    let defaults = BenchConfig::default();
    let config = BenchConfig {
        budget: args.budget.unwrap_or(defaults.budget),
        horizon: args.horizon.unwrap_or(defaults.horizon),
        episodes: args.episodes,
        seeds: args.seeds.clone(),
        algorithms: if args.agents.is_empty() {
            defaults.algorithms.clone()
        } else {
            args.agents.clone()
        },
        ..defaults
    };
    let report = compare_algorithms(lineage.current(), &config)?;
    let out = args.out.clone().unwrap_or_else(|| {
        cli.data_dir
            .join("bench")
            .join(format!("cycle-{}", lineage.cycle()))
    });
    let files = emit_report(&report, &out)?;
    let text = format!("{}\nreport written to {}\n", digest(&report), out.display());
    Output::new(json!({ "summary": report.summary, "files": files }), text)
}

fn plan_line(p: &Plan) -> String {
    format!(
        "  {:<8} S_P {:>12.1}  mean priority {:>5}  cost {:>10.0}  duration {:>5.1}  items {}\n",
        p.id,
        p.evaluation.social_benefit,
        p.evaluation
            .mean_priority
            .map_or("-".to_owned(), |m| format!("{m:.2}")),
        p.evaluation.total_cost,
        p.evaluation.total_duration,
        p.items.len()
    )
}

fn describe_plan(p: &Plan) -> String {
    let mut text = format!(
        "plan {} (cycle {}, {} seed {})\n",
        p.id, p.provenance.cycle, p.provenance.agent, p.provenance.seed
    );
    for (k, id) in p.items.iter().enumerate() {
        let _ = writeln!(
            text,
            "  {:>2}. {:<20} done at {:>5.1}  benefit {:.1}",
            k + 1,
            id.as_str(),
            p.evaluation.completion_times[k],
            p.evaluation.item_benefits[k]
        );
    }
    let groups: Vec<String> = p
        .parallel_sublists
        .iter()
        .map(|g| format!("[{}]", g.iter().map(|i| i.as_str()).collect::<Vec<_>>().join(", ")))
        .collect();
    let _ = writeln!(
        text,
        "S_P {:.1}  cost {:.0}/{:.0}  duration {:.1}/{:.1}  parallel {} (makespan {:.1})",
        p.evaluation.social_benefit,
        p.evaluation.total_cost,
        p.budget,
        p.evaluation.total_duration,
        p.horizon,
        groups.join(" "),
        p.parallel_makespan
    );
    text
}
