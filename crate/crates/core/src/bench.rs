//! Side-by-side training of every agent kind on one instance.
//!
//! Output files:
//!
//! * `summary.csv`: `algorithm,episodes,seeds,final_reward,first100_reward,diverged`,
//!   one row per algorithm, rewards averaged over seeds. Deterministic for
//!   a given configuration.
//! * `runs.csv`: the same columns per `(algorithm, seed)` with `seed` in
//!   place of `seeds`.
//! * `timing.csv`: `algorithm,seed,wallclock_s`.
//! * `curve-<algorithm>-<seed>.csv`: `episode,reward,moving_avg,epsilon,loss`
//!   with a 100-episode trailing moving average and an empty loss when no
//!   update ran.
//! * `digest.txt`: plain-text table of the above.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{evaluate, train, AgentConfig, AgentError, AgentKind, Environment, EpisodeRecord};
use crate::city::Dataset;
use crate::instance::Instance;
use crate::metrics::MetricsError;

pub const MOVING_AVERAGE_WINDOW: usize = 100;
const MIN_EPISODES: usize = 100;
const EVAL_SALT: u64 = 0xd1b5_4a32_d192_ed03;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid benchmark configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed summary: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub budget: f64,
    pub horizon: f64,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub eval_rollouts: usize,
    pub algorithms: Vec<AgentKind>,
    /// Hyperparameters shared by every algorithm; kind, episodes and seed
    /// are overridden per run.
    pub agent: AgentConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            budget: 100_000.0,
            horizon: 60.0,
            episodes: 2000,
            seeds: vec![0, 1, 2],
            eval_rollouts: 100,
            algorithms: AgentKind::ALL.to_vec(),
            agent: AgentConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub algorithm: AgentKind,
    pub seed: u64,
    /// Mean reward of greedy evaluation rollouts after training.
    pub final_reward: f64,
    /// Mean training reward over the first 100 episodes.
    pub first100_reward: f64,
    pub diverged: bool,
    pub wallclock_s: f64,
    pub curve: Vec<EpisodeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: AgentKind,
    pub episodes: usize,
    pub seeds: usize,
    pub final_reward: f64,
    pub first100_reward: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub summary: Vec<SummaryRow>,
    pub runs: Vec<RunResult>,
}

impl BenchReport {
    pub fn any_diverged(&self) -> bool {
        self.runs.iter().any(|r| r.diverged)
    }

    pub fn row(&self, kind: AgentKind) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.algorithm == kind)
    }
}

/// Trains every configured algorithm for every seed in parallel.
pub fn compare_algorithms(dataset: &Dataset, config: &BenchConfig) -> Result<BenchReport, BenchError> {
    if config.episodes < MIN_EPISODES {
        return Err(BenchError::InvalidConfig(format!(
            "episodes must be at least {MIN_EPISODES}, got {}",
            config.episodes
        )));
    }
    if config.seeds.is_empty() || config.algorithms.is_empty() {
        return Err(BenchError::InvalidConfig("need at least one seed and one algorithm".into()));
    }
    let instance = Instance::new(dataset, config.agent.benefit)?;
    let env = Environment::new(&instance, config.budget, config.horizon, config.agent.rules)?;

    let jobs: Vec<(AgentKind, u64)> = config
        .algorithms
        .iter()
        .flat_map(|&k| config.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(kind, seed)| run_one(&env, config, kind, seed))
        .collect::<Result<Vec<_>, _>>()?;

    let summary = config
        .algorithms
        .iter()
        .map(|&kind| {
            let mine: Vec<&RunResult> = runs.iter().filter(|r| r.algorithm == kind).collect();
            let mean = |f: fn(&RunResult) -> f64| mine.iter().map(|r| f(r)).sum::<f64>() / mine.len() as f64;
            SummaryRow {
                algorithm: kind,
                episodes: config.episodes,
                seeds: mine.len(),
                final_reward: mean(|r| r.final_reward),
                first100_reward: mean(|r| r.first100_reward),
                diverged: mine.iter().any(|r| r.diverged),
            }
        })
        .collect();
    Ok(BenchReport { summary, runs })
}

fn run_one(env: &Environment<'_>, config: &BenchConfig, kind: AgentKind, seed: u64) -> Result<RunResult, BenchError> {
    let agent = AgentConfig {
        kind,
        episodes: config.episodes,
        seed,
        ..config.agent.clone()
    };
    let started = Instant::now();
    let run = train(env, &agent, &mut |_| {})?;
    let eval = evaluate(&run.policy, env, config.eval_rollouts, seed ^ EVAL_SALT)?;
    let head = &run.history[..run.history.len().min(MOVING_AVERAGE_WINDOW)];
    let first100 = if head.is_empty() {
        0.0
    } else {
        head.iter().map(|r| r.reward).sum::<f64>() / head.len() as f64
    };
    Ok(RunResult {
        algorithm: kind,
        seed,
        final_reward: eval.mean_reward,
        first100_reward: first100,
        diverged: run.diverged,
        wallclock_s: started.elapsed().as_secs_f64(),
        curve: run.history,
    })
}

/// Trailing mean over at most `window` values ending at each position.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

fn write_file(path: PathBuf, text: String) -> Result<PathBuf, BenchError> {
    fs::write(&path, text).map_err(|source| BenchError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Writes the report files into `out_dir`; returns the written paths.
pub fn emit_report(report: &BenchReport, out_dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    fs::create_dir_all(out_dir).map_err(|source| BenchError::Io {
        path: out_dir.to_owned(),
        source,
    })?;
    let mut written = Vec::new();

    let mut summary = String::from("algorithm,episodes,seeds,final_reward,first100_reward,diverged\n");
    for r in &report.summary {
        writeln!(
            summary,
            "{},{},{},{},{},{}",
            r.algorithm, r.episodes, r.seeds, r.final_reward, r.first100_reward, r.diverged
        )
        .unwrap();
    }
    written.push(write_file(out_dir.join("summary.csv"), summary)?);

    if !report.runs.is_empty() {
        let mut runs = String::from("algorithm,episodes,seed,final_reward,first100_reward,diverged\n");
        let mut timing = String::from("algorithm,seed,wallclock_s\n");
        for r in &report.runs {
            writeln!(
                runs,
                "{},{},{},{},{},{}",
                r.algorithm,
                r.curve.len(),
                r.seed,
                r.final_reward,
                r.first100_reward,
                r.diverged
            )
            .unwrap();
            writeln!(timing, "{},{},{:.3}", r.algorithm, r.seed, r.wallclock_s).unwrap();
        }
        written.push(write_file(out_dir.join("runs.csv"), runs)?);
        written.push(write_file(out_dir.join("timing.csv"), timing)?);
    }

    for r in report.runs.iter().filter(|r| !r.curve.is_empty()) {
        let rewards: Vec<f64> = r.curve.iter().map(|e| e.reward).collect();
        let avg = moving_average(&rewards, MOVING_AVERAGE_WINDOW);
        let mut text = String::from("episode,reward,moving_avg,epsilon,loss\n");
        for (e, m) in r.curve.iter().zip(avg) {
            let loss = e.loss.map(|l| l.to_string()).unwrap_or_default();
            writeln!(text, "{},{},{},{},{}", e.episode, e.reward, m, e.epsilon, loss).unwrap();
        }
        written.push(write_file(out_dir.join(format!("curve-{}-{}.csv", r.algorithm, r.seed)), text)?);
    }

    written.push(write_file(out_dir.join("digest.txt"), digest(report))?);
    Ok(written)
}

/// Plain-text comparison table.
pub fn digest(report: &BenchReport) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<12} {:>9} {:>6} {:>14} {:>14} {:>12} {:>9}",
        "algorithm", "episodes", "seeds", "final_reward", "first100", "wallclock_s", "diverged"
    )
    .unwrap();
    for row in &report.summary {
        let wall: f64 = report
            .runs
            .iter()
            .filter(|r| r.algorithm == row.algorithm)
            .map(|r| r.wallclock_s)
            .sum();
        writeln!(
            out,
            "{:<12} {:>9} {:>6} {:>14.2} {:>14.2} {:>12.2} {:>9}",
            row.algorithm.name(),
            row.episodes,
            row.seeds,
            row.final_reward,
            row.first100_reward,
            wall,
            row.diverged
        )
        .unwrap();
    }
    out
}

/// Reads a `summary.csv` back.
pub fn parse_summary(text: &str) -> Result<Vec<SummaryRow>, BenchError> {
    #[derive(Deserialize)]
    struct Raw {
        algorithm: String,
        episodes: usize,
        seeds: usize,
        final_reward: f64,
        first100_reward: f64,
        diverged: bool,
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader
        .deserialize::<Raw>()
        .map(|row| {
            let raw = row.map_err(|e| BenchError::Parse(e.to_string()))?;
            Ok(SummaryRow {
                algorithm: raw
                    .algorithm
                    .parse()
                    .map_err(|e: AgentError| BenchError::Parse(e.to_string()))?,
                episodes: raw.episodes,
                seeds: raw.seeds,
                final_reward: raw.final_reward,
                first100_reward: raw.first100_reward,
                diverged: raw.diverged,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_warms_up() {
        let avg = moving_average(&[2.0, 4.0, 6.0, 8.0], 2);
        assert_eq!(avg, vec![2.0, 3.0, 5.0, 7.0]);
    }

    #[test]
    fn too_few_episodes_rejected() {
        let ds = crate::planner::six_unit_instance();
        let config = BenchConfig {
            episodes: 0,
            ..Default::default()
        };
        assert!(matches!(
            compare_algorithms(&ds, &config),
            Err(BenchError::InvalidConfig(_))
        ));
    }

    #[test]
    fn summary_only_when_no_curves() {
        let dir = tempfile::tempdir().unwrap();
        let report = BenchReport {
            summary: vec![SummaryRow {
                algorithm: AgentKind::Random,
                episodes: 100,
                seeds: 1,
                final_reward: 1.5,
                first100_reward: 0.25,
                diverged: false,
            }],
            runs: vec![],
        };
        let files = emit_report(&report, dir.path()).unwrap();
        let names: Vec<String> = files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, vec!["summary.csv", "digest.txt"]);
        let text = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(parse_summary(&text).unwrap(), report.summary);
    }
}
