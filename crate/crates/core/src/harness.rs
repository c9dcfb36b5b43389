//! Experiment plumbing behind the command line: training runs, evaluation of
//! baselines and checkpoints, comparison tables and the safety ablation.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::baselines::{FcfsPolicy, RandomPolicy};
use crate::config::ExperimentConfig;
use crate::exec::Execution;
use crate::learn::{mix_seed, ActionSelection, ActorCritic, AgentPolicy, Architecture, Checkpoint, CurvePoint, TrainConfig, Trainer};
use crate::reward::{DecisionFacts, RewardBreakdown, RewardWeights};
use crate::sim::{render_event_log, run_episode_with, EpisodeRun, EpisodeSummary, SimConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Random,
    Fcfs,
    Grl,
    MlpRl,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [PolicyKind::Random, PolicyKind::Fcfs, PolicyKind::Grl, PolicyKind::MlpRl];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Random => "random",
            PolicyKind::Fcfs => "fcfs",
            PolicyKind::Grl => "grl",
            PolicyKind::MlpRl => "mlp-rl",
        }
    }

    pub fn architecture(self) -> Option<Architecture> {
        match self {
            PolicyKind::Grl => Some(Architecture::Grl),
            PolicyKind::MlpRl => Some(Architecture::MlpRl),
            _ => None,
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .with_context(|| format!("unknown policy {s:?} (expected random, fcfs, grl or mlp-rl)"))
    }
}

/// A policy ready to be evaluated.
#[derive(Clone, Copy, Debug)]
pub enum Evaluated<'a> {
    Random,
    Fcfs,
    /// Greedy (argmax) play of a trained network.
    Learned(&'a ActorCritic),
}

impl Evaluated<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Evaluated::Random => "random",
            Evaluated::Fcfs => "fcfs",
            Evaluated::Learned(net) => net.architecture.name(),
        }
    }
}

/// Plays one episode, reporting every decision to `on_decision`.
pub fn play(
    policy: Evaluated<'_>,
    sim: &SimConfig,
    weights: &RewardWeights,
    seed: u64,
    on_decision: impl FnMut(u32, &DecisionFacts, &RewardBreakdown),
) -> Result<EpisodeRun> {
    let name = policy.name();
    let result = match policy {
        Evaluated::Random => {
            let mut p = RandomPolicy::new(mix_seed(seed, 0, 3));
            run_episode_with(&mut p, name, sim, weights, seed, on_decision)
        }
        Evaluated::Fcfs => run_episode_with(&mut FcfsPolicy::new(), name, sim, weights, seed, on_decision),
        Evaluated::Learned(net) => {
            let mut agent = AgentPolicy::new(net, ActionSelection::Greedy, seed);
            run_episode_with(&mut agent, name, sim, weights, seed, on_decision)
        }
    };
    result.map_err(|e| anyhow!("{name} episode with seed {seed}: {e}"))
}

/// Plays one episode per seed; results come back in seed order.
pub fn evaluate(
    policy: Evaluated<'_>,
    sim: &SimConfig,
    weights: &RewardWeights,
    seeds: &[u64],
    execution: Execution,
) -> Result<Vec<EpisodeRun>> {
    let runs = execution.map(seeds.to_vec(), |seed| play(policy, sim, weights, seed, |_, _, _| {}));
    runs.into_iter().collect()
}

/// Per-decision reward breakdown, one CSV row per decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRow {
    pub minute: u32,
    pub vehicle: usize,
    pub action: String,
    pub tau: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub beta: f64,
    pub safety: f64,
    pub total: f64,
}

/// Runs one logged episode into `out`: `events.log`, `decisions.csv` and
/// `summary.json`.
pub fn simulate(policy: Evaluated<'_>, cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<EpisodeSummary> {
    let mut rows = Vec::new();
    let run = play(policy, &cfg.sim, &cfg.reward, seed, |minute, facts, r| {
        rows.push(DecisionRow {
            minute,
            vehicle: facts.vehicle,
            action: format!("{:?}", facts.action),
            tau: r.tau,
            gamma: r.gamma,
            lambda: r.lambda,
            beta: r.beta,
            safety: r.safety,
            total: r.total,
        })
    })?;
    write_event_log(&out.join("events.log"), &run)?;
    write_csv(&out.join("decisions.csv"), &rows)?;
    write_json(&out.join("summary.json"), &run.summary)?;
    Ok(run.summary)
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len() as f64;
        if values.is_empty() {
            return Stat { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Stat { mean, std }
    }
}

impl fmt::Display for Stat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.std)
    }
}

/// Aggregates of one policy over its evaluation episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub policy: String,
    pub episodes: usize,
    pub reward: Stat,
    pub delay_hours: Stat,
    pub collisions: Stat,
    pub good_takeoffs: Stat,
    pub bad_takeoffs: Stat,
    pub good_landings: Stat,
    pub bad_landings: Stat,
    pub mean_battery: Stat,
}

impl ReportRow {
    pub fn from_summaries(policy: &str, rows: &[EpisodeSummary]) -> ReportRow {
        let stat = |f: fn(&EpisodeSummary) -> f64| Stat::of(&rows.iter().map(f).collect::<Vec<_>>());
        ReportRow {
            policy: policy.to_string(),
            episodes: rows.len(),
            reward: stat(|s| s.cumulative_reward),
            delay_hours: stat(|s| s.delay_hours),
            collisions: stat(|s| s.collisions as f64),
            good_takeoffs: stat(|s| s.good_takeoffs as f64),
            bad_takeoffs: stat(|s| s.bad_takeoffs as f64),
            good_landings: stat(|s| s.good_landings as f64),
            bad_landings: stat(|s| s.bad_landings as f64),
            mean_battery: stat(|s| s.mean_battery),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ReportRow>,
}

impl ComparisonReport {
    pub fn row(&self, policy: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.policy == policy)
    }

    /// Plain-text table.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<8} {:>20} {:>14} {:>12} {:>14} {:>14} {:>14} {:>14} {:>14}\n",
            "policy", "reward", "delay (h)", "collisions", "good takeoff", "bad takeoff", "good landing", "bad landing", "battery"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<8} {:>20} {:>14} {:>12} {:>14} {:>14} {:>14} {:>14} {:>14}\n",
                r.policy,
                r.reward.to_string(),
                r.delay_hours.to_string(),
                r.collisions.to_string(),
                r.good_takeoffs.to_string(),
                r.bad_takeoffs.to_string(),
                r.good_landings.to_string(),
                r.bad_landings.to_string(),
                r.mean_battery.to_string(),
            ));
        }
        out
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create directory {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r).with_context(|| format!("cannot write {}", path.display()))?;
    }
    w.flush().with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .with_context(|| format!("cannot parse {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).with_context(|| format!("cannot write {}", path.display()))?;
    writeln!(w).and_then(|_| w.flush()).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn write_event_log(path: &Path, run: &EpisodeRun) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(render_event_log(&run.events).as_bytes())
        .and_then(|_| w.flush())
        .with_context(|| format!("cannot write {}", path.display()))
}

/// Evaluates `policy` on the configured evaluation seeds and writes
/// `<name>_episodes.csv` and `<name>_report.json` under `out`.
pub fn evaluate_to_dir(policy: Evaluated<'_>, cfg: &ExperimentConfig, out: &Path, label: &str) -> Result<ReportRow> {
    let runs = evaluate(policy, &cfg.sim, &cfg.reward, &cfg.eval_seeds(), execution(cfg))?;
    let summaries: Vec<EpisodeSummary> = runs.into_iter().map(|r| r.summary).collect();
    write_csv(&out.join(format!("{label}_episodes.csv")), &summaries)?;
    let row = ReportRow::from_summaries(label, &summaries);
    write_json(&out.join(format!("{label}_report.json")), &row)?;
    Ok(row)
}

pub fn execution(cfg: &ExperimentConfig) -> Execution {
    if cfg.experiment.parallel {
        Execution::Parallel
    } else {
        Execution::Sequential
    }
}

/// Loads a trained network, checking its architecture when one is expected.
pub fn load_network(path: &Path, expected: Option<Architecture>) -> Result<ActorCritic> {
    let ck = Checkpoint::load(path).with_context(|| format!("cannot load checkpoint {}", path.display()))?;
    if let Some(arch) = expected {
        if ck.meta.architecture != arch {
            bail!(
                "checkpoint {} holds a {} agent, not {}",
                path.display(),
                ck.meta.architecture.name(),
                arch.name()
            );
        }
    }
    Ok(ck.net)
}

/// Evaluates both baselines and every given network on the same seeds and
/// writes the per-policy files plus `comparison.json`.
pub fn compare(cfg: &ExperimentConfig, nets: &[&ActorCritic], out: &Path) -> Result<ComparisonReport> {
    let mut policies = vec![Evaluated::Random, Evaluated::Fcfs];
    policies.extend(nets.iter().map(|n| Evaluated::Learned(n)));
    let mut report = ComparisonReport::default();
    for p in policies {
        report.rows.push(evaluate_to_dir(p, cfg, out, p.name())?);
    }
    write_json(&out.join("comparison.json"), &report)?;
    Ok(report)
}

/// Artifacts of a training run.
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub curve: Vec<CurvePoint>,
    pub trainer: Trainer,
}

/// Trains one agent into `out`: `curve.csv`, `training_episodes.csv`,
/// periodic `checkpoint-<episodes>.bin` and the final `checkpoint.bin`.
/// With `resume`, training continues from that checkpoint and the new curve
/// rows are appended.
pub fn train(cfg: &ExperimentConfig, architecture: Architecture, out: &Path, resume: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    fs::create_dir_all(out).with_context(|| format!("cannot create directory {}", out.display()))?;
    let tc = TrainConfig {
        architecture,
        sim: cfg.sim.clone(),
        weights: cfg.reward,
        ppo: cfg.ppo.clone(),
        seed: cfg.seed(),
        execution: execution(cfg),
    };
    let mut trainer = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path).with_context(|| format!("cannot load checkpoint {}", path.display()))?;
            if ck.meta.architecture != architecture {
                bail!(
                    "checkpoint {} holds a {} agent, not {}",
                    path.display(),
                    ck.meta.architecture.name(),
                    architecture.name()
                );
            }
            Trainer::resume(tc, ck)?
        }
        None => Trainer::new(tc)?,
    };

    let curve_path = out.join("curve.csv");
    let mut previous: Vec<CurvePoint> = if resume.is_some() && curve_path.exists() {
        read_csv(&curve_path)?
    } else {
        Vec::new()
    };
    previous.retain(|p| p.episode < trainer.episodes_done);
    let episodes_path = out.join("training_episodes.csv");
    let mut earlier: Vec<EpisodeSummary> = if resume.is_some() && episodes_path.exists() {
        read_csv(&episodes_path)?
    } else {
        Vec::new()
    };
    earlier.truncate(trainer.episodes_done as usize);

    let every = cfg.experiment.checkpoint_every;
    let curve = trainer.train_until(cfg.experiment.episodes, |t, p| {
        if every > 0 && (p.episode + 1) % every == 0 && p.episode + 1 == t.episodes_done {
            let path = out.join(format!("checkpoint-{}.bin", p.episode + 1));
            t.checkpoint().save(&path)?;
        }
        Ok(())
    })?;
    previous.extend(curve.iter().cloned());
    write_csv(&curve_path, &previous)?;
    earlier.extend(trainer.episodes.iter().cloned());
    write_csv(&episodes_path, &earlier)?;
    let checkpoint = out.join("checkpoint.bin");
    trainer
        .checkpoint()
        .save(&checkpoint)
        .with_context(|| format!("cannot write {}", checkpoint.display()))?;
    Ok(TrainOutcome {
        checkpoint,
        curve,
        trainer,
    })
}

/// Both agents of the safety ablation, evaluated on the same seeds.
pub struct AblationOutcome {
    pub with_safety: ReportRow,
    pub without_safety: ReportRow,
}

/// Trains two GRL agents that differ only in the safety weight (the
/// configured one and zero) and evaluates both.
pub fn ablate_safety(cfg: &ExperimentConfig, out: &Path) -> Result<AblationOutcome> {
    let mut zero = cfg.clone();
    zero.reward.safety = 0.0;
    let with = train(cfg, Architecture::Grl, &out.join("safety_on"), None)?;
    let without = train(&zero, Architecture::Grl, &out.join("safety_off"), None)?;
    let with_safety = evaluate_to_dir(Evaluated::Learned(&with.trainer.net), cfg, out, "safety_on")?;
    let without_safety = evaluate_to_dir(Evaluated::Learned(&without.trainer.net), cfg, out, "safety_off")?;
    write_json(
        &out.join("ablation_report.json"),
        &ComparisonReport {
            rows: vec![with_safety.clone(), without_safety.clone()],
        },
    )?;
    Ok(AblationOutcome {
        with_safety,
        without_safety,
    })
}
