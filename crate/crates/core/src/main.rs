use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use vertiport::config::ExperimentConfig;
use vertiport::conflict::{min_separation, ConflictQuery};
use vertiport::domain::Vec2;
use vertiport::harness::{self, Evaluated, PolicyKind};
use vertiport::learn::{ActorCritic, Architecture};

#[derive(Parser)]
#[command(name = "vertiport", version, about = "Vertiport takeoff and landing scheduling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training seed (replaces the configured list).
    #[arg(long)]
    seed: Option<u64>,
    /// Training episodes per agent.
    #[arg(long)]
    episodes: Option<u64>,
    #[arg(long)]
    eval_episodes: Option<u32>,
    /// Run episodes on one thread.
    #[arg(long)]
    sequential: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.experiment.seeds = vec![s];
        }
        if let Some(e) = self.episodes {
            cfg.experiment.episodes = e;
        }
        if let Some(e) = self.eval_episodes {
            cfg.experiment.eval_episodes = e;
        }
        if self.sequential {
            cfg.experiment.parallel = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a learned agent.
    Train {
        #[arg(long, default_value = "grl")]
        policy: PolicyKind,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate one policy over the evaluation seeds.
    Evaluate {
        #[arg(long)]
        policy: PolicyKind,
        /// Trained agent, required for grl and mlp-rl.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate random, FCFS, GRL and MLP-RL side by side. Agents without a
    /// checkpoint are trained first.
    Compare {
        #[arg(long)]
        grl: Option<PathBuf>,
        #[arg(long)]
        mlp_rl: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train GRL agents with and without the safety term and compare them.
    AblateSafety {
        #[command(flatten)]
        common: Common,
    },
    /// Closest point of approach of two constant-velocity vehicles.
    ConflictCheck {
        /// JSON file holding {"p1":{"x":..,"y":..},"v1":..,"p2":..,"v2":..}.
        #[arg(long, conflicts_with_all = ["p1", "v1", "p2", "v2"])]
        file: Option<PathBuf>,
        /// Position of the first vehicle as x,y (m).
        #[arg(long, allow_hyphen_values = true)]
        p1: Option<String>,
        /// Velocity of the first vehicle as x,y (m/min).
        #[arg(long, allow_hyphen_values = true)]
        v1: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        p2: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        v2: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run one logged episode.
    Simulate {
        #[arg(long, default_value = "fcfs")]
        policy: PolicyKind,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Episode seed.
        #[arg(long, default_value_t = 0)]
        episode_seed: u64,
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { policy, resume, common } => {
            let cfg = common.load()?;
            let arch = learned(policy)?;
            let outcome = harness::train(&cfg, arch, &common.out, resume.as_deref())?;
            if let Some(last) = outcome.curve.last() {
                println!(
                    "trained {} to episode {}: last reward {:.1}, policy loss {:.5}, entropy {:.3}",
                    arch.name(),
                    outcome.trainer.episodes_done,
                    last.reward,
                    last.policy_loss,
                    last.entropy
                );
            }
            println!("checkpoint: {}", outcome.checkpoint.display());
        }
        Command::Evaluate { policy, checkpoint, common } => {
            let cfg = common.load()?;
            let net = network_for(policy, checkpoint.as_deref())?;
            let row = harness::evaluate_to_dir(evaluated(policy, net.as_ref()), &cfg, &common.out, policy.name())?;
            print!("{}", harness::ComparisonReport { rows: vec![row] }.table());
        }
        Command::Compare { grl, mlp_rl, common } => {
            let cfg = common.load()?;
            let grl = obtain(&cfg, Architecture::Grl, grl.as_deref(), &common.out)?;
            let mlp = obtain(&cfg, Architecture::MlpRl, mlp_rl.as_deref(), &common.out)?;
            let report = harness::compare(&cfg, &[&grl, &mlp], &common.out)?;
            print!("{}", report.table());
        }
        Command::AblateSafety { common } => {
            let cfg = common.load()?;
            let outcome = harness::ablate_safety(&cfg, &common.out)?;
            let report = harness::ComparisonReport {
                rows: vec![outcome.with_safety, outcome.without_safety],
            };
            print!("{}", report.table());
        }
        Command::ConflictCheck {
            file,
            p1,
            v1,
            p2,
            v2,
            config,
        } => {
            let cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::default(),
            };
            let query = match file {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
                    serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))?
                }
                None => ConflictQuery {
                    p1: vector("p1", p1)?,
                    v1: vector("v1", v1)?,
                    p2: vector("p2", p2)?,
                    v2: vector("v2", v2)?,
                },
            };
            if !query.is_finite() {
                bail!("query contains non-finite values");
            }
            let r = min_separation(&query, cfg.sim.conflict_horizon, cfg.sim.separation_threshold);
            println!("t_min={} d_min={} conflict={}", r.t_min, r.d_min, r.conflict);
        }
        Command::Simulate {
            policy,
            checkpoint,
            episode_seed,
            common,
        } => {
            let cfg = common.load()?;
            let net = network_for(policy, checkpoint.as_deref())?;
            let s = harness::simulate(evaluated(policy, net.as_ref()), &cfg, episode_seed, &common.out)?;
            println!(
                "{} seed {}: reward {:.1}, collisions {}, good takeoffs {}, good landings {}, delay {:.2} h",
                s.policy, s.seed, s.cumulative_reward, s.collisions, s.good_takeoffs, s.good_landings, s.delay_hours
            );
            println!("event log: {}", common.out.join("events.log").display());
        }
    }
    Ok(())
}

fn learned(policy: PolicyKind) -> Result<Architecture> {
    policy
        .architecture()
        .with_context(|| format!("{policy} is not a trainable policy (use grl or mlp-rl)"))
}

fn network_for(policy: PolicyKind, checkpoint: Option<&Path>) -> Result<Option<ActorCritic>> {
    match (policy.architecture(), checkpoint) {
        (None, _) => Ok(None),
        (Some(arch), Some(path)) => harness::load_network(path, Some(arch)).map(Some),
        (Some(_), None) => bail!("--checkpoint is required for {policy}"),
    }
}

fn evaluated(policy: PolicyKind, net: Option<&ActorCritic>) -> Evaluated<'_> {
    match (policy, net) {
        (PolicyKind::Random, _) => Evaluated::Random,
        (PolicyKind::Fcfs, _) => Evaluated::Fcfs,
        (_, Some(net)) => Evaluated::Learned(net),
        (_, None) => unreachable!("learned policies are loaded before evaluation"),
    }
}

fn obtain(cfg: &ExperimentConfig, arch: Architecture, checkpoint: Option<&Path>, out: &Path) -> Result<ActorCritic> {
    match checkpoint {
        Some(path) => harness::load_network(path, Some(arch)),
        None => {
            eprintln!("training {} for {} episodes", arch.name(), cfg.experiment.episodes);
            Ok(harness::train(cfg, arch, &out.join(arch.name()), None)?.trainer.net)
        }
    }
}

fn vector(name: &str, value: Option<String>) -> Result<Vec2> {
    let text = value.with_context(|| format!("--{name} is required (or pass --file)"))?;
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let [x, y] = parts[..] else {
        bail!("--{name} expects x,y, got {text:?}");
    };
    let parse = |s: &str| s.parse::<f64>().with_context(|| format!("--{name}: {s:?} is not a number"));
    Ok(Vec2::new(parse(x)?, parse(y)?))
}
