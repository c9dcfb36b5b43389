use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::agent::collect_episode;
use super::checkpoint::{Checkpoint, CheckpointMeta};
use super::network::{ActorCritic, Architecture};
use super::ppo::{ppo_update, PpoConfig, UpdateStats};
use super::LearnError;
use crate::exec::Execution;
use crate::reward::RewardWeights;
use crate::sim::{EpisodeSummary, SimConfig, SimState};

/// Derives an independent seed from a base seed and two counters.
pub fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub architecture: Architecture,
    pub sim: SimConfig,
    pub weights: RewardWeights,
    pub ppo: PpoConfig,
    pub seed: u64,
    pub execution: Execution,
}

/// One row of the learning curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: u64,
    pub reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

pub struct Trainer {
    pub config: TrainConfig,
    pub net: ActorCritic,
    pub adam: Adam,
    pub episodes_done: u64,
    /// Statistics of every update run by this trainer.
    pub updates: Vec<UpdateStats>,
    /// Summaries of every training episode run by this trainer.
    pub episodes: Vec<EpisodeSummary>,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self, LearnError> {
        config.ppo.validate()?;
        let probe = SimState::reset(&config.sim, config.seed)?;
        let net = ActorCritic::for_state(config.architecture, &probe, config.seed);
        let adam = Adam::new(&net.store, config.ppo.learning_rate);
        Ok(Trainer {
            config,
            net,
            adam,
            episodes_done: 0,
            updates: Vec::new(),
            episodes: Vec::new(),
        })
    }

    /// Continues from a checkpoint; its architecture and seed take precedence.
    pub fn resume(mut config: TrainConfig, checkpoint: Checkpoint) -> Result<Self, LearnError> {
        config.ppo.validate()?;
        config.architecture = checkpoint.meta.architecture;
        config.seed = checkpoint.meta.seed;
        let mut adam = checkpoint.adam;
        adam.learning_rate = config.ppo.learning_rate;
        Ok(Trainer {
            config,
            net: checkpoint.net,
            adam,
            episodes_done: checkpoint.meta.episodes_done,
            updates: Vec::new(),
            episodes: Vec::new(),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            meta: CheckpointMeta {
                architecture: self.config.architecture,
                episodes_done: self.episodes_done,
                seed: self.config.seed,
                ppo: self.config.ppo.clone(),
                weights: self.config.weights,
            },
            net: self.net.clone(),
            adam: self.adam.clone(),
        }
    }

    /// Seeds of training episode `episode`: (simulator, action sampling).
    pub fn episode_seeds(&self, episode: u64) -> (u64, u64) {
        (mix_seed(self.config.seed, episode, 0), mix_seed(self.config.seed, episode, 1))
    }

    /// Collects up to `workers` episodes (never past `limit`) and runs one update.
    fn iterate(&mut self, limit: u64) -> Result<Vec<CurvePoint>, LearnError> {
        let count = (self.config.ppo.workers as u64).min(limit - self.episodes_done);
        let jobs: Vec<u64> = (self.episodes_done..self.episodes_done + count).collect();
        let seeds: Vec<(u64, u64)> = jobs.iter().map(|&e| self.episode_seeds(e)).collect();
        let net = &self.net;
        let cfg = &self.config;
        let results = cfg.execution.map(seeds, |(sim_seed, sample_seed)| {
            collect_episode(net, &cfg.sim, &cfg.weights, cfg.ppo.reward_scale, sim_seed, sample_seed)
        });
        let mut buffer = Vec::new();
        let mut summaries = Vec::new();
        for r in results {
            let (transitions, summary) = r?;
            buffer.extend(transitions);
            summaries.push(summary);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.config.seed, self.episodes_done, 2));
        let stats = ppo_update(&mut self.net, &mut self.adam, &buffer, &self.config.ppo, &mut rng)?;
        self.updates.push(stats);
        let points = jobs
            .iter()
            .zip(&summaries)
            .map(|(&e, s)| CurvePoint {
                episode: e,
                reward: s.cumulative_reward,
                policy_loss: stats.policy_loss,
                value_loss: stats.value_loss,
                entropy: stats.entropy,
            })
            .collect();
        self.episodes.extend(summaries);
        self.episodes_done += count;
        Ok(points)
    }

    /// Trains until `total` episodes have been run in all, reporting every
    /// finished episode to `on_point`.
    pub fn train_until(
        &mut self,
        total: u64,
        mut on_point: impl FnMut(&Trainer, &CurvePoint) -> Result<(), LearnError>,
    ) -> Result<Vec<CurvePoint>, LearnError> {
        let mut curve = Vec::new();
        while self.episodes_done < total {
            let points = self.iterate(total)?;
            for p in &points {
                on_point(self, p)?;
            }
            curve.extend(points);
        }
        Ok(curve)
    }
}
