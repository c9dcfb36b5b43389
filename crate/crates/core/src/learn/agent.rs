use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::{ActorCritic, Observation};
use super::ppo::Transition;
use super::LearnError;
use crate::domain::{Action, ActionMask, VehicleId};
use crate::reward::RewardWeights;
use crate::sim::{run_episode_with, EpisodeSummary, Policy, PolicyError, SimConfig, SimState};

/// Most probable feasible action; the lowest index wins ties.
pub fn greedy_action(log_probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &lp) in log_probs.iter().enumerate() {
        if lp > log_probs[best] {
            best = i;
        }
    }
    best
}

/// Draws an action from the distribution given by `log_probs`.
pub fn sample_action<R: Rng + ?Sized>(log_probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &lp) in log_probs.iter().enumerate() {
        if lp == f64::NEG_INFINITY {
            continue;
        }
        acc += lp.exp();
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionSelection {
    Greedy,
    Sample,
}

/// A network acting as a [`Policy`]. With recording on, every decision is
/// kept as a [`Transition`] whose reward is filled in by the caller.
pub struct AgentPolicy<'a> {
    net: &'a ActorCritic,
    selection: ActionSelection,
    rng: ChaCha8Rng,
    pub record: Option<Vec<Transition>>,
}

impl<'a> AgentPolicy<'a> {
    pub fn new(net: &'a ActorCritic, selection: ActionSelection, seed: u64) -> Self {
        AgentPolicy {
            net,
            selection,
            rng: ChaCha8Rng::seed_from_u64(seed),
            record: None,
        }
    }

    pub fn recording(mut self) -> Self {
        self.record = Some(Vec::new());
        self
    }
}

impl Policy for AgentPolicy<'_> {
    fn decide(&mut self, state: &SimState, vehicle: VehicleId, mask: &ActionMask) -> Result<Action, PolicyError> {
        let (vertiport, vehicles) = state.observe();
        let obs = Observation {
            vertiport,
            vehicles,
            selected: vehicle,
            mask: *mask,
        };
        let (log_probs, value) = self.net.evaluate(&obs)?;
        let index = match self.selection {
            ActionSelection::Greedy => greedy_action(&log_probs),
            ActionSelection::Sample => sample_action(&log_probs, &mut self.rng),
        };
        if let Some(rec) = &mut self.record {
            rec.push(Transition {
                obs,
                action: index,
                log_prob: log_probs[index],
                value,
                reward: 0.0,
                done: false,
            });
        }
        Ok(Action::from_index(index)?)
    }
}

/// Plays one training episode with sampled actions and returns its
/// transitions (rewards scaled by `reward_scale`) and summary.
pub fn collect_episode(
    net: &ActorCritic,
    sim: &SimConfig,
    weights: &RewardWeights,
    reward_scale: f64,
    sim_seed: u64,
    sample_seed: u64,
) -> Result<(Vec<Transition>, EpisodeSummary), LearnError> {
    let mut agent = AgentPolicy::new(net, ActionSelection::Sample, sample_seed).recording();
    let mut rewards = Vec::new();
    let run = run_episode_with(&mut agent, net.architecture.name(), sim, weights, sim_seed, |_, _, r| {
        rewards.push(r.total * reward_scale)
    })
    .map_err(LearnError::Episode)?;
    let mut transitions = agent.record.take().unwrap_or_default();
    debug_assert_eq!(transitions.len(), rewards.len());
    for (t, r) in transitions.iter_mut().zip(rewards) {
        t.reward = r;
    }
    if let Some(last) = transitions.last_mut() {
        last.done = true;
    }
    Ok((transitions, run.summary))
}
