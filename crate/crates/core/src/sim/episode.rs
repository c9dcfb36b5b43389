use serde::{Deserialize, Serialize};

use super::{SimConfig, SimEvent, SimState};
use crate::domain::{Action, ActionMask, VehicleId};
use crate::reward::{total_reward, DecisionFacts, RewardBreakdown, RewardWeights};

pub type PolicyError = Box<dyn std::error::Error + Send + Sync>;

/// A decision rule: picks a feasible action for the selected vehicle.
pub trait Policy {
    fn decide(&mut self, state: &SimState, vehicle: VehicleId, mask: &ActionMask) -> Result<Action, PolicyError>;
}

impl<F> Policy for F
where
    F: FnMut(&SimState, VehicleId, &ActionMask) -> Result<Action, PolicyError>,
{
    fn decide(&mut self, state: &SimState, vehicle: VehicleId, mask: &ActionMask) -> Result<Action, PolicyError> {
        self(state, vehicle, mask)
    }
}

/// One row of per-episode metrics. Field names are the CSV/JSON column names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub policy: String,
    pub seed: u64,
    pub steps: u32,
    pub decisions: u32,
    pub cumulative_reward: f64,
    pub good_takeoffs: u32,
    pub bad_takeoffs: u32,
    pub good_landings: u32,
    pub bad_landings: u32,
    pub collisions: u32,
    /// Delay summed over all four vehicles, hours.
    pub delay_hours: f64,
    pub mean_battery: f64,
}

#[derive(Clone, Debug)]
pub struct EpisodeRun {
    pub summary: EpisodeSummary,
    pub events: Vec<SimEvent>,
}

/// Plays one full episode with `policy` and tallies the metrics.
pub fn run_episode<P: Policy + ?Sized>(
    policy: &mut P,
    policy_name: &str,
    config: &SimConfig,
    weights: &RewardWeights,
    seed: u64,
) -> Result<EpisodeRun, PolicyError> {
    run_episode_with(policy, policy_name, config, weights, seed, |_, _, _| {})
}

/// As [`run_episode`], calling `on_decision` with the minute, facts and reward
/// breakdown of every decision right after it is simulated.
pub fn run_episode_with<P, F>(
    policy: &mut P,
    policy_name: &str,
    config: &SimConfig,
    weights: &RewardWeights,
    seed: u64,
    mut on_decision: F,
) -> Result<EpisodeRun, PolicyError>
where
    P: Policy + ?Sized,
    F: FnMut(u32, &DecisionFacts, &RewardBreakdown),
{
    let mut state = SimState::reset(config, seed)?;
    let mut reward = 0.0;
    let mut steps = 0;
    let mut decisions = 0;
    while !state.is_done() {
        let decision = match state.select_vehicle() {
            Some(v) => {
                let mask = state.mask_for(v);
                let action = policy.decide(&state, v, &mask)?;
                Some((v, action))
            }
            None => None,
        };
        let minute = state.clock;
        let outcome = state.step(decision)?;
        if let Some(facts) = outcome.decision {
            let r = total_reward(&facts, weights);
            on_decision(minute, &facts, &r);
            reward += r.total;
            decisions += 1;
        }
        steps += 1;
    }
    let tally = &state.tally;
    let summary = EpisodeSummary {
        policy: policy_name.to_string(),
        seed,
        steps,
        decisions,
        cumulative_reward: reward,
        good_takeoffs: tally.good_takeoffs,
        bad_takeoffs: tally.bad_takeoffs,
        good_landings: tally.good_landings,
        bad_landings: tally.bad_landings,
        collisions: tally.collisions,
        delay_hours: tally.delay_minutes as f64 / 60.0,
        mean_battery: tally.mean_battery(),
    };
    Ok(EpisodeRun {
        summary,
        events: state.event_log,
    })
}
