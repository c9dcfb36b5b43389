//! Weighted five-term step reward: takeoff, landing, battery, delay and safety.

use serde::{Deserialize, Serialize};

use crate::domain::{Action, VehicleId};

pub const GOOD_EVENT: f64 = 5.0;
pub const BAD_EVENT: f64 = -5.0;
/// Punctuality window for takeoffs and landings, minutes.
pub const PUNCTUALITY_WINDOW: i64 = 5;
/// Below this battery percentage an event is bad and the battery term is a flat penalty.
pub const CRITICAL_BATTERY: f64 = 30.0;
pub const SAFETY_DISTANCE: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    /// w1, takeoff term.
    pub takeoff: f64,
    /// w2, landing term.
    pub landing: f64,
    /// w3, battery term.
    pub battery: f64,
    /// w4, delay term.
    pub delay: f64,
    /// w5, safety term.
    pub safety: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            takeoff: 1.1,
            landing: 1.0,
            battery: 0.8,
            delay: 1.2,
            safety: 2.2,
        }
    }
}

impl RewardWeights {
    pub const ZERO: RewardWeights = RewardWeights {
        takeoff: 0.0,
        landing: 0.0,
        battery: 0.0,
        delay: 0.0,
        safety: 0.0,
    };

    pub fn is_valid(&self) -> bool {
        [self.takeoff, self.landing, self.battery, self.delay, self.safety]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0)
    }

    pub fn scaled(&self, k: f64) -> RewardWeights {
        RewardWeights {
            takeoff: self.takeoff * k,
            landing: self.landing * k,
            battery: self.battery * k,
            delay: self.delay * k,
            safety: self.safety * k,
        }
    }

    pub fn plus(&self, o: &RewardWeights) -> RewardWeights {
        RewardWeights {
            takeoff: self.takeoff + o.takeoff,
            landing: self.landing + o.landing,
            battery: self.battery + o.battery,
            delay: self.delay + o.delay,
            safety: self.safety + o.safety,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Takeoff,
    Landing,
}

/// A completed takeoff or landing, as seen by the reward engine.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventTiming {
    pub kind: EventKind,
    pub due_time: u32,
    pub actual_time: u32,
    pub battery: f64,
}

impl EventTiming {
    pub fn is_good(&self) -> bool {
        let early_by = self.due_time as i64 - self.actual_time as i64;
        let late_by = -early_by;
        let punctual = match self.kind {
            EventKind::Takeoff => late_by.abs() <= PUNCTUALITY_WINDOW,
            // landing early is always acceptable
            EventKind::Landing => late_by <= PUNCTUALITY_WINDOW,
        };
        punctual && self.battery > CRITICAL_BATTERY
    }
}

/// Facts about the vehicle acted upon in one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionFacts {
    pub vehicle: VehicleId,
    pub action: Action,
    pub takeoff: Option<EventTiming>,
    pub landing: Option<EventTiming>,
    /// Battery after the step.
    pub battery: f64,
    /// Accumulated delay after the step, minutes.
    pub delay: u32,
    /// Whether the vehicle was on the ground when the decision was taken.
    pub grounded: bool,
    /// Predicted minimum separation to the nearest en-route vehicle at decision time.
    pub d_min: Option<f64>,
    pub collided: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub tau: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub beta: f64,
    pub safety: f64,
    pub total: f64,
}

/// +5 for a good event, -5 for a bad one, 0 when nothing happened.
pub fn takeoff_landing_coeff(event: Option<&EventTiming>) -> f64 {
    match event {
        None => 0.0,
        Some(e) if e.is_good() => GOOD_EVENT,
        Some(_) => BAD_EVENT,
    }
}

pub fn battery_coeff(battery: f64) -> f64 {
    if battery >= CRITICAL_BATTERY {
        5.0 * battery / 100.0
    } else {
        -5.0
    }
}

pub fn delay_coeff(delay_minutes: f64) -> f64 {
    -5.0 + 10.0 * (-delay_minutes).exp()
}

pub fn safety_coeff(grounded: bool, d_min: f64, action: Action) -> f64 {
    if grounded {
        0.0
    } else if d_min <= SAFETY_DISTANCE {
        if action == Action::AvoidCollision {
            5.0
        } else {
            -5.0
        }
    } else {
        0.0
    }
}

pub fn total_reward(facts: &DecisionFacts, w: &RewardWeights) -> RewardBreakdown {
    let tau = takeoff_landing_coeff(facts.takeoff.as_ref());
    let gamma = takeoff_landing_coeff(facts.landing.as_ref());
    let lambda = battery_coeff(facts.battery);
    let beta = delay_coeff(facts.delay as f64);
    let safety = safety_coeff(facts.grounded, facts.d_min.unwrap_or(f64::INFINITY), facts.action);
    let total = w.takeoff * tau + w.landing * gamma + w.battery * lambda + w.delay * beta + w.safety * safety;
    RewardBreakdown {
        tau,
        gamma,
        lambda,
        beta,
        safety,
        total,
    }
}
