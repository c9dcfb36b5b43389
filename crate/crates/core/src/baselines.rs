//! Non-learned decision rules: uniform random over feasible actions, and a
//! first-come-first-served queue scheduler.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{
    Action, ActionMask, VehicleId, VehicleStatus, BATTERY_PORT, HOVER_SPOTS, NUM_VEHICLES,
};
use crate::sim::{EventPayload, Policy, PolicyError, SimState};

/// Longest stint on the battery port, minutes.
pub const MAX_CHARGE_STEPS: u32 = 6;
/// A queued takeoff goes once the clock is within this many minutes of its due time.
pub const TAKEOFF_LEAD: u32 = 5;

/// Uniform choice among the feasible actions.
pub fn random_policy<R: Rng + ?Sized>(mask: &ActionMask, rng: &mut R) -> Action {
    let allowed: Vec<Action> = mask.allowed().collect();
    assert!(!allowed.is_empty(), "mask has no feasible action");
    allowed[rng.random_range(0..allowed.len())]
}

#[derive(Clone, Debug)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn decide(&mut self, _state: &SimState, _vehicle: VehicleId, mask: &ActionMask) -> Result<Action, PolicyError> {
        Ok(random_policy(mask, &mut self.rng))
    }
}

/// Queues of the FCFS scheduler. A vehicle is in at most one queue.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FcfsState {
    /// Landed vehicles waiting for (or holding) the battery port, in landing order.
    pub recharge_queue: VecDeque<VehicleId>,
    /// Charged vehicles waiting to take off, in charge-completion order.
    pub takeoff_queue: VecDeque<VehicleId>,
    /// Order in which vehicles were first enqueued for recharge.
    pub service_log: Vec<VehicleId>,
    charge_started: [Option<u32>; NUM_VEHICLES],
    log_cursor: usize,
    primed: bool,
}

impl FcfsState {
    pub fn new() -> Self {
        FcfsState::default()
    }

    fn contains(&self, v: VehicleId) -> bool {
        self.recharge_queue.contains(&v) || self.takeoff_queue.contains(&v)
    }

    fn enqueue(&mut self, state: &SimState, v: VehicleId) {
        if self.contains(v) {
            return;
        }
        self.service_log.push(v);
        if state.vehicle(v).battery >= 100.0 {
            self.takeoff_queue.push_back(v);
        } else {
            self.recharge_queue.push_back(v);
        }
    }

    /// Brings the queues up to date with the simulator.
    pub fn sync(&mut self, state: &SimState) {
        if !self.primed {
            self.primed = true;
            for v in 0..NUM_VEHICLES {
                if state.vehicle(v).status.is_grounded() {
                    self.enqueue(state, v);
                }
            }
        }
        let log = &state.event_log;
        while self.log_cursor < log.len() {
            let e = &log[self.log_cursor];
            self.log_cursor += 1;
            if let EventPayload::Landed { due, forced, .. } = e.payload {
                if due.is_some() || forced {
                    self.enqueue(state, e.vehicle);
                }
            }
        }
        // drop vehicles that have left the ground
        let grounded = |v: &VehicleId| state.vehicle(*v).status.is_grounded();
        self.recharge_queue.retain(grounded);
        self.takeoff_queue.retain(grounded);
        for v in 0..NUM_VEHICLES {
            if !self.contains(v) {
                self.charge_started[v] = None;
            }
        }

        if let Some(&head) = self.recharge_queue.front() {
            let node = state.vehicle(head);
            if node.status == VehicleStatus::GroundedAtPort(BATTERY_PORT) {
                let started = *self.charge_started[head].get_or_insert(state.clock);
                if node.battery >= 100.0 || state.clock - started >= MAX_CHARGE_STEPS {
                    self.recharge_queue.pop_front();
                    self.charge_started[head] = None;
                    self.takeoff_queue.push_back(head);
                }
            } else if node.battery >= 100.0 {
                self.recharge_queue.pop_front();
                self.takeoff_queue.push_back(head);
            }
        }
    }
}

/// FCFS decision for `vehicle`. Never emits `AvoidCollision`.
pub fn fcfs_policy(state: &SimState, vehicle: VehicleId, mask: &ActionMask, fcfs: &mut FcfsState) -> Action {
    fcfs.sync(state);
    let node = state.vehicle(vehicle);
    let wanted = match node.status {
        VehicleStatus::GroundedAtPort(port) => {
            if fcfs.takeoff_queue.front() == Some(&vehicle) {
                let due = state.schedules[vehicle].next().map(|e| e.due_time);
                match due {
                    Some(d) if state.clock + TAKEOFF_LEAD >= d => Action::Takeoff,
                    _ => Action::StayStill,
                }
            } else if fcfs.recharge_queue.front() == Some(&vehicle) && port != BATTERY_PORT {
                Action::MoveOrLandBatteryPort1
            } else {
                Action::StayStill
            }
        }
        VehicleStatus::Hovering(spot) => {
            if mask.allows(Action::MoveOrLandNormalPort1) {
                Action::MoveOrLandNormalPort1
            } else if mask.allows(Action::MoveOrLandNormalPort2) {
                Action::MoveOrLandNormalPort2
            } else {
                // hold at the lowest-index free spot
                let lower = [
                    Action::MoveToHoverSpot1,
                    Action::MoveToHoverSpot2,
                    Action::MoveToHoverSpot3,
                    Action::MoveToHoverSpot4,
                ]
                .into_iter()
                .zip(HOVER_SPOTS)
                .take_while(|&(_, s)| s < spot)
                .find(|&(a, _)| mask.allows(a));
                lower.map_or(Action::StayStill, |(a, _)| a)
            }
        }
        VehicleStatus::Cruising { .. } | VehicleStatus::AtDestination(_) => Action::ContinuePrevious,
    };
    if mask.allows(wanted) {
        wanted
    } else if mask.allows(Action::StayStill) {
        Action::StayStill
    } else {
        Action::ContinuePrevious
    }
}

#[derive(Clone, Debug, Default)]
pub struct FcfsPolicy {
    pub state: FcfsState,
}

impl FcfsPolicy {
    pub fn new() -> Self {
        FcfsPolicy::default()
    }
}

impl Policy for FcfsPolicy {
    fn decide(&mut self, state: &SimState, vehicle: VehicleId, mask: &ActionMask) -> Result<Action, PolicyError> {
        Ok(fcfs_policy(state, vehicle, mask, &mut self.state))
    }
}
