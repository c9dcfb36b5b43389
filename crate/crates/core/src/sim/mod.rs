//! Minute-by-minute vertiport simulator.
//!
//! Every step applies at most one decision to one vehicle, then advances all
//! four vehicles one minute with constant-velocity kinematics, updates
//! batteries, issues schedules on arrivals and departures, accrues delay and
//! records collisions. An episode is a full day of 1440 steps.

mod episode;
mod events;

pub use episode::{run_episode, run_episode_with, EpisodeRun, EpisodeSummary, Policy, PolicyError};
pub use events::{render_event_log, write_event_log, EventPayload, SimEvent};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict::{self, ConflictQuery};
use crate::domain::{
    build_canonical_layout, feasible_mask, Action, ActionMask, LayoutConfig, LayoutError, NextEvent, NodeId, PortType,
    Schedule, ScheduleKind, ScheduleStatus, ScheduledEvent, Vec2, VehicleGraph, VehicleId, VehicleNode, VehicleStatus,
    VertiportGraph, DESTINATIONS, HOVER_SPOTS, NUM_VEHICLES, PORTS,
};
use crate::reward::{DecisionFacts, EventKind, EventTiming};

/// Takeoff due time, minutes after the vehicle returns to the vertiport.
pub const TAKEOFF_WINDOW: (u32, u32) = (10, 20);
/// Landing due time, minutes after the vehicle starts back from its destination.
pub const LANDING_WINDOW: (u32, u32) = (5, 15);
pub const EPISODE_MINUTES: u32 = 1440;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("action {action} is not feasible for vehicle {vehicle}")]
    InfeasibleAction { vehicle: VehicleId, action: Action },
    #[error("vehicle {0} does not exist")]
    UnknownVehicle(VehicleId),
    #[error("episode is over at minute {0}")]
    EpisodeOver(u32),
    #[error("invalid simulator configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

/// Battery drain and charge rates, percent per minute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryModel {
    /// Cruise drain per meter flown; 0.02 makes a 500 m round trip cost 10%.
    pub cruise_drain_per_meter: f64,
    pub hover_drain: f64,
    pub idle_drain: f64,
    pub charge_rate: f64,
}

impl Default for BatteryModel {
    fn default() -> Self {
        BatteryModel {
            cruise_drain_per_meter: 0.02,
            hover_drain: 0.5,
            idle_drain: 0.25,
            charge_rate: 10.0,
        }
    }
}

impl BatteryModel {
    /// Battery change over one minute for a vehicle that flew `distance`
    /// meters and spent the minute in `status`.
    pub fn delta(&self, status: VehicleStatus, distance: f64, charging: bool) -> f64 {
        if distance > 0.0 {
            -distance * self.cruise_drain_per_meter
        } else if charging {
            self.charge_rate
        } else {
            match status {
                VehicleStatus::Hovering(_) | VehicleStatus::Cruising { .. } => -self.hover_drain,
                VehicleStatus::GroundedAtPort(_) => -self.idle_drain,
                VehicleStatus::AtDestination(_) => 0.0,
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub layout: LayoutConfig,
    pub battery: BatteryModel,
    /// Meters per minute.
    pub cruise_speed: f64,
    /// Lookahead for conflict prediction, minutes.
    pub conflict_horizon: f64,
    pub separation_threshold: f64,
    /// Minutes a vehicle stays at a destination before heading back.
    pub dwell_min: u32,
    pub dwell_max: u32,
    pub episode_length: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            layout: LayoutConfig::default(),
            battery: BatteryModel::default(),
            cruise_speed: 50.0,
            conflict_horizon: conflict::DEFAULT_HORIZON,
            separation_threshold: conflict::DEFAULT_SEPARATION_THRESHOLD,
            dwell_min: 10,
            dwell_max: 30,
            episode_length: EPISODE_MINUTES,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.layout.validate()?;
        let positive = [
            ("cruise_speed", self.cruise_speed),
            ("conflict_horizon", self.conflict_horizon),
            ("separation_threshold", self.separation_threshold),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let b = &self.battery;
        if [b.cruise_drain_per_meter, b.hover_drain, b.idle_drain, b.charge_rate]
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(SimError::Config("battery rates must be non-negative".into()));
        }
        if self.dwell_min > self.dwell_max {
            return Err(SimError::Config(format!(
                "dwell_min {} exceeds dwell_max {}",
                self.dwell_min, self.dwell_max
            )));
        }
        if self.episode_length == 0 {
            return Err(SimError::Config("episode_length must be positive".into()));
        }
        Ok(())
    }
}

/// Per-episode counters behind the summary metrics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTally {
    pub good_takeoffs: u32,
    pub bad_takeoffs: u32,
    pub good_landings: u32,
    pub bad_landings: u32,
    pub collisions: u32,
    pub delay_minutes: u64,
    pub battery_sum: f64,
    pub battery_samples: u64,
}

impl EpisodeTally {
    fn record(&mut self, timing: &EventTiming) {
        let good = timing.is_good();
        match (timing.kind, good) {
            (EventKind::Takeoff, true) => self.good_takeoffs += 1,
            (EventKind::Takeoff, false) => self.bad_takeoffs += 1,
            (EventKind::Landing, true) => self.good_landings += 1,
            (EventKind::Landing, false) => self.bad_landings += 1,
        }
    }

    pub fn mean_battery(&self) -> f64 {
        if self.battery_samples == 0 {
            0.0
        } else {
            self.battery_sum / self.battery_samples as f64
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
struct VehicleBook {
    last_decision: Option<u32>,
    /// Minute an `AtDestination` vehicle starts back.
    depart_at: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    /// Minute that was simulated.
    pub minute: u32,
    pub decision: Option<DecisionFacts>,
    /// Pairs that came within the separation threshold this minute.
    pub collisions: Vec<(VehicleId, VehicleId)>,
}

/// Straight-line motion over one minute: moving for `travel` minutes, then still.
#[derive(Clone, Copy, Debug)]
struct Motion {
    start: Vec2,
    velocity: Vec2,
    travel: f64,
    airborne_moving: bool,
    airborne_after: bool,
    arrives: bool,
}

impl Motion {
    fn still(at: Vec2, airborne: bool) -> Self {
        Motion {
            start: at,
            velocity: Vec2::ZERO,
            travel: 0.0,
            airborne_moving: airborne,
            airborne_after: airborne,
            arrives: false,
        }
    }

    fn position(&self, s: f64) -> Vec2 {
        self.start + self.velocity * s.min(self.travel)
    }

    fn airborne_on(&self, s0: f64, s1: f64) -> bool {
        if s1 <= self.travel {
            self.airborne_moving
        } else if s0 >= self.travel {
            self.airborne_after
        } else {
            self.airborne_moving && self.airborne_after
        }
    }

    fn velocity_on(&self, s0: f64) -> Vec2 {
        if s0 < self.travel {
            self.velocity
        } else {
            Vec2::ZERO
        }
    }
}

/// Closest approach of two motions over the minute, counting only intervals
/// where both are airborne. Returns the distance and the midpoint of the pair
/// at that instant.
fn closest_airborne_approach(a: &Motion, b: &Motion) -> Option<(f64, Vec2)> {
    let mut cuts = [0.0, a.travel.clamp(0.0, 1.0), b.travel.clamp(0.0, 1.0), 1.0];
    cuts.sort_by(f64::total_cmp);
    let mut best: Option<(f64, Vec2)> = None;
    for w in cuts.windows(2) {
        let (s0, s1) = (w[0], w[1]);
        let span = s1 - s0;
        if span <= 0.0 {
            continue;
        }
        if !(a.airborne_on(s0, s1) && b.airborne_on(s0, s1)) {
            continue;
        }
        let q = ConflictQuery {
            p1: a.position(s0),
            v1: a.velocity_on(s0),
            p2: b.position(s0),
            v2: b.velocity_on(s0),
        };
        let r = conflict::min_separation(&q, span, f64::INFINITY);
        if best.is_none_or(|(d, _)| r.d_min < d) {
            let s = s0 + r.t_min;
            best = Some((r.d_min, (a.position(s) + b.position(s)) * 0.5));
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub clock: u32,
    pub vertiport: VertiportGraph,
    pub vehicles: VehicleGraph,
    pub schedules: Vec<Schedule>,
    pub event_log: Vec<SimEvent>,
    pub tally: EpisodeTally,
    config: SimConfig,
    rng: ChaCha8Rng,
    books: [VehicleBook; NUM_VEHICLES],
    contacts: [[bool; NUM_VEHICLES]; NUM_VEHICLES],
}

impl SimState {
    /// Four vehicles in random non-conflicting statuses, full batteries and
    /// fresh schedules. The same seed always gives the same state.
    pub fn reset(config: &SimConfig, seed: u64) -> Result<SimState, SimError> {
        config.validate()?;
        let vertiport = build_canonical_layout(&config.layout)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        // status kinds: 0 grounded, 1 hovering, 2 inbound, 3 at destination
        let kinds: [u8; NUM_VEHICLES] = loop {
            let k: [u8; NUM_VEHICLES] = std::array::from_fn(|_| rng.random_range(0..4u8));
            if k.iter().filter(|&&x| x == 0).count() <= PORTS.len() {
                break k;
            }
        };
        let mut ports = PORTS.to_vec();
        ports.shuffle(&mut rng);
        let mut spots = HOVER_SPOTS.to_vec();
        spots.shuffle(&mut rng);

        let mut nodes = Vec::with_capacity(NUM_VEHICLES);
        let mut schedules = vec![Schedule::default(); NUM_VEHICLES];
        let mut books = [VehicleBook::default(); NUM_VEHICLES];
        for (id, &kind) in kinds.iter().enumerate() {
            let (status, location, velocity) = match kind {
                0 => {
                    let p = ports.pop().expect("at most three grounded vehicles");
                    let dest = DESTINATIONS[rng.random_range(0..DESTINATIONS.len())];
                    schedules[id].events.push_back(ScheduledEvent {
                        kind: ScheduleKind::Takeoff,
                        due_time: rng.random_range(TAKEOFF_WINDOW.0..=TAKEOFF_WINDOW.1),
                        destination: dest,
                        reference_time: 0,
                    });
                    (VehicleStatus::GroundedAtPort(p), vertiport.location(p), Vec2::ZERO)
                }
                1 => {
                    let s = spots.pop().expect("at most four airborne vehicles");
                    let dest = DESTINATIONS[rng.random_range(0..DESTINATIONS.len())];
                    schedules[id].events.push_back(landing_event(&mut rng, 0, dest));
                    (VehicleStatus::Hovering(s), vertiport.location(s), Vec2::ZERO)
                }
                2 => {
                    let s = spots.pop().expect("at most four airborne vehicles");
                    let dest = DESTINATIONS[rng.random_range(0..DESTINATIONS.len())];
                    schedules[id].events.push_back(landing_event(&mut rng, 0, dest));
                    let from = vertiport.location(dest);
                    let to = vertiport.location(s);
                    let frac: f64 = rng.random_range(0.0..0.9);
                    let at = from + (to - from) * frac;
                    let dir = (to - at) * (1.0 / (to - at).norm());
                    (
                        VehicleStatus::Cruising { origin: dest, target: s },
                        at,
                        dir * config.cruise_speed,
                    )
                }
                _ => {
                    let dest = DESTINATIONS[rng.random_range(0..DESTINATIONS.len())];
                    books[id].depart_at = rng.random_range(1..=config.dwell_max.max(1));
                    (VehicleStatus::AtDestination(dest), vertiport.location(dest), Vec2::ZERO)
                }
            };
            let schedule_status = schedules[id].next().map_or(ScheduleStatus::default(), |e| ScheduleStatus {
                next_event: next_event_of(e.kind),
                event_time: e.due_time,
                accumulated_delay: 0,
            });
            nodes.push(VehicleNode {
                id,
                status,
                battery: 100.0,
                schedule_status,
                location,
                velocity,
            });
        }

        let mut event_log = Vec::new();
        for (id, s) in schedules.iter().enumerate() {
            if let Some(e) = s.next() {
                event_log.push(SimEvent {
                    time: 0,
                    vehicle: id,
                    payload: EventPayload::ScheduleIssued {
                        kind: e.kind,
                        due: e.due_time,
                        reference: e.reference_time,
                        destination: e.destination,
                    },
                });
            }
        }

        let mut state = SimState {
            clock: 0,
            vertiport,
            vehicles: VehicleGraph::new(nodes),
            schedules,
            event_log,
            tally: EpisodeTally::default(),
            config: config.clone(),
            rng,
            books,
            contacts: [[false; NUM_VEHICLES]; NUM_VEHICLES],
        };
        state.refresh_availability();
        Ok(state)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn is_done(&self) -> bool {
        self.clock >= self.config.episode_length
    }

    pub fn vehicle(&self, id: VehicleId) -> &VehicleNode {
        &self.vehicles.nodes[id]
    }

    pub fn last_decision(&self, id: VehicleId) -> Option<u32> {
        self.books[id].last_decision
    }

    pub fn mask_for(&self, id: VehicleId) -> ActionMask {
        feasible_mask(&self.vehicles.nodes[id], &self.vertiport, &self.schedules[id])
    }

    pub fn in_airspace(&self, id: VehicleId) -> bool {
        self.vehicles.nodes[id].location.norm() <= self.config.layout.airspace_radius
    }

    /// Whether `id` is en route with a predicted loss of separation.
    pub fn in_conflict(&self, id: VehicleId) -> bool {
        conflict::nearest_approach(&self.vehicles, id, self.config.conflict_horizon)
            .is_some_and(|r| r.d_min < self.config.separation_threshold)
    }

    /// Vehicles inside the airspace that need a decision this minute: those
    /// on the ground, those holding at a hover spot, and en-route vehicles
    /// with a predicted conflict.
    pub fn awaiting_decision(&self, id: VehicleId) -> bool {
        if !self.in_airspace(id) {
            return false;
        }
        match self.vehicles.nodes[id].status {
            VehicleStatus::GroundedAtPort(_) | VehicleStatus::Hovering(_) => true,
            VehicleStatus::Cruising { .. } => self.in_conflict(id),
            VehicleStatus::AtDestination(_) => false,
        }
    }

    /// The awaiting vehicle to decide for this minute: en-route vehicles with
    /// a predicted conflict come first, then whoever has gone longest without
    /// a decision, lowest id first among equals.
    pub fn select_vehicle(&self) -> Option<VehicleId> {
        (0..NUM_VEHICLES)
            .filter(|&v| self.awaiting_decision(v))
            .min_by_key(|&v| {
                let conflicted = self.vehicles.nodes[v].status.is_cruising();
                (!conflicted, self.books[v].last_decision.map_or(-1, i64::from), v)
            })
    }

    /// Feature matrices of both graphs at the current minute.
    pub fn observe(&self) -> (crate::domain::FeatureMatrix, crate::domain::FeatureMatrix) {
        (
            self.vertiport.feature_matrix(),
            self.vehicles.feature_matrix(self.clock, &self.vertiport.bounds),
        )
    }

    /// Advances one minute, applying `decision` (if any) first.
    pub fn step(&mut self, decision: Option<(VehicleId, Action)>) -> Result<StepOutcome, SimError> {
        if self.is_done() {
            return Err(SimError::EpisodeOver(self.clock));
        }
        let t = self.clock;
        let mut facts = None;
        let mut halted = [false; NUM_VEHICLES];
        let mut timings: [Option<EventTiming>; 2] = [None, None];

        if let Some((vid, action)) = decision {
            if vid >= NUM_VEHICLES {
                return Err(SimError::UnknownVehicle(vid));
            }
            if !self.mask_for(vid).allows(action) {
                return Err(SimError::InfeasibleAction { vehicle: vid, action });
            }
            let grounded = self.vehicles.nodes[vid].status.is_grounded();
            let d_min = conflict::nearest_approach(&self.vehicles, vid, self.config.conflict_horizon).map(|r| r.d_min);
            self.apply_action(vid, action, d_min, &mut halted, &mut timings);
            self.books[vid].last_decision = Some(t);
            facts = Some(DecisionFacts {
                vehicle: vid,
                action,
                takeoff: None,
                landing: None,
                battery: 0.0,
                delay: 0,
                grounded,
                d_min,
                collided: false,
            });
        }

        for v in 0..NUM_VEHICLES {
            if let VehicleStatus::AtDestination(d) = self.vehicles.nodes[v].status {
                if self.books[v].depart_at <= t {
                    self.begin_inbound(v, d, t);
                }
            }
        }

        // kinematics
        let starts: Vec<VehicleStatus> = self.vehicles.nodes.iter().map(|n| n.status).collect();
        let mut motions = Vec::with_capacity(NUM_VEHICLES);
        let mut distances = [0.0; NUM_VEHICLES];
        let mut battery_at_start = [0.0; NUM_VEHICLES];
        for v in 0..NUM_VEHICLES {
            let node = &self.vehicles.nodes[v];
            battery_at_start[v] = node.battery;
            let motion = match node.status {
                VehicleStatus::Cruising { target, .. } if !halted[v] => {
                    let goal = self.vertiport.location(target);
                    let offset = goal - node.location;
                    let dist = offset.norm();
                    let reach = self.config.cruise_speed;
                    let lands = self.vertiport.node(target).port_type != PortType::HoverSpot;
                    if dist <= reach {
                        let velocity = if dist > 0.0 {
                            offset * (self.config.cruise_speed / dist)
                        } else {
                            Vec2::ZERO
                        };
                        Motion {
                            start: node.location,
                            velocity,
                            travel: dist / self.config.cruise_speed,
                            airborne_moving: true,
                            airborne_after: !lands,
                            arrives: true,
                        }
                    } else {
                        Motion {
                            start: node.location,
                            velocity: offset * (self.config.cruise_speed / dist),
                            travel: 1.0,
                            airborne_moving: true,
                            airborne_after: true,
                            arrives: false,
                        }
                    }
                }
                status => Motion::still(node.location, status.is_airborne()),
            };
            motions.push(motion);
        }
        for (v, motion) in motions.iter().enumerate() {
            let end = motion.position(1.0);
            distances[v] = end.distance(motion.start);
            self.vehicles.nodes[v].location = end;
            if let VehicleStatus::Cruising { target, .. } = self.vehicles.nodes[v].status {
                if motion.arrives {
                    // snap exactly onto the node
                    self.vehicles.nodes[v].location = self.vertiport.location(target);
                    let timing = self.arrive(v, target, t, battery_at_start[v], false);
                    if facts.as_ref().is_some_and(|f| f.vehicle == v) {
                        if let Some(tm) = timing {
                            timings[tm_slot(tm.kind)] = Some(tm);
                        }
                    }
                }
            }
        }

        // batteries
        for v in 0..NUM_VEHICLES {
            let status = if distances[v] > 0.0 { starts[v] } else { self.vehicles.nodes[v].status };
            let charging = distances[v] == 0.0
                && matches!(starts[v], VehicleStatus::GroundedAtPort(p) if self.vertiport.node(p).port_type == PortType::BatteryPort);
            let delta = self.config.battery.delta(status, distances[v], charging);
            let node = &mut self.vehicles.nodes[v];
            node.battery = (node.battery + delta).clamp(0.0, 100.0);
        }

        // an empty airborne vehicle is put down at the nearest free port
        for v in 0..NUM_VEHICLES {
            let node = &self.vehicles.nodes[v];
            if node.battery <= 0.0 && node.status.is_airborne() {
                if let Some(p) = self.nearest_free_port(v) {
                    self.vehicles.nodes[v].location = self.vertiport.location(p);
                    motions[v].airborne_after = false;
                    let timing = self.arrive(v, p, t, 0.0, true);
                    if facts.as_ref().is_some_and(|f| f.vehicle == v) {
                        if let Some(tm) = timing {
                            timings[tm_slot(tm.kind)] = Some(tm);
                        }
                    }
                }
            }
        }

        // separation, tracked inside the managed airspace
        let mut collisions = Vec::new();
        let mut contacts = [[false; NUM_VEHICLES]; NUM_VEHICLES];
        for a in 0..NUM_VEHICLES {
            for b in (a + 1)..NUM_VEHICLES {
                let Some((d, at)) = closest_airborne_approach(&motions[a], &motions[b]) else {
                    continue;
                };
                if d < self.config.separation_threshold && at.norm() <= self.config.layout.airspace_radius {
                    contacts[a][b] = true;
                    if !self.contacts[a][b] {
                        collisions.push((a, b));
                        self.tally.collisions += 1;
                        self.event_log.push(SimEvent {
                            time: t,
                            vehicle: a,
                            payload: EventPayload::CollisionOccurred { other: b, distance: d },
                        });
                    }
                }
            }
        }
        self.contacts = contacts;

        // velocities reflect the motion just flown
        for v in 0..NUM_VEHICLES {
            let node = &mut self.vehicles.nodes[v];
            node.velocity = if node.status.is_cruising() {
                motions[v].velocity_on(0.0)
            } else {
                Vec2::ZERO
            };
        }

        self.clock += 1;
        for v in 0..NUM_VEHICLES {
            let node = &mut self.vehicles.nodes[v];
            let s = &mut node.schedule_status;
            if s.next_event != NextEvent::None && self.clock > s.event_time {
                s.accumulated_delay += 1;
                self.tally.delay_minutes += 1;
            }
            self.tally.battery_sum += node.battery;
            self.tally.battery_samples += 1;
        }
        self.refresh_availability();

        let decision = facts.map(|mut f| {
            let node = &self.vehicles.nodes[f.vehicle];
            f.battery = node.battery;
            f.delay = node.schedule_status.accumulated_delay;
            f.takeoff = timings[0];
            f.landing = timings[1];
            f.collided = collisions.iter().any(|&(a, b)| a == f.vehicle || b == f.vehicle);
            f
        });
        Ok(StepOutcome {
            minute: t,
            decision,
            collisions,
        })
    }

    fn apply_action(
        &mut self,
        vid: VehicleId,
        action: Action,
        d_min: Option<f64>,
        halted: &mut [bool; NUM_VEHICLES],
        timings: &mut [Option<EventTiming>; 2],
    ) {
        let t = self.clock;
        let status = self.vehicles.nodes[vid].status;
        match action {
            Action::StayStill | Action::ContinuePrevious => {}
            Action::AvoidCollision => {
                halted[vid] = true;
                self.event_log.push(SimEvent {
                    time: t,
                    vehicle: vid,
                    payload: EventPayload::AvoidanceExecuted { d_min },
                });
            }
            Action::Takeoff => {
                let VehicleStatus::GroundedAtPort(port) = status else {
                    unreachable!("mask only allows takeoff from the ground")
                };
                let event = self.schedules[vid]
                    .events
                    .pop_front()
                    .expect("mask only allows takeoff with a pending takeoff");
                let battery = self.vehicles.nodes[vid].battery;
                let timing = EventTiming {
                    kind: EventKind::Takeoff,
                    due_time: event.due_time,
                    actual_time: t,
                    battery,
                };
                self.tally.record(&timing);
                timings[0] = Some(timing);
                self.event_log.push(SimEvent {
                    time: t,
                    vehicle: vid,
                    payload: EventPayload::TookOff {
                        port,
                        destination: event.destination,
                        due: event.due_time,
                        battery,
                    },
                });
                let node = &mut self.vehicles.nodes[vid];
                node.status = VehicleStatus::Cruising {
                    origin: port,
                    target: event.destination,
                };
                node.schedule_status.next_event = NextEvent::None;
            }
            a => {
                let target = a.target_node().expect("remaining actions target a node");
                let here = self.vehicles.nodes[vid].location;
                let origin = match status {
                    VehicleStatus::Cruising { origin, .. } => origin,
                    s => s.reserved_node(),
                };
                let capture = self.config.layout.landing_capture_radius;
                if a.targets_port() && status.is_airborne() && here.distance(self.vertiport.location(target)) <= capture {
                    let battery = self.vehicles.nodes[vid].battery;
                    self.vehicles.nodes[vid].location = self.vertiport.location(target);
                    if let Some(tm) = self.arrive(vid, target, t, battery, false) {
                        timings[tm_slot(tm.kind)] = Some(tm);
                    }
                } else {
                    self.vehicles.nodes[vid].status = VehicleStatus::Cruising { origin, target };
                }
            }
        }
        self.refresh_availability();
    }

    /// Handles reaching `node`; returns the completed landing, if any.
    fn arrive(&mut self, v: VehicleId, node: NodeId, t: u32, battery: f64, forced: bool) -> Option<EventTiming> {
        let port_type = self.vertiport.node(node).port_type;
        let mut completed = None;
        match port_type {
            PortType::NormalPort | PortType::BatteryPort => {
                self.vehicles.nodes[v].status = VehicleStatus::GroundedAtPort(node);
                let mut due = None;
                if self.schedules[v].has_pending(ScheduleKind::Landing) {
                    let event = self.schedules[v].events.pop_front().expect("pending landing");
                    let timing = EventTiming {
                        kind: EventKind::Landing,
                        due_time: event.due_time,
                        actual_time: t,
                        battery,
                    };
                    self.tally.record(&timing);
                    completed = Some(timing);
                    due = Some(event.due_time);
                }
                self.event_log.push(SimEvent {
                    time: t,
                    vehicle: v,
                    payload: EventPayload::Landed {
                        port: node,
                        due,
                        battery,
                        forced,
                    },
                });
                if port_type == PortType::BatteryPort {
                    self.event_log.push(SimEvent {
                        time: t,
                        vehicle: v,
                        payload: EventPayload::StartedCharge { port: node, battery },
                    });
                }
                if self.schedules[v].events.is_empty() {
                    let destination = DESTINATIONS[self.rng.random_range(0..DESTINATIONS.len())];
                    let due = t + self.rng.random_range(TAKEOFF_WINDOW.0..=TAKEOFF_WINDOW.1);
                    self.issue(
                        v,
                        ScheduledEvent {
                            kind: ScheduleKind::Takeoff,
                            due_time: due,
                            destination,
                            reference_time: t,
                        },
                    );
                }
            }
            PortType::HoverSpot => {
                self.vehicles.nodes[v].status = VehicleStatus::Hovering(node);
            }
            PortType::Destination => {
                self.vehicles.nodes[v].status = VehicleStatus::AtDestination(node);
                let dwell = self.rng.random_range(self.config.dwell_min..=self.config.dwell_max);
                self.books[v].depart_at = t + dwell;
            }
        }
        self.vehicles.nodes[v].velocity = Vec2::ZERO;
        self.refresh_availability();
        completed
    }

    fn begin_inbound(&mut self, v: VehicleId, dest: NodeId, t: u32) {
        self.refresh_availability();
        let from = self.vertiport.location(dest);
        let spot = HOVER_SPOTS
            .iter()
            .copied()
            .filter(|&s| self.vertiport.is_available(s))
            .min_by(|&a, &b| {
                let da = from.distance(self.vertiport.location(a));
                let db = from.distance(self.vertiport.location(b));
                da.total_cmp(&db)
            });
        let Some(spot) = spot else {
            // every holding spot is taken: wait another minute
            self.books[v].depart_at = t + 1;
            return;
        };
        self.vehicles.nodes[v].status = VehicleStatus::Cruising {
            origin: dest,
            target: spot,
        };
        let event = landing_event(&mut self.rng, t, dest);
        self.issue(v, event);
    }

    fn issue(&mut self, v: VehicleId, event: ScheduledEvent) {
        self.schedules[v].events.push_back(event);
        let next = *self.schedules[v].next().expect("just pushed");
        self.vehicles.nodes[v].schedule_status = ScheduleStatus {
            next_event: next_event_of(next.kind),
            event_time: next.due_time,
            accumulated_delay: 0,
        };
        self.event_log.push(SimEvent {
            time: event.reference_time,
            vehicle: v,
            payload: EventPayload::ScheduleIssued {
                kind: event.kind,
                due: event.due_time,
                reference: event.reference_time,
                destination: event.destination,
            },
        });
    }

    fn nearest_free_port(&self, v: VehicleId) -> Option<NodeId> {
        let here = self.vehicles.nodes[v].location;
        PORTS
            .iter()
            .copied()
            .filter(|&p| {
                self.vehicles
                    .nodes
                    .iter()
                    .all(|o| o.id == v || o.status.reserved_node() != p)
            })
            .min_by(|&a, &b| {
                let da = here.distance(self.vertiport.location(a));
                let db = here.distance(self.vertiport.location(b));
                da.total_cmp(&db)
            })
    }

    fn refresh_availability(&mut self) {
        for node in &mut self.vertiport.nodes {
            node.available = true;
        }
        for v in &self.vehicles.nodes {
            self.vertiport.nodes[v.status.reserved_node()].available = false;
        }
    }

    /// Builds a state from explicit vehicles, for tests and tooling. Schedules
    /// are taken as given; bookkeeping starts fresh.
    pub fn from_parts(
        config: &SimConfig,
        clock: u32,
        vehicles: Vec<VehicleNode>,
        schedules: Vec<Schedule>,
        seed: u64,
    ) -> Result<SimState, SimError> {
        config.validate()?;
        if vehicles.len() != NUM_VEHICLES || schedules.len() != NUM_VEHICLES {
            return Err(SimError::Config(format!("exactly {NUM_VEHICLES} vehicles are required")));
        }
        let mut state = SimState {
            clock,
            vertiport: build_canonical_layout(&config.layout)?,
            vehicles: VehicleGraph::new(vehicles),
            schedules,
            event_log: Vec::new(),
            tally: EpisodeTally::default(),
            config: config.clone(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            books: [VehicleBook {
                last_decision: None,
                depart_at: clock + config.dwell_min,
            }; NUM_VEHICLES],
            contacts: [[false; NUM_VEHICLES]; NUM_VEHICLES],
        };
        state.refresh_availability();
        Ok(state)
    }
}

fn tm_slot(kind: EventKind) -> usize {
    match kind {
        EventKind::Takeoff => 0,
        EventKind::Landing => 1,
    }
}

fn next_event_of(kind: ScheduleKind) -> NextEvent {
    match kind {
        ScheduleKind::Takeoff => NextEvent::Takeoff,
        ScheduleKind::Landing => NextEvent::Landing,
    }
}

fn landing_event(rng: &mut ChaCha8Rng, reference: u32, from: NodeId) -> ScheduledEvent {
    ScheduledEvent {
        kind: ScheduleKind::Landing,
        due_time: reference + rng.random_range(LANDING_WINDOW.0..=LANDING_WINDOW.1),
        destination: from,
        reference_time: reference,
    }
}

#[cfg(test)]
mod tests;
