use std::collections::VecDeque;

use super::*;
use crate::baselines::{FcfsPolicy, RandomPolicy};
use crate::domain::{BATTERY_PORT, NORMAL_PORT_1, NORMAL_PORT_2};
use crate::reward::{takeoff_landing_coeff, RewardWeights};

fn cfg() -> SimConfig {
    SimConfig::default()
}

fn node(id: VehicleId, status: VehicleStatus, battery: f64, at: Vec2) -> VehicleNode {
    VehicleNode {
        id,
        status,
        battery,
        schedule_status: ScheduleStatus::default(),
        location: at,
        velocity: Vec2::ZERO,
    }
}

fn parked(state: &VertiportGraph, id: VehicleId, dest_index: usize) -> VehicleNode {
    let d = DESTINATIONS[dest_index];
    node(id, VehicleStatus::AtDestination(d), 100.0, state.location(d))
}

fn layout() -> VertiportGraph {
    build_canonical_layout(&LayoutConfig::default()).unwrap()
}

fn takeoff_schedule(due: u32) -> Schedule {
    Schedule {
        events: VecDeque::from([ScheduledEvent {
            kind: ScheduleKind::Takeoff,
            due_time: due,
            destination: DESTINATIONS[0],
            reference_time: 0,
        }]),
    }
}

#[test]
fn reset_is_deterministic() {
    let a = SimState::reset(&cfg(), 42).unwrap();
    let b = SimState::reset(&cfg(), 42).unwrap();
    assert_eq!(a, b);
    let c = SimState::reset(&cfg(), 43).unwrap();
    assert_ne!(a.vehicles, c.vehicles);
}

#[test]
fn reset_states_are_consistent() {
    for seed in 0..1000 {
        let s = SimState::reset(&cfg(), seed).unwrap();
        let mut seen = std::collections::HashSet::new();
        let mut grounded = 0;
        for v in &s.vehicles.nodes {
            assert_eq!(v.battery, 100.0);
            if v.status.is_grounded() {
                grounded += 1;
            }
            if !matches!(v.status, VehicleStatus::AtDestination(_)) {
                assert!(seen.insert(v.status.reserved_node()), "seed {seed}: node shared");
            }
        }
        assert!(grounded <= 3);
        for n in &s.vertiport.nodes {
            let taken = s.vehicles.nodes.iter().any(|v| v.status.reserved_node() == n.id);
            assert_eq!(n.available, !taken);
        }
    }
}

#[test]
fn selection_examples() {
    let g = layout();
    let c = cfg();
    let schedules = vec![Schedule::default(); NUM_VEHICLES];

    let all_away: Vec<_> = (0..4).map(|i| parked(&g, i, i)).collect();
    let s = SimState::from_parts(&c, 0, all_away, schedules.clone(), 0).unwrap();
    assert_eq!(s.select_vehicle(), None);

    let mut two_grounded: Vec<_> = (0..4).map(|i| parked(&g, i, i)).collect();
    two_grounded[2] = node(2, VehicleStatus::GroundedAtPort(NORMAL_PORT_1), 90.0, g.location(NORMAL_PORT_1));
    two_grounded[3] = node(3, VehicleStatus::GroundedAtPort(NORMAL_PORT_2), 90.0, g.location(NORMAL_PORT_2));
    let s = SimState::from_parts(&c, 0, two_grounded, schedules.clone(), 0).unwrap();
    assert_eq!(s.select_vehicle(), Some(2));

    let mut one_hovering: Vec<_> = (0..4).map(|i| parked(&g, i, i)).collect();
    one_hovering[1] = node(1, VehicleStatus::Hovering(HOVER_SPOTS[2]), 90.0, g.location(HOVER_SPOTS[2]));
    let s = SimState::from_parts(&c, 0, one_hovering, schedules, 0).unwrap();
    assert_eq!(s.select_vehicle(), Some(1));
}

/// Every assignment of the four status kinds: the selected vehicle is the
/// lowest-id one that is on the ground or holding at a hover spot (cruisers
/// here diverge and are never in conflict).
#[test]
fn selection_matches_rule_over_all_status_combinations() {
    let g = layout();
    let c = cfg();
    for code in 0..256u32 {
        let kinds: Vec<u32> = (0..4).map(|i| (code >> (2 * i)) & 3).collect();
        if kinds.iter().filter(|&&k| k == 0).count() > 3 {
            continue;
        }
        let mut vehicles = Vec::new();
        let mut ports = PORTS.iter();
        for (id, &k) in kinds.iter().enumerate() {
            let spot = HOVER_SPOTS[id];
            let v = match k {
                0 => {
                    let p = *ports.next().unwrap();
                    node(id, VehicleStatus::GroundedAtPort(p), 80.0, g.location(p))
                }
                1 => node(id, VehicleStatus::Hovering(spot), 80.0, g.location(spot)),
                2 => {
                    // outbound along its own radial, so no two ever converge
                    let at = g.location(spot) * 3.0;
                    let mut n = node(
                        id,
                        VehicleStatus::Cruising {
                            origin: spot,
                            target: DESTINATIONS[id],
                        },
                        80.0,
                        at,
                    );
                    n.velocity = at * (50.0 / at.norm());
                    n
                }
                _ => parked(&g, id, id),
            };
            vehicles.push(v);
        }
        let s = SimState::from_parts(&c, 0, vehicles, vec![Schedule::default(); NUM_VEHICLES], 0).unwrap();
        let expected = (0..4).find(|&i| kinds[i] == 0 || kinds[i] == 1);
        assert_eq!(s.select_vehicle(), expected, "kinds {kinds:?}");
    }
}

#[test]
fn selection_rotates_through_waiting_vehicles() {
    let g = layout();
    let mut vehicles: Vec<_> = (0..4).map(|i| parked(&g, i, i)).collect();
    vehicles[0] = node(0, VehicleStatus::GroundedAtPort(NORMAL_PORT_1), 90.0, g.location(NORMAL_PORT_1));
    vehicles[1] = node(1, VehicleStatus::GroundedAtPort(NORMAL_PORT_2), 90.0, g.location(NORMAL_PORT_2));
    let mut s = SimState::from_parts(&cfg(), 0, vehicles, vec![Schedule::default(); NUM_VEHICLES], 0).unwrap();
    let mut order = Vec::new();
    for _ in 0..4 {
        let v = s.select_vehicle().unwrap();
        order.push(v);
        s.step(Some((v, Action::StayStill))).unwrap();
    }
    assert_eq!(order, vec![0, 1, 0, 1]);
}

#[test]
fn hovering_idle_and_charging_battery_rates() {
    let g = layout();
    let mut vehicles: Vec<_> = (0..4).map(|i| parked(&g, i, i)).collect();
    vehicles[0] = node(0, VehicleStatus::Hovering(HOVER_SPOTS[0]), 60.0, g.location(HOVER_SPOTS[0]));
    vehicles[1] = node(1, VehicleStatus::GroundedAtPort(NORMAL_PORT_1), 60.0, g.location(NORMAL_PORT_1));
    vehicles[2] = node(2, VehicleStatus::GroundedAtPort(BATTERY_PORT), 95.0, g.location(BATTERY_PORT));
    let mut s = SimState::from_parts(&cfg(), 0, vehicles, vec![Schedule::default(); NUM_VEHICLES], 0).unwrap();
    s.step(Some((0, Action::StayStill))).unwrap();
    assert_eq!(s.vehicle(0).battery, 59.5);
    assert_eq!(s.vehicle(1).battery, 59.75);
    assert_eq!(s.vehicle(2).battery, 100.0);
    assert_eq!(s.vehicle(3).battery, 100.0);
}

#[test]
fn punctual_takeoff_with_charge_is_good() {
    let g = layout();
    let mut vehicles: Vec<_> = (0..4).map(|i| parked(&g, i, i)).collect();
    vehicles[0] = node(0, VehicleStatus::GroundedAtPort(NORMAL_PORT_1), 80.0, g.location(NORMAL_PORT_1));
    let mut schedules = vec![Schedule::default(); NUM_VEHICLES];
    schedules[0] = takeoff_schedule(30);
    let mut s = SimState::from_parts(&cfg(), 30, vehicles, schedules, 0).unwrap();
    let out = s.step(Some((0, Action::Takeoff))).unwrap();
    let facts = out.decision.unwrap();
    let timing = facts.takeoff.unwrap();
    assert_eq!((timing.due_time, timing.actual_time, timing.battery), (30, 30, 80.0));
    assert_eq!(takeoff_landing_coeff(Some(&timing)), 5.0);
    assert_eq!(s.tally.good_takeoffs, 1);
    assert!(s.vehicle(0).status.is_cruising());
    assert!(matches!(
        s.event_log.last().unwrap().payload,
        EventPayload::TookOff { port: NORMAL_PORT_1, due: 30, .. }
    ));
}

#[test]
fn late_takeoff_is_bad() {
    let g = layout();
    let mut vehicles: Vec<_> = (0..4).map(|i| parked(&g, i, i)).collect();
    vehicles[0] = node(0, VehicleStatus::GroundedAtPort(NORMAL_PORT_1), 80.0, g.location(NORMAL_PORT_1));
    let mut schedules = vec![Schedule::default(); NUM_VEHICLES];
    schedules[0] = takeoff_schedule(20);
    let mut s = SimState::from_parts(&cfg(), 30, vehicles, schedules, 0).unwrap();
    let facts = s.step(Some((0, Action::Takeoff))).unwrap().decision.unwrap();
    assert_eq!(takeoff_landing_coeff(facts.takeoff.as_ref()), -5.0);
    assert_eq!(s.tally.bad_takeoffs, 1);
}

#[test]
fn infeasible_and_out_of_range_decisions_are_rejected() {
    let g = layout();
    let mut vehicles: Vec<_> = (0..4).map(|i| parked(&g, i, i)).collect();
    vehicles[0] = node(0, VehicleStatus::GroundedAtPort(NORMAL_PORT_1), 80.0, g.location(NORMAL_PORT_1));
    let mut s = SimState::from_parts(&cfg(), 0, vehicles, vec![Schedule::default(); NUM_VEHICLES], 0).unwrap();
    assert!(matches!(
        s.step(Some((0, Action::Takeoff))),
        Err(SimError::InfeasibleAction { vehicle: 0, .. })
    ));
    assert!(matches!(
        s.step(Some((0, Action::AvoidCollision))),
        Err(SimError::InfeasibleAction { .. })
    ));
    assert!(matches!(s.step(Some((9, Action::StayStill))), Err(SimError::UnknownVehicle(9))));
}

#[test]
fn episode_ends_after_1440_minutes() {
    let mut s = SimState::reset(&cfg(), 5).unwrap();
    let mut steps = 0;
    while !s.is_done() {
        s.step(None).unwrap();
        steps += 1;
    }
    assert_eq!(steps, 1440);
    assert!(matches!(s.step(None), Err(SimError::EpisodeOver(1440))));
}

#[test]
fn stay_still_forever_never_takes_off_or_collides() {
    let mut idle = |_: &SimState, _: VehicleId, m: &ActionMask| -> Result<Action, PolicyError> {
        Ok(if m.allows(Action::StayStill) {
            Action::StayStill
        } else {
            Action::ContinuePrevious
        })
    };
    for seed in 0..10 {
        let run = run_episode(&mut idle, "idle", &cfg(), &RewardWeights::default(), seed).unwrap();
        assert_eq!(run.summary.good_takeoffs + run.summary.bad_takeoffs, 0);
    }
}

/// Delay booked by the simulator equals, per issued schedule, the minutes
/// between its due time and its completion (or the end of the day).
#[test]
fn delay_tally_matches_event_log() {
    for seed in 0..20 {
        let runs = [
            run_episode(&mut FcfsPolicy::new(), "fcfs", &cfg(), &RewardWeights::default(), seed).unwrap(),
            run_episode(&mut RandomPolicy::new(seed), "random", &cfg(), &RewardWeights::default(), seed).unwrap(),
        ];
        for run in runs {
            let mut expected = 0u64;
            for v in 0..NUM_VEHICLES {
                let mut pending: Option<u32> = None;
                for e in run.events.iter().filter(|e| e.vehicle == v) {
                    match e.payload {
                        EventPayload::ScheduleIssued { due, .. } => {
                            assert!(pending.is_none());
                            pending = Some(due);
                        }
                        EventPayload::TookOff { due, .. } | EventPayload::Landed { due: Some(due), .. } => {
                            assert_eq!(pending.take(), Some(due));
                            expected += e.time.saturating_sub(due) as u64;
                        }
                        _ => {}
                    }
                }
                if let Some(due) = pending {
                    expected += 1440u32.saturating_sub(due) as u64;
                }
            }
            assert_eq!((run.summary.delay_hours * 60.0).round(), expected as f64, "seed {seed}");
        }
    }
}

#[test]
fn collisions_are_logged_once_per_contact() {
    for seed in 0..20 {
        let run = run_episode(&mut RandomPolicy::new(seed), "random", &cfg(), &RewardWeights::default(), seed).unwrap();
        let logged = run
            .events
            .iter()
            .filter(|e| matches!(e.payload, EventPayload::CollisionOccurred { .. }))
            .count();
        assert_eq!(logged as u32, run.summary.collisions);
        let mut last = 0;
        for e in &run.events {
            assert!(e.time >= last);
            last = e.time;
        }
    }
}
