mod common;

use proptest::prelude::*;
use rand::Rng;

use vertiport::baselines::{random_policy, FcfsPolicy};
use vertiport::conflict::{min_separation, pairwise_conflicts, ConflictQuery};
use vertiport::domain::{
    ScheduleStatus, Vec2, VehicleGraph, VehicleNode, VehicleStatus, NUM_ACTIONS, NUM_VEHICLES,
};
use vertiport::reward::{
    battery_coeff, delay_coeff, total_reward, DecisionFacts, EventKind, EventTiming, RewardWeights,
};
use vertiport::sim::{render_event_log, run_episode, EventPayload};
use vertiport::{Action, SimConfig, SimState};

use common::*;

/// Plays a random-policy episode, checking `each` after every step.
fn random_episode(seed: u64, action_seed: u64, mut each: impl FnMut(&SimState)) -> SimState {
    let mut state = SimState::reset(&SimConfig::default(), seed).unwrap();
    let mut r = rng(action_seed);
    while !state.is_done() {
        let d = state.select_vehicle().map(|v| (v, random_policy(&state.mask_for(v), &mut r)));
        state.step(d).unwrap();
        each(&state);
    }
    state
}

#[test]
fn masks_and_features_over_ten_thousand_steps() {
    let mut steps = 0;
    let mut seed = 0;
    while steps < 10_000 {
        random_episode(seed, seed + 1, |s| {
            steps += 1;
            for v in 0..NUM_VEHICLES {
                assert!(s.mask_for(v).count() >= 1, "vehicle {v} has no feasible action");
            }
            let (vp, ev) = s.observe();
            for x in vp.data.iter().chain(&ev.data) {
                assert!(x.is_finite() && (0.0..=1.0).contains(x), "feature {x}");
            }
        });
        seed += 1;
    }
}

#[test]
fn action_encoding_round_trips() {
    for i in 0..NUM_ACTIONS {
        assert_eq!(Action::from_index(i).unwrap().index(), i);
    }
    assert!(Action::from_index(NUM_ACTIONS).is_err());
}

#[test]
fn fcfs_is_feasible_deterministic_and_first_come_first_served() {
    let cfg = SimConfig::default();
    let w = RewardWeights::default();
    for seed in 0..20 {
        // run_episode fails on any masked action, so success means none were taken
        let a = run_episode(&mut FcfsPolicy::new(), "fcfs", &cfg, &w, seed).unwrap();
        let b = run_episode(&mut FcfsPolicy::new(), "fcfs", &cfg, &w, seed).unwrap();
        assert_eq!(a.summary, b.summary);

        // vehicles start charging in the order they landed
        let mut last_landing = [None::<u32>; NUM_VEHICLES];
        let mut previous = None;
        for e in &a.events {
            match e.payload {
                EventPayload::Landed { .. } => last_landing[e.vehicle] = Some(e.time),
                EventPayload::StartedCharge { .. } => {
                    let landed = last_landing[e.vehicle];
                    assert!(previous <= landed, "seed {seed}: charge at {} out of landing order", e.time);
                    previous = landed;
                }
                _ => {}
            }
        }
    }
}

fn cruiser(id: usize, p: Vec2, v: Vec2) -> VehicleNode {
    VehicleNode {
        id,
        status: VehicleStatus::Cruising { origin: 0, target: 7 },
        battery: 80.0,
        schedule_status: ScheduleStatus::default(),
        location: p,
        velocity: v,
    }
}

fn vec2(r: f64) -> impl Strategy<Value = Vec2> {
    (-r..r, -r..r).prop_map(|(x, y)| Vec2::new(x, y))
}

fn query() -> impl Strategy<Value = ConflictQuery> {
    (vec2(200.0), vec2(60.0), vec2(200.0), vec2(60.0)).prop_map(|(p1, v1, p2, v2)| ConflictQuery { p1, v1, p2, v2 })
}

fn rigid(p: Vec2, angle: f64, shift: Vec2) -> Vec2 {
    let (s, c) = angle.sin_cos();
    Vec2::new(c * p.x - s * p.y + shift.x, s * p.x + c * p.y + shift.y)
}

fn timing(kind: EventKind, late: i64, battery: f64) -> EventTiming {
    EventTiming {
        kind,
        due_time: 100,
        actual_time: (100 + late) as u32,
        battery,
    }
}

fn facts() -> impl Strategy<Value = DecisionFacts> {
    (
        0..NUM_ACTIONS,
        prop::option::of((-5i64..20, 0.0..100.0f64)),
        prop::option::of((-5i64..20, 0.0..100.0f64)),
        0.0..100.0f64,
        0u32..200,
        any::<bool>(),
        prop::option::of(0.0..10.0f64),
    )
        .prop_map(|(a, to, ld, battery, delay, grounded, d_min)| DecisionFacts {
            vehicle: 0,
            action: Action::from_index(a).unwrap(),
            takeoff: to.map(|(l, b)| timing(EventKind::Takeoff, l, b)),
            landing: ld.map(|(l, b)| timing(EventKind::Landing, l, b)),
            battery,
            delay,
            grounded,
            d_min,
            collided: false,
        })
}

fn weights() -> impl Strategy<Value = RewardWeights> {
    (0.0..3.0f64, 0.0..3.0f64, 0.0..3.0f64, 0.0..3.0f64, 0.0..3.0f64).prop_map(|(a, b, c, d, e)| RewardWeights {
        takeoff: a,
        landing: b,
        battery: c,
        delay: d,
        safety: e,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn battery_stays_in_bounds_and_logs_are_reproducible(seed in 0u64..1_000_000, actions in 0u64..1_000_000) {
        let mut ok = true;
        let a = random_episode(seed, actions, |s| {
            ok &= s.vehicles.nodes.iter().all(|v| (0.0..=100.0).contains(&v.battery));
        });
        prop_assert!(ok);
        prop_assert_eq!(a.clock, 1440);
        let b = random_episode(seed, actions, |_| {});
        prop_assert_eq!(render_event_log(&a.event_log), render_event_log(&b.event_log));
    }

    #[test]
    fn cpa_is_symmetric(q in query()) {
        let a = min_separation(&q, 10.0, 3.0);
        let b = min_separation(&q.swapped(), 10.0, 3.0);
        prop_assert!((a.t_min - b.t_min).abs() <= 1e-12 * (1.0 + a.t_min));
        prop_assert!((a.d_min - b.d_min).abs() <= 1e-12 * (1.0 + a.d_min));
    }

    #[test]
    fn cpa_is_invariant_under_rigid_motion(q in query(), angle in -3.2..3.2f64, shift in vec2(500.0)) {
        let dv = q.v1 - q.v2;
        prop_assume!(dv.norm() > 1e-2);
        let moved = ConflictQuery {
            p1: rigid(q.p1, angle, shift),
            v1: rigid(q.v1, angle, Vec2::ZERO),
            p2: rigid(q.p2, angle, shift),
            v2: rigid(q.v2, angle, Vec2::ZERO),
        };
        let a = min_separation(&q, 10.0, 3.0);
        let b = min_separation(&moved, 10.0, 3.0);
        prop_assert!((a.t_min - b.t_min).abs() <= 1e-9 * (1.0 + a.t_min), "{} vs {}", a.t_min, b.t_min);
        prop_assert!((a.d_min - b.d_min).abs() <= 1e-9 * (1.0 + a.d_min), "{} vs {}", a.d_min, b.d_min);
    }

    #[test]
    fn cpa_matches_sampling(q in query()) {
        let got = min_separation(&q, 10.0, 3.0);
        let (_, sampled) = sampled_min(&q, 10.0, 1e-3);
        prop_assert!((got.d_min - sampled).abs() <= 1e-6 * (1.0 + got.d_min));
    }

    #[test]
    fn raising_the_threshold_keeps_every_conflict(
        ps in prop::collection::vec((vec2(150.0), vec2(60.0)), 4),
        lo in 0.0..50.0f64,
        extra in 0.0..50.0f64,
    ) {
        let g = VehicleGraph::new(ps.iter().enumerate().map(|(i, &(p, v))| cruiser(i, p, v)).collect());
        let small: Vec<_> = pairwise_conflicts(&g, lo, 10.0).into_iter().map(|c| c.pair).collect();
        let large: Vec<_> = pairwise_conflicts(&g, lo + extra, 10.0).into_iter().map(|c| c.pair).collect();
        for pair in small {
            prop_assert!(large.contains(&pair));
        }
    }

    #[test]
    fn reward_is_linear_in_the_weights(f in facts(), w1 in weights(), w2 in weights()) {
        let sum = total_reward(&f, &w1.plus(&w2)).total;
        let parts = total_reward(&f, &w1).total + total_reward(&f, &w2).total;
        prop_assert!((sum - parts).abs() <= 1e-9 * (1.0 + sum.abs()));
    }

    #[test]
    fn positive_scaling_preserves_preferences(f in facts(), g in facts(), w in weights(), k in 0.01..100.0f64) {
        let (a, b) = (total_reward(&f, &w).total, total_reward(&g, &w).total);
        let (ka, kb) = (total_reward(&f, &w.scaled(k)).total, total_reward(&g, &w.scaled(k)).total);
        prop_assert!((ka - k * a).abs() <= 1e-9 * (1.0 + ka.abs()));
        if (a - b).abs() > 1e-9 * (1.0 + a.abs() + b.abs()) {
            prop_assert_eq!(a > b, ka > kb);
        }
    }

    /// Strict below ~36 minutes; past that `10·e^-d` drops under half an ulp
    /// of 5 and the value rounds to exactly -5 in f64.
    #[test]
    fn delay_coefficient_decreases_within_bounds(d in 0.0..700.0f64, step in 1e-3..50.0f64) {
        let (a, b) = (delay_coeff(d), delay_coeff(d + step));
        prop_assert!((-5.0..=5.0).contains(&a));
        prop_assert!(b <= a);
        if d + step < 36.0 {
            prop_assert!(b < a && b > -5.0);
        }
    }

    #[test]
    fn battery_coefficient_is_monotone_above_the_cutoff(b in 30.0..100.0f64, step in 0.0..70.0f64) {
        let c = (b + step).min(100.0);
        prop_assert!(battery_coeff(c) >= battery_coeff(b));
        prop_assert!(battery_coeff(b) >= 1.5);
    }
}

#[test]
fn battery_coefficient_jumps_only_at_the_cutoff() {
    let below = battery_coeff(30.0 - 1e-9);
    let at = battery_coeff(30.0);
    assert_eq!(below, -5.0);
    assert_eq!(at, 1.5);
    let mut r = rng(9);
    for _ in 0..1000 {
        let b = r.random_range(0.0..100.0);
        let e = 1e-7;
        if (b - 30.0f64).abs() > 2.0 * e {
            assert!((battery_coeff(b + e) - battery_coeff(b)).abs() < 1e-6, "jump near {b}");
        }
    }
}
