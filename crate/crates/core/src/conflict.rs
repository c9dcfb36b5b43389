//! Closest-point-of-approach geometry for pairs of constant-velocity vehicles.

use serde::{Deserialize, Serialize};

use crate::domain::{Vec2, VehicleGraph, VehicleId};

pub const DEFAULT_SEPARATION_THRESHOLD: f64 = 3.0;
pub const DEFAULT_HORIZON: f64 = 10.0;

/// Positions in meters, velocities in meters per minute.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConflictQuery {
    pub p1: Vec2,
    pub v1: Vec2,
    pub p2: Vec2,
    pub v2: Vec2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConflictResult {
    pub t_min: f64,
    pub d_min: f64,
    pub conflict: bool,
}

impl ConflictQuery {
    pub fn is_finite(&self) -> bool {
        self.p1.is_finite() && self.p2.is_finite() && self.v1.is_finite() && self.v2.is_finite()
    }

    pub fn swapped(&self) -> ConflictQuery {
        ConflictQuery {
            p1: self.p2,
            v1: self.v2,
            p2: self.p1,
            v2: self.v1,
        }
    }
}

/// Separation `D(t)` between the two vehicles `t` minutes from now.
pub fn separation_at(q: &ConflictQuery, t: f64) -> f64 {
    let dx = q.p1.x - q.p2.x + q.v1.x * t - q.v2.x * t;
    let dy = q.p1.y - q.p2.y + q.v1.y * t - q.v2.y * t;
    (dx * dx + dy * dy).sqrt()
}

/// Stationary point of `D(t)`, clamped to `[0, horizon]`. A zero relative
/// velocity has no unique minimum and yields `t_min = 0`.
pub fn min_separation(q: &ConflictQuery, horizon: f64, threshold: f64) -> ConflictResult {
    let dvx = q.v1.x - q.v2.x;
    let dvy = q.v1.y - q.v2.y;
    let dx = q.p1.x - q.p2.x;
    let dy = q.p1.y - q.p2.y;
    let denom = 2.0 * dvx * dvx + 2.0 * dvy * dvy;
    let t_min = if denom > 0.0 {
        let t = -(2.0 * dvx * dx + 2.0 * dvy * dy) / denom;
        t.clamp(0.0, horizon.max(0.0))
    } else {
        0.0
    };
    let d_min = separation_at(q, t_min);
    ConflictResult {
        t_min,
        d_min,
        conflict: d_min < threshold,
    }
}

/// Minimum separation with the default horizon and threshold.
pub fn min_separation_default(q: &ConflictQuery) -> ConflictResult {
    min_separation(q, DEFAULT_HORIZON, DEFAULT_SEPARATION_THRESHOLD)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairConflict {
    pub pair: (VehicleId, VehicleId),
    pub result: ConflictResult,
}

pub fn query_for(vehicles: &VehicleGraph, a: VehicleId, b: VehicleId) -> ConflictQuery {
    let (va, vb) = (&vehicles.nodes[a], &vehicles.nodes[b]);
    ConflictQuery {
        p1: va.location,
        v1: va.velocity,
        p2: vb.location,
        v2: vb.velocity,
    }
}

/// All en-route pairs whose predicted minimum separation falls below `threshold`.
pub fn pairwise_conflicts(vehicles: &VehicleGraph, threshold: f64, horizon: f64) -> Vec<PairConflict> {
    let n = vehicles.nodes.len();
    let mut out = Vec::new();
    for a in 0..n {
        if !vehicles.nodes[a].status.is_cruising() {
            continue;
        }
        for b in (a + 1)..n {
            if !vehicles.nodes[b].status.is_cruising() {
                continue;
            }
            let result = min_separation(&query_for(vehicles, a, b), horizon, threshold);
            if result.conflict {
                out.push(PairConflict { pair: (a, b), result });
            }
        }
    }
    out
}

/// Smallest predicted separation between `vehicle` and any other en-route
/// vehicle, or `None` when `vehicle` is not en route or has no en-route peer.
pub fn nearest_approach(vehicles: &VehicleGraph, vehicle: VehicleId, horizon: f64) -> Option<ConflictResult> {
    if !vehicles.nodes[vehicle].status.is_cruising() {
        return None;
    }
    (0..vehicles.nodes.len())
        .filter(|&o| o != vehicle && vehicles.nodes[o].status.is_cruising())
        .map(|o| min_separation(&query_for(vehicles, vehicle, o), horizon, DEFAULT_SEPARATION_THRESHOLD))
        .min_by(|a, b| a.d_min.total_cmp(&b.d_min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ScheduleStatus, VehicleNode, VehicleStatus};

    fn q(p1: (f64, f64), v1: (f64, f64), p2: (f64, f64), v2: (f64, f64)) -> ConflictQuery {
        ConflictQuery {
            p1: Vec2::new(p1.0, p1.1),
            v1: Vec2::new(v1.0, v1.1),
            p2: Vec2::new(p2.0, p2.1),
            v2: Vec2::new(v2.0, v2.1),
        }
    }

    #[test]
    fn static_points() {
        let query = q((0.0, 0.0), (0.0, 0.0), (10.0, 0.0), (0.0, 0.0));
        assert_eq!(separation_at(&query, 7.0), 10.0);
        let r = min_separation_default(&query);
        assert_eq!((r.t_min, r.d_min, r.conflict), (0.0, 10.0, false));
    }

    #[test]
    fn head_on() {
        let query = q((0.0, 0.0), (1.0, 0.0), (10.0, 0.0), (-1.0, 0.0));
        assert_eq!(separation_at(&query, 5.0), 0.0);
        let r = min_separation_default(&query);
        assert_eq!(r.t_min, 5.0);
        assert_eq!(r.d_min, 0.0);
        assert!(r.conflict);
    }

    #[test]
    fn crossing_paths_meet() {
        let r = min_separation_default(&q((0.0, 0.0), (1.0, 0.0), (5.0, -5.0), (0.0, 1.0)));
        assert!((r.t_min - 5.0).abs() < 1e-12);
        assert!(r.d_min.abs() < 1e-12);
    }

    #[test]
    fn parallel_motion_is_degenerate() {
        let r = min_separation_default(&q((0.0, 0.0), (2.0, 1.0), (3.0, 4.0), (2.0, 1.0)));
        assert_eq!(r.t_min, 0.0);
        assert_eq!(r.d_min, 5.0);
    }

    #[test]
    fn diverging_is_clamped_to_now() {
        let r = min_separation_default(&q((0.0, 0.0), (-1.0, 0.0), (10.0, 0.0), (1.0, 0.0)));
        assert_eq!(r.t_min, 0.0);
        assert_eq!(r.d_min, 10.0);
    }

    #[test]
    fn beyond_horizon_is_clamped() {
        let r = min_separation(&q((0.0, 0.0), (1.0, 0.0), (100.0, 0.0), (-1.0, 0.0)), 10.0, 3.0);
        assert_eq!(r.t_min, 10.0);
        assert_eq!(r.d_min, 80.0);
    }

    fn cruiser(id: usize, p: (f64, f64), v: (f64, f64)) -> VehicleNode {
        VehicleNode {
            id,
            status: VehicleStatus::Cruising { origin: 0, target: 7 },
            battery: 100.0,
            schedule_status: ScheduleStatus::default(),
            location: Vec2::new(p.0, p.1),
            velocity: Vec2::new(v.0, v.1),
        }
    }

    fn grounded(id: usize, p: (f64, f64)) -> VehicleNode {
        VehicleNode {
            status: VehicleStatus::GroundedAtPort(0),
            velocity: Vec2::ZERO,
            ..cruiser(id, p, (0.0, 0.0))
        }
    }

    #[test]
    fn grounded_vehicles_never_conflict() {
        let g = VehicleGraph::new((0..4).map(|i| grounded(i, (0.0, 0.0))).collect());
        assert!(pairwise_conflicts(&g, 3.0, 10.0).is_empty());
    }

    #[test]
    fn single_cruiser_has_no_pair() {
        let g = VehicleGraph::new(vec![
            cruiser(0, (0.0, 0.0), (1.0, 0.0)),
            grounded(1, (1.0, 0.0)),
            grounded(2, (2.0, 0.0)),
            grounded(3, (3.0, 0.0)),
        ]);
        assert!(pairwise_conflicts(&g, 3.0, 10.0).is_empty());
        assert!(nearest_approach(&g, 0, 10.0).is_none());
    }

    #[test]
    fn converging_cruisers_report_one_conflict() {
        // Offset head-on pass: closest approach is 2.5 m at t = 5.
        let g = VehicleGraph::new(vec![
            cruiser(0, (0.0, 0.0), (1.0, 0.0)),
            cruiser(1, (10.0, 2.5), (-1.0, 0.0)),
            grounded(2, (50.0, 50.0)),
            grounded(3, (-50.0, 50.0)),
        ]);
        let c = pairwise_conflicts(&g, 3.0, 10.0);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].pair, (0, 1));
        assert!((c[0].result.d_min - 2.5).abs() < 1e-12);
        assert!((c[0].result.t_min - 5.0).abs() < 1e-12);
    }
}
