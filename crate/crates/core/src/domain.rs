//! Shared domain types: the vertiport graph, the vehicle graph, schedules,
//! the discrete action space and its feasibility mask.

use std::collections::VecDeque;
use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = usize;
pub type VehicleId = usize;

pub const NUM_VEHICLES: usize = 4;
pub const NUM_ACTIONS: usize = 11;
pub const NUM_PORT_NODES: usize = 12;

/// Columns of a vertiport feature row: availability, one-hot port type, x, y.
pub const PORT_FEATURES: usize = 7;
/// Columns of a vehicle feature row: one-hot status, battery, delay, event offset, x, y.
pub const VEHICLE_FEATURES: usize = 9;

pub const NORMAL_PORT_1: NodeId = 0;
pub const NORMAL_PORT_2: NodeId = 1;
pub const BATTERY_PORT: NodeId = 2;
pub const HOVER_SPOTS: [NodeId; 4] = [3, 4, 5, 6];
pub const DESTINATIONS: [NodeId; 5] = [7, 8, 9, 10, 11];
/// The nodes a vehicle can be grounded on.
pub const PORTS: [NodeId; 3] = [NORMAL_PORT_1, NORMAL_PORT_2, BATTERY_PORT];

#[derive(Debug, Error, PartialEq)]
pub enum LayoutError {
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("hover radius {hover} must be smaller than destination radius {destination}")]
    HoverOutsideDestinations { hover: f64, destination: f64 },
    #[error("port spacing {spacing} must be smaller than hover radius {hover}")]
    PortsOutsideHoverRing { spacing: f64, hover: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PortType {
    NormalPort,
    BatteryPort,
    HoverSpot,
    Destination,
}

impl PortType {
    fn one_hot_index(self) -> usize {
        match self {
            PortType::NormalPort => 0,
            PortType::BatteryPort => 1,
            PortType::HoverSpot => 2,
            PortType::Destination => 3,
        }
    }

    /// Ports a vehicle can be grounded on.
    pub fn is_ground(self) -> bool {
        matches!(self, PortType::NormalPort | PortType::BatteryPort)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortNode {
    pub id: NodeId,
    /// True when no vehicle occupies this node or is en route to it.
    pub available: bool,
    pub port_type: PortType,
    pub location: Vec2,
}

/// Geometry of the canonical vertiport layout, in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    /// Normal ports sit at (+-spacing, 0), the battery port at (0, spacing).
    pub port_spacing: f64,
    pub hover_radius: f64,
    pub destination_radius: f64,
    /// Vehicles inside this radius are in the vertiport's managed airspace.
    pub airspace_radius: f64,
    /// An airborne vehicle this close to a port lands immediately.
    pub landing_capture_radius: f64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            port_spacing: 10.0,
            hover_radius: 25.0,
            destination_radius: 250.0,
            airspace_radius: 100.0,
            landing_capture_radius: 5.0,
        }
    }
}

impl LayoutConfig {
    pub fn validate(&self) -> Result<(), LayoutError> {
        let positive = [
            ("port_spacing", self.port_spacing),
            ("hover_radius", self.hover_radius),
            ("destination_radius", self.destination_radius),
            ("airspace_radius", self.airspace_radius),
            ("landing_capture_radius", self.landing_capture_radius),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(LayoutError::NonPositive { name, value });
            }
        }
        if self.hover_radius >= self.destination_radius {
            return Err(LayoutError::HoverOutsideDestinations {
                hover: self.hover_radius,
                destination: self.destination_radius,
            });
        }
        if self.port_spacing >= self.hover_radius {
            return Err(LayoutError::PortsOutsideHoverRing {
                spacing: self.port_spacing,
                hover: self.hover_radius,
            });
        }
        Ok(())
    }
}

/// Axis-aligned box used to map coordinates into [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Vec2,
    pub max: Vec2,
}

impl Bounds {
    pub fn normalize(&self, p: Vec2) -> (f64, f64) {
        let nx = (p.x - self.min.x) / (self.max.x - self.min.x);
        let ny = (p.y - self.min.y) / (self.max.y - self.min.y);
        (nx.clamp(0.0, 1.0), ny.clamp(0.0, 1.0))
    }
}

/// Dense row-major feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Undirected adjacency without self loops.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adjacency {
    n: usize,
    cells: Vec<bool>,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Adjacency {
            n,
            cells: vec![false; n * n],
        }
    }

    pub fn complete(n: usize) -> Self {
        let mut adj = Adjacency::empty(n);
        for i in 0..n {
            for j in (i + 1)..n {
                adj.connect(i, j);
            }
        }
        adj
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Self loops are ignored.
    pub fn connect(&mut self, i: usize, j: usize) {
        if i != j {
            self.cells[i * self.n + j] = true;
            self.cells[j * self.n + i] = true;
        }
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.cells[i * self.n + j]
    }

    pub fn degree(&self, i: usize) -> usize {
        (0..self.n).filter(|&j| self.has_edge(i, j)).count()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| ((i + 1)..self.n).filter(move |&j| self.has_edge(i, j)).map(move |j| (i, j)))
    }

    /// `D^-1/2 (A + I) D^-1/2` as a dense row-major matrix.
    pub fn normalized_with_self_loops(&self) -> Vec<f64> {
        let n = self.n;
        let deg: Vec<f64> = (0..n).map(|i| (self.degree(i) + 1) as f64).collect();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i == j || self.has_edge(i, j) {
                    out[i * n + j] = 1.0 / (deg[i] * deg[j]).sqrt();
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VertiportGraph {
    pub nodes: Vec<PortNode>,
    pub adjacency: Adjacency,
    pub bounds: Bounds,
}

impl VertiportGraph {
    pub fn node(&self, id: NodeId) -> &PortNode {
        &self.nodes[id]
    }

    pub fn location(&self, id: NodeId) -> Vec2 {
        self.nodes[id].location
    }

    pub fn is_available(&self, id: NodeId) -> bool {
        self.nodes[id].available
    }

    /// Rows of `[P_a, one-hot(P_t), x, y]` with coordinates scaled by the layout bounds.
    pub fn feature_matrix(&self) -> FeatureMatrix {
        let mut data = Vec::with_capacity(self.nodes.len() * PORT_FEATURES);
        for node in &self.nodes {
            data.push(if node.available { 1.0 } else { 0.0 });
            let mut hot = [0.0; 4];
            hot[node.port_type.one_hot_index()] = 1.0;
            data.extend_from_slice(&hot);
            let (x, y) = self.bounds.normalize(node.location);
            data.push(x);
            data.push(y);
        }
        FeatureMatrix {
            rows: self.nodes.len(),
            cols: PORT_FEATURES,
            data,
        }
    }
}

/// Builds the 12-node layout: two normal ports, one battery port, four hover
/// spots on a ring and five destinations on an outer ring.
pub fn build_canonical_layout(config: &LayoutConfig) -> Result<VertiportGraph, LayoutError> {
    config.validate()?;
    let s = config.port_spacing;
    let mut nodes = vec![
        port(NORMAL_PORT_1, PortType::NormalPort, Vec2::new(-s, 0.0)),
        port(NORMAL_PORT_2, PortType::NormalPort, Vec2::new(s, 0.0)),
        port(BATTERY_PORT, PortType::BatteryPort, Vec2::new(0.0, s)),
    ];
    for (k, &id) in HOVER_SPOTS.iter().enumerate() {
        let bearing = (45.0 + 90.0 * k as f64).to_radians();
        let loc = Vec2::new(bearing.cos(), bearing.sin()) * config.hover_radius;
        nodes.push(port(id, PortType::HoverSpot, loc));
    }
    for (k, &id) in DESTINATIONS.iter().enumerate() {
        let bearing = (90.0 + 72.0 * k as f64).to_radians();
        let loc = Vec2::new(bearing.cos(), bearing.sin()) * config.destination_radius;
        nodes.push(port(id, PortType::Destination, loc));
    }

    // Complete graph over the airspace nodes, plus each destination wired to
    // its nearest ground port.
    let mut adjacency = Adjacency::empty(nodes.len());
    for i in 0..DESTINATIONS[0] {
        for j in (i + 1)..DESTINATIONS[0] {
            adjacency.connect(i, j);
        }
    }
    for &d in &DESTINATIONS {
        let nearest = PORTS
            .iter()
            .copied()
            .min_by(|&a, &b| {
                let da = nodes[d].location.distance(nodes[a].location);
                let db = nodes[d].location.distance(nodes[b].location);
                da.total_cmp(&db)
            })
            .expect("ports are non-empty");
        adjacency.connect(d, nearest);
    }

    let r = config.destination_radius;
    let bounds = Bounds {
        min: Vec2::new(-r, -r),
        max: Vec2::new(r, r),
    };
    Ok(VertiportGraph {
        nodes,
        adjacency,
        bounds,
    })
}

fn port(id: NodeId, port_type: PortType, location: Vec2) -> PortNode {
    PortNode {
        id,
        available: true,
        port_type,
        location,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VehicleStatus {
    GroundedAtPort(NodeId),
    Hovering(NodeId),
    Cruising { origin: NodeId, target: NodeId },
    AtDestination(NodeId),
}

impl VehicleStatus {
    fn one_hot_index(self) -> usize {
        match self {
            VehicleStatus::GroundedAtPort(_) => 0,
            VehicleStatus::Hovering(_) => 1,
            VehicleStatus::Cruising { .. } => 2,
            VehicleStatus::AtDestination(_) => 3,
        }
    }

    pub fn is_grounded(self) -> bool {
        matches!(self, VehicleStatus::GroundedAtPort(_))
    }

    pub fn is_airborne(self) -> bool {
        matches!(self, VehicleStatus::Hovering(_) | VehicleStatus::Cruising { .. })
    }

    pub fn is_cruising(self) -> bool {
        matches!(self, VehicleStatus::Cruising { .. })
    }

    /// The node this vehicle occupies or is heading to.
    pub fn reserved_node(self) -> NodeId {
        match self {
            VehicleStatus::GroundedAtPort(n)
            | VehicleStatus::Hovering(n)
            | VehicleStatus::AtDestination(n) => n,
            VehicleStatus::Cruising { target, .. } => target,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleKind {
    Takeoff,
    Landing,
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleKind::Takeoff => f.write_str("takeoff"),
            ScheduleKind::Landing => f.write_str("landing"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum NextEvent {
    Takeoff,
    Landing,
    #[default]
    None,
}

/// `l_i`: what the vehicle must do next, when, and how late it already is.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleStatus {
    pub next_event: NextEvent,
    pub event_time: u32,
    /// Minutes past due, accumulated since the current schedule was issued.
    pub accumulated_delay: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleNode {
    pub id: VehicleId,
    pub status: VehicleStatus,
    /// Percent, always within [0, 100].
    pub battery: f64,
    pub schedule_status: ScheduleStatus,
    pub location: Vec2,
    /// Meters per minute; zero unless cruising.
    pub velocity: Vec2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VehicleGraph {
    pub nodes: Vec<VehicleNode>,
    pub adjacency: Adjacency,
}

/// Delay (minutes) mapped to 1.0 in the feature row.
const DELAY_FEATURE_SCALE: f64 = 60.0;
/// Half-width (minutes) of the event-offset window encoded in the feature row.
const OFFSET_FEATURE_WINDOW: f64 = 30.0;

impl VehicleGraph {
    pub fn new(nodes: Vec<VehicleNode>) -> Self {
        let n = nodes.len();
        VehicleGraph {
            nodes,
            adjacency: Adjacency::complete(n),
        }
    }

    /// Rows of `[one-hot(c_i), b_i/100, delay, event offset, x, y]`, all in [0, 1].
    pub fn feature_matrix(&self, clock: u32, bounds: &Bounds) -> FeatureMatrix {
        let mut data = Vec::with_capacity(self.nodes.len() * VEHICLE_FEATURES);
        for v in &self.nodes {
            let mut hot = [0.0; 4];
            hot[v.status.one_hot_index()] = 1.0;
            data.extend_from_slice(&hot);
            data.push((v.battery / 100.0).clamp(0.0, 1.0));
            let s = v.schedule_status;
            data.push((s.accumulated_delay as f64 / DELAY_FEATURE_SCALE).min(1.0));
            let offset = match s.next_event {
                NextEvent::None => 1.0,
                _ => {
                    let raw = s.event_time as f64 - clock as f64;
                    (raw.clamp(-OFFSET_FEATURE_WINDOW, OFFSET_FEATURE_WINDOW) + OFFSET_FEATURE_WINDOW)
                        / (2.0 * OFFSET_FEATURE_WINDOW)
                }
            };
            data.push(offset);
            let (x, y) = bounds.normalize(v.location);
            data.push(x);
            data.push(y);
        }
        FeatureMatrix {
            rows: self.nodes.len(),
            cols: VEHICLE_FEATURES,
            data,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Action {
    StayStill = 0,
    Takeoff = 1,
    MoveOrLandNormalPort1 = 2,
    MoveOrLandNormalPort2 = 3,
    MoveOrLandBatteryPort1 = 4,
    MoveToHoverSpot1 = 5,
    MoveToHoverSpot2 = 6,
    MoveToHoverSpot3 = 7,
    MoveToHoverSpot4 = 8,
    ContinuePrevious = 9,
    AvoidCollision = 10,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("action index {0} is out of range")]
pub struct InvalidAction(pub usize);

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [
        Action::StayStill,
        Action::Takeoff,
        Action::MoveOrLandNormalPort1,
        Action::MoveOrLandNormalPort2,
        Action::MoveOrLandBatteryPort1,
        Action::MoveToHoverSpot1,
        Action::MoveToHoverSpot2,
        Action::MoveToHoverSpot3,
        Action::MoveToHoverSpot4,
        Action::ContinuePrevious,
        Action::AvoidCollision,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Action, InvalidAction> {
        Action::ALL.get(i).copied().ok_or(InvalidAction(i))
    }

    /// Node targeted by a port or hover-spot action.
    pub fn target_node(self) -> Option<NodeId> {
        match self {
            Action::MoveOrLandNormalPort1 => Some(NORMAL_PORT_1),
            Action::MoveOrLandNormalPort2 => Some(NORMAL_PORT_2),
            Action::MoveOrLandBatteryPort1 => Some(BATTERY_PORT),
            Action::MoveToHoverSpot1 => Some(HOVER_SPOTS[0]),
            Action::MoveToHoverSpot2 => Some(HOVER_SPOTS[1]),
            Action::MoveToHoverSpot3 => Some(HOVER_SPOTS[2]),
            Action::MoveToHoverSpot4 => Some(HOVER_SPOTS[3]),
            _ => None,
        }
    }

    pub fn targets_port(self) -> bool {
        matches!(
            self,
            Action::MoveOrLandNormalPort1 | Action::MoveOrLandNormalPort2 | Action::MoveOrLandBatteryPort1
        )
    }

    pub fn targets_hover_spot(self) -> bool {
        matches!(
            self,
            Action::MoveToHoverSpot1 | Action::MoveToHoverSpot2 | Action::MoveToHoverSpot3 | Action::MoveToHoverSpot4
        )
    }
}

impl TryFrom<usize> for Action {
    type Error = InvalidAction;
    fn try_from(i: usize) -> Result<Self, Self::Error> {
        Action::from_index(i)
    }
}

impl From<Action> for usize {
    fn from(a: Action) -> usize {
        a.index()
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionMask(pub [bool; NUM_ACTIONS]);

impl ActionMask {
    pub const NONE: ActionMask = ActionMask([false; NUM_ACTIONS]);
    pub const ALL: ActionMask = ActionMask([true; NUM_ACTIONS]);

    pub fn allows(&self, a: Action) -> bool {
        self.0[a.index()]
    }

    pub fn set(&mut self, a: Action, allowed: bool) {
        self.0[a.index()] = allowed;
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn allowed(&self) -> impl Iterator<Item = Action> + '_ {
        Action::ALL.into_iter().filter(move |&a| self.allows(a))
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledEvent {
    pub kind: ScheduleKind,
    pub due_time: u32,
    /// Takeoff: where the vehicle is sent. Landing: where it is returning from.
    pub destination: NodeId,
    /// Minute the window was measured from (return or departure time).
    pub reference_time: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub events: VecDeque<ScheduledEvent>,
}

impl Schedule {
    pub fn next(&self) -> Option<&ScheduledEvent> {
        self.events.front()
    }

    pub fn has_pending(&self, kind: ScheduleKind) -> bool {
        self.next().is_some_and(|e| e.kind == kind)
    }
}

/// Which of the 11 actions the vehicle may take right now.
pub fn feasible_mask(vehicle: &VehicleNode, ports: &VertiportGraph, schedule: &Schedule) -> ActionMask {
    let mut mask = ActionMask::NONE;
    mask.set(Action::ContinuePrevious, true);
    match vehicle.status {
        VehicleStatus::GroundedAtPort(_) => {
            mask.set(Action::StayStill, true);
            mask.set(Action::Takeoff, schedule.has_pending(ScheduleKind::Takeoff));
            allow_available(&mut mask, ports, Action::targets_port);
        }
        VehicleStatus::Hovering(_) => {
            mask.set(Action::StayStill, true);
            allow_available(&mut mask, ports, |a| a.targets_port() || a.targets_hover_spot());
        }
        VehicleStatus::Cruising { target, .. } => {
            mask.set(Action::AvoidCollision, true);
            // Inbound vehicles may be re-assigned to another holding spot;
            // outbound ones are committed to their destination.
            if ports.node(target).port_type == PortType::HoverSpot {
                allow_available(&mut mask, ports, Action::targets_hover_spot);
            }
        }
        VehicleStatus::AtDestination(_) => {}
    }
    mask
}

fn allow_available(mask: &mut ActionMask, ports: &VertiportGraph, select: impl Fn(Action) -> bool) {
    for a in Action::ALL {
        if select(a) {
            if let Some(node) = a.target_node() {
                mask.set(a, ports.is_available(node));
            }
        }
    }
}
