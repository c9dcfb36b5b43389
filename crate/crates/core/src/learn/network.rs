//! Actor-critic networks over simulator observations.
//!
//! The graph variant encodes the vertiport and vehicle graphs with two GCN
//! layers each, then fuses the mean-pooled node embeddings of both graphs with
//! the embedding of the vehicle being decided for. The flat variant feeds the
//! concatenated feature matrices through a two-layer MLP instead. Both share
//! their extractor between a Tanh policy MLP and a LeakyReLU value MLP.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nn::{leaky_relu_gain, GcnLayer, Linear, ParamStore, LEAKY_SLOPE, TANH_GAIN};
use super::tape::{Tape, Var};
use super::tensor::{ShapeError, Tensor};
use crate::domain::{
    ActionMask, FeatureMatrix, VehicleGraph, VehicleId, VertiportGraph, NUM_ACTIONS, NUM_PORT_NODES, NUM_VEHICLES,
    PORT_FEATURES, VEHICLE_FEATURES,
};
use crate::sim::SimState;

pub const HIDDEN: usize = 64;
/// Width of the flat baseline's input: both feature matrices, flattened.
pub const FLAT_INPUT: usize = NUM_PORT_NODES * PORT_FEATURES + NUM_VEHICLES * VEHICLE_FEATURES;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    /// Graph-convolutional extractor.
    Grl,
    /// Flat MLP extractor.
    MlpRl,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Grl => "grl",
            Architecture::MlpRl => "mlp-rl",
        }
    }
}

/// What the agent sees when deciding for one vehicle.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub vertiport: FeatureMatrix,
    pub vehicles: FeatureMatrix,
    pub selected: VehicleId,
    pub mask: ActionMask,
}

impl Observation {
    pub fn from_state(state: &SimState, vehicle: VehicleId) -> Self {
        let (vertiport, vehicles) = state.observe();
        Observation {
            vertiport,
            vehicles,
            selected: vehicle,
            mask: state.mask_for(vehicle),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Extractor {
    Graph { vertiport: [GcnLayer; 2], vehicles: [GcnLayer; 2] },
    Flat { layers: [Linear; 2] },
}

/// Outputs of one batched forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Heads {
    /// `batch × 11` masked log-probabilities.
    pub log_probs: Var,
    /// `batch × 1` state values.
    pub values: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActorCritic {
    pub architecture: Architecture,
    pub store: ParamStore,
    extractor: Extractor,
    policy: [Linear; 4],
    value: [Linear; 3],
    vertiport_adj: Arc<Tensor>,
    vehicle_adj: Arc<Tensor>,
}

impl ActorCritic {
    /// Fresh network with orthogonal initialisation drawn from `seed`.
    /// `vertiport_adj` and `vehicle_adj` are normalised adjacencies `Â`.
    pub fn new(architecture: Architecture, vertiport_adj: Tensor, vehicle_adj: Tensor, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let (extractor, fused) = match architecture {
            Architecture::Grl => {
                let vertiport = [
                    GcnLayer::new(&mut store, "gcn_vertiport.0", PORT_FEATURES, HIDDEN, &mut rng),
                    GcnLayer::new(&mut store, "gcn_vertiport.1", HIDDEN, HIDDEN, &mut rng),
                ];
                let vehicles = [
                    GcnLayer::new(&mut store, "gcn_vehicles.0", VEHICLE_FEATURES, HIDDEN, &mut rng),
                    GcnLayer::new(&mut store, "gcn_vehicles.1", HIDDEN, HIDDEN, &mut rng),
                ];
                (Extractor::Graph { vertiport, vehicles }, 3 * HIDDEN)
            }
            Architecture::MlpRl => {
                let g = leaky_relu_gain();
                let layers = [
                    Linear::new(&mut store, "mlp.0", FLAT_INPUT, HIDDEN, g, &mut rng),
                    Linear::new(&mut store, "mlp.1", HIDDEN, HIDDEN, g, &mut rng),
                ];
                (Extractor::Flat { layers }, HIDDEN)
            }
        };
        let policy = [
            Linear::new(&mut store, "policy.0", fused, HIDDEN, TANH_GAIN, &mut rng),
            Linear::new(&mut store, "policy.1", HIDDEN, HIDDEN, TANH_GAIN, &mut rng),
            Linear::new(&mut store, "policy.2", HIDDEN, HIDDEN, TANH_GAIN, &mut rng),
            Linear::new(&mut store, "policy.3", HIDDEN, NUM_ACTIONS, 0.01, &mut rng),
        ];
        let g = leaky_relu_gain();
        let value = [
            Linear::new(&mut store, "value.0", fused, HIDDEN, g, &mut rng),
            Linear::new(&mut store, "value.1", HIDDEN, HIDDEN, g, &mut rng),
            Linear::new(&mut store, "value.2", HIDDEN, 1, 1.0, &mut rng),
        ];
        ActorCritic {
            architecture,
            store,
            extractor,
            policy,
            value,
            vertiport_adj: Arc::new(vertiport_adj),
            vehicle_adj: Arc::new(vehicle_adj),
        }
    }

    /// Network for the canonical graphs of `state`.
    pub fn for_state(architecture: Architecture, state: &SimState, seed: u64) -> Self {
        let (vp, ev) = normalized_adjacencies(&state.vertiport, &state.vehicles);
        ActorCritic::new(architecture, vp, ev, seed)
    }

    pub fn vertiport_adjacency(&self) -> &Tensor {
        &self.vertiport_adj
    }

    pub fn vehicle_adjacency(&self) -> &Tensor {
        &self.vehicle_adj
    }

    /// Batched forward pass; `vars` come from `self.store.bind(tape)`.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], batch: &[&Observation]) -> Result<Heads, ShapeError> {
        if batch.is_empty() {
            return Err(ShapeError::Invalid {
                op: "forward",
                detail: "empty batch".into(),
            });
        }
        let n = batch.len();
        let fused = match &self.extractor {
            Extractor::Graph { vertiport, vehicles } => {
                let vp_nodes = self.vertiport_adj.rows();
                let ev_nodes = self.vehicle_adj.rows();
                let vp = stack(batch.iter().map(|o| &o.vertiport), vp_nodes, PORT_FEATURES)?;
                let ev = stack(batch.iter().map(|o| &o.vehicles), ev_nodes, VEHICLE_FEATURES)?;
                let mut h = tape.leaf(vp);
                for layer in vertiport {
                    h = layer.forward(tape, vars, h, &self.vertiport_adj)?;
                }
                let mut e = tape.leaf(ev);
                for layer in vehicles {
                    e = layer.forward(tape, vars, e, &self.vehicle_adj)?;
                }
                let vp_pool = tape.block_mean(h, vp_nodes)?;
                let ev_pool = tape.block_mean(e, ev_nodes)?;
                let picks = batch.iter().enumerate().map(|(b, o)| b * ev_nodes + o.selected).collect();
                let selected = tape.gather_rows(e, picks)?;
                tape.concat_cols(vec![vp_pool, ev_pool, selected])?
            }
            Extractor::Flat { layers } => {
                let mut data = Vec::with_capacity(n * FLAT_INPUT);
                for o in batch {
                    data.extend_from_slice(&o.vertiport.data);
                    data.extend_from_slice(&o.vehicles.data);
                }
                let mut h = tape.leaf(Tensor::from_vec(n, FLAT_INPUT, data)?);
                for layer in layers {
                    let z = layer.forward(tape, vars, h)?;
                    h = tape.leaky_relu(z, LEAKY_SLOPE);
                }
                h
            }
        };

        let mut p = fused;
        for (i, layer) in self.policy.iter().enumerate() {
            p = layer.forward(tape, vars, p)?;
            if i + 1 < self.policy.len() {
                p = tape.tanh(p);
            }
        }
        let mask: Vec<bool> = batch.iter().flat_map(|o| o.mask.as_slice().iter().copied()).collect();
        let log_probs = tape.masked_log_softmax(p, Arc::new(mask))?;

        let mut v = fused;
        for (i, layer) in self.value.iter().enumerate() {
            v = layer.forward(tape, vars, v)?;
            if i + 1 < self.value.len() {
                v = tape.leaky_relu(v, LEAKY_SLOPE);
            }
        }
        Ok(Heads { log_probs, values: v })
    }

    /// Log-probabilities over the 11 actions and the state value for a
    /// single observation.
    pub fn evaluate(&self, obs: &Observation) -> Result<(Vec<f64>, f64), ShapeError> {
        let mut tape = Tape::new();
        let vars = self.store.bind(&mut tape);
        let heads = self.forward(&mut tape, &vars, &[obs])?;
        Ok((
            tape.value(heads.log_probs).data().to_vec(),
            tape.value(heads.values).item(),
        ))
    }
}

/// Normalised adjacencies `Â` of the two graphs.
pub fn normalized_adjacencies(vertiport: &VertiportGraph, vehicles: &VehicleGraph) -> (Tensor, Tensor) {
    let vn = vertiport.nodes.len();
    let en = vehicles.nodes.len();
    (
        Tensor::from_vec(vn, vn, vertiport.adjacency.normalized_with_self_loops()).expect("square adjacency"),
        Tensor::from_vec(en, en, vehicles.adjacency.normalized_with_self_loops()).expect("square adjacency"),
    )
}

fn stack<'a>(mats: impl Iterator<Item = &'a FeatureMatrix>, rows: usize, cols: usize) -> Result<Tensor, ShapeError> {
    let mut data = Vec::new();
    let mut count = 0;
    for m in mats {
        if m.rows != rows || m.cols != cols {
            return Err(ShapeError::Mismatch {
                op: "stack",
                left: (m.rows, m.cols),
                right: (rows, cols),
            });
        }
        data.extend_from_slice(&m.data);
        count += 1;
    }
    Tensor::from_vec(count * rows, cols, data)
}
