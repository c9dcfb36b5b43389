//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vertiport::baselines::random_policy;
use vertiport::conflict::{separation_at, ConflictQuery};
use vertiport::domain::{Adjacency, FeatureMatrix, Vec2};
use vertiport::learn::{
    ppo_loss, ActorCritic, Architecture, Observation, PpoConfig, Tape, Tensor, Transition, Var,
};
use vertiport::{SimConfig, SimState};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- geometry

pub fn random_query(rng: &mut impl Rng) -> ConflictQuery {
    let mut v = |r: f64| Vec2::new(rng.random_range(-r..r), rng.random_range(-r..r));
    ConflictQuery {
        p1: v(200.0),
        v1: v(60.0),
        p2: v(200.0),
        v2: v(60.0),
    }
}

/// Minimum of `D(t)` over `[0, horizon]` by sampling every `step` minutes,
/// then narrowing the best sample's bracket by golden-section search
/// (`D` is convex, so the bracket holds the minimum).
pub fn sampled_min(q: &ConflictQuery, horizon: f64, step: f64) -> (f64, f64) {
    let n = (horizon / step).round() as usize;
    let mut best = (0usize, f64::INFINITY);
    for i in 0..=n {
        let d = separation_at(q, (i as f64 * step).min(horizon));
        if d < best.1 {
            best = (i, d);
        }
    }
    let mut lo = (best.0.saturating_sub(1) as f64 * step).max(0.0);
    let mut hi = ((best.0 + 1) as f64 * step).min(horizon);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if separation_at(q, a) <= separation_at(q, b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let mut t = 0.5 * (lo + hi);
    let mut d = separation_at(q, t);
    for edge in [0.0, horizon] {
        let de = separation_at(q, edge);
        if de < d {
            t = edge;
            d = de;
        }
    }
    (t, d)
}

// ---------------------------------------------------------------- gradients

/// Relative error `‖a − n‖ / max(‖a‖, ‖n‖)` (zero when both vanish).
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale < 1e-300 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Compares reverse-mode gradients of `build` (which must return a 1×1 var)
/// with central differences in every input entry.
pub fn check_gradient(inputs: &[Tensor], build: &dyn Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let eval = |xs: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let out = build(&mut tape, &vars);
        tape.value(out).item()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let out = build(&mut tape, &vars);
    let grads = tape.backward(out);

    let h = 1e-6;
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (i, x) in inputs.iter().enumerate() {
        let g = grads.get(vars[i]).cloned().unwrap_or_else(|| Tensor::zeros(x.rows(), x.cols()));
        for k in 0..x.len() {
            let mut xs = inputs.to_vec();
            xs[i].data_mut()[k] = x.data()[k] + h;
            let up = eval(&xs);
            xs[i].data_mut()[k] = x.data()[k] - h;
            let down = eval(&xs);
            numeric.push((up - down) / (2.0 * h));
            analytic.push(g.data()[k]);
        }
    }
    rel_error(&analytic, &numeric)
}

fn uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Reduces a matrix to a scalar through a fixed random weighting, so every
/// output entry contributes a distinct amount.
fn weigh(tape: &mut Tape, x: Var, seed: u64) -> Var {
    let (r, c) = tape.value(x).shape();
    let w = tape.leaf(uniform(r, c, &mut rng(seed)));
    let p = tape.mul(x, w).unwrap();
    tape.mean(p)
}

/// Gradient check of every tape primitive on small random inputs:
/// `(name, relative error)`.
pub fn primitive_gradient_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut r = rng(seed);
    let a34 = uniform(3, 4, &mut r);
    let b34 = uniform(3, 4, &mut r);
    let b42 = uniform(4, 2, &mut r);
    let bias = uniform(1, 4, &mut r);
    let x64 = uniform(6, 4, &mut r);
    let x35 = uniform(3, 5, &mut r);
    let x32 = uniform(3, 2, &mut r);
    let adj = Arc::new(uniform(3, 3, &mut r));
    let mask = Arc::new(vec![
        true, false, true, true, false, //
        false, false, true, false, false, //
        true, true, true, true, true,
    ]);

    type Case = (&'static str, Vec<Tensor>, Box<dyn Fn(&mut Tape, &[Var]) -> Var>);
    let cases: Vec<Case> = vec![
        ("matmul", vec![a34.clone(), b42.clone()], Box::new(|t, v| {
            let y = t.matmul(v[0], v[1]).unwrap();
            weigh(t, y, 1)
        })),
        ("add_bias", vec![a34.clone(), bias.clone()], Box::new(|t, v| {
            let y = t.add_bias(v[0], v[1]).unwrap();
            weigh(t, y, 2)
        })),
        ("add", vec![a34.clone(), b34.clone()], Box::new(|t, v| {
            let y = t.add(v[0], v[1]).unwrap();
            weigh(t, y, 3)
        })),
        ("sub", vec![a34.clone(), b34.clone()], Box::new(|t, v| {
            let y = t.sub(v[0], v[1]).unwrap();
            weigh(t, y, 4)
        })),
        ("mul", vec![a34.clone(), b34.clone()], Box::new(|t, v| {
            let y = t.mul(v[0], v[1]).unwrap();
            weigh(t, y, 5)
        })),
        ("minimum", vec![a34.clone(), b34.clone()], Box::new(|t, v| {
            let y = t.minimum(v[0], v[1]).unwrap();
            weigh(t, y, 6)
        })),
        ("scale", vec![a34.clone()], Box::new(|t, v| {
            let y = t.scale(v[0], -1.7);
            weigh(t, y, 7)
        })),
        ("leaky_relu", vec![a34.clone()], Box::new(|t, v| {
            let y = t.leaky_relu(v[0], 0.1);
            weigh(t, y, 8)
        })),
        ("tanh", vec![a34.clone()], Box::new(|t, v| {
            let y = t.tanh(v[0]);
            weigh(t, y, 9)
        })),
        ("exp", vec![a34.clone()], Box::new(|t, v| {
            let y = t.exp(v[0]);
            weigh(t, y, 10)
        })),
        ("square", vec![a34.clone()], Box::new(|t, v| {
            let y = t.square(v[0]);
            weigh(t, y, 11)
        })),
        ("clamp", vec![a34.clone()], Box::new(|t, v| {
            let y = t.clamp(v[0], -0.35, 0.45);
            weigh(t, y, 12)
        })),
        ("mean", vec![a34.clone()], Box::new(|t, v| {
            let y = t.square(v[0]);
            t.mean(y)
        })),
        ("propagate", vec![x64.clone()], Box::new(move |t, v| {
            let y = t.propagate(v[0], adj.clone()).unwrap();
            weigh(t, y, 13)
        })),
        ("block_mean", vec![x64.clone()], Box::new(|t, v| {
            let y = t.block_mean(v[0], 3).unwrap();
            weigh(t, y, 14)
        })),
        ("gather_rows", vec![x64.clone()], Box::new(|t, v| {
            let y = t.gather_rows(v[0], vec![5, 0, 5, 2]).unwrap();
            weigh(t, y, 15)
        })),
        ("concat_cols", vec![x32.clone(), a34.clone()], Box::new(|t, v| {
            let y = t.concat_cols(vec![v[0], v[1]]).unwrap();
            weigh(t, y, 16)
        })),
        ("masked_log_softmax", vec![x35.clone()], {
            let m = mask.clone();
            Box::new(move |t, v| {
                let y = t.masked_log_softmax(v[0], m.clone()).unwrap();
                let z = t.masked_fill(y, m.clone()).unwrap();
                weigh(t, z, 17)
            })
        }),
        ("masked_fill", vec![x35.clone()], {
            let m = mask.clone();
            Box::new(move |t, v| {
                let y = t.masked_fill(v[0], m.clone()).unwrap();
                weigh(t, y, 18)
            })
        }),
        ("pick_cols", vec![x35.clone()], Box::new(|t, v| {
            let y = t.pick_cols(v[0], vec![1, 4, 0]).unwrap();
            weigh(t, y, 19)
        })),
    ];
    cases
        .into_iter()
        .map(|(name, inputs, build)| (name, check_gradient(&inputs, build.as_ref())))
        .collect()
}

/// A few observations from a random-policy rollout.
pub fn sample_observations(count: usize, seed: u64) -> Vec<Observation> {
    let mut state = SimState::reset(&SimConfig::default(), seed).unwrap();
    let mut r = rng(seed ^ 0xABCD);
    let mut out = Vec::new();
    while out.len() < count && !state.is_done() {
        let decision = state.select_vehicle().map(|v| {
            let mask = state.mask_for(v);
            out.push(Observation::from_state(&state, v));
            (v, random_policy(&mask, &mut r))
        });
        state.step(decision).unwrap();
    }
    out
}

/// Relative error of the composed PPO loss gradient with respect to a random
/// subset of network parameters.
pub fn ppo_loss_gradient_error(architecture: Architecture, seed: u64) -> f64 {
    let state = SimState::reset(&SimConfig::default(), seed).unwrap();
    let net = ActorCritic::for_state(architecture, &state, seed);
    let mut r = rng(seed + 1);
    let obs = sample_observations(6, seed);
    let cfg = PpoConfig::default();
    let batch: Vec<Transition> = obs
        .into_iter()
        .map(|o| {
            let (logp, value) = net.evaluate(&o).unwrap();
            let allowed: Vec<usize> = (0..logp.len()).filter(|&a| o.mask.as_slice()[a]).collect();
            let action = *allowed.choose(&mut r).unwrap();
            Transition {
                action,
                // Old policy a little off the current one so some ratios clip.
                log_prob: logp[action] + r.random_range(-0.4..0.4),
                value,
                reward: 0.0,
                done: false,
                obs: o,
            }
        })
        .collect();
    let refs: Vec<&Transition> = batch.iter().collect();
    let adv: Vec<f64> = (0..refs.len()).map(|_| r.random_range(-1.5..1.5)).collect();
    let ret: Vec<f64> = (0..refs.len()).map(|_| r.random_range(-1.0..1.0)).collect();

    let loss_of = |net: &ActorCritic| {
        let mut tape = Tape::new();
        let vars = net.store.bind(&mut tape);
        let terms = ppo_loss(&mut tape, net, &vars, &refs, &adv, &ret, &cfg).unwrap();
        tape.value(terms.loss).item()
    };
    let mut tape = Tape::new();
    let vars = net.store.bind(&mut tape);
    let terms = ppo_loss(&mut tape, &net, &vars, &refs, &adv, &ret, &cfg).unwrap();
    let grads = tape.backward(terms.loss);

    let h = 1e-6;
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (i, p) in net.store.params.iter().enumerate() {
        let g = grads.get(vars[i]).expect("every parameter reaches the loss");
        for _ in 0..6 {
            let k = r.random_range(0..p.value.len());
            let mut up = net.clone();
            up.store.params[i].value.data_mut()[k] += h;
            let mut down = net.clone();
            down.store.params[i].value.data_mut()[k] -= h;
            numeric.push((loss_of(&up) - loss_of(&down)) / (2.0 * h));
            analytic.push(g.data()[k]);
        }
    }
    rel_error(&analytic, &numeric)
}

// ---------------------------------------------------------------- permutations

pub fn random_adjacency(n: usize, rng: &mut impl Rng) -> Adjacency {
    let mut a = Adjacency::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.4) {
                a.connect(i, j);
            }
        }
    }
    a
}

/// Rows of `x` reordered so that new row `perm[i]` is old row `i`.
pub fn permute_rows(x: &Tensor, perm: &[usize]) -> Tensor {
    let mut out = Tensor::zeros(x.rows(), x.cols());
    for (i, &p) in perm.iter().enumerate() {
        for c in 0..x.cols() {
            out.set(p, c, x.get(i, c));
        }
    }
    out
}

pub fn permute_adjacency(a: &Adjacency, perm: &[usize]) -> Adjacency {
    let mut out = Adjacency::empty(a.len());
    for (i, j) in a.edges() {
        out.connect(perm[i], perm[j]);
    }
    out
}

pub fn permute_features(m: &FeatureMatrix, perm: &[usize]) -> FeatureMatrix {
    let mut data = vec![0.0; m.data.len()];
    for (i, &p) in perm.iter().enumerate() {
        data[p * m.cols..(p + 1) * m.cols].copy_from_slice(m.row(i));
    }
    FeatureMatrix {
        rows: m.rows,
        cols: m.cols,
        data,
    }
}

/// Largest absolute difference between the finite entries of two
/// log-probability vectors (masked entries must agree on being masked).
pub fn max_logp_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| match (x.is_finite(), y.is_finite()) {
            (true, true) => (x - y).abs(),
            (false, false) => 0.0,
            _ => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

/// Same observation with the vehicles relabelled by `perm`.
pub fn relabel(obs: &Observation, perm: &[usize]) -> Observation {
    Observation {
        vertiport: obs.vertiport.clone(),
        vehicles: permute_features(&obs.vehicles, perm),
        selected: perm[obs.selected],
        mask: obs.mask,
    }
}
