use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use super::tape::{Tape, Var};
use super::tensor::{ShapeError, Tensor};

/// Negative-side slope of every LeakyReLU in the networks.
pub const LEAKY_SLOPE: f64 = 0.1;

pub fn leaky_relu_gain() -> f64 {
    (2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE)).sqrt()
}

pub const TANH_GAIN: f64 = 5.0 / 3.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Flat list of trainable tensors. Layers refer to entries by index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    pub params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.params.push(Param {
            name: name.into(),
            value,
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Puts every parameter on `tape` as a leaf; the i-th var is parameter i.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.leaf(p.value.clone())).collect()
    }
}

/// Orthogonal `rows × cols` matrix scaled by `gain`: orthonormal columns when
/// `rows >= cols`, orthonormal rows otherwise.
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Tensor {
    let (long, short) = (rows.max(cols), rows.min(cols));
    // columns of a long × short gaussian matrix, orthonormalised in turn
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(short);
    while basis.len() < short {
        let mut v: Vec<f64> = (0..long).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    if rows >= cols {
        Tensor::from_fn(rows, cols, |r, c| gain * basis[c][r])
    } else {
        Tensor::from_fn(rows, cols, |r, c| gain * basis[r][c])
    }
}

/// Fully connected layer `x · W + b` with `W` of shape `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: usize,
    pub bias: Option<usize>,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        gain: f64,
        rng: &mut R,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), orthogonal(inputs, outputs, gain, rng));
        let bias = Some(store.add(format!("{name}.bias"), Tensor::zeros(1, outputs)));
        Linear { weight, bias }
    }

    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var, ShapeError> {
        let y = tape.matmul(x, vars[self.weight])?;
        match self.bias {
            Some(b) => tape.add_bias(y, vars[b]),
            None => Ok(y),
        }
    }
}

/// Graph convolution `LeakyReLU(Â · X · W)` without bias.
#[derive(Clone, Debug, PartialEq)]
pub struct GcnLayer {
    pub weight: usize,
}

impl GcnLayer {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            orthogonal(inputs, outputs, leaky_relu_gain(), rng),
        );
        GcnLayer { weight }
    }

    /// `x` stacks any number of graphs, `adj.rows()` nodes each.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var, adj: &Arc<Tensor>) -> Result<Var, ShapeError> {
        let xw = tape.matmul(x, vars[self.weight])?;
        let ax = tape.propagate(xw, Arc::clone(adj))?;
        Ok(tape.leaky_relu(ax, LEAKY_SLOPE))
    }
}

/// One graph convolution on plain tensors: `LeakyReLU(Â · X · W)` where
/// `adj_normalized` is `Â`.
pub fn gcn_forward(weight: &Tensor, features: &Tensor, adj_normalized: &Tensor) -> Result<Tensor, ShapeError> {
    if features.rows() != adj_normalized.rows() {
        return Err(ShapeError::Mismatch {
            op: "gcn_forward",
            left: features.shape(),
            right: adj_normalized.shape(),
        });
    }
    let mut tape = Tape::new();
    let w = tape.leaf(weight.clone());
    let x = tape.leaf(features.clone());
    let layer = GcnLayer { weight: 0 };
    let out = layer.forward(&mut tape, &[w], x, &Arc::new(adj_normalized.clone()))?;
    Ok(tape.value(out).clone())
}
