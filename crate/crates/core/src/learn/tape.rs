//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every operation of one forward pass; [`Tape::backward`]
//! walks it in reverse and returns the gradient of a scalar with respect to
//! every leaf.

use std::sync::Arc;

use super::tensor::{ShapeError, Tensor};

/// Handle to a node on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Row mask shared by the masked ops: `mask[r * cols + c]` is true when entry
/// `(r, c)` is feasible.
pub type Mask = Arc<Vec<bool>>;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    LeakyRelu(Var, f64),
    Tanh(Var),
    Exp(Var),
    Square(Var),
    Propagate(Var, Arc<Tensor>),
    BlockMean(Var, usize),
    GatherRows(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    MaskedLogSoftmax(Var, Mask),
    MaskedFill(Var, Mask),
    PickCols(Var, Vec<usize>),
    Clamp(Var, f64, f64),
    Minimum(Var, Var),
    Mean(Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of the leaves, indexed by [`Var`]; `None` for interior nodes and
/// for leaves the output does not depend on.
#[derive(Debug)]
pub struct Gradients(Vec<Option<Tensor>>);

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.0[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.0[v.0].take()
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> ShapeError {
    ShapeError::Mismatch {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

fn invalid(op: &'static str, detail: String) -> ShapeError {
    ShapeError::Invalid { op, detail }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    /// Adds a `1 × cols` row to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, ShapeError> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(mismatch("add_bias", xv, bv));
        }
        let cols = xv.cols();
        let mut out = xv.clone();
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            *o += bv.data()[i % cols];
        }
        Ok(self.push(out, Op::AddBias(x, bias)))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), ShapeError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(mismatch(op, av, bv));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        self.same_shape("add", a, b)?;
        let v = self.value(a).zip(self.value(b), |x, y| x + y);
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a).zip(self.value(b), |x, y| x - y);
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a).zip(self.value(b), |x, y| x * y);
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        self.same_shape("minimum", a, b)?;
        let v = self.value(a).zip(self.value(b), f64::min);
        Ok(self.push(v, Op::Minimum(a, b)))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let v = self.value(x).map(|a| a * k);
        self.push(v, Op::Scale(x, k))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let v = self.value(x).map(|a| if a > 0.0 { a } else { slope * a });
        self.push(v, Op::LeakyRelu(x, slope))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::tanh);
        self.push(v, Op::Tanh(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::exp);
        self.push(v, Op::Exp(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| a * a);
        self.push(v, Op::Square(x))
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(x).map(|a| a.clamp(lo, hi));
        self.push(v, Op::Clamp(x, lo, hi))
    }

    /// Mean of all entries, as a `1 × 1` tensor.
    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let v = Tensor::scalar(xv.sum() / xv.len() as f64);
        self.push(v, Op::Mean(x))
    }

    /// Applies `adj` to each consecutive block of `adj.rows()` rows of `x`,
    /// i.e. multiplies by a block-diagonal matrix with `adj` on the diagonal.
    pub fn propagate(&mut self, x: Var, adj: Arc<Tensor>) -> Result<Var, ShapeError> {
        let xv = self.value(x);
        let n = adj.rows();
        if adj.cols() != n || n == 0 || !xv.rows().is_multiple_of(n) {
            return Err(mismatch("propagate", &adj, xv));
        }
        let cols = xv.cols();
        let mut out = Tensor::zeros(xv.rows(), cols);
        for b in 0..xv.rows() / n {
            for i in 0..n {
                let o = &mut out.data_mut()[(b * n + i) * cols..(b * n + i + 1) * cols];
                for j in 0..n {
                    let a = adj.get(i, j);
                    if a == 0.0 {
                        continue;
                    }
                    for (z, y) in o.iter_mut().zip(xv.row(b * n + j)) {
                        *z += a * y;
                    }
                }
            }
        }
        Ok(self.push(out, Op::Propagate(x, adj)))
    }

    /// Mean over each consecutive block of `block` rows.
    pub fn block_mean(&mut self, x: Var, block: usize) -> Result<Var, ShapeError> {
        let xv = self.value(x);
        if block == 0 || !xv.rows().is_multiple_of(block) {
            return Err(invalid("block_mean", format!("{} rows in blocks of {block}", xv.rows())));
        }
        let cols = xv.cols();
        let mut out = Tensor::zeros(xv.rows() / block, cols);
        for r in 0..xv.rows() {
            let o = &mut out.data_mut()[(r / block) * cols..(r / block + 1) * cols];
            for (z, y) in o.iter_mut().zip(xv.row(r)) {
                *z += y;
            }
        }
        let k = 1.0 / block as f64;
        out.data_mut().iter_mut().for_each(|z| *z *= k);
        Ok(self.push(out, Op::BlockMean(x, block)))
    }

    pub fn gather_rows(&mut self, x: Var, rows: Vec<usize>) -> Result<Var, ShapeError> {
        let xv = self.value(x);
        if let Some(&r) = rows.iter().find(|&&r| r >= xv.rows()) {
            return Err(invalid("gather_rows", format!("row {r} of {}", xv.rows())));
        }
        let cols = xv.cols();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in &rows {
            data.extend_from_slice(xv.row(r));
        }
        let v = Tensor::from_vec(rows.len(), cols, data)?;
        Ok(self.push(v, Op::GatherRows(x, rows)))
    }

    pub fn concat_cols(&mut self, parts: Vec<Var>) -> Result<Var, ShapeError> {
        let Some(&first) = parts.first() else {
            return Err(invalid("concat_cols", "nothing to concatenate".into()));
        };
        let rows = self.value(first).rows();
        for &p in &parts {
            if self.value(p).rows() != rows {
                return Err(mismatch("concat_cols", self.value(first), self.value(p)));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in &parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let v = Tensor::from_vec(rows, cols, data)?;
        Ok(self.push(v, Op::ConcatCols(parts)))
    }

    /// Row-wise log-softmax over the entries allowed by `mask`; disallowed
    /// entries come out as `-inf`. Every row needs at least one allowed entry.
    pub fn masked_log_softmax(&mut self, x: Var, mask: Mask) -> Result<Var, ShapeError> {
        let xv = self.value(x);
        if mask.len() != xv.len() {
            return Err(invalid("masked_log_softmax", format!("{} mask entries for {} values", mask.len(), xv.len())));
        }
        let cols = xv.cols();
        let mut out = Tensor::full(xv.rows(), cols, f64::NEG_INFINITY);
        for r in 0..xv.rows() {
            let row = xv.row(r);
            let m = &mask[r * cols..(r + 1) * cols];
            let max = row
                .iter()
                .zip(m)
                .filter(|(_, &ok)| ok)
                .map(|(&x, _)| x)
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(invalid("masked_log_softmax", format!("row {r} has no feasible entry")));
            }
            let z: f64 = row.iter().zip(m).filter(|(_, &ok)| ok).map(|(&x, _)| (x - max).exp()).sum();
            let lse = max + z.ln();
            for c in 0..cols {
                if m[c] {
                    out.set(r, c, row[c] - lse);
                }
            }
        }
        Ok(self.push(out, Op::MaskedLogSoftmax(x, mask)))
    }

    /// Replaces disallowed entries with zero.
    pub fn masked_fill(&mut self, x: Var, mask: Mask) -> Result<Var, ShapeError> {
        let xv = self.value(x);
        if mask.len() != xv.len() {
            return Err(invalid("masked_fill", format!("{} mask entries for {} values", mask.len(), xv.len())));
        }
        let mut out = xv.clone();
        for (o, &ok) in out.data_mut().iter_mut().zip(mask.iter()) {
            if !ok {
                *o = 0.0;
            }
        }
        Ok(self.push(out, Op::MaskedFill(x, mask)))
    }

    /// Picks column `cols[r]` from row `r`, giving a column vector.
    pub fn pick_cols(&mut self, x: Var, cols: Vec<usize>) -> Result<Var, ShapeError> {
        let xv = self.value(x);
        if cols.len() != xv.rows() || cols.iter().any(|&c| c >= xv.cols()) {
            return Err(invalid("pick_cols", format!("{} picks for a {:?} tensor", cols.len(), xv.shape())));
        }
        let data = cols.iter().enumerate().map(|(r, &c)| xv.get(r, c)).collect();
        let v = Tensor::from_vec(cols.len(), 1, data)?;
        Ok(self.push(v, Op::PickCols(x, cols)))
    }

    /// Gradients of the scalar `output` with respect to every leaf.
    pub fn backward(&self, output: Var) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        let out = &self.nodes[output.0].value;
        grads[output.0] = Some(Tensor::full(out.rows(), out.cols(), 1.0));

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(t) => t.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => grads[i] = Some(g),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, g.matmul_nt(bv).expect("shapes checked on forward"));
                    acc(&mut grads, *b, av.matmul_tn(&g).expect("shapes checked on forward"));
                }
                Op::AddBias(x, bias) => {
                    let mut gb = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (z, y) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *z += y;
                        }
                    }
                    acc(&mut grads, *bias, gb);
                    acc(&mut grads, *x, g);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.map(|x| -x));
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, g.zip(bv, |x, y| x * y));
                    acc(&mut grads, *b, g.zip(av, |x, y| x * y));
                }
                Op::Minimum(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let first = av.zip(bv, |x, y| if x <= y { 1.0 } else { 0.0 });
                    acc(&mut grads, *a, g.zip(&first, |x, f| x * f));
                    acc(&mut grads, *b, g.zip(&first, |x, f| x * (1.0 - f)));
                }
                Op::Scale(x, k) => acc(&mut grads, *x, g.map(|y| y * k)),
                Op::LeakyRelu(x, slope) => {
                    let xv = self.value(*x);
                    acc(&mut grads, *x, g.zip(xv, |y, a| if a > 0.0 { y } else { slope * y }));
                }
                Op::Tanh(x) => acc(&mut grads, *x, g.zip(&node.value, |y, t| y * (1.0 - t * t))),
                Op::Exp(x) => acc(&mut grads, *x, g.zip(&node.value, |y, e| y * e)),
                Op::Square(x) => {
                    let xv = self.value(*x);
                    acc(&mut grads, *x, g.zip(xv, |y, a| 2.0 * a * y));
                }
                Op::Clamp(x, lo, hi) => {
                    let xv = self.value(*x);
                    acc(&mut grads, *x, g.zip(xv, |y, a| if a > *lo && a < *hi { y } else { 0.0 }));
                }
                Op::Mean(x) => {
                    let xv = self.value(*x);
                    let k = g.item() / xv.len() as f64;
                    acc(&mut grads, *x, Tensor::full(xv.rows(), xv.cols(), k));
                }
                Op::Propagate(x, adj) => {
                    let n = adj.rows();
                    let cols = g.cols();
                    let mut gx = Tensor::zeros(g.rows(), cols);
                    for b in 0..g.rows() / n {
                        for j in 0..n {
                            let o = &mut gx.data_mut()[(b * n + j) * cols..(b * n + j + 1) * cols];
                            for i in 0..n {
                                let a = adj.get(i, j);
                                if a == 0.0 {
                                    continue;
                                }
                                for (z, y) in o.iter_mut().zip(g.row(b * n + i)) {
                                    *z += a * y;
                                }
                            }
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::BlockMean(x, block) => {
                    let xv = self.value(*x);
                    let k = 1.0 / *block as f64;
                    let gx = Tensor::from_fn(xv.rows(), xv.cols(), |r, c| g.get(r / block, c) * k);
                    acc(&mut grads, *x, gx);
                }
                Op::GatherRows(x, rows) => {
                    let xv = self.value(*x);
                    let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                    let cols = xv.cols();
                    for (k, &r) in rows.iter().enumerate() {
                        for (z, y) in gx.data_mut()[r * cols..(r + 1) * cols].iter_mut().zip(g.row(k)) {
                            *z += y;
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pc = self.value(p).cols();
                        let gp = Tensor::from_fn(g.rows(), pc, |r, c| g.get(r, offset + c));
                        offset += pc;
                        acc(&mut grads, p, gp);
                    }
                }
                Op::MaskedLogSoftmax(x, mask) => {
                    let cols = g.cols();
                    let mut gx = Tensor::zeros(g.rows(), cols);
                    for r in 0..g.rows() {
                        let m = &mask[r * cols..(r + 1) * cols];
                        let total: f64 = (0..cols).filter(|&c| m[c]).map(|c| g.get(r, c)).sum();
                        for c in 0..cols {
                            if m[c] {
                                let p = node.value.get(r, c).exp();
                                gx.set(r, c, g.get(r, c) - p * total);
                            }
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::MaskedFill(x, mask) => {
                    let mut gx = g;
                    for (z, &ok) in gx.data_mut().iter_mut().zip(mask.iter()) {
                        if !ok {
                            *z = 0.0;
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::PickCols(x, cols) => {
                    let xv = self.value(*x);
                    let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                    for (r, &c) in cols.iter().enumerate() {
                        gx.set(r, c, g.get(r, 0));
                    }
                    acc(&mut grads, *x, gx);
                }
            }
        }
        Gradients(grads)
    }
}
