//! Dense fp64 tensors and a define-by-run reverse-mode tape.
//!
//! A [`Tape`] is built fresh for every forward pass. Trainable parameters are
//! loaded as the first leaves (see [`Tape::with_params`]); every other value is
//! either a constant leaf or the result of a recorded primitive. Calling
//! [`Tape::backward`] on a scalar node walks the tape in reverse and returns
//! [`Gradients`] for every tracked node.
//!
//! Vectors have rank 1, matrices rank 2, scalars rank 0. Only the shapes the
//! recurrent models need are supported: `matmul` takes a matrix on the left and
//! a matrix or vector on the right, `concat`/`slice` work on rank 1 and rank 2.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::contract(format!("tensor shape {shape:?} has a zero extent")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape("tensor", &shape, &[data.len()]));
        }
        Ok(Tensor { shape, data })
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "empty vector");
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        assert!(shape.iter().all(|&d| d > 0), "zero extent in {shape:?}");
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.shape[1] + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let cols = self.shape[1];
        self.data[row * cols + col] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { input: Var, axis: usize, start: usize },
    SoftmaxRows(Var),
    LogSumExp(Var),
    Sum(Var),
    MaxOver { inputs: Vec<Var>, argmax: Vec<usize> },
    /// Scalar output whose partial derivatives w.r.t. each input were computed
    /// during the forward pass.
    LocalGrad { inputs: Vec<Var>, grads: Vec<Tensor> },
}

#[derive(Debug)]
struct Node {
    value: Arc<Tensor>,
    op: Op,
    tracked: bool,
}

#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    params: usize,
    kink: f64,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: 0,
            kink: f64::INFINITY,
        }
    }

    /// Tape whose first `store.len()` nodes are the parameters, in id order.
    pub fn with_params(store: &ParamStore) -> Self {
        let mut tape = Tape::new();
        for value in store.shared_values() {
            tape.nodes.push(Node {
                value: Arc::clone(value),
                op: Op::Leaf,
                tracked: true,
            });
        }
        tape.params = tape.nodes.len();
        tape
    }

    pub fn param(&self, id: ParamId) -> Var {
        assert!(id.index() < self.params, "parameter {id:?} not loaded on this tape");
        Var(id.index())
    }

    pub fn param_count(&self) -> usize {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Untracked leaf: receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Tracked leaf that is not a parameter of the store.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// Smallest distance of a tracked ReLU or max argument to its kink seen so
    /// far. Finite-difference checks are only meaningful when this exceeds the
    /// perturbation size.
    pub fn kink_margin(&self) -> f64 {
        self.kink
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        let id = self.nodes.len();
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            tracked,
        });
        Var(id)
    }

    fn tracked_any(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].tracked)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 {
            return Err(Error::shape("matmul", av.shape(), bv.shape()));
        }
        let (m, k) = (av.rows(), av.cols());
        let out = match bv.rank() {
            1 if bv.len() == k => {
                let x = bv.data();
                let data = av.data().chunks_exact(k).map(|row| dot(row, x)).collect();
                Tensor::vector(data)
            }
            2 if bv.rows() == k => {
                let n = bv.cols();
                let mut data = vec![0.0; m * n];
                for i in 0..m {
                    let out_row = &mut data[i * n..(i + 1) * n];
                    for p in 0..k {
                        let a_ip = av.data()[i * k + p];
                        let b_row = &bv.data()[p * n..(p + 1) * n];
                        for (o, &b) in out_row.iter_mut().zip(b_row) {
                            *o += a_ip * b;
                        }
                    }
                }
                Tensor::new(vec![m, n], data)?
            }
            _ => return Err(Error::shape("matmul", av.shape(), bv.shape())),
        };
        let tracked = self.tracked_any(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), tracked))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(name, av.shape(), bv.shape()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor {
            shape: av.shape().to_vec(),
            data,
        };
        let tracked = self.tracked_any(&[a, b]);
        Ok(self.push(out, op, tracked))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        self.unary(a, |x| x * factor, Op::Scale(a, factor))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let av = self.value(a);
        let out = Tensor {
            shape: av.shape().to_vec(),
            data: av.data().iter().map(|&x| f(x)).collect(),
        };
        let tracked = self.nodes[a.0].tracked;
        self.push(out, op, tracked)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        if self.nodes[a.0].tracked {
            let margin = self.value(a).data().iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
            self.kink = self.kink.min(margin);
        }
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::contract("concat of an empty list"))?;
        let base = self.value(*first).shape().to_vec();
        if axis >= base.len() {
            return Err(Error::contract(format!("concat axis {axis} on rank {}", base.len())));
        }
        for v in &inputs[1..] {
            let s = self.value(*v).shape();
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(Error::shape("concat", &base, s));
            }
        }
        let total: usize = inputs.iter().map(|v| self.value(*v).shape()[axis]).sum();
        let mut shape = base.clone();
        shape[axis] = total;
        let mut data = Vec::with_capacity(shape.iter().product());
        if axis == 0 {
            for v in inputs {
                data.extend_from_slice(self.value(*v).data());
            }
        } else {
            // rank 2 along columns
            for r in 0..base[0] {
                for v in inputs {
                    let t = self.value(*v);
                    let c = t.cols();
                    data.extend_from_slice(&t.data()[r * c..(r + 1) * c]);
                }
            }
        }
        let out = Tensor { shape, data };
        let tracked = self.tracked_any(inputs);
        Ok(self.push(
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            tracked,
        ))
    }

    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let av = self.value(a);
        let shape = av.shape();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::contract(format!(
                "slice [{start}, {}) along axis {axis} of shape {shape:?}",
                start + len
            )));
        }
        let out = if axis == 0 {
            let inner: usize = shape[1..].iter().product();
            let mut s = shape.to_vec();
            s[0] = len;
            Tensor {
                shape: s,
                data: av.data()[start * inner..(start + len) * inner].to_vec(),
            }
        } else {
            let c = av.cols();
            let data = (0..av.rows())
                .flat_map(|r| av.data()[r * c + start..r * c + start + len].iter().copied())
                .collect();
            Tensor {
                shape: vec![av.rows(), len],
                data,
            }
        };
        let tracked = self.nodes[a.0].tracked;
        Ok(self.push(out, Op::Slice { input: a, axis, start }, tracked))
    }

    /// Softmax over the last axis (each row of a matrix, or the whole vector).
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.rank() == 0 || av.rank() > 2 {
            return Err(Error::shape("softmax_rows", av.shape(), &[]));
        }
        let width = *av.shape().last().unwrap();
        let mut data = av.data().to_vec();
        for row in data.chunks_exact_mut(width) {
            softmax_in_place(row);
        }
        let out = Tensor {
            shape: av.shape().to_vec(),
            data,
        };
        let tracked = self.nodes[a.0].tracked;
        Ok(self.push(out, Op::SoftmaxRows(a), tracked))
    }

    pub fn log_sum_exp(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.rank() != 1 {
            return Err(Error::shape("log_sum_exp", av.shape(), &[]));
        }
        let out = Tensor::scalar(log_sum_exp(av.data()));
        let tracked = self.nodes[a.0].tracked;
        Ok(self.push(out, Op::LogSumExp(a), tracked))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).data().iter().sum());
        let tracked = self.nodes[a.0].tracked;
        self.push(out, Op::Sum(a), tracked)
    }

    /// Elementwise maximum over same-shaped inputs. Ties go to the earliest
    /// input.
    pub fn max_over(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = *inputs
            .first()
            .ok_or_else(|| Error::contract("max over an empty list"))?;
        let shape = self.value(first).shape().to_vec();
        for v in inputs {
            if self.value(*v).shape() != shape.as_slice() {
                return Err(Error::shape("max_over", &shape, self.value(*v).shape()));
            }
        }
        let n = self.value(first).len();
        let mut data = self.value(first).data().to_vec();
        let mut runner_up = vec![f64::NEG_INFINITY; n];
        let mut argmax = vec![0usize; n];
        for (k, v) in inputs.iter().enumerate().skip(1) {
            for (j, &x) in self.value(*v).data().iter().enumerate() {
                if x > data[j] {
                    runner_up[j] = data[j];
                    data[j] = x;
                    argmax[j] = k;
                } else if x > runner_up[j] {
                    runner_up[j] = x;
                }
            }
        }
        let tracked = self.tracked_any(inputs);
        if tracked {
            for (best, second) in data.iter().zip(&runner_up) {
                let gap = best - second;
                if gap > 0.0 {
                    self.kink = self.kink.min(gap);
                }
            }
        }
        let out = Tensor { shape, data };
        Ok(self.push(
            out,
            Op::MaxOver {
                inputs: inputs.to_vec(),
                argmax,
            },
            tracked,
        ))
    }

    /// Records a scalar computed outside the tape together with its partial
    /// derivatives with respect to `inputs`. Used by fused losses.
    pub fn scalar_with_local_grads(
        &mut self,
        value: f64,
        inputs: &[Var],
        grads: Vec<Tensor>,
    ) -> Result<Var> {
        if inputs.len() != grads.len() {
            return Err(Error::contract("one local gradient per input required"));
        }
        for (v, g) in inputs.iter().zip(&grads) {
            if self.value(*v).shape() != g.shape() {
                return Err(Error::shape("local_grad", self.value(*v).shape(), g.shape()));
            }
        }
        let tracked = self.tracked_any(inputs);
        Ok(self.push(
            Tensor::scalar(value),
            Op::LocalGrad {
                inputs: inputs.to_vec(),
                grads,
            },
            tracked,
        ))
    }

    /// Reverse sweep from a scalar `loss`. Every parameter leaf gets a gradient
    /// (zeros when unreachable).
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::contract(format!(
                "backward from non-scalar node of shape {:?}",
                lv.shape()
            )));
        }
        if !lv.item().is_finite() {
            return Err(Error::NonFinite(format!("loss = {}", lv.item())));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor {
            shape: lv.shape().to_vec(),
            data: vec![1.0],
        });
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            let (before, rest) = grads.split_at_mut(i);
            let Some(g) = rest[0].as_ref() else { continue };
            self.propagate(node, g, before);
        }
        for (i, slot) in grads.iter_mut().enumerate().take(self.params) {
            if slot.is_none() {
                *slot = Some(Tensor::zeros(self.nodes[i].value.shape()));
            }
        }
        Ok(Gradients {
            nodes: grads,
            params: self.params,
        })
    }

    fn accumulate<'g>(&self, grads: &'g mut [Option<Tensor>], v: Var) -> Option<&'g mut [f64]> {
        let node = &self.nodes[v.0];
        if !node.tracked {
            return None;
        }
        let slot = &mut grads[v.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(node.value.shape()));
        }
        slot.as_mut().map(|t| t.data.as_mut_slice())
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let (m, k) = (av.rows(), av.cols());
                if bv.rank() == 1 {
                    if let Some(da) = self.accumulate(grads, *a) {
                        for i in 0..m {
                            let gi = gd[i];
                            if gi != 0.0 {
                                for (d, &x) in da[i * k..(i + 1) * k].iter_mut().zip(bv.data()) {
                                    *d += gi * x;
                                }
                            }
                        }
                    }
                    if let Some(db) = self.accumulate(grads, *b) {
                        for i in 0..m {
                            let gi = gd[i];
                            if gi != 0.0 {
                                for (d, &w) in db.iter_mut().zip(&av.data()[i * k..(i + 1) * k]) {
                                    *d += gi * w;
                                }
                            }
                        }
                    }
                } else {
                    let n = bv.cols();
                    if let Some(da) = self.accumulate(grads, *a) {
                        for i in 0..m {
                            for p in 0..k {
                                da[i * k + p] += dot(&gd[i * n..(i + 1) * n], &bv.data()[p * n..(p + 1) * n]);
                            }
                        }
                    }
                    if let Some(db) = self.accumulate(grads, *b) {
                        for i in 0..m {
                            for p in 0..k {
                                let a_ip = av.data()[i * k + p];
                                for j in 0..n {
                                    db[p * n + j] += a_ip * gd[i * n + j];
                                }
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(da) = self.accumulate(grads, *a) {
                    add_into(da, gd);
                }
                if let Some(db) = self.accumulate(grads, *b) {
                    add_into(db, gd);
                }
            }
            Op::Sub(a, b) => {
                if let Some(da) = self.accumulate(grads, *a) {
                    add_into(da, gd);
                }
                if let Some(db) = self.accumulate(grads, *b) {
                    for (d, &x) in db.iter_mut().zip(gd) {
                        *d -= x;
                    }
                }
            }
            Op::Mul(a, b) => {
                let bv = Arc::clone(&self.nodes[b.0].value);
                let av = Arc::clone(&self.nodes[a.0].value);
                if let Some(da) = self.accumulate(grads, *a) {
                    for ((d, &x), &y) in da.iter_mut().zip(gd).zip(bv.data()) {
                        *d += x * y;
                    }
                }
                if let Some(db) = self.accumulate(grads, *b) {
                    for ((d, &x), &y) in db.iter_mut().zip(gd).zip(av.data()) {
                        *d += x * y;
                    }
                }
            }
            Op::Scale(a, c) => {
                if let Some(da) = self.accumulate(grads, *a) {
                    for (d, &x) in da.iter_mut().zip(gd) {
                        *d += c * x;
                    }
                }
            }
            Op::Relu(a) => {
                let av = Arc::clone(&self.nodes[a.0].value);
                if let Some(da) = self.accumulate(grads, *a) {
                    for ((d, &x), &inp) in da.iter_mut().zip(gd).zip(av.data()) {
                        if inp > 0.0 {
                            *d += x;
                        }
                    }
                }
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                if let Some(da) = self.accumulate(grads, *a) {
                    for ((d, &x), &s) in da.iter_mut().zip(gd).zip(y) {
                        *d += x * s * (1.0 - s);
                    }
                }
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                if let Some(da) = self.accumulate(grads, *a) {
                    for ((d, &x), &t) in da.iter_mut().zip(gd).zip(y) {
                        *d += x * (1.0 - t * t);
                    }
                }
            }
            Op::Concat { inputs, axis } => {
                if *axis == 0 {
                    let mut offset = 0;
                    for v in inputs {
                        let n = self.value(*v).len();
                        if let Some(dv) = self.accumulate(grads, *v) {
                            add_into(dv, &gd[offset..offset + n]);
                        }
                        offset += n;
                    }
                } else {
                    let total = g.cols();
                    let rows = g.rows();
                    let mut col = 0;
                    for v in inputs {
                        let c = self.value(*v).cols();
                        if let Some(dv) = self.accumulate(grads, *v) {
                            for r in 0..rows {
                                add_into(&mut dv[r * c..(r + 1) * c], &gd[r * total + col..r * total + col + c]);
                            }
                        }
                        col += c;
                    }
                }
            }
            Op::Slice { input, axis, start } => {
                let in_shape = self.value(*input).shape().to_vec();
                if let Some(da) = self.accumulate(grads, *input) {
                    if *axis == 0 {
                        let inner: usize = in_shape[1..].iter().product();
                        add_into(&mut da[start * inner..start * inner + gd.len()], gd);
                    } else {
                        let c = in_shape[1];
                        let len = g.cols();
                        for r in 0..in_shape[0] {
                            add_into(&mut da[r * c + start..r * c + start + len], &gd[r * len..(r + 1) * len]);
                        }
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                let y = node.value.data();
                let width = *node.value.shape().last().unwrap();
                if let Some(da) = self.accumulate(grads, *a) {
                    for ((drow, grow), yrow) in da
                        .chunks_exact_mut(width)
                        .zip(gd.chunks_exact(width))
                        .zip(y.chunks_exact(width))
                    {
                        let inner = dot(grow, yrow);
                        for ((d, &gj), &yj) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d += yj * (gj - inner);
                        }
                    }
                }
            }
            Op::LogSumExp(a) => {
                let lse = node.value.item();
                let av = Arc::clone(&self.nodes[a.0].value);
                if let Some(da) = self.accumulate(grads, *a) {
                    for (d, &x) in da.iter_mut().zip(av.data()) {
                        *d += gd[0] * (x - lse).exp();
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(da) = self.accumulate(grads, *a) {
                    for d in da.iter_mut() {
                        *d += gd[0];
                    }
                }
            }
            Op::MaxOver { inputs, argmax } => {
                for (k, v) in inputs.iter().enumerate() {
                    if let Some(dv) = self.accumulate(grads, *v) {
                        for (j, &winner) in argmax.iter().enumerate() {
                            if winner == k {
                                dv[j] += gd[j];
                            }
                        }
                    }
                }
            }
            Op::LocalGrad { inputs, grads: local } => {
                for (v, lg) in inputs.iter().zip(local) {
                    if let Some(dv) = self.accumulate(grads, *v) {
                        for (d, &x) in dv.iter_mut().zip(lg.data()) {
                            *d += gd[0] * x;
                        }
                    }
                }
            }
        }
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: usize,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.nodes.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn param(&self, id: ParamId) -> &Tensor {
        self.nodes[id.index()]
            .as_ref()
            .expect("parameter gradients are always populated")
    }

    /// Parameter gradients in id order.
    pub fn into_param_grads(mut self) -> Vec<Tensor> {
        self.nodes.truncate(self.params);
        self.nodes.into_iter().map(|g| g.expect("populated")).collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln Σ exp(xs)`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in row.iter_mut() {
        *x = (*x - m).exp();
        z += *x;
    }
    for x in row.iter_mut() {
        *x /= z;
    }
}
