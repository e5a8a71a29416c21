//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its forward value. Nodes are
//! recorded in evaluation order, so a reverse sweep over the node list is a
//! valid topological order for the backward pass. A tape lives for one
//! forward/backward pass and is dropped afterwards.

use super::tensor::{matmul_into, Tensor};
use super::NumericsError;

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
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    SliceCols(Var, usize),
    ConcatCols(Var, Var),
    GradReverse(Var, f64),
    MaskMul(Var, Tensor),
    Softmax(Var),
    SoftmaxCrossEntropy(Var, Tensor, Vec<usize>),
    Mse(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Computation graph arena for a single forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    kink_signature: Vec<bool>,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a node that participates in differentiation. `None` for
    /// constants, which never receive gradient.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), NumericsError> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(NumericsError::Dimension {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        })
    }
}

fn rank2(op: &'static str, t: &Tensor) -> Result<(usize, usize), NumericsError> {
    if t.shape().len() == 2 {
        Ok((t.shape()[0], t.shape()[1]))
    } else {
        Err(NumericsError::Shape(format!(
            "{op} expects a rank-2 tensor, got {:?}",
            t.shape()
        )))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Clears all recorded nodes, keeping the allocation.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.kink_signature.clear();
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Sign pattern of every piecewise-linear activation input seen so far
    /// (`true` where the input was strictly positive). Two evaluations with
    /// equal signatures lie on the same linear piece.
    pub fn kink_signature(&self) -> &[bool] {
        &self.kink_signature
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Leaf that receives gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("add", x, y)?;
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let out = Tensor::new(x.shape(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    /// `a[m×n] + row[1×n]`, broadcasting the row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NumericsError> {
        let (x, r) = (self.value(a), self.value(row));
        let (_, n) = rank2("add_row", x)?;
        if r.len() != n {
            return Err(NumericsError::Dimension {
                op: "add_row",
                lhs: x.shape().to_vec(),
                rhs: r.shape().to_vec(),
            });
        }
        let rd = r.data();
        let data = x
            .data()
            .chunks(n)
            .flat_map(|chunk| chunk.iter().zip(rd).map(|(p, q)| p + q))
            .collect();
        let out = Tensor::new(x.shape(), data)?;
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(out, Op::AddRow(a, row), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("sub", x, y)?;
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p - q).collect();
        let out = Tensor::new(x.shape(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("mul", x, y)?;
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let out = Tensor::new(x.shape(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).map(|v| v * factor);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, factor), rg)
    }

    /// Leaky rectifier; `slope = 0` gives the plain ReLU. The derivative at
    /// exactly zero is taken as `slope`.
    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let x = &self.nodes[a.0].value;
        self.kink_signature.extend(x.data().iter().map(|&v| v > 0.0));
        let out = x.map(|v| if v > 0.0 { v } else { slope * v });
        let rg = self.rg(a);
        self.push(out, Op::LeakyRelu(a, slope), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.leaky_relu(a, 0.0)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(out, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        let rg = self.rg(a);
        self.push(out, Op::Tanh(a), rg)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v * v);
        let rg = self.rg(a);
        self.push(out, Op::Square(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(out, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let out = Tensor::scalar(x.sum() / x.len() as f64);
        let rg = self.rg(a);
        self.push(out, Op::Mean(a), rg)
    }

    /// Columns `[start, end)` of a rank-2 tensor.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, NumericsError> {
        let x = self.value(a);
        let (_, n) = rank2("slice_cols", x)?;
        if start >= end || end > n {
            return Err(NumericsError::Shape(format!(
                "column slice {start}..{end} out of range for shape {:?}",
                x.shape()
            )));
        }
        let out = x.slice_cols(start, end);
        let rg = self.rg(a);
        Ok(self.push(out, Op::SliceCols(a, start), rg))
    }

    /// Horizontal concatenation `[a | b]`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (x, y) = (self.value(a), self.value(b));
        let (m, n1) = rank2("concat_cols", x)?;
        let (m2, n2) = rank2("concat_cols", y)?;
        if m != m2 {
            return Err(NumericsError::Dimension {
                op: "concat_cols",
                lhs: x.shape().to_vec(),
                rhs: y.shape().to_vec(),
            });
        }
        let mut data = Vec::with_capacity(m * (n1 + n2));
        for i in 0..m {
            data.extend_from_slice(x.row(i));
            data.extend_from_slice(y.row(i));
        }
        let out = Tensor::new(&[m, n1 + n2], data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::ConcatCols(a, b), rg))
    }

    /// Identity forward; the backward pass multiplies the incoming gradient
    /// by `-lambda`.
    pub fn grad_reverse(&mut self, a: Var, lambda: f64) -> Var {
        let out = self.value(a).clone();
        let rg = self.rg(a);
        self.push(out, Op::GradReverse(a, lambda), rg)
    }

    /// Elementwise product with a fixed mask (dropout).
    pub fn mask_mul(&mut self, a: Var, mask: Tensor) -> Result<Var, NumericsError> {
        let x = self.value(a);
        same_shape("mask_mul", x, &mask)?;
        let data = x.data().iter().zip(mask.data()).map(|(p, q)| p * q).collect();
        let out = Tensor::new(x.shape(), data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::MaskMul(a, mask), rg))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Result<Var, NumericsError> {
        let out = softmax_rows(self.value(a))?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Softmax(a), rg))
    }

    /// Mean cross-entropy of row-wise softmax over `logits` against integer
    /// class labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var, NumericsError> {
        let x = self.value(logits);
        let (m, n) = rank2("softmax_cross_entropy", x)?;
        if labels.len() != m {
            return Err(NumericsError::Shape(format!(
                "{} labels for {m} logit rows",
                labels.len()
            )));
        }
        if let Some((row, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= n) {
            return Err(NumericsError::Label {
                row,
                label: l,
                classes: n,
            });
        }
        let probs = softmax_rows(x)?;
        let mut loss = 0.0;
        for (i, &l) in labels.iter().enumerate() {
            // log-softmax via the max-shifted log-sum-exp
            let row = x.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            loss += lse - row[l];
        }
        let out = Tensor::scalar(loss / m as f64);
        let rg = self.rg(logits);
        Ok(self.push(out, Op::SoftmaxCrossEntropy(logits, probs, labels.to_vec()), rg))
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("mse", x, y)?;
        let sq: f64 = x.data().iter().zip(y.data()).map(|(p, q)| (p - q) * (p - q)).sum();
        let out = Tensor::scalar(sq / x.len() as f64);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mse(a, b), rg))
    }

    /// Reverse sweep from a scalar `loss`. Gradients accumulate additively
    /// over fan-out. Nodes that do not require gradient get none.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericsError> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(NumericsError::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.rg(loss) {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        for (node, g) in self.nodes.iter().zip(grads.iter_mut()) {
            if node.requires_grad && g.is_none() {
                *g = Some(Tensor::zeros(node.value.shape()));
            } else if !node.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, delta: Tensor| {
            if !self.rg(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => {
                    for (e, d) in existing.data_mut().iter_mut().zip(delta.data()) {
                        *e += d;
                    }
                }
                slot => *slot = Some(delta),
            }
        };
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if self.rg(*a) {
                    // dA = G · Bᵀ
                    let bt = bv.transpose();
                    let mut da = vec![0.0; m * k];
                    matmul_into(gd, bt.data(), &mut da, m, n, k);
                    acc(*a, Tensor::new(av.shape(), da).expect("shape"));
                }
                if self.rg(*b) {
                    // dB = Aᵀ · G
                    let at = av.transpose();
                    let mut db = vec![0.0; k * n];
                    matmul_into(at.data(), gd, &mut db, k, m, n);
                    acc(*b, Tensor::new(bv.shape(), db).expect("shape"));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                let rv = self.value(*row);
                let n = rv.len();
                let mut dr = vec![0.0; n];
                for chunk in gd.chunks(n) {
                    for (d, v) in dr.iter_mut().zip(chunk) {
                        *d += v;
                    }
                }
                acc(*row, Tensor::new(rv.shape(), dr).expect("shape"));
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, zip_with(g, bv, |gv, y| gv * y));
                acc(*b, zip_with(g, av, |gv, x| gv * x));
            }
            Op::Scale(a, f) => acc(*a, g.map(|v| v * f)),
            Op::LeakyRelu(a, slope) => {
                let x = self.value(*a);
                acc(*a, zip_with(g, x, |gv, xv| if xv > 0.0 { gv } else { gv * slope }));
            }
            Op::Sigmoid(a) => {
                acc(*a, zip_with(g, &node.value, |gv, y| gv * y * (1.0 - y)));
            }
            Op::Tanh(a) => {
                acc(*a, zip_with(g, &node.value, |gv, y| gv * (1.0 - y * y)));
            }
            Op::Square(a) => {
                let x = self.value(*a);
                acc(*a, zip_with(g, x, |gv, xv| 2.0 * gv * xv));
            }
            Op::Sum(a) => {
                let x = self.value(*a);
                acc(*a, Tensor::filled(x.shape(), gd[0]));
            }
            Op::Mean(a) => {
                let x = self.value(*a);
                acc(*a, Tensor::filled(x.shape(), gd[0] / x.len() as f64));
            }
            Op::SliceCols(a, start) => {
                let x = self.value(*a);
                let (m, n) = (x.shape()[0], x.shape()[1]);
                let w = g.cols();
                let mut dx = vec![0.0; m * n];
                for i in 0..m {
                    dx[i * n + start..i * n + start + w].copy_from_slice(&gd[i * w..(i + 1) * w]);
                }
                acc(*a, Tensor::new(x.shape(), dx).expect("shape"));
            }
            Op::ConcatCols(a, b) => {
                let n1 = self.value(*a).cols();
                acc(*a, g.slice_cols(0, n1));
                acc(*b, g.slice_cols(n1, g.cols()));
            }
            Op::GradReverse(a, lambda) => acc(*a, g.map(|v| -lambda * v)),
            Op::MaskMul(a, mask) => acc(*a, zip_with(g, mask, |gv, mv| gv * mv)),
            Op::Softmax(a) => {
                let y = &node.value;
                let n = y.cols();
                let mut dx = vec![0.0; y.len()];
                for ((dxr, yr), gr) in dx.chunks_mut(n).zip(y.data().chunks(n)).zip(gd.chunks(n)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for ((d, &yv), &gv) in dxr.iter_mut().zip(yr).zip(gr) {
                        *d = yv * (gv - dot);
                    }
                }
                acc(*a, Tensor::new(y.shape(), dx).expect("shape"));
            }
            Op::SoftmaxCrossEntropy(logits, probs, labels) => {
                let m = labels.len() as f64;
                let n = probs.cols();
                let mut dx = probs.data().to_vec();
                for (i, &l) in labels.iter().enumerate() {
                    dx[i * n + l] -= 1.0;
                }
                let scale = gd[0] / m;
                dx.iter_mut().for_each(|v| *v *= scale);
                acc(*logits, Tensor::new(probs.shape(), dx).expect("shape"));
            }
            Op::Mse(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                let scale = 2.0 * gd[0] / x.len() as f64;
                let diff = zip_with(x, y, |p, q| scale * (p - q));
                acc(*b, diff.map(|v| -v));
                acc(*a, diff);
            }
        }
    }
}

fn zip_with(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&p, &q)| f(p, q)).collect();
    Tensor::new(a.shape(), data).expect("operands share a shape")
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable row-wise softmax of a rank-2 tensor.
pub fn softmax_rows(x: &Tensor) -> Result<Tensor, NumericsError> {
    let (_, n) = rank2("softmax", x)?;
    let mut out = Vec::with_capacity(x.len());
    for row in x.data().chunks(n) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        out.extend(row.iter().map(|v| (v - max).exp()));
        let z: f64 = out[start..].iter().sum();
        out[start..].iter_mut().for_each(|v| *v /= z);
    }
    Tensor::new(x.shape(), out)
}
