//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! Operations are appended to a [`Tape`] in execution order, so the node list
//! is already topologically sorted. [`Tape::backward`] walks it once in
//! reverse. Nodes whose inputs never require gradients are stored as plain
//! constants and cost nothing on the way back.

use super::tensor::{Axis, BinaryOp, Broadcast, ReduceKind, Tensor, UnaryOp};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary(BinaryOp, Var, Var, Broadcast),
    Unary(UnaryOp, Var),
    Reduce(ReduceKind, Axis, Var),
    SqrtFloor(Var, f64),
    Clamp(Var, f64, f64),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; zeros when `v` is not on a
    /// path to the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
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

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    fn binary(&mut self, op: BinaryOp, a: Var, b: Var, checked: bool) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let value = if checked {
            va.binary(op, vb)?
        } else {
            va.binary_unchecked(op, vb)?
        };
        let bc = Broadcast::resolve("binary", va.shape(), vb.shape())?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Binary(op, a, b, bc), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Add, a, b, true)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Sub, a, b, true)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Mul, a, b, true)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Div, a, b, true)
    }

    pub fn div_unchecked(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Div, a, b, false)
    }

    pub fn elementwise(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var> {
        self.binary(op, a, b, true)
    }

    pub fn unary(&mut self, op: UnaryOp, a: Var) -> Result<Var> {
        let value = self.value(a).unary(op)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(value, Op::Unary(op, a), rg))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Tanh, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Sigmoid, a)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Exp, a)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(UnaryOp::Log, a)
    }

    pub fn reduce(&mut self, kind: ReduceKind, a: Var, axis: Axis) -> Result<Var> {
        let value = self.value(a).reduce(kind, axis)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(value, Op::Reduce(kind, axis, a), rg))
    }

    /// `max(sqrt(a), floor)` elementwise; the gradient is zero where the floor wins.
    pub fn sqrt_floor(&mut self, a: Var, floor: f64) -> Result<Var> {
        let value = self.value(a).map(|v| v.max(0.0).sqrt().max(floor));
        let rg = self.any_grad(&[a]);
        Ok(self.push(value, Op::SqrtFloor(a, floor), rg))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let value = self.value(a).map(|v| v.clamp(lo, hi));
        let rg = self.any_grad(&[a]);
        Ok(self.push(value, Op::Clamp(a, lo, hi), rg))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let value = self.value(a).scale(k);
        let rg = self.any_grad(&[a]);
        Ok(self.push(value, Op::Scale(a, k), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&v| self.value(v)).collect();
        let value = Tensor::concat_cols(&tensors)?;
        let rg = self.any_grad(parts);
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let value = self.value(a).slice_cols(start, end)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(value, Op::SliceCols(a, start), rg))
    }

    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let value = self.value(a).gather_rows(index)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(value, Op::GatherRows(a, index.to_vec()), rg))
    }

    /// Reverse-mode sweep from a `1 x 1` loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {shape:?}"
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) -> Result<()> {
        if !self.nodes[v.0].requires_grad {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(g),
        }
        Ok(())
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.requires_grad(*a) {
                    self.accumulate(grads, *a, g.matmul(&vb.transpose())?)?;
                }
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, va.transpose().matmul(g)?)?;
                }
            }
            Op::Binary(op, a, b, bc) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let cols = va.cols();
                let bval = |r: usize, c: usize| vb.data()[bc.index(r, c, cols)];
                if self.requires_grad(*a) {
                    let ga = Tensor::from_fn(va.rows(), cols, |r, c| {
                        let gi = g.get(r, c);
                        match op {
                            BinaryOp::Add | BinaryOp::Sub => gi,
                            BinaryOp::Mul => gi * bval(r, c),
                            BinaryOp::Div => gi / bval(r, c),
                        }
                    });
                    self.accumulate(grads, *a, ga)?;
                }
                if self.requires_grad(*b) {
                    let mut gb = vec![0.0; vb.len()];
                    for r in 0..va.rows() {
                        for c in 0..cols {
                            let gi = g.get(r, c);
                            let bv = bval(r, c);
                            let d = match op {
                                BinaryOp::Add => gi,
                                BinaryOp::Sub => -gi,
                                BinaryOp::Mul => gi * va.get(r, c),
                                BinaryOp::Div => -gi * va.get(r, c) / (bv * bv),
                            };
                            gb[bc.index(r, c, cols)] += d;
                        }
                    }
                    self.accumulate(grads, *b, Tensor::new(vb.rows(), vb.cols(), gb)?)?;
                }
            }
            Op::Unary(op, a) => {
                let x = self.value(*a);
                let data = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .zip(x.data())
                    .map(|((&gi, &yi), &xi)| match op {
                        UnaryOp::Tanh => gi * (1.0 - yi * yi),
                        UnaryOp::Sigmoid => gi * yi * (1.0 - yi),
                        UnaryOp::Exp => gi * yi,
                        UnaryOp::Log => gi / xi,
                    })
                    .collect();
                self.accumulate(grads, *a, Tensor::new(x.rows(), x.cols(), data)?)?;
            }
            Op::Reduce(kind, axis, a) => {
                let x = self.value(*a);
                let n = match axis {
                    Axis::Cols => x.cols(),
                    Axis::Rows => x.rows(),
                    Axis::All => x.len(),
                } as f64;
                let group = |r: usize, c: usize| match axis {
                    Axis::Cols => r,
                    Axis::Rows => c,
                    Axis::All => 0,
                };
                let means = match kind {
                    ReduceKind::VarPopulation => Some(x.reduce(ReduceKind::Mean, *axis)?),
                    _ => None,
                };
                let gx = Tensor::from_fn(x.rows(), x.cols(), |r, c| {
                    let k = group(r, c);
                    let gi = g.data()[k];
                    match kind {
                        ReduceKind::Sum => gi,
                        ReduceKind::Mean => gi / n,
                        ReduceKind::VarPopulation => {
                            let m = means.as_ref().map_or(0.0, |m| m.data()[k]);
                            gi * 2.0 * (x.get(r, c) - m) / n
                        }
                    }
                });
                self.accumulate(grads, *a, gx)?;
            }
            Op::SqrtFloor(a, floor) => {
                let x = self.value(*a);
                let data = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(&gi, &xi)| {
                        let s = xi.max(0.0).sqrt();
                        if s > *floor {
                            gi * 0.5 / s
                        } else {
                            0.0
                        }
                    })
                    .collect();
                self.accumulate(grads, *a, Tensor::new(x.rows(), x.cols(), data)?)?;
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.value(*a);
                let data = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(&gi, &xi)| if xi >= *lo && xi <= *hi { gi } else { 0.0 })
                    .collect();
                self.accumulate(grads, *a, Tensor::new(x.rows(), x.cols(), data)?)?;
            }
            Op::Scale(a, k) => {
                self.accumulate(grads, *a, g.scale(*k))?;
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    if self.requires_grad(*p) {
                        self.accumulate(grads, *p, g.slice_cols(start, start + w)?)?;
                    }
                    start += w;
                }
            }
            Op::SliceCols(a, start) => {
                let x = self.value(*a);
                let w = g.cols();
                let gx = Tensor::from_fn(x.rows(), x.cols(), |r, c| {
                    if c >= *start && c < start + w {
                        g.get(r, c - start)
                    } else {
                        0.0
                    }
                });
                self.accumulate(grads, *a, gx)?;
            }
            Op::GatherRows(a, index) => {
                let x = self.value(*a);
                let cols = x.cols();
                let mut gx = vec![0.0; x.len()];
                for (out_row, &src) in index.iter().enumerate() {
                    for c in 0..cols {
                        gx[src * cols + c] += g.get(out_row, c);
                    }
                }
                self.accumulate(grads, *a, Tensor::new(x.rows(), cols, gx)?)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(3.0));
        let y = tape.mul(x, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(x).item().unwrap(), 6.0);
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(0.0));
        let y = tape.sigmoid(x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(x).item().unwrap(), 0.25);
    }

    #[test]
    fn matmul_adjoint() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::from_rows(&[[1.0, 2.0]]));
        let b = tape.param(Tensor::from_rows(&[[3.0], [4.0]]));
        let y = tape.matmul(a, b).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(a), Tensor::from_rows(&[[3.0, 4.0]]));
        assert_eq!(g.wrt(b), Tensor::from_rows(&[[1.0], [2.0]]));
    }

    #[test]
    fn off_path_gradients_are_zero() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(2.0));
        let unused = tape.param(Tensor::from_rows(&[[1.0, 1.0]]));
        let y = tape.exp(x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(unused), Tensor::zeros(1, 2));
        assert!(g.get(unused).is_none());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::ones(2, 2));
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_are_not_recorded_as_ops() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::ones(2, 2));
        let b = tape.tanh(a).unwrap();
        assert!(!tape.requires_grad(b));
    }

    #[test]
    fn shared_input_accumulates() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(1.5));
        let a = tape.scale(x, 2.0).unwrap();
        let b = tape.mul(x, x).unwrap();
        let y = tape.add(a, b).unwrap();
        let g = tape.backward(y).unwrap();
        assert!((g.wrt(x).item().unwrap() - 5.0).abs() < 1e-15);
    }
}
