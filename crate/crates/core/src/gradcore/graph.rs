use std::cell::{Ref, RefCell};
use std::fmt;

use super::{GraphError, Tensor};

/// Position of a node on its graph's tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UnaryOp {
    Neg,
    Exp,
    Log,
    Square,
    LeakyRelu(f64),
    Relu,
    Sigmoid,
    /// `log(1 + exp(x))`, evaluated without overflow.
    Softplus,
    Scale(f64),
    AddScalar(f64),
    /// Pass-through inside `[lo, hi]`, zero gradient outside.
    Clamp(f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReduceOp {
    Sum,
    Mean,
    Max,
}

/// How the second operand of a binary op lines up with the first.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Broadcast {
    Same,
    /// Right operand repeats across the left operand's leading dimension.
    Right,
    /// Left operand repeats across the right operand's leading dimension.
    Left,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Binary(BinaryOp, NodeId, NodeId),
    Unary(UnaryOp, NodeId),
    MatMul(NodeId, NodeId),
    Reduce {
        kind: ReduceOp,
        input: NodeId,
        axis: usize,
        /// Winning index along the axis for each output element (max only).
        argmax: Vec<usize>,
    },
    LogSumExp(NodeId, usize),
    SumAll(NodeId),
    Reshape(NodeId),
    Tile(NodeId, usize),
}

impl Op {
    fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf => Vec::new(),
            Op::Binary(_, a, b) | Op::MatMul(a, b) => vec![*a, *b],
            Op::Unary(_, a)
            | Op::LogSumExp(a, _)
            | Op::SumAll(a)
            | Op::Reshape(a)
            | Op::Tile(a, _) => vec![*a],
            Op::Reduce { input, .. } => vec![*input],
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    trainable: bool,
}

/// Tape for one forward evaluation.
///
/// Nodes are appended in evaluation order, so every node sits after its
/// parents and the backward sweep is a plain reverse walk. A graph is not
/// `Sync`; separate graphs can live on separate threads.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
    grads: RefCell<Vec<Option<Tensor>>>,
}

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    id: NodeId,
    graph: &'g Graph,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var({}, {:?})", self.id.0, self.value())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool, trainable: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = NodeId(nodes.len());
        nodes.push(Node {
            value,
            op,
            requires_grad,
            trainable,
        });
        self.grads.borrow_mut().push(None);
        Var { id, graph: self }
    }

    fn derived(&self, value: Tensor, op: Op) -> Var<'_> {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            op.parents().iter().any(|p| nodes[p.0].requires_grad)
        };
        self.push(value, op, requires_grad, false)
    }

    /// Trainable leaf; receives a gradient on [`Graph::backward`].
    pub fn param(&self, value: &Tensor) -> Var<'_> {
        self.push(value.clone(), Op::Leaf, true, true)
    }

    /// Non-trainable leaf (inputs, noise, frozen parameters).
    pub fn constant(&self, value: &Tensor) -> Var<'_> {
        self.push(value.clone(), Op::Leaf, false, false)
    }

    pub fn constant_owned(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant_owned(Tensor::scalar(value))
    }

    pub fn leaf(&self, value: &Tensor, trainable: bool) -> Var<'_> {
        if trainable {
            self.param(value)
        } else {
            self.constant(value)
        }
    }

    /// Parent ids of a node, in operand order.
    pub fn parents(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes.borrow()[id.0].op.parents()
    }

    pub fn is_trainable(&self, id: NodeId) -> bool {
        self.nodes.borrow()[id.0].trainable
    }

    /// Accumulated gradient of a trainable leaf, if a backward pass reached it.
    pub fn grad(&self, var: Var<'_>) -> Option<Tensor> {
        self.grads.borrow()[var.id.0].clone()
    }

    /// Gradient of a trainable leaf, or zeros when none was accumulated.
    pub fn grad_or_zeros(&self, var: Var<'_>) -> Tensor {
        self.grad(var)
            .unwrap_or_else(|| Tensor::zeros(var.value_ref().shape()))
    }

    pub fn zero_grad(&self) {
        for g in self.grads.borrow_mut().iter_mut() {
            *g = None;
        }
    }

    /// Reverse sweep from a single-element output. Gradients accumulate into
    /// trainable leaves across calls until [`Graph::zero_grad`].
    pub fn backward(&self, output: Var<'_>) -> Result<(), GraphError> {
        self.check_owner(output)?;
        let nodes = self.nodes.borrow();
        let out = &nodes[output.id.0];
        if out.value.len() != 1 {
            return Err(GraphError::NotScalar {
                shape: out.value.shape().to_vec(),
            });
        }
        if !out.requires_grad {
            return Ok(());
        }
        let mut adjoint: Vec<Option<Tensor>> = vec![None; output.id.0 + 1];
        adjoint[output.id.0] = Some(Tensor::filled(out.value.shape(), 1.0));
        let mut grads = self.grads.borrow_mut();

        for idx in (0..=output.id.0).rev() {
            let node = &nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = adjoint[idx].take() else {
                continue;
            };
            if node.trainable {
                match &mut grads[idx] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
                continue;
            }
            for (parent, contrib) in vjp(&nodes, node, &g) {
                if !nodes[parent.0].requires_grad {
                    continue;
                }
                match &mut adjoint[parent.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
        }
        Ok(())
    }

    fn check_owner(&self, v: Var<'_>) -> Result<(), GraphError> {
        if std::ptr::eq(self, v.graph) {
            Ok(())
        } else {
            Err(GraphError::ForeignNode)
        }
    }

    fn value(&self, id: NodeId) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[id.0].value)
    }
}

fn broadcast_mode(op: &'static str, a: &[usize], b: &[usize]) -> Result<Broadcast, GraphError> {
    if a == b {
        Ok(Broadcast::Same)
    } else if !a.is_empty() && &a[1..] == b {
        Ok(Broadcast::Right)
    } else if !b.is_empty() && &b[1..] == a {
        Ok(Broadcast::Left)
    } else {
        Err(GraphError::ShapeMismatch {
            op,
            left: a.to_vec(),
            right: b.to_vec(),
        })
    }
}

fn binary_forward(kind: BinaryOp, a: &Tensor, b: &Tensor, mode: Broadcast) -> Tensor {
    let f = match kind {
        BinaryOp::Add => |x: f64, y: f64| x + y,
        BinaryOp::Sub => |x: f64, y: f64| x - y,
        BinaryOp::Mul => |x: f64, y: f64| x * y,
    };
    let (shape, data) = match mode {
        Broadcast::Same => (
            a.shape().to_vec(),
            a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
        ),
        Broadcast::Right => {
            let w = b.len().max(1);
            (
                a.shape().to_vec(),
                a.data()
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| f(x, b.data()[i % w]))
                    .collect(),
            )
        }
        Broadcast::Left => {
            let w = a.len().max(1);
            (
                b.shape().to_vec(),
                b.data()
                    .iter()
                    .enumerate()
                    .map(|(i, &y)| f(a.data()[i % w], y))
                    .collect(),
            )
        }
    };
    Tensor::new(shape, data).expect("broadcast shape")
}

/// Sums a full-size gradient down to the shape of a broadcast operand.
fn reduce_to(g: Vec<f64>, target: &Tensor) -> Tensor {
    let w = target.len();
    if g.len() == w {
        return Tensor::new(target.shape().to_vec(), g).expect("same size");
    }
    let mut out = vec![0.0; w];
    for (i, v) in g.into_iter().enumerate() {
        out[i % w] += v;
    }
    Tensor::new(target.shape().to_vec(), out).expect("target size")
}

fn unary_forward(kind: UnaryOp, x: f64) -> f64 {
    match kind {
        UnaryOp::Neg => -x,
        UnaryOp::Exp => x.exp(),
        UnaryOp::Log => x.ln(),
        UnaryOp::Square => x * x,
        UnaryOp::LeakyRelu(slope) => {
            if x > 0.0 {
                x
            } else {
                slope * x
            }
        }
        UnaryOp::Relu => x.max(0.0),
        UnaryOp::Sigmoid => sigmoid(x),
        UnaryOp::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
        UnaryOp::Scale(c) => c * x,
        UnaryOp::AddScalar(c) => x + c,
        UnaryOp::Clamp(lo, hi) => x.clamp(lo, hi),
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn unary_derivative(kind: UnaryOp, x: f64, y: f64) -> f64 {
    match kind {
        UnaryOp::Neg => -1.0,
        UnaryOp::Exp => y,
        UnaryOp::Log => 1.0 / x,
        UnaryOp::Square => 2.0 * x,
        UnaryOp::LeakyRelu(slope) => {
            if x > 0.0 {
                1.0
            } else {
                slope
            }
        }
        UnaryOp::Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        UnaryOp::Sigmoid => y * (1.0 - y),
        UnaryOp::Softplus => sigmoid(x),
        UnaryOp::Scale(c) => c,
        UnaryOp::AddScalar(_) => 1.0,
        UnaryOp::Clamp(lo, hi) => {
            if x >= lo && x <= hi {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Splits a shape around `axis` into (outer, axis length, inner).
fn axis_layout(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Vector-Jacobian products of one node with respect to each parent.
fn vjp(nodes: &[Node], node: &Node, g: &Tensor) -> Vec<(NodeId, Tensor)> {
    let val = |id: NodeId| &nodes[id.0].value;
    match &node.op {
        Op::Leaf => Vec::new(),
        Op::Binary(kind, a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let n = g.len();
            let wa = av.len().max(1);
            let wb = bv.len().max(1);
            let (ga, gb): (Vec<f64>, Vec<f64>) = match kind {
                BinaryOp::Add => (g.data().to_vec(), g.data().to_vec()),
                BinaryOp::Sub => (g.data().to_vec(), g.data().iter().map(|x| -x).collect()),
                BinaryOp::Mul => (
                    (0..n).map(|i| g.data()[i] * bv.data()[i % wb]).collect(),
                    (0..n).map(|i| g.data()[i] * av.data()[i % wa]).collect(),
                ),
            };
            vec![(*a, reduce_to(ga, av)), (*b, reduce_to(gb, bv))]
        }
        Op::Unary(kind, a) => {
            let x = val(*a);
            let data = x
                .data()
                .iter()
                .zip(node.value.data())
                .zip(g.data())
                .map(|((&xi, &yi), &gi)| gi * unary_derivative(*kind, xi, yi))
                .collect();
            vec![(*a, Tensor::new(x.shape().to_vec(), data).expect("unary"))]
        }
        Op::MatMul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let (m, k) = (av.shape()[0], av.shape()[1]);
            let n = bv.shape()[1];
            let (ad, bd, gd) = (av.data(), bv.data(), g.data());
            // grad_a = g · bᵀ
            let mut ga = vec![0.0; m * k];
            for i in 0..m {
                for p in 0..k {
                    let mut s = 0.0;
                    for j in 0..n {
                        s += gd[i * n + j] * bd[p * n + j];
                    }
                    ga[i * k + p] = s;
                }
            }
            // grad_b = aᵀ · g
            let mut gb = vec![0.0; k * n];
            for i in 0..m {
                for p in 0..k {
                    let aip = ad[i * k + p];
                    if aip == 0.0 {
                        continue;
                    }
                    let row = &mut gb[p * n..(p + 1) * n];
                    for (r, &gij) in row.iter_mut().zip(&gd[i * n..(i + 1) * n]) {
                        *r += aip * gij;
                    }
                }
            }
            vec![
                (*a, Tensor::new(vec![m, k], ga).expect("matmul grad")),
                (*b, Tensor::new(vec![k, n], gb).expect("matmul grad")),
            ]
        }
        Op::Reduce {
            kind,
            input,
            axis,
            argmax,
        } => {
            let x = val(*input);
            let (outer, len, inner) = axis_layout(x.shape(), *axis);
            let mut out = vec![0.0; x.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let gi = g.data()[o * inner + i];
                    match kind {
                        ReduceOp::Sum | ReduceOp::Mean => {
                            let scale = if *kind == ReduceOp::Mean {
                                1.0 / len as f64
                            } else {
                                1.0
                            };
                            for k in 0..len {
                                out[(o * len + k) * inner + i] = gi * scale;
                            }
                        }
                        ReduceOp::Max => {
                            let k = argmax[o * inner + i];
                            out[(o * len + k) * inner + i] = gi;
                        }
                    }
                }
            }
            vec![(*input, Tensor::new(x.shape().to_vec(), out).expect("reduce grad"))]
        }
        Op::LogSumExp(input, axis) => {
            let x = val(*input);
            let (outer, len, inner) = axis_layout(x.shape(), *axis);
            let mut out = vec![0.0; x.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let y = node.value.data()[o * inner + i];
                    let gi = g.data()[o * inner + i];
                    if y == f64::NEG_INFINITY {
                        continue;
                    }
                    for k in 0..len {
                        let idx = (o * len + k) * inner + i;
                        out[idx] = gi * (x.data()[idx] - y).exp();
                    }
                }
            }
            vec![(*input, Tensor::new(x.shape().to_vec(), out).expect("lse grad"))]
        }
        Op::SumAll(input) => {
            let x = val(*input);
            vec![(*input, Tensor::filled(x.shape(), g.data()[0]))]
        }
        Op::Reshape(input) => {
            let x = val(*input);
            vec![(
                *input,
                Tensor::new(x.shape().to_vec(), g.data().to_vec()).expect("reshape grad"),
            )]
        }
        Op::Tile(input, reps) => {
            let x = val(*input);
            let block = x.len();
            let mut out = vec![0.0; block];
            for r in 0..*reps {
                for (o, v) in out.iter_mut().zip(&g.data()[r * block..(r + 1) * block]) {
                    *o += v;
                }
            }
            vec![(*input, Tensor::new(x.shape().to_vec(), out).expect("tile grad"))]
        }
    }
}

#[allow(clippy::should_implement_trait)]
impl<'g> Var<'g> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    /// Borrow of the node value. Do not hold it across op construction.
    pub fn value_ref(&self) -> Ref<'g, Tensor> {
        self.graph.value(self.id)
    }

    pub fn value(&self) -> Tensor {
        self.value_ref().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value_ref().shape().to_vec()
    }

    /// Value of a single-element node.
    pub fn item(&self) -> f64 {
        let v = self.value_ref();
        assert_eq!(v.len(), 1, "item() on tensor of shape {:?}", v.shape());
        v.data()[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.nodes.borrow()[self.id.0].requires_grad
    }

    fn same_graph(&self, other: &Var<'g>) -> Result<(), GraphError> {
        self.graph.check_owner(*other)
    }

    fn binary(self, kind: BinaryOp, other: Var<'g>) -> Result<Var<'g>, GraphError> {
        self.same_graph(&other)?;
        let name = match kind {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
        };
        let value = {
            let (a, b) = (self.value_ref(), other.value_ref());
            let mode = broadcast_mode(name, a.shape(), b.shape())?;
            binary_forward(kind, &a, &b, mode)
        };
        Ok(self
            .graph
            .derived(value, Op::Binary(kind, self.id, other.id)))
    }

    pub fn add(self, other: Var<'g>) -> Result<Var<'g>, GraphError> {
        self.binary(BinaryOp::Add, other)
    }

    pub fn sub(self, other: Var<'g>) -> Result<Var<'g>, GraphError> {
        self.binary(BinaryOp::Sub, other)
    }

    pub fn mul(self, other: Var<'g>) -> Result<Var<'g>, GraphError> {
        self.binary(BinaryOp::Mul, other)
    }

    pub fn unary(self, kind: UnaryOp) -> Var<'g> {
        let value = self.value_ref().map(|x| unary_forward(kind, x));
        self.graph.derived(value, Op::Unary(kind, self.id))
    }

    pub fn neg(self) -> Var<'g> {
        self.unary(UnaryOp::Neg)
    }

    pub fn exp(self) -> Var<'g> {
        self.unary(UnaryOp::Exp)
    }

    pub fn ln(self) -> Var<'g> {
        self.unary(UnaryOp::Log)
    }

    pub fn square(self) -> Var<'g> {
        self.unary(UnaryOp::Square)
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'g> {
        self.unary(UnaryOp::LeakyRelu(slope))
    }

    pub fn relu(self) -> Var<'g> {
        self.unary(UnaryOp::Relu)
    }

    pub fn sigmoid(self) -> Var<'g> {
        self.unary(UnaryOp::Sigmoid)
    }

    pub fn softplus(self) -> Var<'g> {
        self.unary(UnaryOp::Softplus)
    }

    pub fn scale(self, c: f64) -> Var<'g> {
        self.unary(UnaryOp::Scale(c))
    }

    pub fn add_scalar(self, c: f64) -> Var<'g> {
        self.unary(UnaryOp::AddScalar(c))
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Var<'g> {
        self.unary(UnaryOp::Clamp(lo, hi))
    }

    pub fn matmul(self, other: Var<'g>) -> Result<Var<'g>, GraphError> {
        self.same_graph(&other)?;
        let value = {
            let (a, b) = (self.value_ref(), other.value_ref());
            if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
                return Err(GraphError::ShapeMismatch {
                    op: "matmul",
                    left: a.shape().to_vec(),
                    right: b.shape().to_vec(),
                });
            }
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            let (ad, bd) = (a.data(), b.data());
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                let row = &mut out[i * n..(i + 1) * n];
                for p in 0..k {
                    let aip = ad[i * k + p];
                    if aip == 0.0 {
                        continue;
                    }
                    for (o, &bpj) in row.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                        *o += aip * bpj;
                    }
                }
            }
            Tensor::new(vec![m, n], out).expect("matmul shape")
        };
        Ok(self.graph.derived(value, Op::MatMul(self.id, other.id)))
    }

    fn check_axis(&self, axis: usize) -> Result<Vec<usize>, GraphError> {
        let shape = self.shape();
        if axis >= shape.len() {
            return Err(GraphError::InvalidAxis {
                axis,
                rank: shape.len(),
            });
        }
        Ok(shape)
    }

    /// Reduction over one axis; the axis is dropped from the result shape.
    /// Max sends its gradient to the lowest-index maximum.
    pub fn reduce(self, kind: ReduceOp, axis: usize) -> Result<Var<'g>, GraphError> {
        let shape = self.check_axis(axis)?;
        let (outer, len, inner) = axis_layout(&shape, axis);
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        let mut out = vec![0.0; outer * inner];
        let mut argmax = Vec::new();
        {
            let x = self.value_ref();
            let xd = x.data();
            if kind == ReduceOp::Max {
                argmax = vec![0; outer * inner];
            }
            for o in 0..outer {
                for i in 0..inner {
                    let at = |k: usize| xd[(o * len + k) * inner + i];
                    let slot = o * inner + i;
                    match kind {
                        ReduceOp::Sum => out[slot] = (0..len).map(at).sum(),
                        ReduceOp::Mean => out[slot] = (0..len).map(at).sum::<f64>() / len as f64,
                        ReduceOp::Max => {
                            let mut best = 0;
                            for k in 1..len {
                                if at(k) > at(best) {
                                    best = k;
                                }
                            }
                            argmax[slot] = best;
                            out[slot] = if len == 0 { f64::NEG_INFINITY } else { at(best) };
                        }
                    }
                }
            }
        }
        let value = Tensor::new(out_shape, out).expect("reduce shape");
        Ok(self.graph.derived(
            value,
            Op::Reduce {
                kind,
                input: self.id,
                axis,
                argmax,
            },
        ))
    }

    pub fn sum(self, axis: usize) -> Result<Var<'g>, GraphError> {
        self.reduce(ReduceOp::Sum, axis)
    }

    pub fn mean(self, axis: usize) -> Result<Var<'g>, GraphError> {
        self.reduce(ReduceOp::Mean, axis)
    }

    pub fn max(self, axis: usize) -> Result<Var<'g>, GraphError> {
        self.reduce(ReduceOp::Max, axis)
    }

    /// `log Σ exp` over one axis, shifted by the running maximum.
    /// An all-`-∞` slice yields `-∞`.
    pub fn logsumexp(self, axis: usize) -> Result<Var<'g>, GraphError> {
        let shape = self.check_axis(axis)?;
        let (outer, len, inner) = axis_layout(&shape, axis);
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        let mut out = vec![0.0; outer * inner];
        {
            let x = self.value_ref();
            let xd = x.data();
            for o in 0..outer {
                for i in 0..inner {
                    let at = |k: usize| xd[(o * len + k) * inner + i];
                    let m = (0..len).map(at).fold(f64::NEG_INFINITY, f64::max);
                    out[o * inner + i] = if m.is_infinite() {
                        m
                    } else {
                        m + (0..len).map(|k| (at(k) - m).exp()).sum::<f64>().ln()
                    };
                }
            }
        }
        let value = Tensor::new(out_shape, out).expect("lse shape");
        Ok(self.graph.derived(value, Op::LogSumExp(self.id, axis)))
    }

    /// Sum of every element, as a rank-0 tensor.
    pub fn sum_all(self) -> Var<'g> {
        let s = self.value_ref().sum();
        self.graph.derived(Tensor::scalar(s), Op::SumAll(self.id))
    }

    pub fn mean_all(self) -> Var<'g> {
        let n = self.value_ref().len().max(1);
        self.sum_all().scale(1.0 / n as f64)
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'g>, GraphError> {
        let value = self.value().reshaped(shape.to_vec())?;
        Ok(self.graph.derived(value, Op::Reshape(self.id)))
    }

    /// Stacks `reps` copies of the tensor along the leading axis.
    pub fn tile_rows(self, reps: usize) -> Var<'g> {
        let value = {
            let x = self.value_ref();
            let mut shape = x.shape().to_vec();
            if shape.is_empty() {
                shape.push(reps);
            } else {
                shape[0] *= reps;
            }
            let mut data = Vec::with_capacity(x.len() * reps);
            for _ in 0..reps {
                data.extend_from_slice(x.data());
            }
            Tensor::new(shape, data).expect("tile shape")
        };
        self.graph.derived(value, Op::Tile(self.id, reps))
    }
}
