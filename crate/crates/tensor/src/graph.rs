use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Result, TensorError};
use crate::kernels::{self, ConvGeometry, KResult};
use crate::real::Real;
use crate::tensor::Tensor;

static NEXT_GRAPH_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node of a specific [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    pub(crate) graph: u64,
    pub(crate) index: usize,
}

impl Var {
    pub fn index(&self) -> usize {
        self.index
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Shift(f64),
    MulScalar,
    AddScalar,
    Square,
    Sqrt,
    Recip,
    Exp,
    LeakyRelu(f64),
    LeakyReluGrad(f64),
    Sum,
    Mean,
    Broadcast(Vec<usize>),
    SumRows,
    ExpandRows(usize),
    Reshape(Vec<usize>),
    MatMul,
    Transpose,
    Conv2d(ConvGeometry),
    ConvInputGrad(ConvGeometry, (usize, usize)),
    ConvWeightGrad(ConvGeometry),
    BiasAdd,
    ChannelSum,
    AvgPool2,
    Upsample2,
    Concat,
    Slice { start: usize, len: usize },
}

impl Op {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Scale(_) => "scale",
            Op::Shift(_) => "shift",
            Op::MulScalar => "mul_scalar",
            Op::AddScalar => "add_scalar",
            Op::Square => "square",
            Op::Sqrt => "sqrt",
            Op::Recip => "recip",
            Op::Exp => "exp",
            Op::LeakyRelu(_) => "leaky_relu",
            Op::LeakyReluGrad(_) => "leaky_relu_grad",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::Broadcast(_) => "broadcast",
            Op::SumRows => "sum_rows",
            Op::ExpandRows(_) => "expand_rows",
            Op::Reshape(_) => "reshape",
            Op::MatMul => "matmul",
            Op::Transpose => "transpose",
            Op::Conv2d(_) => "conv2d",
            Op::ConvInputGrad(..) => "conv2d_input_grad",
            Op::ConvWeightGrad(_) => "conv2d_weight_grad",
            Op::BiasAdd => "bias_add",
            Op::ChannelSum => "channel_sum",
            Op::AvgPool2 => "avg_pool2",
            Op::Upsample2 => "upsample2",
            Op::Concat => "concat",
            Op::Slice { .. } => "slice",
        }
    }
}

fn scalar_arg<T: Real>(t: &Tensor<T>) -> std::result::Result<T, String> {
    if t.rank() == 0 {
        Ok(t.item())
    } else {
        Err(format!("expected scalar operand, got shape {:?}", t.shape()))
    }
}

fn map_ok<T: Real>(t: &Tensor<T>, f: impl Fn(T) -> T) -> KResult<T> {
    Ok(t.map(f))
}

/// Evaluates a non-leaf op on concrete input values.
pub(crate) fn eval_op<T: Real>(op: &Op, x: &[&Tensor<T>]) -> KResult<T> {
    match op {
        Op::Leaf => Err("leaf nodes are not evaluated".into()),
        Op::Add => kernels::zip(x[0], x[1], |a, b| a + b),
        Op::Sub => kernels::zip(x[0], x[1], |a, b| a - b),
        Op::Mul => kernels::zip(x[0], x[1], |a, b| a * b),
        Op::Scale(c) => {
            let c = T::of(*c);
            map_ok(x[0], |v| v * c)
        }
        Op::Shift(c) => {
            let c = T::of(*c);
            map_ok(x[0], |v| v + c)
        }
        Op::MulScalar => {
            let s = scalar_arg(x[1])?;
            map_ok(x[0], |v| v * s)
        }
        Op::AddScalar => {
            let s = scalar_arg(x[1])?;
            map_ok(x[0], |v| v + s)
        }
        Op::Square => map_ok(x[0], |v| v * v),
        Op::Sqrt => map_ok(x[0], |v| v.sqrt()),
        Op::Recip => map_ok(x[0], |v| v.recip()),
        Op::Exp => map_ok(x[0], |v| v.exp()),
        Op::LeakyRelu(s) => {
            let s = T::of(*s);
            map_ok(x[0], |v| if v > T::zero() { v } else { v * s })
        }
        Op::LeakyReluGrad(s) => {
            let s = T::of(*s);
            kernels::zip(x[0], x[1], |g, v| if v > T::zero() { g } else { g * s })
        }
        Op::Sum => Ok(Tensor::scalar(x[0].sum())),
        Op::Mean => {
            if x[0].is_empty() {
                return Err("mean of empty tensor".into());
            }
            Ok(Tensor::scalar(x[0].sum() / T::of(x[0].len() as f64)))
        }
        Op::Broadcast(shape) => Ok(Tensor::full(shape, scalar_arg(x[0])?)),
        Op::SumRows => kernels::sum_rows(x[0]),
        Op::ExpandRows(m) => kernels::expand_rows(x[0], *m),
        Op::Reshape(shape) => x[0].reshape(shape).map_err(|e| e.to_string()),
        Op::MatMul => kernels::matmul(x[0], x[1]),
        Op::Transpose => kernels::transpose(x[0]),
        Op::Conv2d(g) => kernels::conv2d(x[0], x[1], *g),
        Op::ConvInputGrad(g, hw) => kernels::conv2d_input_grad(x[0], x[1], *g, *hw),
        Op::ConvWeightGrad(g) => kernels::conv2d_weight_grad(x[0], x[1], *g),
        Op::BiasAdd => kernels::bias_add(x[0], x[1]),
        Op::ChannelSum => kernels::channel_sum(x[0]),
        Op::AvgPool2 => kernels::avg_pool2(x[0]),
        Op::Upsample2 => kernels::upsample2(x[0]),
        Op::Concat => kernels::concat_channels(x),
        Op::Slice { start, len } => kernels::slice_channels(x[0], *start, *len),
    }
}

pub(crate) struct Node<T> {
    pub(crate) op: Op,
    pub(crate) inputs: Vec<Var>,
    pub(crate) value: Tensor<T>,
    pub(crate) requires_grad: bool,
    pub(crate) name: Option<String>,
}

/// Recorded computation. Values are computed eagerly as ops are added.
///
/// Nodes are append-only, so every node's inputs precede it.
pub struct Graph<T: Real> {
    pub(crate) id: u64,
    pub(crate) nodes: RefCell<Vec<Node<T>>>,
    pub(crate) higher_order: bool,
    pub(crate) recording: Cell<bool>,
    outputs: RefCell<BTreeMap<String, Var>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    /// Graph supporting first-order [`backward`](Self::backward) only.
    pub fn new() -> Self {
        Self::build(false)
    }

    /// Graph whose backward passes can be recorded and differentiated again.
    pub fn with_higher_order() -> Self {
        Self::build(true)
    }

    fn build(higher_order: bool) -> Self {
        Self {
            id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
            higher_order,
            recording: Cell::new(true),
            outputs: RefCell::new(BTreeMap::new()),
        }
    }

    pub fn is_higher_order(&self) -> bool {
        self.higher_order
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    pub(crate) fn check(&self, v: Var) -> Result<()> {
        if v.graph != self.id || v.index >= self.len() {
            return Err(TensorError::ForeignNode(v.index));
        }
        Ok(())
    }

    pub fn value(&self, v: Var) -> Tensor<T> {
        assert_eq!(v.graph, self.id, "variable from another graph");
        self.nodes.borrow()[v.index].value.clone()
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        assert_eq!(v.graph, self.id, "variable from another graph");
        self.nodes.borrow()[v.index].value.shape().to_vec()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.index].requires_grad
    }

    fn push_leaf(&self, value: Tensor<T>, name: Option<String>, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op: Op::Leaf,
            inputs: Vec::new(),
            value,
            requires_grad,
            name,
        });
        Var {
            graph: self.id,
            index: nodes.len() - 1,
        }
    }

    /// Unnamed constant; never differentiated and never rebound.
    pub fn constant(&self, value: Tensor<T>) -> Var {
        self.push_leaf(value, None, false)
    }

    /// Named input that does not require gradients (data).
    pub fn input(&self, name: &str, value: Tensor<T>) -> Var {
        self.push_leaf(value, Some(name.to_string()), false)
    }

    /// Named input that gradients flow to (parameters, penalty samples).
    pub fn variable(&self, name: &str, value: Tensor<T>) -> Var {
        self.push_leaf(value, Some(name.to_string()), true)
    }

    /// Constant copy of `v`'s current value; cuts gradient flow.
    pub fn detach(&self, v: Var) -> Var {
        let value = self.value(v);
        self.constant(value)
    }

    pub fn set_output(&self, name: &str, v: Var) {
        self.outputs.borrow_mut().insert(name.to_string(), v);
    }

    pub(crate) fn push(&self, op: Op, inputs: &[Var]) -> Result<Var> {
        for &v in inputs {
            self.check(v)?;
        }
        let (value, any_grad) = {
            let nodes = self.nodes.borrow();
            let vals: Vec<&Tensor<T>> = inputs.iter().map(|v| &nodes[v.index].value).collect();
            let value = eval_op(&op, &vals).map_err(|detail| TensorError::ShapeMismatch {
                op: op.name(),
                node: nodes.len(),
                detail,
            })?;
            (value, inputs.iter().any(|v| nodes[v.index].requires_grad))
        };
        if !self.recording.get() {
            return Ok(self.constant(value));
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op,
            inputs: inputs.to_vec(),
            value,
            requires_grad: any_grad,
            name: None,
        });
        Ok(Var {
            graph: self.id,
            index: nodes.len() - 1,
        })
    }

    /// Re-evaluates the whole recorded graph with new values for named
    /// leaves and returns every output registered via [`set_output`](Self::set_output).
    ///
    /// Every named leaf must be bound. Unnamed constants keep their
    /// recorded values. The graph itself is not modified.
    pub fn forward_eval(
        &self,
        bindings: &HashMap<String, Tensor<T>>,
    ) -> Result<BTreeMap<String, Tensor<T>>> {
        let nodes = self.nodes.borrow();
        let mut values: Vec<Tensor<T>> = Vec::with_capacity(nodes.len());
        for (index, node) in nodes.iter().enumerate() {
            let value = match (&node.op, &node.name) {
                (Op::Leaf, Some(name)) => bindings
                    .get(name)
                    .cloned()
                    .ok_or_else(|| TensorError::UnboundInput(name.clone()))?,
                (Op::Leaf, None) => node.value.clone(),
                (op, _) => {
                    let vals: Vec<&Tensor<T>> =
                        node.inputs.iter().map(|v| &values[v.index]).collect();
                    eval_op(op, &vals).map_err(|detail| TensorError::ShapeMismatch {
                        op: op.name(),
                        node: index,
                        detail,
                    })?
                }
            };
            values.push(value);
        }
        Ok(self
            .outputs
            .borrow()
            .iter()
            .map(|(k, v)| (k.clone(), values[v.index].clone()))
            .collect())
    }

    // ---- elementwise -------------------------------------------------------

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Add, &[a, b])
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Sub, &[a, b])
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Mul, &[a, b])
    }

    pub fn scale(&self, a: Var, c: f64) -> Result<Var> {
        self.push(Op::Scale(c), &[a])
    }

    pub fn neg(&self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn shift(&self, a: Var, c: f64) -> Result<Var> {
        self.push(Op::Shift(c), &[a])
    }

    /// `x · s` for a scalar node `s`.
    pub fn mul_scalar(&self, x: Var, s: Var) -> Result<Var> {
        self.push(Op::MulScalar, &[x, s])
    }

    /// `x + s` for a scalar node `s`.
    pub fn add_scalar(&self, x: Var, s: Var) -> Result<Var> {
        self.push(Op::AddScalar, &[x, s])
    }

    pub fn square(&self, a: Var) -> Result<Var> {
        self.push(Op::Square, &[a])
    }

    pub fn sqrt(&self, a: Var) -> Result<Var> {
        self.push(Op::Sqrt, &[a])
    }

    pub fn recip(&self, a: Var) -> Result<Var> {
        self.push(Op::Recip, &[a])
    }

    pub fn exp(&self, a: Var) -> Result<Var> {
        self.push(Op::Exp, &[a])
    }

    pub fn relu(&self, a: Var) -> Result<Var> {
        self.push(Op::LeakyRelu(0.0), &[a])
    }

    pub fn leaky_relu(&self, a: Var, slope: f64) -> Result<Var> {
        self.push(Op::LeakyRelu(slope), &[a])
    }

    /// `g` masked by the derivative of leaky-relu evaluated at `x`.
    pub fn leaky_relu_grad(&self, g: Var, x: Var, slope: f64) -> Result<Var> {
        self.push(Op::LeakyReluGrad(slope), &[g, x])
    }

    // ---- reductions and shape ---------------------------------------------

    pub fn sum(&self, a: Var) -> Result<Var> {
        self.push(Op::Sum, &[a])
    }

    pub fn mean(&self, a: Var) -> Result<Var> {
        self.push(Op::Mean, &[a])
    }

    /// Fills `shape` with the value of a scalar node.
    pub fn broadcast(&self, s: Var, shape: &[usize]) -> Result<Var> {
        self.push(Op::Broadcast(shape.to_vec()), &[s])
    }

    /// `[n, m] → [n]`.
    pub fn sum_rows(&self, a: Var) -> Result<Var> {
        self.push(Op::SumRows, &[a])
    }

    /// `[n] → [n, m]` by repetition.
    pub fn expand_rows(&self, a: Var, m: usize) -> Result<Var> {
        self.push(Op::ExpandRows(m), &[a])
    }

    pub fn reshape(&self, a: Var, shape: &[usize]) -> Result<Var> {
        self.push(Op::Reshape(shape.to_vec()), &[a])
    }

    /// Collapses everything after axis 0: `[n, ...] → [n, m]`.
    pub fn flatten(&self, a: Var) -> Result<Var> {
        let shape = self.shape(a);
        let n = shape.first().copied().unwrap_or(1);
        let m = shape.iter().skip(1).product();
        self.reshape(a, &[n, m])
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::MatMul, &[a, b])
    }

    pub fn transpose(&self, a: Var) -> Result<Var> {
        self.push(Op::Transpose, &[a])
    }

    // ---- image ops -------------------------------------------------------

    pub fn conv2d(&self, x: Var, w: Var, geom: ConvGeometry) -> Result<Var> {
        self.push(Op::Conv2d(geom), &[x, w])
    }

    pub fn conv2d_input_grad(
        &self,
        gy: Var,
        w: Var,
        geom: ConvGeometry,
        in_hw: (usize, usize),
    ) -> Result<Var> {
        self.push(Op::ConvInputGrad(geom, in_hw), &[gy, w])
    }

    pub fn conv2d_weight_grad(&self, x: Var, gy: Var, geom: ConvGeometry) -> Result<Var> {
        self.push(Op::ConvWeightGrad(geom), &[x, gy])
    }

    /// Adds a per-channel bias `[C]` to an `[N, C, ...]` tensor.
    pub fn bias_add(&self, x: Var, b: Var) -> Result<Var> {
        self.push(Op::BiasAdd, &[x, b])
    }

    pub fn channel_sum(&self, x: Var) -> Result<Var> {
        self.push(Op::ChannelSum, &[x])
    }

    pub fn avg_pool2(&self, x: Var) -> Result<Var> {
        self.push(Op::AvgPool2, &[x])
    }

    /// Nearest-neighbour 2x upsampling.
    pub fn upsample2(&self, x: Var) -> Result<Var> {
        self.push(Op::Upsample2, &[x])
    }

    pub fn concat(&self, parts: &[Var]) -> Result<Var> {
        self.push(Op::Concat, parts)
    }

    pub fn slice_channels(&self, x: Var, start: usize, len: usize) -> Result<Var> {
        self.push(Op::Slice { start, len }, &[x])
    }

    // ---- composites ------------------------------------------------------

    /// Euclidean norm over all elements, `sqrt(Σx² + eps)`.
    pub fn norm(&self, x: Var, eps: f64) -> Result<Var> {
        let sq = self.square(x)?;
        let s = self.sum(sq)?;
        let s = self.shift(s, eps)?;
        self.sqrt(s)
    }

    /// Per-sample Euclidean norm of an `[n, ...]` tensor, `sqrt(Σx² + eps)`.
    pub fn row_norms(&self, x: Var, eps: f64) -> Result<Var> {
        let flat = self.flatten(x)?;
        let sq = self.square(flat)?;
        let s = self.sum_rows(sq)?;
        let s = self.shift(s, eps)?;
        self.sqrt(s)
    }

    /// Mean over spatial axes: `[n, c, h, w] → [n, c]`.
    pub fn spatial_mean(&self, x: Var) -> Result<Var> {
        let shape = self.shape(x);
        let &[n, c, h, w] = shape.as_slice() else {
            return Err(TensorError::ShapeMismatch {
                op: "spatial_mean",
                node: x.index,
                detail: format!("expected NCHW, got {shape:?}"),
            });
        };
        let rows = self.reshape(x, &[n * c, h * w])?;
        let s = self.sum_rows(rows)?;
        let s = self.scale(s, 1.0 / (h * w) as f64)?;
        self.reshape(s, &[n, c])
    }

    /// Mean of squared elementwise differences.
    pub fn mse(&self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.square(d)?;
        self.mean(sq)
    }
}
