//! Reverse-mode propagation.
//!
//! Every vector-Jacobian product is written in terms of graph ops. With
//! recording off the results collapse into constants (plain first-order
//! gradients); with recording on they become ordinary differentiable nodes.

use crate::error::{Result, TensorError};
use crate::graph::{Graph, Op, Var};
use crate::real::Real;
use crate::tensor::Tensor;

struct RecordingGuard<'a, T: Real> {
    graph: &'a Graph<T>,
    previous: bool,
}

impl<T: Real> Drop for RecordingGuard<'_, T> {
    fn drop(&mut self) {
        self.graph.recording.set(self.previous);
    }
}

impl<T: Real> Graph<T> {
    /// Gradients of a scalar `output` with respect to each node in `wrt`.
    ///
    /// Nodes that `output` does not depend on (or that do not require
    /// gradients) get zero-filled tensors of their own shape.
    pub fn backward(&self, output: Var, wrt: &[Var]) -> Result<Vec<Tensor<T>>> {
        let adj = self.propagate(output, wrt, false)?;
        Ok(wrt
            .iter()
            .zip(adj)
            .map(|(&w, g)| match g {
                Some(g) => self.value(g),
                None => Tensor::zeros(&self.shape(w)),
            })
            .collect())
    }

    /// Like [`backward`](Self::backward) but returns graph nodes that are
    /// themselves differentiable.
    pub fn grad_nodes(&self, output: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        if !self.higher_order {
            return Err(TensorError::HigherOrderDisabled);
        }
        let adj = self.propagate(output, wrt, true)?;
        Ok(wrt
            .iter()
            .zip(adj)
            .map(|(&w, g)| g.unwrap_or_else(|| self.constant(Tensor::zeros(&self.shape(w)))))
            .collect())
    }

    /// `∇_input output` as a differentiable node.
    pub fn input_gradient_node(&self, output: Var, input: Var) -> Result<Var> {
        Ok(self.grad_nodes(output, &[input])?[0])
    }

    fn propagate(&self, output: Var, wrt: &[Var], record: bool) -> Result<Vec<Option<Var>>> {
        self.check(output)?;
        for &w in wrt {
            self.check(w)?;
        }
        let out_shape = self.shape(output);
        if !out_shape.is_empty() {
            return Err(TensorError::NonScalarOutput(out_shape));
        }
        let _guard = RecordingGuard {
            graph: self,
            previous: self.recording.replace(record),
        };

        let mut adj: Vec<Option<Var>> = vec![None; output.index + 1];
        adj[output.index] = Some(self.constant(Tensor::scalar(T::one())));
        for index in (0..=output.index).rev() {
            let Some(gy) = adj[index] else { continue };
            let (op, inputs, needs) = {
                let nodes = self.nodes.borrow();
                let node = &nodes[index];
                if !node.requires_grad || node.inputs.is_empty() {
                    continue;
                }
                let needs: Vec<bool> = node
                    .inputs
                    .iter()
                    .map(|v| nodes[v.index].requires_grad)
                    .collect();
                (node.op.clone(), node.inputs.clone(), needs)
            };
            let this = Var {
                graph: self.id,
                index,
            };
            let grads = self.vjp(&op, this, &inputs, gy, &needs)?;
            for ((input, grad), need) in inputs.iter().zip(grads).zip(needs) {
                let Some(grad) = grad else { continue };
                if !need {
                    continue;
                }
                adj[input.index] = Some(match adj[input.index] {
                    None => grad,
                    Some(prev) => self.add(prev, grad)?,
                });
            }
        }
        Ok(wrt
            .iter()
            .map(|w| adj.get(w.index).copied().flatten())
            .collect())
    }

    fn vjp(
        &self,
        op: &Op,
        y: Var,
        x: &[Var],
        gy: Var,
        needs: &[bool],
    ) -> Result<Vec<Option<Var>>> {
        let want = |k: usize| needs.get(k).copied().unwrap_or(false);
        let opt = |k: usize, f: &dyn Fn() -> Result<Var>| -> Result<Option<Var>> {
            if want(k) {
                f().map(Some)
            } else {
                Ok(None)
            }
        };
        Ok(match op {
            Op::Leaf => Vec::new(),
            Op::Add => vec![Some(gy), Some(gy)],
            Op::Sub => vec![Some(gy), opt(1, &|| self.neg(gy))?],
            Op::Mul => vec![
                opt(0, &|| self.mul(gy, x[1]))?,
                opt(1, &|| self.mul(gy, x[0]))?,
            ],
            Op::Scale(c) => vec![Some(self.scale(gy, *c)?)],
            Op::Shift(_) => vec![Some(gy)],
            Op::MulScalar => vec![
                opt(0, &|| self.mul_scalar(gy, x[1]))?,
                opt(1, &|| {
                    let p = self.mul(gy, x[0])?;
                    self.sum(p)
                })?,
            ],
            Op::AddScalar => vec![Some(gy), opt(1, &|| self.sum(gy))?],
            Op::Square => {
                let two_x = self.scale(x[0], 2.0)?;
                vec![Some(self.mul(gy, two_x)?)]
            }
            Op::Sqrt => {
                let r = self.recip(y)?;
                let half_r = self.scale(r, 0.5)?;
                vec![Some(self.mul(gy, half_r)?)]
            }
            Op::Recip => {
                let y2 = self.square(y)?;
                let d = self.neg(y2)?;
                vec![Some(self.mul(gy, d)?)]
            }
            Op::Exp => vec![Some(self.mul(gy, y)?)],
            Op::LeakyRelu(s) => vec![Some(self.leaky_relu_grad(gy, x[0], *s)?)],
            // The mask is piecewise constant in x, so only the first operand
            // carries a derivative.
            Op::LeakyReluGrad(s) => vec![opt(0, &|| self.leaky_relu_grad(gy, x[1], *s))?, None],
            Op::Sum => vec![Some(self.broadcast(gy, &self.shape(x[0]))?)],
            Op::Mean => {
                let shape = self.shape(x[0]);
                let n: usize = shape.iter().product();
                let b = self.broadcast(gy, &shape)?;
                vec![Some(self.scale(b, 1.0 / n as f64)?)]
            }
            Op::Broadcast(_) => vec![Some(self.sum(gy)?)],
            Op::SumRows => {
                let m = self.shape(x[0])[1];
                vec![Some(self.expand_rows(gy, m)?)]
            }
            Op::ExpandRows(_) => vec![Some(self.sum_rows(gy)?)],
            Op::Reshape(_) => vec![Some(self.reshape(gy, &self.shape(x[0]))?)],
            Op::MatMul => vec![
                opt(0, &|| {
                    let bt = self.transpose(x[1])?;
                    self.matmul(gy, bt)
                })?,
                opt(1, &|| {
                    let at = self.transpose(x[0])?;
                    self.matmul(at, gy)
                })?,
            ],
            Op::Transpose => vec![Some(self.transpose(gy)?)],
            Op::Conv2d(g) => {
                let s = self.shape(x[0]);
                vec![
                    opt(0, &|| self.conv2d_input_grad(gy, x[1], *g, (s[2], s[3])))?,
                    opt(1, &|| self.conv2d_weight_grad(x[0], gy, *g))?,
                ]
            }
            Op::ConvInputGrad(g, _) => vec![
                opt(0, &|| self.conv2d(gy, x[1], *g))?,
                opt(1, &|| self.conv2d_weight_grad(gy, x[0], *g))?,
            ],
            Op::ConvWeightGrad(g) => {
                let s = self.shape(x[0]);
                vec![
                    opt(0, &|| self.conv2d_input_grad(x[1], gy, *g, (s[2], s[3])))?,
                    opt(1, &|| self.conv2d(x[0], gy, *g))?,
                ]
            }
            Op::BiasAdd => vec![Some(gy), opt(1, &|| self.channel_sum(gy))?],
            Op::ChannelSum => {
                let zeros = self.constant(Tensor::zeros(&self.shape(x[0])));
                vec![Some(self.bias_add(zeros, gy)?)]
            }
            Op::AvgPool2 => {
                let u = self.upsample2(gy)?;
                vec![Some(self.scale(u, 0.25)?)]
            }
            Op::Upsample2 => {
                let p = self.avg_pool2(gy)?;
                vec![Some(self.scale(p, 4.0)?)]
            }
            Op::Concat => {
                let mut out = Vec::with_capacity(x.len());
                let mut start = 0;
                for (k, &part) in x.iter().enumerate() {
                    let c = self.shape(part)[1];
                    out.push(opt(k, &|| self.slice_channels(gy, start, c))?);
                    start += c;
                }
                out
            }
            Op::Slice { start, len } => {
                let shape = self.shape(x[0]);
                let mut parts = Vec::with_capacity(3);
                if *start > 0 {
                    let mut s = shape.clone();
                    s[1] = *start;
                    parts.push(self.constant(Tensor::zeros(&s)));
                }
                parts.push(gy);
                let after = shape[1] - start - len;
                if after > 0 {
                    let mut s = shape.clone();
                    s[1] = after;
                    parts.push(self.constant(Tensor::zeros(&s)));
                }
                vec![Some(if parts.len() == 1 { gy } else { self.concat(&parts)? })]
            }
        })
    }
}
