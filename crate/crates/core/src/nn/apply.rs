use texgan_tensor::{ConvGeometry, Graph, Real, Tensor, Var};

use super::params::{BoundParams, ParamStore};
use super::spec::{Activation, Layer, NetworkSpec};
use crate::error::{CoreError, Result};

/// Records `spec` applied to `input` on `graph`.
///
/// The input shape is validated against the whole network before anything
/// is recorded; the error names the first offending layer.
pub fn apply_network<T: Real>(
    spec: &NetworkSpec,
    params: &BoundParams,
    graph: &Graph<T>,
    input: Var,
) -> Result<Var> {
    spec.output_shape(&graph.shape(input))?;
    let mut x = input;
    let mut skips = Vec::new();
    for (i, layer) in spec.layers.iter().enumerate() {
        let tag = |e: texgan_tensor::TensorError| CoreError::Shape {
            layer: layer.describe(i),
            detail: e.to_string(),
        };
        x = match layer {
            Layer::Conv {
                name,
                kernel,
                stride,
                pad,
                bias,
                ..
            } => {
                let geom = ConvGeometry {
                    kernel: *kernel,
                    stride: *stride,
                    pad: *pad,
                };
                let y = graph.conv2d(x, params.get(&format!("{name}.weight"))?, geom).map_err(tag)?;
                if *bias {
                    graph.bias_add(y, params.get(&format!("{name}.bias"))?).map_err(tag)?
                } else {
                    y
                }
            }
            Layer::Act(Activation::Relu) => graph.relu(x).map_err(tag)?,
            Layer::Act(Activation::LeakyRelu(slope)) => graph.leaky_relu(x, *slope).map_err(tag)?,
            Layer::AvgPool2 => graph.avg_pool2(x).map_err(tag)?,
            Layer::Upsample2 => graph.upsample2(x).map_err(tag)?,
            Layer::PushSkip => {
                skips.push(x);
                x
            }
            Layer::ConcatSkip => {
                let skip = skips.pop().expect("validated by output_shape");
                graph.concat(&[x, skip]).map_err(tag)?
            }
            Layer::GlobalMean => graph.spatial_mean(x).map_err(tag)?,
            Layer::Dense { name, bias, .. } => {
                let y = graph.matmul(x, params.get(&format!("{name}.weight"))?).map_err(tag)?;
                if *bias {
                    graph.bias_add(y, params.get(&format!("{name}.bias"))?).map_err(tag)?
                } else {
                    y
                }
            }
            Layer::AddInput => graph.add(x, input).map_err(tag)?,
        };
    }
    Ok(x)
}

/// Evaluates `spec` on `batch` without tracking gradients.
pub fn forward<T: Real>(spec: &NetworkSpec, params: &ParamStore<T>, batch: &Tensor<T>) -> Result<Tensor<T>> {
    let graph = Graph::new();
    let bound = params.bind(&graph, false);
    let x = graph.constant(batch.clone());
    let y = apply_network(spec, &bound, &graph, x)?;
    Ok(graph.value(y))
}
