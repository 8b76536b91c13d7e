//! Reverse-mode automatic differentiation over dense NCHW arrays.
//!
//! A [`Graph`] records primitive operations as they are evaluated (define by
//! run). [`Graph::backward`] returns plain gradient tensors; on graphs created
//! with [`Graph::with_higher_order`], [`Graph::grad_nodes`] records the
//! backward pass itself as graph nodes so that gradients can be differentiated
//! again. That second-order path is what a gradient penalty on a critic needs:
//! `‖∇ₓD(x)‖` becomes an ordinary node whose parameter gradients are available.
//!
//! ```
//! use texgan_tensor::{Graph, Tensor};
//!
//! let g = Graph::<f64>::new();
//! let x = g.variable("x", Tensor::scalar(3.0));
//! let y = g.square(x).unwrap();
//! let grads = g.backward(y, &[x]).unwrap();
//! assert_eq!(grads[0].item(), 6.0);
//! ```

mod backward;
mod check;
mod error;
mod graph;
mod kernels;
mod real;
mod tensor;

pub use check::{finite_diff_gradient, max_relative_error};
pub use error::{Result, TensorError};
pub use graph::{Graph, Var};
pub use kernels::{conv2d_output_size, ConvGeometry};
pub use real::Real;
pub use tensor::Tensor;
