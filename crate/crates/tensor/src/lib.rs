//! Dense tensors and a tape-based reverse-mode differentiation engine with
//! the operator set needed by Inception-style convolutional networks.
//!
//! A [`Graph`] records one forward pass. Parameters enter as trainable
//! leaves, every operation appends a node, and [`Graph::backward`] sweeps the
//! tape in reverse to fill the gradient slots of the leaves.
//!
//! ```
//! use cmi_tensor::{Graph, Tensor};
//!
//! let mut g = Graph::<f64>::new();
//! let x = g.param(Tensor::new([3], vec![1.0, 2.0, 3.0]).unwrap());
//! let sq = g.mul(x, x).unwrap();
//! let loss = g.sum(sq).unwrap();
//! g.backward(loss).unwrap();
//! assert_eq!(g.grad(x).unwrap(), &[2.0, 4.0, 6.0]);
//! ```

mod element;
mod error;
pub mod gradcheck;
mod graph;
pub mod ops;
mod optim;
mod tensor;

pub use element::{Element, Layout};
pub use error::{Result, TensorError};
pub use graph::{Graph, Var};
pub use ops::conv::{output_extent, Conv2dSpec};
pub use ops::norm::{ChannelStats, NormMode};
pub use ops::pool::Pool2dSpec;
pub use optim::{sgd_step, Sgd};
pub use tensor::Tensor;
