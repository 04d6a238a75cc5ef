//! Minimal differentiable operator set: convolution (grouped, strided, dilated), batch
//! norm, activations, broadcast element-wise ops and channel concatenation, all over a
//! reverse-mode [`Graph`].

pub mod checkpoint;
pub mod conv;
pub mod gradcheck;
pub mod graph;
pub mod norm;
pub mod ops;
pub mod params;
pub mod scalar;
pub mod tensor;

pub use conv::{conv2d_backward, conv2d_forward, effective_kernel, ConvGrads, ConvSpec};
pub use gradcheck::{GradCheck, GradReport};
pub use graph::{Gradients, Graph, NormMode, Var};
pub use norm::{batch_norm, BatchNormState};
pub use ops::{activation, concat_channels, conv2d, elementwise, sigmoid, Activation, Binary};
pub use params::{fan_in_normal, NormId, NormLayer, NormUpdate, ParamId, ParamStore, Parameter};
pub use scalar::{DType, Scalar};
pub use tensor::{Tensor, TensorF};
