//! Dense tensors with reverse-mode automatic differentiation.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_grad, max_relative_error, relative_error, RELATIVE_ERROR_FLOOR};
pub use tape::{elu, leaky_relu, segment_softmax_values, Axis, Gradients, NonFinite, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("loss must be 1x1, got {}x{}", shape[0], shape[1])]
    NonScalarLoss { shape: [usize; 2] },
    #[error("segment {0} has no entries")]
    EmptySegment(usize),
    #[error("non-finite value produced at {0}")]
    NonFinite(NonFinite),
}
