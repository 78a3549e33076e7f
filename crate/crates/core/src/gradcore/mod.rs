//! Dense `f64` tensors with tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation of one forward evaluation. Leaves are
//! created with [`Graph::param`] (trainable) or [`Graph::constant`]; derived
//! nodes come from the methods on [`Var`]. Binary operations accept equal
//! shapes or broadcasting along the leading (batch) dimension only:
//! `[B, rest..] ∘ [rest..]`.
//!
//! ```
//! use ssadvae::gradcore::{Graph, Tensor};
//!
//! let g = Graph::new();
//! let x = g.param(&Tensor::scalar(3.0));
//! let y = x.square();
//! g.backward(y).unwrap();
//! assert_eq!(g.grad(x).unwrap().data(), &[6.0]);
//! ```

mod check;
mod graph;
mod tensor;

pub use check::{finite_diff_check, GradCheckError};
pub use graph::{BinaryOp, Graph, NodeId, ReduceOp, UnaryOp, Var};
pub use tensor::Tensor;


#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("buffer of length {len} does not fit shape {shape:?}")]
    BufferLength { shape: Vec<usize>, len: usize },
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("axis {axis} out of range for rank {rank}")]
    InvalidAxis { axis: usize, rank: usize },
    #[error("backward needs a single-element output, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("node belongs to a different graph")]
    ForeignNode,
}

/// Plain-slice `log Σ exp` with the max shift; `-∞` for empty or all-`-∞` input.
pub fn logsumexp_slice(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}
