//! Minimal reverse-mode automatic differentiation over dense 2D arrays.
//!
//! A [`Tape`] owns every tensor produced during a computation; ops evaluate
//! eagerly and record enough structure to backpropagate. Reductions run in a
//! fixed sequential order, so identical inputs give bitwise-identical
//! results regardless of thread count (tapes are single-threaded; run one
//! tape per worker for data parallelism).

mod grad_check;
mod tape;

pub use grad_check::grad_check;
pub use tape::{Real, Shape, Tape, TensorId};
