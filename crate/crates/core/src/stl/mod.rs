//! Signal temporal logic over discrete-time signals.
//!
//! Formulas are built from region-membership or affine atoms, boolean
//! connectives, and the bounded temporal operators `F` (finally), `G`
//! (globally) and `U` (until). Time is discrete with unit step; interval
//! bounds are step counts.

mod ast;
pub mod generate;
mod parse;
mod semantics;
mod token;

pub use ast::{Formula, Interval, Predicate, Signal};
pub use parse::{parse, render_canonical, ParseError};
pub use semantics::{robustness, satisfies, smooth_robustness, EvalError};
pub use token::{linearize, TokenError, TokenStream, TraversalStyle, Vocab, WordForm};
