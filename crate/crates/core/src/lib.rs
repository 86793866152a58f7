//! Augmented Lagrangians for small constrained problems.
//!
//! The crate evaluates augmented Lagrangians (closed form or by a numerical
//! inner infimum), certifies augmented Lagrange multipliers on grids and by
//! global search, estimates least exact penalty parameters, runs KKT and
//! second-order checks, and applies the localization principle: local
//! multipliers at every global solution plus a compactness-type side
//! condition give a global multiplier.
//!
//! Every certificate here is grid- or search-based. A `Fails` verdict carries
//! an explicit witness; a `Holds` verdict means no violation was found at the
//! recorded resolution.

// `!(a < b)` is used on purpose so NaN inputs are rejected; float guards
// read better than float literal patterns.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::redundant_guards, clippy::needless_range_loop)]

pub mod catalog;
pub mod certificates;
pub mod error;
pub mod expr;
pub mod kkt;
pub mod lagrangian;
pub mod linalg;
pub mod localization;
pub mod problem;
pub mod report;
pub mod search;

pub use error::{Error, Result};
pub use lagrangian::{
    AugmentingFunction, EvaluatorMode, ExtendedValue, LagrangianEvaluator, MultiplierVector, PenaltyRestriction,
};
pub use problem::{FeasibleRegion, ProblemSpec};
pub use search::{Execution, SearchConfig, SearchResult, SearchStatus};
