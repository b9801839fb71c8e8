//! Covariate balancing weights along a regularization path.
//!
//! Weights come from penalized logistic balancing losses fitted with a
//! proximal Newton solver, warm-started from `λ_max` down to a requested
//! maximum imbalance. See the `examples/` directory for end-to-end usage.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifact;
pub mod bench;
pub mod cli;
pub mod cv;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod family;
pub mod hexfloat;
pub mod path;
pub mod penalty;
pub mod plot;
pub mod solver;

pub use data::{load_csv, standardize, Dataset, FeatureGroups, Matrix, StandardizedDesign, Target};
pub use diagnostics::{report, DiagnosticsReport};
pub use error::{BalError, Result};
pub use family::{ArmConfig, ArmLabel};
pub use path::{fit_balnet, BalNetFit, LambdaSequence, PathFit, PathOptions};
pub use penalty::PenaltySpec;
pub use solver::{kkt_check, solve_single, Solution, SolverConfig};
