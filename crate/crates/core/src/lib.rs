//! Preference optimization over the Pareto set of strongly convex objectives
//! by Pareto majorization-minimization (PMM).
//!
//! Objectives `f_1..f_n` on `R^d` define scalarizations `f_beta = sum beta_i f_i`
//! for weights `beta` in the simplex. Their minimizers `x*(beta)` trace the
//! Pareto set, and [`pmm::pmm_solve`] minimizes a preference `f0(x*(beta))`
//! over the weights, certifying approximate stationarity when it stops.

pub mod baselines;
pub mod error;
pub mod function;
pub mod instances;
pub mod linalg;
pub mod manifold;
pub mod oracle;
pub mod pmm;
pub mod problem;
pub mod problem_file;
pub mod simplex;

pub use error::{Error, Result};

/// The guide's code samples, compiled and run as doc-tests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/problems.md")]
    struct Problems;
    #[doc = include_str!("../../../book/src/simplex.md")]
    struct Simplex;
    #[doc = include_str!("../../../book/src/pareto-set.md")]
    struct ParetoSet;
    #[doc = include_str!("../../../book/src/solver.md")]
    struct Solver;
    #[doc = include_str!("../../../book/src/baselines.md")]
    struct Baselines;
    #[doc = include_str!("../../../book/src/oracles.md")]
    struct Oracles;
}
