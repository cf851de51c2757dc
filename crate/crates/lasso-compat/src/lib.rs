//! Exact Lasso solutions and compatibility constants on structured designs.
//!
//! Everything in this crate is a function of a Gram matrix `Sigma = X'X`:
//! the noiseless Lasso
//!
//! ```text
//!     minimize  (b - b0)' Sigma (b - b0) + 2 lambda |b|_1
//! ```
//!
//! its noisy counterpart `|Y - Xb|_2^2 + 2 lambda |b|_1`, the compatibility
//! constant
//!
//! ```text
//!     phi2(L, S) = min { |S| b' Sigma b : |b_S|_1 = 1, |b_{-S}|_1 <= L }
//! ```
//!
//! and the prediction-error bounds built from it. The [`gram`] module
//! constructs a catalog of parametric design families for which all of these
//! quantities have closed forms; [`oracle`] evaluates those closed forms,
//! [`solver`] solves the same problems numerically with a KKT certificate,
//! [`compat`] computes compatibility constants and restricted eigenvalues by
//! sign-orthant enumeration, [`bounds`] evaluates the upper bounds and their
//! gaps, and [`noisy`] runs seeded Monte Carlo coverage experiments for the
//! high-probability bounds linking the noisy solution to the noiseless one.

pub mod bounds;
pub mod compat;
pub mod gram;
pub mod noisy;
pub mod oracle;
pub mod scenario;
pub mod solver;

pub use bounds::{gap_report, BoundReport};
pub use compat::{compatibility, extreme_eigenvalues, restricted_eigenvalue, CompatReport};
pub use gram::{build_gram, check_fair, factorize, DesignFactor, DesignSpec, GramMatrix};
pub use noisy::{coverage, CoverageReport, NoisyConfig};
pub use oracle::{closed_form, closed_form_family_constants, FamilyConstants, OracleSolution};
pub use scenario::{load_catalog, Scenario};
pub use solver::{
    kkt_residual, solve_noiseless, solve_noisy, uniqueness_probe, LassoSolution, ProblemInstance,
};
