//! Exact p-Wasserstein barycenters of discrete probability measures.
//!
//! For measures `μ_1, …, μ_N` on `R^d`, positive weights `λ_i` summing to one
//! and an exponent `1 < p < ∞`, the barycenter problem asks for the measure
//! minimizing `Σ_i λ_i W_p^p(μ_i, ν)`. On discrete data this is equivalent to
//! a multi-marginal linear program with cost
//! `c_p(x_1, …, x_N) = min_z Σ_i λ_i |x_i − z|^p`, and the barycenter is the
//! pushforward of the optimal coupling under the pointwise minimizer
//! `x̄_p(x_1, …, x_N)`.
//!
//! The crate solves both formulations exactly and cross-checks them:
//!
//! * [`pbarycenter`] — the pointwise problem: damped fixed-point solver for
//!   `x̄_p`, its convex-combination weights, and the `p → 1` / `p → ∞` limits.
//! * [`mmot`] — the multi-marginal LP on the transportation polytope, solved
//!   by a revised simplex with column generation, plus the pushforward to the
//!   barycenter measure.
//! * [`twomarg`] — plain two-marginal `W_p` solves, the coupled objective
//!   `Σ λ_i W_p^p(μ_i, ν)` for arbitrary candidates, and the pairwise plans
//!   induced by a multi-marginal plan.
//! * [`duality`] — Kantorovich potentials: the `λ|·|^p`-conjugate transform,
//!   potential improvement, dual values, the first-order optimality system
//!   and reconstruction of the per-marginal transport maps.
//! * [`onedim`] — exact one-dimensional solutions through quantile functions,
//!   including the median (`p → 1`) and midrange (`p → ∞`) limits and CSV
//!   data generation for the Gaussian demo configurations.
//! * [`verify`] — structural diagnostics on plans: pairwise swap
//!   monotonicity, singular-entry classification, and graph structure.
//! * [`measures`] — the discrete-measure data model, CSV/JSON ingestion,
//!   Gaussian quantile discretization and generalized inverse CDFs.

use thiserror::Error;

pub mod duality;
pub mod measures;
pub mod mmot;
pub mod onedim;
pub mod pbarycenter;
pub mod twomarg;
pub mod verify;

pub(crate) mod simplex;
pub(crate) mod vecmath;

/// Error variants shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A record in an input stream could not be parsed.
    #[error("malformed record: {0}")]
    Parse(String),

    /// An input violates a documented precondition.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Weights summed to something too far from one to renormalize.
    #[error("weight sum {0} deviates from 1 by more than {1}")]
    WeightSum(f64, f64),

    /// Points or measures of different ambient dimensions were mixed.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A marginal or entry index was out of range.
    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    /// The implicit variable count of a linear program exceeds the budget.
    #[error("variable budget exceeded: {vars} > {budget}")]
    VariableBudget { vars: u128, budget: u128 },

    /// An iterative solver exhausted its iteration budget.
    #[error("solver failed to converge within {0} iterations")]
    NonConvergence(usize),

    /// The LP reported infeasibility; valid marginals always admit a plan,
    /// so this indicates an internal defect.
    #[error("linear program infeasible (internal error)")]
    Infeasible,

    /// Dual potentials violate the feasibility constraint beyond tolerance.
    #[error("infeasible potentials: constraint violated by {0}")]
    InfeasiblePotentials(f64),

    /// I/O failure while reading or writing artifacts.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Result type used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
