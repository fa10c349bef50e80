//! Return-time statistics over nonconventional index arrays.
//!
//! The objects of study are sums of the form
//!
//! ```text
//!     S_N = sum_{n=1}^{N}  prod_{j=1}^{ell} 1_Gamma( xi_{ q_j(n, N) } )
//! ```
//!
//! where `xi` is a stationary finite-alphabet sequence (i.i.d. or Markov, or a
//! symbolic shift system observed through cylinder sets) and `q_1, .., q_ell`
//! is a family of index maps, polynomial in both the summation index `n` and
//! the horizon `N`.  Under combinatorial non-degeneracy conditions on the
//! family and mixing conditions on the sequence, `S_N` is asymptotically
//! Poisson in the rare-event regime, and the count of `Gamma`-returns before
//! the first `Delta`-return is asymptotically geometric.
//!
//! This crate provides, in matching pairs of "simulate it" and "bound it":
//!
//! * [`q_families`] — index-map families: evaluation, the three combinatorial
//!   non-degeneracy checks, and the derived index sets used by the bounds.
//! * [`processes`] — finite-alphabet i.i.d. and Markov models, exact and
//!   brute-force interdependence (psi) coefficients, and a doubled-letter
//!   counterexample model whose psi profile does not exist.
//! * [`shift_space`] — cylinder-set machinery for symbolic shifts: overlap
//!   exponents of words, shifted-tail measures, and entropy-like decay fits.
//! * [`statistics`] — the statistics themselves, Monte Carlo estimation of
//!   their laws (data-parallel when the `parallel` feature is on), exact
//!   enumeration for small systems, and total-variation distances.
//! * [`bounds`] — fully explicit Chen–Stein-style error bounds for the
//!   Poisson and geometric approximations, in both process and shift form,
//!   with per-term breakdowns and a grid optimizer for the cutoff parameters.
//!
//! Everything is deterministic given the configured seed: Monte Carlo uses
//! one counter-derived stream per trial, so results do not depend on thread
//! count or scheduling.

pub mod bounds;
pub mod par;
pub mod processes;
pub mod q_families;
pub mod shift_space;
pub mod statistics;

use thiserror::Error;

/// Crate-wide error type.
///
/// `Config` errors mean the input description is invalid; the remaining
/// variants are structural failures detected while running a valid request.
#[derive(Debug, Error)]
pub enum Error {
    /// An index map evaluated to a negative value, which cannot address a
    /// trajectory coordinate.  Reports which map, at which point.
    #[error("index map q_{i} evaluates to {value} < 0 at n = {n}, N = {big_n}; index maps must be nonnegative on 0 <= n <= N")]
    NegativeIndex {
        i: usize,
        n: u64,
        big_n: u64,
        value: num_bigint::BigInt,
    },

    /// An index map value does not fit the addressable range for paths.
    #[error("index map q_{i} evaluates to {value} at n = {n}, N = {big_n}, beyond the addressable path range")]
    IndexOverflow {
        i: usize,
        n: u64,
        big_n: u64,
        value: num_bigint::BigInt,
    },

    /// A brute-force enumeration would exceed the configured work cap.
    #[error("{what} requires {required:.3e} elementary units, above the cap of {cap:.3e}")]
    Intractable {
        what: &'static str,
        required: f64,
        cap: f64,
    },

    /// A sampled or supplied trajectory is shorter than the statistic needs.
    #[error("trajectory of length {have} is too short: the statistic reads coordinate {max_coordinate}, so length >= {required} is required")]
    PathTooShort {
        have: usize,
        required: usize,
        max_coordinate: u64,
    },

    /// The interdependence coefficient is not available for this model.
    #[error("psi profile unavailable: {reason}")]
    PsiUnavailable { reason: String },

    /// The long-range cutoff R violates the feasibility constraint of the
    /// third Chen–Stein term: psi at the separation must stay below
    /// 2^(1/(ell+1)) - 1.
    #[error("infeasible cutoff: psi({separation}) = {psi_value:.6e} >= 2^(1/(ell+1)) - 1 = {limit:.6e} (ell = {ell})")]
    InfeasiblePsi {
        separation: u64,
        psi_value: f64,
        limit: f64,
        ell: u32,
    },

    /// No grid point satisfied the feasibility constraints of the optimizer.
    #[error("no feasible (M, R) grid point: {reason}")]
    NoFeasibleParams { reason: String },

    /// Invalid model, word, family, or run description.
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// Shortcut for configuration errors.
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Work cap for brute-force enumerations (trajectory enumeration, atom-pair
/// psi estimation): requests above this are rejected as intractable.
pub const ENUMERATION_CAP: f64 = 1.0e7;
