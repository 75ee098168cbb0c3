//! Entropy-regularized bridges and flow interpolation on directed graphs.
//!
//! The crate solves the following problem family: a Markov chain on the nodes
//! of a directed graph (the *prior*) describes how mass would spread on its
//! own, and we are given information about where the mass actually was at the
//! initial time and where it ended up at the final time. The information may
//! be complete (a full distribution), partial (masses on a subset of nodes,
//! summing to less than one), or aggregate (first or second moments only).
//! The solver returns the law closest to the prior in relative entropy among
//! all laws consistent with the data, together with the time evolution of
//! node masses and edge flows it induces.
//!
//! Modules:
//!
//! * [`graph`] — directed graphs, path counting/enumeration, Perron eigendata.
//! * [`prior`] — reference Markov laws: Boltzmann (edge-length weighted),
//!   Ruelle–Bowen (entropy-maximizing), and user-supplied chains.
//! * [`hilbert`] — Hilbert projective metric between positive vectors, the
//!   convergence gauge for the bridge iterations.
//! * [`bridge`] — half bridges and the iterative solver for partially
//!   observed endpoint marginals, plus flow recovery over the horizon.
//! * [`moments`] — endpoint constraints given as means/second moments,
//!   solved by dual ascent or by a polynomial root-finding iteration.
//! * [`oracle`] — small brute-force solvers (constrained minimization over
//!   the full joint simplex, exhaustive path tables) used for verification.
//! * [`io`] — JSON input formats for graphs, priors, and constraints.

pub mod bridge;
pub mod graph;
pub mod hilbert;
pub mod io;
pub mod moments;
pub mod oracle;
pub mod prior;

#[cfg(test)]
pub(crate) mod testutil;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Graph construction or validation failed.
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    /// An operation required strong connectivity and the graph lacks it.
    #[error("graph is not strongly connected")]
    NotStronglyConnected,

    /// Path enumeration would exceed the configured cap.
    #[error("path enumeration cap exceeded: more than {cap} paths")]
    PathEnumerationCap { cap: usize },

    /// Integer overflow while counting paths.
    #[error("path count overflow at horizon {t}")]
    PathCountOverflow { t: usize },

    /// A distribution, kernel, or marginal failed validation.
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// Prior construction failed (bad temperature, empty walk set, ...).
    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    /// A time index was outside the horizon.
    #[error("time window [{s}, {t}] not valid for horizon {horizon}")]
    TimeOutOfRange { s: usize, t: usize, horizon: usize },

    /// Reverse-kernel row requested at a state with zero final mass.
    #[error("reverse kernel undefined at state {state}: zero final mass")]
    UndefinedReverseRow { state: usize },

    /// Hilbert metric arguments must be nonnegative and not identically zero.
    #[error("hilbert metric undefined: {0}")]
    DegenerateVector(String),

    /// An iterative method ran out of its iteration budget.
    #[error("{method} did not converge within {iterations} iterations (last gap {gap:.3e})")]
    NonConvergence {
        method: &'static str,
        iterations: usize,
        gap: f64,
    },

    /// The bridge iteration stopped making progress (zero-entry kernels).
    #[error("bridge iteration stalled after {iterations} iterations (gap {gap:.3e} not decreasing)")]
    Stalled { iterations: usize, gap: f64 },

    /// The constraints admit no law with finite relative entropy.
    #[error("infeasible constraints: {0}")]
    Infeasible(String),

    /// Moment targets outside the achievable set.
    #[error("infeasible moment targets: {0}")]
    InfeasibleMoments(String),

    /// Polynomial root-finding precondition violated.
    #[error("coefficient sequence has {sign_changes} sign changes, need exactly 1")]
    DescartesPrecondition { sign_changes: usize },

    /// Brute-force oracle received an instance above its size cap.
    #[error("oracle instance too large: {0}")]
    InstanceTooLarge(String),

    /// File I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON parse failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// An input file parsed but did not describe a valid problem.
    #[error("invalid input spec: {0}")]
    InvalidSpec(String),
}

pub type Result<T> = std::result::Result<T, Error>;
