use thiserror::Error;

/// Problems with game data: shapes, convexity, feasibility of the share set.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("player index {0} out of range")]
    NoSuchPlayer(usize),
    #[error("{0} is not symmetric")]
    Asymmetric(String),
    #[error("{what} is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPsd { what: String, min_eig: f64 },
    #[error("player {player}: lower bound exceeds upper bound at coordinate {coord}")]
    InvertedBox { player: usize, coord: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("the common feasible set D is empty")]
    EmptyFeasibleSet,
    #[error("share set is empty: {0}")]
    InfeasibleShareSet(String),
    #[error("invalid game: {0}")]
    Invalid(String),
}

/// Failures of the iterative solvers that cannot be expressed as a
/// non-converged result.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error(
        "inner NEP solve failed at tau={tau:.3e} (master iteration {master_iter}): \
         residual {residual:.3e} after {iters} iterations"
    )]
    InnerFailure {
        tau: f64,
        master_iter: usize,
        residual: f64,
        iters: usize,
    },
}

/// Failures of the active-set enumeration oracle.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("enumeration budget exceeded (n={n}, constraints={rows}; limits n<=12, m<=4)")]
    BudgetExceeded { n: usize, rows: usize },
    #[error("oracle requires affine joint constraints")]
    NonAffine,
    #[error("no KKT candidate passed (empty feasible set or nonconvex data)")]
    NoCandidate,
    #[error("{count} distinct KKT points found; the equilibrium is not unique")]
    NonUnique { count: usize },
    #[error("singular KKT system at the solution: a continuum of equilibria is possible")]
    Degenerate,
    #[error(transparent)]
    Solve(#[from] SolveError),
}
