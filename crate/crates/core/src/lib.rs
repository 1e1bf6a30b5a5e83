//! Decomposable penalty method for generalized Nash games with joint
//! constraints.
//!
//! The joint budget `b` is split into player shares `u`; for fixed shares a
//! penalized Nash game is solved, and the shares are updated by a projection
//! step on the master mapping `g(u)`. An outer loop drives the penalty
//! parameter up.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod accel;
pub mod benchmarks;
pub mod continuation;
pub mod error;
pub mod game;
pub mod io;
pub mod master;
pub mod nep;
pub mod penalty;
pub mod validate;
pub mod verification;

pub use continuation::{solve_gnep, solve_gnep_from, ContinuationConfig, GnepReport, RunStatus, TauSchedule};
pub use error::{ModelError, OracleError, SolveError};
pub use game::{Game, JointConstraints, PlayerSpec, StrategyProfile};
pub use master::{solve_master, MasterConfig, MasterResult};
pub use nep::{solve_nep, NepConfig, NepResult};
pub use penalty::{PenaltyFunction, PenaltyKind, QuadraticPlus, ShareAllocation, ShareFlags};
