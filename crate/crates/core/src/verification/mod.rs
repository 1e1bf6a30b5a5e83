//! Independent checks: an exact oracle for small affine games and
//! randomized property batteries.

pub mod checks;
pub mod kkt;
pub mod oracle;

pub use checks::{
    check_g_cocoercive, check_phi_monotone, gradient_check, min_penalty_gap, penalty_gap, GradientReport, Sampler,
};
pub use oracle::{check_is_gne, oracle_solve, GroundTruth};
