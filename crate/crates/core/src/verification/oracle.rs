//! Ground truth for small affine games and an a-posteriori equilibrium test.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::OracleError;
use crate::game::{Game, StrategyProfile};
use crate::verification::kkt::{AffineVi, BoundState};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActiveBound {
    pub player: usize,
    pub coord: usize,
    pub side: BoundState,
}

/// The unique normalized equilibrium with its shared multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub x_star: StrategyProfile,
    pub lambda_star: DVector<f64>,
    pub active_joint: Vec<usize>,
    pub active_bounds: Vec<ActiveBound>,
    pub residual: f64,
}

/// Enumerates the KKT system of the normalized equilibrium.
///
/// Fails with [`OracleError::NonUnique`] when more than one distinct point
/// exists and with [`OracleError::Degenerate`] when the only point sits on a
/// singular system that leaves `x` undetermined.
pub fn oracle_solve(game: &Game) -> Result<GroundTruth, OracleError> {
    let vi = AffineVi::normalized_equilibrium(game)?;
    let outcome = vi.enumerate()?;
    let point = match outcome.points.as_slice() {
        [] => return Err(OracleError::NoCandidate),
        [p] => p,
        many => return Err(OracleError::NonUnique { count: many.len() }),
    };
    if point.degenerate {
        return Err(OracleError::Degenerate);
    }
    // Active sets are read off the solution, not off the enumeration
    // pattern: a bound can be touched with a zero multiplier.
    let tol = 1e-9 * (1.0 + point.x.amax());
    let offsets = game.offsets();
    let mut active_bounds = Vec::new();
    for k in 0..game.dim() {
        let side = if (point.x[k] - game.lower()[k]).abs() <= tol {
            BoundState::Lower
        } else if (point.x[k] - game.upper()[k]).abs() <= tol {
            BoundState::Upper
        } else {
            continue;
        };
        let player = offsets.partition_point(|&o| o <= k) - 1;
        active_bounds.push(ActiveBound {
            player,
            coord: k - offsets[player],
            side,
        });
    }
    let slack = &vi.h - &vi.g * &point.x;
    let active_joint = (0..slack.len()).filter(|&t| slack[t].abs() <= tol * (1.0 + vi.h[t].abs())).collect();
    Ok(GroundTruth {
        x_star: game.profile(point.x.clone())?,
        lambda_star: point.lambda.clone(),
        active_joint,
        active_bounds,
        residual: point.residual,
    })
}

/// Largest unilateral gain available to each player at `x`:
/// `max_{y_i ∈ D_i(x_{−i})} f_i(y_i, x_{−i}) − f_i(x)`.
///
/// Penalty solutions violate the joint constraints slightly, which can leave
/// some `D_i(x_{−i})` empty. The budget is therefore relaxed by the joint
/// residual of `x` itself, `b + [Σ_j h_j(x_j) − b]_+`, so that `x_i` is always
/// feasible for its own problem and every gain is non-negative. At a
/// feasible `x` this is the exact definition. An empty best-response set
/// (possible only for `x ∉ X`) yields `+∞`.
pub fn check_is_gne(game: &Game, x: &DVector<f64>) -> Result<Vec<f64>, OracleError> {
    let slack = game.joint_residual(x)?;
    let base = (0..game.num_players())
        .map(|i| game.payoff(i, x))
        .collect::<Result<Vec<_>, _>>()?;
    let mut gains = Vec::with_capacity(game.num_players());
    for (i, fi) in base.into_iter().enumerate() {
        let mut vi = AffineVi::best_response(game, i, x)?;
        vi.h += &slack;
        let outcome = vi.enumerate()?;
        let best = outcome
            .points
            .iter()
            .map(|p| {
                let mut y = x.clone();
                y.rows_range_mut(game.block(i)).copy_from(&p.x);
                game.payoff(i, &y)
            })
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        gains.push(if best == f64::NEG_INFINITY { f64::INFINITY } else { best - fi });
    }
    Ok(gains)
}
