//! Lower-level penalized Nash equilibrium problem.
//!
//! For fixed shares `u` and penalty `τ`, every player maximizes
//! `f̃_i = f_i − τ P_i(x_i, u_i)` over its box. The stacked map
//! `F̃(x) = F(x) + τ ∇_x P(x, u)` is monotone whenever `F` is, and the
//! equilibrium is a zero of the natural residual over `X`. It is computed by
//! the extragradient method with Armijo-type step reduction
//! (`β‖F̃(x) − F̃(y)‖ ≤ θ‖x − y‖`). Two optional candidate generators speed
//! it up at large `τ`, where the extragradient method needs `O(τ)` steps:
//! Anderson extrapolation of the extragradient map and a semismooth Newton
//! step on the natural residual. Either candidate is taken only when it
//! lowers the residual below the best seen so far; otherwise the plain
//! extragradient step is used, so the convergence guarantee is unchanged.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::accel::Anderson;
use crate::error::{ModelError, SolveError};
use crate::game::{Game, StrategyProfile};
use crate::penalty::{add_penalty_gradient, add_penalty_jacobian, PenaltyFunction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NepConfig {
    /// Stopping tolerance on the unit-step natural residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial extragradient step β.
    pub step0: f64,
    /// Backtracking factor in (0, 1).
    pub backtrack: f64,
    /// Acceptance parameter θ ∈ (0, 1).
    pub theta: f64,
    /// Anderson memory; 0 disables extrapolation.
    pub anderson_memory: usize,
    /// Try a semismooth Newton step before each extragradient step.
    pub newton: bool,
}

impl Default for NepConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 50_000,
            step0: 1.0,
            backtrack: 0.5,
            theta: 0.9,
            anderson_memory: 8,
            newton: true,
        }
    }
}

impl NepConfig {
    /// Extragradient only, no candidates.
    pub fn plain() -> Self {
        Self {
            anderson_memory: 0,
            newton: false,
            ..Self::default()
        }
    }
}

impl NepConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.tol > 0.0) {
            return Err(SolveError::Config("nep tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(SolveError::Config("nep max_iter must be at least 1".into()));
        }
        if !(self.step0 > 0.0) {
            return Err(SolveError::Config("nep step0 must be positive".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(SolveError::Config("nep backtrack factor must lie in (0,1)".into()));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(SolveError::Config("nep theta must lie in (0,1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NepResult {
    pub x: StrategyProfile,
    /// Unit-step natural residual at `x`.
    pub residual: f64,
    pub iters: usize,
    pub converged: bool,
    /// Last accepted extragradient step.
    pub step: f64,
}

/// Penalized map `F̃(x) = F(x) + τ ∇_x P(x, u)`.
pub fn penalized_map(
    game: &Game,
    phi: &dyn PenaltyFunction,
    tau: f64,
    u: &DMatrix<f64>,
    x: &DVector<f64>,
) -> Result<DVector<f64>, ModelError> {
    game.check_profile(x)?;
    check_shares(game, u)?;
    let mut out = DVector::zeros(game.dim());
    map_into(game, phi, tau, u, x, &mut out);
    Ok(out)
}

fn check_shares(game: &Game, u: &DMatrix<f64>) -> Result<(), ModelError> {
    if u.nrows() != game.num_players() || u.ncols() != game.m() {
        return Err(ModelError::DimensionMismatch {
            what: "share matrix (l*m)".into(),
            expected: game.num_players() * game.m(),
            got: u.nrows() * u.ncols(),
        });
    }
    Ok(())
}

fn map_into(
    game: &Game,
    phi: &dyn PenaltyFunction,
    tau: f64,
    u: &DMatrix<f64>,
    x: &DVector<f64>,
    out: &mut DVector<f64>,
) {
    game.pseudo_gradient_into(x, out);
    if tau != 0.0 {
        add_penalty_gradient(game, phi, tau, x, u, out);
    }
}

/// Semismooth Newton direction for `r(x) = x − P_X(x − s F̃(x))` with
/// `s = 1/‖J‖_∞`. The zeros do not depend on `s`, but the scaled map picks a
/// far better clamping pattern than the unit step when `τ` is large.
/// Clamped rows pin the coordinate to its bound, free rows use `J_F̃`.
fn newton_direction(
    game: &Game,
    phi: &dyn PenaltyFunction,
    tau: f64,
    u: &DMatrix<f64>,
    x: &DVector<f64>,
    fx: &DVector<f64>,
) -> Option<DVector<f64>> {
    let n = x.len();
    let mut jac = game.response_matrix().clone();
    if !add_penalty_jacobian(game, phi, tau, x, u, &mut jac) {
        return None;
    }
    let norm = (0..n).map(|r| jac.row(r).abs().sum()).fold(0.0, f64::max);
    let s = if norm > 0.0 { 1.0 / norm } else { 1.0 };
    let mut rhs = -fx;
    for k in 0..n {
        let z = x[k] - s * fx[k];
        let p = z.max(game.lower()[k]).min(game.upper()[k]);
        if p != z {
            jac.row_mut(k).fill(0.0);
            jac[(k, k)] = 1.0;
            rhs[k] = p - x[k];
        }
    }
    let d = jac.lu().solve(&rhs)?;
    d.iter().all(|v| v.is_finite()).then_some(d)
}

fn natural_residual(game: &Game, x: &DVector<f64>, fx: &DVector<f64>, beta: f64) -> f64 {
    let mut acc = 0.0;
    for k in 0..x.len() {
        let p = (x[k] - beta * fx[k]).max(game.lower()[k]).min(game.upper()[k]);
        acc += (x[k] - p).powi(2);
    }
    acc.sqrt()
}

/// Natural residual `‖x − Proj_X(x − β F̃(x))‖`.
pub fn nep_residual(
    game: &Game,
    phi: &dyn PenaltyFunction,
    tau: f64,
    u: &DMatrix<f64>,
    x: &DVector<f64>,
    beta: f64,
) -> Result<f64, ModelError> {
    let fx = penalized_map(game, phi, tau, u, x)?;
    Ok(natural_residual(game, x, &fx, beta))
}

/// Solves the penalized NEP from `x0` (projected onto `X` first).
///
/// Non-convergence is reported through [`NepResult::converged`].
pub fn solve_nep(
    game: &Game,
    phi: &dyn PenaltyFunction,
    tau: f64,
    u: &DMatrix<f64>,
    x0: &DVector<f64>,
    cfg: &NepConfig,
) -> Result<NepResult, SolveError> {
    cfg.validate()?;
    if !(tau > 0.0) {
        return Err(SolveError::Config("tau must be positive".into()));
    }
    game.check_profile(x0)?;
    check_shares(game, u)?;

    let n = game.dim();
    let mut x = x0.clone();
    game.project_in_place(&mut x);
    let mut fx = DVector::zeros(n);
    map_into(game, phi, tau, u, &x, &mut fx);
    let mut y = DVector::zeros(n);
    let mut fy = DVector::zeros(n);
    let mut plain = DVector::zeros(n);
    let mut beta = cfg.step0;
    let mut anderson = Anderson::new(cfg.anderson_memory);
    let mut best = f64::INFINITY;

    let mut residual = natural_residual(game, &x, &fx, 1.0);
    let mut iters = 0;
    while iters < cfg.max_iter {
        if residual <= cfg.tol {
            break;
        }
        best = best.min(residual);
        iters += 1;

        if cfg.newton {
            if let Some(d) = newton_direction(game, phi, tau, u, &x, &fx) {
                let mut fc = DVector::zeros(n);
                let mut t = 1.0;
                let mut accepted = false;
                for _ in 0..4 {
                    let mut candidate = &x + &d * t;
                    game.project_in_place(&mut candidate);
                    map_into(game, phi, tau, u, &candidate, &mut fc);
                    let rc = natural_residual(game, &candidate, &fc, 1.0);
                    if rc <= 0.99 * best {
                        x = candidate;
                        std::mem::swap(&mut fx, &mut fc);
                        residual = rc;
                        accepted = true;
                        break;
                    }
                    t *= 0.5;
                }
                if accepted {
                    anderson.reset();
                    continue;
                }
            }
        }

        // Prediction step with backtracking.
        loop {
            y.copy_from(&x);
            y.axpy(-beta, &fx, 1.0);
            game.project_in_place(&mut y);
            map_into(game, phi, tau, u, &y, &mut fy);
            let dx = (&x - &y).norm();
            if dx == 0.0 || beta * (&fx - &fy).norm() <= cfg.theta * dx {
                break;
            }
            beta *= cfg.backtrack;
            anderson.reset();
            if beta < f64::MIN_POSITIVE {
                break;
            }
        }
        // Correction step.
        plain.copy_from(&x);
        plain.axpy(-beta, &fy, 1.0);
        game.project_in_place(&mut plain);

        if let Some(mut candidate) = anderson.push(&x, &plain) {
            game.project_in_place(&mut candidate);
            let mut fc = DVector::zeros(n);
            map_into(game, phi, tau, u, &candidate, &mut fc);
            let rc = natural_residual(game, &candidate, &fc, 1.0);
            if rc <= 0.99 * best {
                x = candidate;
                fx = fc;
                residual = rc;
                continue;
            }
            anderson.reset();
        }
        std::mem::swap(&mut x, &mut plain);
        map_into(game, phi, tau, u, &x, &mut fx);
        residual = natural_residual(game, &x, &fx, 1.0);
    }

    Ok(NepResult {
        x: game.profile(x)?,
        residual,
        iters,
        converged: residual <= cfg.tol,
        step: beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks;
    use crate::penalty::QuadraticPlus;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn col(xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(xs.len(), 1, xs)
    }

    /// Closed-form scalar best response of `c x − ½x² − τ/2 [x − u]_+²` on `[0, 10]`.
    fn scalar_response(c: f64, tau: f64, u: f64) -> f64 {
        let x = if c > u { (c + tau * u) / (1.0 + tau) } else { c };
        x.clamp(0.0, 10.0)
    }

    #[test]
    fn penalized_map_examples() {
        let s1 = benchmarks::s1();
        let phi = QuadraticPlus;
        let u = col(&[0.5, 0.5]);
        let m = penalized_map(&s1, &phi, 1.0, &u, &v(&[0.75, 0.75])).unwrap();
        assert!(m.amax() < 1e-15);
        let m = penalized_map(&s1, &phi, 3.0, &u, &v(&[0.625, 0.625])).unwrap();
        assert!(m.amax() < 1e-15);
        let x = v(&[0.9, 0.2]);
        let off = penalized_map(&s1, &phi, 1e-300, &u, &x).unwrap();
        assert!((off - s1.pseudo_gradient(&x).unwrap()).amax() < 1e-15);
    }

    #[test]
    fn residual_examples() {
        let s1 = benchmarks::s1();
        let phi = QuadraticPlus;
        let u = col(&[0.5, 0.5]);
        assert_eq!(nep_residual(&s1, &phi, 1.0, &u, &v(&[0.75, 0.75]), 1.0).unwrap(), 0.0);
        let r = nep_residual(&s1, &phi, 1.0, &u, &v(&[1.0, 1.0]), 1.0).unwrap();
        assert!((r - 0.5 * 2f64.sqrt()).abs() < 1e-15);
        // Interior zero of the map.
        let s0 = benchmarks::s0();
        let r = nep_residual(&s0, &phi, 5.0, &col(&[2.0, 2.0]), &v(&[1.0, 1.0]), 0.3).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn solve_examples() {
        let phi = QuadraticPlus;
        for memory in [0, 8] {
            let cfg = NepConfig { anderson_memory: memory, newton: memory == 8, ..NepConfig::default() };
            let s1 = benchmarks::s1();
            let r = solve_nep(&s1, &phi, 1.0, &col(&[0.5, 0.5]), &v(&[0.0, 0.0]), &cfg).unwrap();
            assert!(r.converged);
            assert!((r.x.values() - v(&[0.75, 0.75])).amax() < 1e-9);

            let s0 = benchmarks::s0();
            for tau in [0.5, 1.0, 100.0] {
                let r = solve_nep(&s0, &phi, tau, &col(&[2.0, 2.0]), &v(&[3.0, 0.0]), &cfg).unwrap();
                assert!(r.converged);
                assert!((r.x.values() - v(&[1.0, 1.0])).amax() < 1e-9);
            }

            let s2 = benchmarks::s2();
            let r = solve_nep(&s2, &phi, 1.0, &col(&[0.75, 0.25]), &v(&[0.0, 0.0]), &cfg).unwrap();
            assert!(r.converged);
            assert!((r.x.values() - v(&[1.375, 0.625])).amax() < 1e-9);
        }
    }

    #[test]
    fn matches_scalar_closed_form_at_large_tau() {
        let phi = QuadraticPlus;
        let s2 = benchmarks::s2();
        let cfg = NepConfig::default();
        for &tau in &[10.0, 1e3, 1e4] {
            for &(u1, u2) in &[(0.3, 0.7), (1.0, 0.0), (-0.5, 1.5)] {
                let r = solve_nep(&s2, &phi, tau, &col(&[u1, u2]), &v(&[5.0, 5.0]), &cfg).unwrap();
                assert!(r.converged, "tau={tau} u=({u1},{u2}) residual {}", r.residual);
                let expected = v(&[scalar_response(2.0, tau, u1), scalar_response(1.0, tau, u2)]);
                assert!((r.x.values() - expected).amax() < 1e-9);
            }
        }
    }

    #[test]
    fn reports_non_convergence() {
        let phi = QuadraticPlus;
        let s1 = benchmarks::s1();
        let cfg = NepConfig { max_iter: 1, ..NepConfig::plain() };
        let r = solve_nep(&s1, &phi, 100.0, &col(&[0.5, 0.5]), &v(&[9.0, 9.0]), &cfg).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iters, 1);
        assert!(r.residual > cfg.tol);
    }

    #[test]
    fn rejects_bad_config() {
        let phi = QuadraticPlus;
        let s1 = benchmarks::s1();
        let bad = NepConfig { theta: 1.5, ..NepConfig::default() };
        assert!(solve_nep(&s1, &phi, 1.0, &col(&[0.5, 0.5]), &v(&[0.0, 0.0]), &bad).is_err());
        let cfg = NepConfig::default();
        assert!(solve_nep(&s1, &phi, 0.0, &col(&[0.5, 0.5]), &v(&[0.0, 0.0]), &cfg).is_err());
    }
}
