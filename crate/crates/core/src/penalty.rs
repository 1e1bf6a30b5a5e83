//! Decomposable penalties `P_i(x_i, u_i) = φ(h_i(x_i) − u_i)` and the
//! master mapping value `g(u)`.

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::game::Game;

/// Tolerance on `Σ_i u_i = b`.
pub const EPS_AFF: f64 = 1e-10;

/// A convex, differentiable, isotone function vanishing exactly on the
/// nonpositive orthant, whose gradient is co-coercive.
pub trait PenaltyFunction: Send + Sync {
    fn value(&self, v: &DVector<f64>) -> f64;
    fn gradient(&self, v: &DVector<f64>) -> DVector<f64>;
    /// Co-coercivity constant γ of the gradient map.
    fn cocoercivity(&self) -> f64;
    fn kind(&self) -> PenaltyKind;
    /// Diagonal of an element of the generalized Hessian of a separable `φ`.
    /// `None` disables Newton-type candidates in the inner solver.
    fn hessian_diag(&self, _v: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    #[default]
    QuadraticPlus,
}

impl PenaltyKind {
    pub fn build(self) -> Box<dyn PenaltyFunction> {
        match self {
            PenaltyKind::QuadraticPlus => Box::new(QuadraticPlus),
        }
    }
}

/// `φ(v) = ½‖[v]_+‖²`, `φ'(v) = [v]_+`; the gradient is 1-Lipschitz, so γ = 1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QuadraticPlus;

impl PenaltyFunction for QuadraticPlus {
    fn value(&self, v: &DVector<f64>) -> f64 {
        0.5 * v.iter().map(|t| t.max(0.0).powi(2)).sum::<f64>()
    }

    fn gradient(&self, v: &DVector<f64>) -> DVector<f64> {
        v.map(|t| t.max(0.0))
    }

    fn cocoercivity(&self) -> f64 {
        1.0
    }

    fn kind(&self) -> PenaltyKind {
        PenaltyKind::QuadraticPlus
    }

    fn hessian_diag(&self, v: &DVector<f64>) -> Option<DVector<f64>> {
        Some(v.map(|t| if t > 0.0 { 1.0 } else { 0.0 }))
    }
}

/// Optional restrictions `U_0` on the shares.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShareFlags {
    /// `u_i ≥ 0`.
    #[serde(default)]
    pub nonneg: bool,
    /// `0 ≤ u_i ≤ b`.
    #[serde(default)]
    pub cap: bool,
}

/// A partition `u = (u_1, …, u_l)` of the right-hand side, one row per player.
#[derive(Debug, Clone, PartialEq)]
pub struct ShareAllocation {
    u: DMatrix<f64>,
    flags: ShareFlags,
}

impl ShareAllocation {
    /// Wraps `u`, checking `Σ_i u_i = b` and the flag restrictions.
    pub fn new(u: DMatrix<f64>, b: &DVector<f64>, flags: ShareFlags) -> Result<Self, ModelError> {
        if u.ncols() != b.len() {
            return Err(ModelError::DimensionMismatch {
                what: "share columns".into(),
                expected: b.len(),
                got: u.ncols(),
            });
        }
        let scale = b.amax().max(1.0);
        for t in 0..b.len() {
            let sum: f64 = u.column(t).sum();
            if (sum - b[t]).abs() > EPS_AFF * scale {
                return Err(ModelError::Invalid(format!(
                    "shares of constraint {t} sum to {sum}, expected {}",
                    b[t]
                )));
            }
            for i in 0..u.nrows() {
                let v = u[(i, t)];
                if (flags.nonneg || flags.cap) && v < -EPS_AFF * scale {
                    return Err(ModelError::Invalid(format!("share ({i},{t}) is negative")));
                }
                if flags.cap && v > b[t] + EPS_AFF * scale {
                    return Err(ModelError::Invalid(format!("share ({i},{t}) exceeds b")));
                }
            }
        }
        Ok(Self { u, flags })
    }

    /// Equal split `u_i = b / l`.
    pub fn equal_split(l: usize, b: &DVector<f64>, flags: ShareFlags) -> Self {
        let u = DMatrix::from_fn(l, b.len(), |_, t| b[t] / l as f64);
        Self { u, flags }
    }

    pub(crate) fn from_projected(u: DMatrix<f64>, flags: ShareFlags) -> Self {
        Self { u, flags }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn flags(&self) -> ShareFlags {
        self.flags
    }

    pub fn share(&self, i: usize) -> DVector<f64> {
        self.u.row(i).transpose()
    }

    pub fn num_players(&self) -> usize {
        self.u.nrows()
    }
}

fn check_share(game: &Game, u: &DMatrix<f64>) -> Result<(), ModelError> {
    if u.nrows() != game.num_players() || u.ncols() != game.m() {
        return Err(ModelError::DimensionMismatch {
            what: "share matrix (l*m)".into(),
            expected: game.num_players() * game.m(),
            got: u.nrows() * u.ncols(),
        });
    }
    Ok(())
}

fn check_block(game: &Game, i: usize, xi: &DVector<f64>, ui: &DVector<f64>) -> Result<(), ModelError> {
    let p = game.player(i)?;
    if xi.len() != p.dim() {
        return Err(ModelError::DimensionMismatch {
            what: format!("player {i} strategy"),
            expected: p.dim(),
            got: xi.len(),
        });
    }
    if ui.len() != game.m() {
        return Err(ModelError::DimensionMismatch {
            what: format!("player {i} share"),
            expected: game.m(),
            got: ui.len(),
        });
    }
    Ok(())
}

fn violation(game: &Game, i: usize, xi: DVectorView<'_, f64>, u: &DMatrix<f64>) -> DVector<f64> {
    let mut v = game.h_block(i, xi);
    for t in 0..v.len() {
        v[t] -= u[(i, t)];
    }
    v
}

/// `P_i(x_i, u_i)`.
pub fn penalty_i(
    game: &Game,
    phi: &dyn PenaltyFunction,
    i: usize,
    xi: &DVector<f64>,
    ui: &DVector<f64>,
) -> Result<f64, ModelError> {
    check_block(game, i, xi, ui)?;
    Ok(phi.value(&(game.h_block(i, xi.as_view()) - ui)))
}

/// `P(w) = Σ_i P_i(x_i, u_i)`.
pub fn penalty_total(
    game: &Game,
    phi: &dyn PenaltyFunction,
    x: &DVector<f64>,
    u: &DMatrix<f64>,
) -> Result<f64, ModelError> {
    game.check_profile(x)?;
    check_share(game, u)?;
    Ok((0..game.num_players())
        .map(|i| phi.value(&violation(game, i, x.rows_range(game.block(i)), u)))
        .sum())
}

/// `∇_{x_i} P_i(x_i, u_i) = J_{h_i}(x_i)ᵀ φ'(h_i(x_i) − u_i)`.
pub fn penalty_grad_x(
    game: &Game,
    phi: &dyn PenaltyFunction,
    i: usize,
    xi: &DVector<f64>,
    ui: &DVector<f64>,
) -> Result<DVector<f64>, ModelError> {
    check_block(game, i, xi, ui)?;
    let w = phi.gradient(&(game.h_block(i, xi.as_view()) - ui));
    Ok(game.jacobian_block(i, xi.as_view()).transpose() * w)
}

/// Adds `scale · ∇_x P(x, u)` to `out` (all players stacked).
pub(crate) fn add_penalty_gradient(
    game: &Game,
    phi: &dyn PenaltyFunction,
    scale: f64,
    x: &DVector<f64>,
    u: &DMatrix<f64>,
    out: &mut DVector<f64>,
) {
    for i in 0..game.num_players() {
        let r = game.block(i);
        let xi = x.rows_range(r.clone());
        let w = phi.gradient(&violation(game, i, xi, u));
        if w.iter().all(|v| *v == 0.0) {
            continue;
        }
        let grad = game.jacobian_block(i, xi).transpose() * w;
        let mut dst = out.rows_range_mut(r);
        dst.axpy(scale, &grad, 1.0);
    }
}

/// An element of the generalized Jacobian of `∇_x P(x, u)` (block diagonal),
/// scaled by `scale` and added to `out`. Returns `false` if `φ` provides no
/// second-order information.
pub(crate) fn add_penalty_jacobian(
    game: &Game,
    phi: &dyn PenaltyFunction,
    scale: f64,
    x: &DVector<f64>,
    u: &DMatrix<f64>,
    out: &mut DMatrix<f64>,
) -> bool {
    for i in 0..game.num_players() {
        let r = game.block(i);
        let xi = x.rows_range(r.clone());
        let v = violation(game, i, xi, u);
        let Some(d) = phi.hessian_diag(&v) else {
            return false;
        };
        let w = phi.gradient(&v);
        let jac = game.jacobian_block(i, xi);
        let mut blk = jac.transpose() * DMatrix::from_diagonal(&d) * &jac;
        for (t, c) in game.joint().quad[i].iter().enumerate() {
            if w[t] != 0.0 {
                blk += (c + c.transpose()) * w[t];
            }
        }
        let mut dst = out.view_mut((r.start, r.start), (r.len(), r.len()));
        dst += blk * scale;
    }
    true
}

/// Master mapping value `g_i(u) = −φ'(h_i(x_i(u)) − u_i)` as an `l × m` matrix.
pub fn eval_g(
    game: &Game,
    phi: &dyn PenaltyFunction,
    u: &DMatrix<f64>,
    x_u: &DVector<f64>,
) -> Result<DMatrix<f64>, ModelError> {
    game.check_profile(x_u)?;
    check_share(game, u)?;
    let (l, m) = (game.num_players(), game.m());
    let mut g = DMatrix::zeros(l, m);
    for i in 0..l {
        let w = phi.gradient(&violation(game, i, x_u.rows_range(game.block(i)), u));
        for t in 0..m {
            g[(i, t)] = -w[t];
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn col(xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(xs.len(), 1, xs)
    }

    #[test]
    fn phi_examples() {
        let phi = QuadraticPlus;
        assert_eq!(phi.value(&v(&[1.0, -2.0])), 0.5);
        assert_eq!(phi.gradient(&v(&[1.0, -2.0])), v(&[1.0, 0.0]));
        assert_eq!(phi.value(&v(&[0.0, 0.0])), 0.0);
        assert_eq!(phi.gradient(&v(&[0.0, 0.0])), v(&[0.0, 0.0]));
        assert_eq!(phi.value(&v(&[3.0, 4.0])), 12.5);
        assert_eq!(phi.gradient(&v(&[3.0, 4.0])), v(&[3.0, 4.0]));
        assert_eq!(phi.cocoercivity(), 1.0);
    }

    #[test]
    fn penalty_examples() {
        let s1 = benchmarks::s1();
        let phi = QuadraticPlus;
        assert_eq!(penalty_i(&s1, &phi, 0, &v(&[0.75]), &v(&[0.5])).unwrap(), 0.03125);
        assert_eq!(penalty_i(&s1, &phi, 0, &v(&[0.4]), &v(&[0.5])).unwrap(), 0.0);
        assert_eq!(penalty_i(&s1, &phi, 0, &v(&[0.5]), &v(&[0.5])).unwrap(), 0.0);
        assert!(penalty_i(&s1, &phi, 0, &v(&[0.5, 1.0]), &v(&[0.5])).is_err());

        let u = col(&[0.5, 0.5]);
        assert_eq!(penalty_total(&s1, &phi, &v(&[0.75, 0.75]), &u).unwrap(), 0.0625);
        assert_eq!(penalty_total(&s1, &phi, &v(&[0.5, 0.5]), &u).unwrap(), 0.0);
        let s0 = benchmarks::s0();
        assert_eq!(penalty_total(&s0, &phi, &v(&[1.0, 1.0]), &col(&[2.0, 2.0])).unwrap(), 0.0);
        assert!(penalty_total(&s0, &phi, &v(&[1.0, 1.0]), &col(&[2.0])).is_err());
    }

    #[test]
    fn penalty_gradient_examples() {
        let s1 = benchmarks::s1();
        let phi = QuadraticPlus;
        assert_eq!(penalty_grad_x(&s1, &phi, 0, &v(&[0.75]), &v(&[0.5])).unwrap(), v(&[0.25]));
        assert_eq!(penalty_grad_x(&s1, &phi, 0, &v(&[0.3]), &v(&[0.5])).unwrap(), v(&[0.0]));
        let h = 1e-6;
        let fd = (penalty_i(&s1, &phi, 0, &v(&[0.75 + h]), &v(&[0.5])).unwrap()
            - penalty_i(&s1, &phi, 0, &v(&[0.75 - h]), &v(&[0.5])).unwrap())
            / (2.0 * h);
        assert!((fd - 0.25).abs() < 1e-6);
    }

    #[test]
    fn g_examples() {
        let phi = QuadraticPlus;
        let s1 = benchmarks::s1();
        let g = eval_g(&s1, &phi, &col(&[0.5, 0.5]), &v(&[0.75, 0.75])).unwrap();
        assert_eq!(g, col(&[-0.25, -0.25]));
        let s0 = benchmarks::s0();
        let g = eval_g(&s0, &phi, &col(&[2.0, 2.0]), &v(&[1.0, 1.0])).unwrap();
        assert_eq!(g, col(&[0.0, 0.0]));
        let g = eval_g(&s1, &phi, &col(&[1.0, 0.0]), &v(&[1.0, 0.5])).unwrap();
        assert_eq!(g, col(&[0.0, -0.5]));
    }

    #[test]
    fn share_allocation_checks_sum() {
        let b = v(&[1.0]);
        assert!(ShareAllocation::new(col(&[0.5, 0.5]), &b, ShareFlags::default()).is_ok());
        assert!(ShareAllocation::new(col(&[0.7, 0.5]), &b, ShareFlags::default()).is_err());
        let nonneg = ShareFlags { nonneg: true, cap: false };
        assert!(ShareAllocation::new(col(&[1.5, -0.5]), &b, nonneg).is_err());
        assert!(ShareAllocation::new(col(&[1.5, -0.5]), &b, ShareFlags::default()).is_ok());
    }
}
