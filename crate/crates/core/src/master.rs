//! Master variational inequality over the share set `U`:
//! find `u*` with `⟨g(u*), u − u*⟩ ≥ 0` for all `u ∈ U`.
//!
//! `g` is co-coercive with the constant γ of the penalty gradient when the
//! Nikaido–Isoda bifunction is monotone, so the projection iteration
//! `u ← Proj_U(u − λ g(u))` converges for every `λ ∈ (0, 2γ)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::accel::Anderson;
use crate::error::{ModelError, SolveError};
use crate::game::{Game, StrategyProfile};
use crate::nep::{solve_nep, NepConfig};
use crate::penalty::{eval_g, PenaltyFunction, ShareAllocation, ShareFlags};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MasterConfig {
    /// Projection step λ ∈ (0, 2γ).
    pub lambda: f64,
    /// Tolerance on `‖u − Proj_U(u − λ g(u))‖`.
    pub tol_u: f64,
    pub max_iter: usize,
    /// Anderson memory for the projection iteration; 0 disables it.
    pub anderson_memory: usize,
    pub nep: NepConfig,
}

impl Default for MasterConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            tol_u: 1e-8,
            max_iter: 10_000,
            anderson_memory: 8,
            nep: NepConfig::default(),
        }
    }
}

impl MasterConfig {
    pub fn validate(&self, gamma: f64) -> Result<(), SolveError> {
        if !(self.lambda > 0.0 && self.lambda < 2.0 * gamma) {
            return Err(SolveError::Config(format!(
                "master step lambda={} must lie in (0, {})",
                self.lambda,
                2.0 * gamma
            )));
        }
        if !(self.tol_u > 0.0) {
            return Err(SolveError::Config("tol_u must be positive".into()));
        }
        self.nep.validate()
    }
}

/// One accepted master iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterIterate {
    pub u: DMatrix<f64>,
    pub residual: f64,
    pub nep_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterResult {
    pub u: ShareAllocation,
    /// The inner NEP solution `x(u)` behind the final `g`.
    pub x: StrategyProfile,
    pub residual_u: f64,
    pub nep_residual: f64,
    pub g: DMatrix<f64>,
    pub iters: usize,
    pub converged: bool,
    pub total_nep_iters: usize,
    pub trace: Vec<MasterIterate>,
}

/// Euclidean projection onto `U = {u ∈ U_0 : Σ_i u_i = b}`, column by column.
pub fn project_u(u_raw: &DMatrix<f64>, b: &DVector<f64>, flags: ShareFlags) -> Result<ShareAllocation, ModelError> {
    if u_raw.ncols() != b.len() || u_raw.nrows() == 0 {
        return Err(ModelError::DimensionMismatch {
            what: "share matrix columns".into(),
            expected: b.len(),
            got: u_raw.ncols(),
        });
    }
    let mut u = u_raw.clone();
    for t in 0..b.len() {
        let column: Vec<f64> = u.column(t).iter().copied().collect();
        let projected = if flags.cap {
            if b[t] < 0.0 {
                return Err(ModelError::InfeasibleShareSet(format!("b[{t}] < 0 with capped shares")));
            }
            project_capped_simplex(&column, b[t])
        } else if flags.nonneg {
            if b[t] < 0.0 {
                return Err(ModelError::InfeasibleShareSet(format!("b[{t}] < 0 with nonnegative shares")));
            }
            project_simplex(&column, b[t])
        } else {
            let shift = (column.iter().sum::<f64>() - b[t]) / column.len() as f64;
            column.iter().map(|v| v - shift).collect()
        };
        for (i, v) in projected.into_iter().enumerate() {
            u[(i, t)] = v;
        }
    }
    Ok(ShareAllocation::from_projected(u, flags))
}

/// Projection onto `{s ≥ 0, Σ s = total}` by the sort-threshold rule.
fn project_simplex(v: &[f64], total: f64) -> Vec<f64> {
    if total <= 0.0 {
        return vec![0.0; v.len()];
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, s) in sorted.iter().enumerate() {
        cumsum += s;
        let candidate = (cumsum - total) / (k + 1) as f64;
        if s - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Projection onto `{0 ≤ s ≤ total, Σ s = total}`: bisection on the shift,
/// then an exact recomputation on the detected free set.
fn project_capped_simplex(v: &[f64], total: f64) -> Vec<f64> {
    let clip = |x: f64| x.clamp(0.0, total);
    let sum_at = |theta: f64| v.iter().map(|x| clip(x - theta)).sum::<f64>();
    let mut lo = v.iter().copied().fold(f64::INFINITY, f64::min) - total;
    let mut hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sum_at(mid) > total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut theta = 0.5 * (lo + hi);
    let free: Vec<usize> = (0..v.len())
        .filter(|&i| v[i] - theta > 0.0 && v[i] - theta < total)
        .collect();
    if !free.is_empty() {
        let capped = v.iter().filter(|x| **x - theta >= total).count() as f64;
        let free_sum: f64 = free.iter().map(|&i| v[i]).sum();
        let exact = (free_sum + capped * total - total) / free.len() as f64;
        if (exact - theta).abs() <= 1e-9 * (1.0 + theta.abs()) {
            theta = exact;
        }
    }
    v.iter().map(|x| clip(x - theta)).collect()
}

fn flatten(u: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(u.as_slice())
}

fn unflatten(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

struct Evaluation {
    u: ShareAllocation,
    x: DVector<f64>,
    g: DMatrix<f64>,
    target: ShareAllocation,
    residual: f64,
    nep_residual: f64,
    nep_iters: usize,
}

struct MasterContext<'a> {
    game: &'a Game,
    phi: &'a dyn PenaltyFunction,
    tau: f64,
    cfg: &'a MasterConfig,
}

impl MasterContext<'_> {
    fn evaluate(&self, u: ShareAllocation, x0: &DVector<f64>, master_iter: usize) -> Result<Evaluation, SolveError> {
        let mut nep = solve_nep(self.game, self.phi, self.tau, u.matrix(), x0, &self.cfg.nep)?;
        let mut nep_iters = nep.iters;
        if !nep.converged {
            // One longer retry from where the first attempt stopped.
            let longer = NepConfig {
                max_iter: self.cfg.nep.max_iter.saturating_mul(4),
                ..self.cfg.nep
            };
            let x_warm = nep.x.values().clone();
            nep = solve_nep(self.game, self.phi, self.tau, u.matrix(), &x_warm, &longer)?;
            nep_iters += nep.iters;
            if !nep.converged {
                return Err(SolveError::InnerFailure {
                    tau: self.tau,
                    master_iter,
                    residual: nep.residual,
                    iters: nep_iters,
                });
            }
        }
        let x = nep.x.into_values();
        let g = eval_g(self.game, self.phi, u.matrix(), &x)?;
        let target = project_u(
            &(u.matrix() - &g * self.cfg.lambda),
            &self.game.joint().b,
            u.flags(),
        )?;
        let residual = (u.matrix() - target.matrix()).norm();
        Ok(Evaluation {
            u,
            x,
            g,
            target,
            residual,
            nep_residual: nep.residual,
            nep_iters,
        })
    }
}

/// Solves the master VI at penalty `τ`, starting from `u0` (projected onto
/// `U`) and warm-starting the inner solves at `x0`.
pub fn solve_master(
    game: &Game,
    phi: &dyn PenaltyFunction,
    tau: f64,
    u0: &ShareAllocation,
    x0: &DVector<f64>,
    cfg: &MasterConfig,
) -> Result<MasterResult, SolveError> {
    cfg.validate(phi.cocoercivity())?;
    if !(tau > 0.0) {
        return Err(SolveError::Config("tau must be positive".into()));
    }
    game.check_profile(x0)?;
    let (l, m) = (game.num_players(), game.m());
    if u0.matrix().nrows() != l || u0.matrix().ncols() != m {
        return Err(ModelError::DimensionMismatch {
            what: "initial shares (l*m)".into(),
            expected: l * m,
            got: u0.matrix().len(),
        }
        .into());
    }
    let ctx = MasterContext { game, phi, tau, cfg };
    let start = project_u(u0.matrix(), &game.joint().b, u0.flags())?;
    let mut state = ctx.evaluate(start, x0, 0)?;
    let mut total_nep_iters = state.nep_iters;
    let mut trace = vec![MasterIterate {
        u: state.u.matrix().clone(),
        residual: state.residual,
        nep_iters: state.nep_iters,
    }];
    let mut anderson = Anderson::new(cfg.anderson_memory);
    let mut best = f64::INFINITY;
    let mut iters = 0;

    while state.residual > cfg.tol_u && iters < cfg.max_iter {
        iters += 1;
        best = best.min(state.residual);
        let mut next = None;
        if let Some(candidate) = anderson.push(&flatten(state.u.matrix()), &flatten(state.target.matrix())) {
            let cu = project_u(&unflatten(&candidate, l, m), &game.joint().b, state.u.flags())?;
            let eval = ctx.evaluate(cu, &state.x, iters)?;
            total_nep_iters += eval.nep_iters;
            if eval.residual <= 0.99 * best {
                next = Some(eval);
            } else {
                anderson.reset();
            }
        }
        let next = match next {
            Some(eval) => eval,
            None => {
                let eval = ctx.evaluate(state.target.clone(), &state.x, iters)?;
                total_nep_iters += eval.nep_iters;
                eval
            }
        };
        state = next;
        trace.push(MasterIterate {
            u: state.u.matrix().clone(),
            residual: state.residual,
            nep_iters: state.nep_iters,
        });
    }

    Ok(MasterResult {
        converged: state.residual <= cfg.tol_u,
        residual_u: state.residual,
        nep_residual: state.nep_residual,
        x: game.profile(state.x)?,
        u: state.u,
        g: state.g,
        iters,
        total_nep_iters,
        trace,
    })
}

/// Natural residual of the master VI at `u`, solving the inner NEP from `x0`.
pub fn master_residual(
    game: &Game,
    phi: &dyn PenaltyFunction,
    tau: f64,
    u: &ShareAllocation,
    x0: &DVector<f64>,
    cfg: &MasterConfig,
) -> Result<f64, SolveError> {
    cfg.validate(phi.cocoercivity())?;
    let ctx = MasterContext { game, phi, tau, cfg };
    Ok(ctx.evaluate(u.clone(), x0, 0)?.residual)
}

/// Natural residual `‖u − Proj_U(u − λ g)‖` for a given `x`, without
/// re-solving the inner problem.
pub fn share_residual(
    game: &Game,
    phi: &dyn PenaltyFunction,
    u: &ShareAllocation,
    x: &DVector<f64>,
    lambda: f64,
) -> Result<f64, ModelError> {
    let g = eval_g(game, phi, u.matrix(), x)?;
    let target = project_u(&(u.matrix() - g * lambda), &game.joint().b, u.flags())?;
    Ok((u.matrix() - target.matrix()).norm())
}

/// Multiplier estimates `v_i = −τ g_i` and their spread: the largest, over
/// constraint components, of `max_i v_it − min_i v_it`.
pub fn recover_multipliers(tau: f64, g: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let v = g * (-tau);
    let spread = (0..v.ncols())
        .map(|t| {
            let col = v.column(t);
            col.max() - col.min()
        })
        .fold(0.0, f64::max);
    (v, spread)
}

/// Shared multiplier estimate: the per-component mean of `−τ g_i`.
pub fn mean_multiplier(tau: f64, g: &DMatrix<f64>) -> DVector<f64> {
    let (v, _) = recover_multipliers(tau, g);
    v.row_mean().transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks;
    use crate::penalty::QuadraticPlus;

    fn col(xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(xs.len(), 1, xs)
    }

    fn b1() -> DVector<f64> {
        DVector::from_element(1, 1.0)
    }

    #[test]
    fn projection_examples() {
        let flags = ShareFlags::default();
        let p = project_u(&col(&[0.7, 0.7]), &b1(), flags).unwrap();
        assert!((p.matrix() - col(&[0.5, 0.5])).amax() < 1e-15);
        let p = project_u(&col(&[0.5, 0.5]), &b1(), flags).unwrap();
        assert_eq!(p.matrix(), &col(&[0.5, 0.5]));
        let nonneg = ShareFlags { nonneg: true, cap: false };
        let p = project_u(&col(&[1.2, 0.4, -0.6]), &b1(), nonneg).unwrap();
        assert!((p.matrix() - col(&[0.9, 0.1, 0.0])).amax() < 1e-12);
    }

    #[test]
    fn projection_rejects_negative_rhs() {
        let nonneg = ShareFlags { nonneg: true, cap: false };
        let b = DVector::from_element(1, -1.0);
        assert!(matches!(
            project_u(&col(&[0.0, 0.0]), &b, nonneg),
            Err(ModelError::InfeasibleShareSet(_))
        ));
        let plain = project_u(&col(&[0.0, 0.0]), &b, ShareFlags::default()).unwrap();
        assert!((plain.matrix().sum() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn capped_projection() {
        let cap = ShareFlags { nonneg: true, cap: true };
        let p = project_u(&col(&[5.0, 0.2, -1.0]), &b1(), cap).unwrap();
        assert!((p.matrix() - col(&[1.0, 0.0, 0.0])).amax() < 1e-12);
        let p = project_u(&col(&[0.8, 0.7, 0.0]), &b1(), cap).unwrap();
        assert!((p.matrix() - col(&[0.55, 0.45, 0.0])).amax() < 1e-12);
    }

    #[test]
    fn zero_budget_simplex() {
        let nonneg = ShareFlags { nonneg: true, cap: false };
        let p = project_u(&col(&[-0.3, -0.2]), &DVector::zeros(1), nonneg).unwrap();
        assert_eq!(p.matrix(), &col(&[0.0, 0.0]));
        let p = project_u(&col(&[0.3, -0.2]), &DVector::zeros(1), nonneg).unwrap();
        assert_eq!(p.matrix(), &col(&[0.0, 0.0]));
    }

    #[test]
    fn master_examples() {
        let phi = QuadraticPlus;
        let cfg = MasterConfig::default();
        let s1 = benchmarks::s1();
        let u0 = ShareAllocation::new(col(&[0.5, 0.5]), &b1(), ShareFlags::default()).unwrap();
        let r = solve_master(&s1, &phi, 1.0, &u0, &DVector::zeros(2), &cfg).unwrap();
        assert!(r.converged);
        assert!((r.u.matrix() - col(&[0.5, 0.5])).amax() < 1e-9);
        assert!((r.x.values() - DVector::from_element(2, 0.75)).amax() < 1e-9);
        assert!((&r.g - col(&[-0.25, -0.25])).amax() < 1e-9);

        let s0 = benchmarks::s0();
        let b4 = DVector::from_element(1, 4.0);
        let u0 = ShareAllocation::new(col(&[2.0, 2.0]), &b4, ShareFlags::default()).unwrap();
        let r = solve_master(&s0, &phi, 1.0, &u0, &DVector::zeros(2), &cfg).unwrap();
        assert!(r.converged);
        assert_eq!(r.g, col(&[0.0, 0.0]));
        assert!((r.x.values() - DVector::from_element(2, 1.0)).amax() < 1e-9);
    }

    #[test]
    fn master_residual_examples() {
        let phi = QuadraticPlus;
        let cfg = MasterConfig::default();
        let s1 = benchmarks::s1();
        let u = ShareAllocation::new(col(&[0.5, 0.5]), &b1(), ShareFlags::default()).unwrap();
        let r = master_residual(&s1, &phi, 1.0, &u, &DVector::zeros(2), &cfg).unwrap();
        assert!(r <= 10.0 * cfg.nep.tol);
        let s0 = benchmarks::s0();
        let u = ShareAllocation::new(col(&[2.0, 2.0]), &DVector::from_element(1, 4.0), ShareFlags::default()).unwrap();
        assert_eq!(master_residual(&s0, &phi, 1.0, &u, &DVector::zeros(2), &cfg).unwrap(), 0.0);
        let u = ShareAllocation::new(col(&[1.0, 0.0]), &b1(), ShareFlags::default()).unwrap();
        assert!(master_residual(&s1, &phi, 1.0, &u, &DVector::zeros(2), &cfg).unwrap() > 0.1);
    }

    #[test]
    fn multipliers() {
        let (v, spread) = recover_multipliers(1.0, &col(&[-0.25, -0.25]));
        assert_eq!(v, col(&[0.25, 0.25]));
        assert_eq!(spread, 0.0);
        let (v, spread) = recover_multipliers(1.0, &col(&[0.0, 0.0]));
        assert_eq!(v.amax(), 0.0);
        assert_eq!(spread, 0.0);
        let (_, spread) = recover_multipliers(2.0, &col(&[-0.1, -0.3]));
        assert!((spread - 0.4).abs() < 1e-15);
    }

    #[test]
    fn rejects_step_outside_cocoercive_range() {
        let phi = QuadraticPlus;
        let cfg = MasterConfig { lambda: 2.0, ..MasterConfig::default() };
        let s1 = benchmarks::s1();
        let u0 = ShareAllocation::equal_split(2, &b1(), ShareFlags::default());
        assert!(matches!(
            solve_master(&s1, &phi, 1.0, &u0, &DVector::zeros(2), &cfg),
            Err(SolveError::Config(_))
        ));
    }
}
