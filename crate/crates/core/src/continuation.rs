//! Outer penalty loop: `τ_k = τ_0 ρ^k`, one master solve per stage, warm
//! started in both `x` and `u` from the previous stage.

use log::{debug, info, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::SolveError;
use crate::game::Game;
use crate::master::{mean_multiplier, recover_multipliers, solve_master, MasterConfig, MasterResult};
use crate::penalty::{penalty_total, PenaltyFunction, ShareAllocation, ShareFlags};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TauSchedule {
    pub tau0: f64,
    pub rho: f64,
    pub k_max: usize,
}

impl Default for TauSchedule {
    fn default() -> Self {
        Self {
            tau0: 1.0,
            rho: 10.0,
            k_max: 5,
        }
    }
}

impl TauSchedule {
    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.tau0 > 0.0 && self.tau0.is_finite()) {
            return Err(SolveError::Config("schedule.tau0 must be positive".into()));
        }
        if !(self.rho > 1.0 && self.rho.is_finite()) {
            return Err(SolveError::Config("schedule.rho must exceed 1".into()));
        }
        Ok(())
    }

    /// `τ_k` for `k = 0..=k_max`.
    pub fn taus(&self) -> Vec<f64> {
        (0..=self.k_max)
            .map(|k| self.tau0 * self.rho.powi(k as i32))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationConfig {
    pub schedule: TauSchedule,
    pub master: MasterConfig,
    pub eps_feas: f64,
    pub eps_eq: f64,
    pub shares: ShareFlags,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            schedule: TauSchedule::default(),
            master: MasterConfig::default(),
            eps_feas: 1e-6,
            eps_eq: 1e-4,
            shares: ShareFlags::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    BudgetExhausted,
    InnerFailure,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::BudgetExhausted => "budget-exhausted",
            RunStatus::InnerFailure => "inner-failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub k: usize,
    pub tau: f64,
    pub master: MasterResult,
    /// `P(w(τ_k))`.
    pub penalty: f64,
    /// `‖[Σ h_i(x_i) − b]_+‖_∞`.
    pub joint_residual: f64,
    pub multipliers: DMatrix<f64>,
    pub spread: f64,
    pub lambda_hat: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnepReport {
    pub stages: Vec<StageRecord>,
    pub x: DVector<f64>,
    pub u: DMatrix<f64>,
    pub lambda_hat: DVector<f64>,
    pub status: RunStatus,
    pub failure: Option<SolveError>,
}

impl GnepReport {
    pub fn final_penalty(&self) -> Option<f64> {
        self.stages.last().map(|s| s.penalty)
    }
}

/// Runs the continuation from the equal split of `b` and the projection of
/// the origin onto `X`.
pub fn solve_gnep(
    game: &Game,
    phi: &dyn PenaltyFunction,
    cfg: &ContinuationConfig,
) -> Result<GnepReport, SolveError> {
    let u0 = ShareAllocation::equal_split(game.num_players(), &game.joint().b, cfg.shares);
    let x0 = game.project(&DVector::zeros(game.dim()))?;
    solve_gnep_from(game, phi, cfg, &u0, &x0)
}

/// Runs the continuation from a given starting pair.
///
/// Configuration errors are returned as `Err`; an inner failure at any
/// stage ends the run with [`RunStatus::InnerFailure`] and keeps every
/// completed stage.
pub fn solve_gnep_from(
    game: &Game,
    phi: &dyn PenaltyFunction,
    cfg: &ContinuationConfig,
    u0: &ShareAllocation,
    x0: &DVector<f64>,
) -> Result<GnepReport, SolveError> {
    cfg.schedule.validate()?;
    cfg.master.validate(phi.cocoercivity())?;
    game.check_profile(x0)?;

    let mut stages: Vec<StageRecord> = Vec::new();
    let mut u = u0.clone();
    let mut x = x0.clone();
    let mut status = RunStatus::BudgetExhausted;
    let mut failure = None;

    for (k, tau) in cfg.schedule.taus().into_iter().enumerate() {
        // Multipliers are τ·g, so their spread is about τ times the share residual.
        // The inner tolerance shrinks with it to keep the configured ratio.
        let tol_u = cfg.master.tol_u.min(0.1 * cfg.eps_eq / tau);
        let mut stage_cfg = cfg.master;
        stage_cfg.nep.tol *= tol_u / cfg.master.tol_u;
        stage_cfg.tol_u = tol_u;
        let master = match solve_master(game, phi, tau, &u, &x, &stage_cfg) {
            Ok(m) => m,
            Err(err @ SolveError::InnerFailure { .. }) => {
                warn!("stage {k} (tau={tau:.3e}) aborted: {err}");
                status = RunStatus::InnerFailure;
                failure = Some(err);
                break;
            }
            Err(err) => return Err(err),
        };
        let penalty = penalty_total(game, phi, master.x.values(), master.u.matrix())?;
        let joint_residual = game.joint_residual(master.x.values())?.amax();
        let (multipliers, spread) = recover_multipliers(tau, &master.g);
        let lambda_hat = mean_multiplier(tau, &master.g);
        info!(
            "stage {k}: tau={tau:.3e} master_iters={} nep_iters={} P={penalty:.3e} \
             residual_u={:.3e} spread={spread:.3e}",
            master.iters, master.total_nep_iters, master.residual_u
        );
        debug!("stage {k}: x={:?}", master.x.values().as_slice());

        u = master.u.clone();
        x = master.x.values().clone();
        let done = master.converged && penalty <= cfg.eps_feas && spread <= cfg.eps_eq;
        stages.push(StageRecord {
            k,
            tau,
            master,
            penalty,
            joint_residual,
            multipliers,
            spread,
            lambda_hat,
        });
        if done {
            status = RunStatus::Converged;
            break;
        }
    }

    let lambda_hat = stages
        .last()
        .map(|s| s.lambda_hat.clone())
        .unwrap_or_else(|| DVector::zeros(game.m()));
    Ok(GnepReport {
        stages,
        x,
        u: u.matrix().clone(),
        lambda_hat,
        status,
        failure,
    })
}

/// `(τ_k, P(w(τ_k)))` for every completed stage.
pub fn feasibility_trace(report: &GnepReport) -> Vec<(f64, f64)> {
    report.stages.iter().map(|s| (s.tau, s.penalty)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks;
    use crate::penalty::QuadraticPlus;
    use crate::nep::NepConfig;

    #[test]
    fn schedule_is_geometric() {
        let s = TauSchedule { tau0: 1.0, rho: 10.0, k_max: 3 };
        assert_eq!(s.taus(), vec![1.0, 10.0, 100.0, 1000.0]);
        assert!(TauSchedule { rho: 1.0, ..s }.validate().is_err());
        assert!(TauSchedule { tau0: 0.0, ..s }.validate().is_err());
    }

    #[test]
    fn s1_error_matches_closed_form() {
        let cfg = ContinuationConfig {
            schedule: TauSchedule { tau0: 1.0, rho: 10.0, k_max: 3 },
            ..ContinuationConfig::default()
        };
        let report = solve_gnep(&benchmarks::s1(), &QuadraticPlus, &cfg).unwrap();
        assert_eq!(report.stages.len(), 4);
        for stage in &report.stages {
            let expected = 0.5 / (1.0 + stage.tau);
            for &xi in stage.master.x.values().iter() {
                assert!(((xi - 0.5) - expected).abs() < 1e-6);
            }
        }
        assert!((&report.x - DVector::from_element(2, 0.5)).amax() < 1e-3);
        // each player overshoots its half share by 0.5/(1+τ), so P = (0.5/(1+τ))²
        let expected_p = [0.0625, 2.066115702479339e-3, 2.4507401235173024e-5, 2.495007490012485e-7];
        for ((_, p), want) in feasibility_trace(&report).into_iter().zip(expected_p) {
            assert!((p - want).abs() <= 1e-9 * want, "{p} vs {want}");
        }
        // Stage 3 has P = (0.5/1001)^2 < 1e-6 and spread 0.
        assert_eq!(report.status, RunStatus::Converged);
    }

    #[test]
    fn s0_converges_immediately() {
        let report = solve_gnep(&benchmarks::s0(), &QuadraticPlus, &ContinuationConfig::default()).unwrap();
        assert_eq!(report.status, RunStatus::Converged);
        assert_eq!(report.stages.len(), 1);
        assert!((&report.x - DVector::from_element(2, 1.0)).amax() < 1e-9);
        assert_eq!(report.stages[0].penalty, 0.0);
        assert_eq!(report.lambda_hat[0], 0.0);
        assert_eq!(feasibility_trace(&report), vec![(1.0, 0.0)]);
    }

    #[test]
    fn s2_approaches_oracle() {
        let cfg = ContinuationConfig {
            schedule: TauSchedule { tau0: 1.0, rho: 10.0, k_max: 4 },
            ..ContinuationConfig::default()
        };
        let report = solve_gnep(&benchmarks::s2(), &QuadraticPlus, &cfg).unwrap();
        assert!((report.x[0] - 1.0).abs() < 1e-2);
        assert!(report.x[1].abs() < 1e-2);
        assert!((report.lambda_hat[0] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn inner_failure_keeps_completed_stages() {
        let mut cfg = ContinuationConfig {
            schedule: TauSchedule { tau0: 1.0, rho: 1000.0, k_max: 2 },
            ..ContinuationConfig::default()
        };
        cfg.master.anderson_memory = 0;
        cfg.master.nep = NepConfig { max_iter: 3, ..NepConfig::plain() };
        let game = benchmarks::random_instance(1);
        let report = solve_gnep(&game, &QuadraticPlus, &cfg).unwrap();
        assert_eq!(report.status, RunStatus::InnerFailure);
        assert!(matches!(report.failure, Some(SolveError::InnerFailure { .. })));
        assert!(report.stages.len() < 3);
    }
}
