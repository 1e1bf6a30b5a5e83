//! Well-posedness checks run before any solve.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::ModelError;
use crate::game::Game;
use crate::penalty::ShareFlags;
use crate::verification::kkt::{AffineVi, KktOutcome};

/// Eigenvalue tolerance for semidefiniteness checks.
pub const EPS_PSD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    /// `Q_i` is singular: the lower-level NEP may have many solutions.
    NonUniqueNep,
    /// Unbounded strategy sets without strong monotonicity.
    ExistenceNotGuaranteed,
    /// Unbounded strategy sets, strongly monotone pseudo-gradient.
    CoercivityCertified,
    FeasibilityUnverified,
    ShareFeasibilityUnverified,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub severity: Severity,
    pub kind: FindingKind,
    pub message: String,
}

impl Finding {
    fn warning(kind: FindingKind, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            kind,
            message: message.into(),
        }
    }
}

fn symmetric_check(what: &str, a: &DMatrix<f64>) -> Result<(), ModelError> {
    let scale = a.amax().max(1.0);
    if (a - a.transpose()).amax() > 1e-12 * scale {
        return Err(ModelError::Asymmetric(what.to_string()));
    }
    Ok(())
}

fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.clone().symmetric_eigenvalues().min()
}

/// Checks concavity of payoffs, convexity of constraints, box sanity and
/// nonemptiness of `D`. Hard violations are returned as errors; softer
/// issues come back as findings.
pub fn validate_game(game: &Game) -> Result<Vec<Finding>, ModelError> {
    let mut findings = Vec::new();
    let mut all_pd = true;
    for (i, p) in game.players().iter().enumerate() {
        for k in 0..p.dim() {
            if p.lower[k] > p.upper[k] {
                return Err(ModelError::InvertedBox { player: i, coord: k });
            }
        }
        symmetric_check(&format!("Q of player {i}"), &p.q)?;
        let eig = min_eigenvalue(&p.q);
        if eig < -EPS_PSD {
            return Err(ModelError::NotPsd {
                what: format!("Q of player {i} (payoff not concave)"),
                min_eig: eig,
            });
        }
        if eig <= EPS_PSD {
            all_pd = false;
            findings.push(Finding::warning(
                FindingKind::NonUniqueNep,
                format!("Q of player {i} is singular: NEP solution may be non-unique"),
            ));
        }
        for (t, c) in game.joint().quad[i].iter().enumerate() {
            let what = format!("C of player {i}, row {t}");
            symmetric_check(&what, c)?;
            let eig = min_eigenvalue(c);
            if eig < -EPS_PSD {
                return Err(ModelError::NotPsd { what, min_eig: eig });
            }
        }
    }

    if !game.is_bounded() {
        let m = game.response_matrix();
        let strongly_monotone = all_pd && min_eigenvalue(&((m + m.transpose()) * 0.5)) > EPS_PSD;
        if strongly_monotone {
            findings.push(Finding {
                severity: Severity::Info,
                kind: FindingKind::CoercivityCertified,
                message: "unbounded X with strongly monotone pseudo-gradient: \
                          penalized NEPs are solvable for every tau"
                    .into(),
            });
        } else {
            findings.push(Finding::warning(
                FindingKind::ExistenceNotGuaranteed,
                "unbounded X without strict concavity: existence of penalized NEP \
                 solutions is not guaranteed",
            ));
        }
    }

    match feasible_point(game) {
        Feasibility::Found(_) => {}
        Feasibility::Empty => return Err(ModelError::EmptyFeasibleSet),
        Feasibility::Unknown => findings.push(Finding::warning(
            FindingKind::FeasibilityUnverified,
            "could not certify that the common feasible set D is nonempty",
        )),
    }
    Ok(findings)
}

/// Checks that the share set `U` is nonempty and, for affine constraints
/// on bounded boxes, that every `x ∈ D` admits a compatible share.
pub fn validate_shares(game: &Game, flags: ShareFlags) -> Result<Vec<Finding>, ModelError> {
    let b = &game.joint().b;
    if flags.cap || flags.nonneg {
        if let Some(t) = b.iter().position(|v| *v < 0.0) {
            return Err(ModelError::InfeasibleShareSet(format!(
                "b[{t}] < 0 with nonnegative or capped shares"
            )));
        }
    }
    let mut findings = Vec::new();
    if !(flags.cap || flags.nonneg) {
        return Ok(findings);
    }
    if !game.joint().is_affine() {
        findings.push(Finding::warning(
            FindingKind::ShareFeasibilityUnverified,
            "share compatibility not verified for quadratic constraints",
        ));
        return Ok(findings);
    }
    // Σ_i max(0, max_{X_i} h_it) ≤ b_t is sufficient for compatibility.
    for t in 0..game.m() {
        let mut worst = 0.0;
        for (i, p) in game.players().iter().enumerate() {
            let a = &game.joint().a[i];
            let mut hmax = game.joint().offsets[i][t];
            for k in 0..p.dim() {
                let coef = a[(t, k)];
                hmax += if coef > 0.0 {
                    coef * p.upper[k]
                } else if coef < 0.0 {
                    coef * p.lower[k]
                } else {
                    0.0
                };
            }
            worst += hmax.max(0.0);
        }
        if !(worst <= b[t]) {
            findings.push(Finding::warning(
                FindingKind::ShareFeasibilityUnverified,
                format!(
                    "constraint {t}: some x in D may admit no share allocation \
                     under the nonneg/cap restrictions"
                ),
            ));
        }
    }
    Ok(findings)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Found(DVector<f64>),
    Empty,
    Unknown,
}

fn max_violation(game: &Game, x: &DVector<f64>) -> f64 {
    game.joint_residual(x).map(|r| r.amax()).unwrap_or(f64::INFINITY)
}

/// Looks for a point of `D`: cheap candidates, then projected gradient on
/// the squared violation, then (affine, small) exact enumeration.
pub fn feasible_point(game: &Game) -> Feasibility {
    let n = game.dim();
    let tol = 1e-9 * game.joint().b.amax().max(1.0);
    let zero = game.project(&DVector::zeros(n)).expect("dimension");
    let mut candidates = vec![zero, game.lower().map(|v| if v.is_finite() { v } else { 0.0 })];
    let mid = DVector::from_fn(n, |k, _| {
        let (lo, hi) = (game.lower()[k], game.upper()[k]);
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo,
            (false, true) => hi,
            (false, false) => 0.0,
        }
    });
    candidates.push(mid);
    for x in &candidates {
        if game.contains(x) && max_violation(game, x) <= tol {
            return Feasibility::Found(x.clone());
        }
    }

    if let Some(x) = violation_descent(game, candidates[0].clone(), tol) {
        return Feasibility::Found(x);
    }

    if !game.joint().is_affine() {
        return Feasibility::Unknown;
    }
    // Project the box midpoint onto D exactly; no KKT point means D = ∅.
    let vi = AffineVi::projection_onto_d(game, &candidates[2]);
    match vi.enumerate() {
        Ok(KktOutcome { points, .. }) if !points.is_empty() => Feasibility::Found(points[0].x.clone()),
        Ok(_) => Feasibility::Empty,
        Err(_) => Feasibility::Unknown,
    }
}

fn violation_descent(game: &Game, mut x: DVector<f64>, tol: f64) -> Option<DVector<f64>> {
    let l = game.num_players();
    let b = &game.joint().b;
    let objective = |x: &DVector<f64>| -> f64 {
        let r = game.joint_residual(x).expect("dimension");
        0.5 * r.norm_squared()
    };
    let mut step = 1.0;
    let mut value = objective(&x);
    for _ in 0..5000 {
        if max_violation(game, &x) <= tol {
            return Some(x);
        }
        let h = game.constraint_values(&x).ok()?;
        let viol = (h.row_sum().transpose() - b).map(|v| v.max(0.0));
        let mut grad = DVector::zeros(game.dim());
        for i in 0..l {
            let r = game.block(i);
            let jac = game.jacobian_block(i, x.rows_range(r.clone()));
            grad.rows_range_mut(r).copy_from(&(jac.transpose() * &viol));
        }
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = &x - &grad * step;
            game.project_in_place(&mut trial);
            let tv = objective(&trial);
            let decrease = (&x - &trial).norm_squared() / (2.0 * step);
            if tv <= value - 0.5 * decrease || decrease == 0.0 {
                accepted = decrease > 0.0;
                x = trial;
                value = tv;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        step *= 2.0;
    }
    (max_violation(game, &x) <= tol).then_some(x)
}
