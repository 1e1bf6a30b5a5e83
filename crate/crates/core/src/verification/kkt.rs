//! Active-set enumeration for small affine variational inequalities
//!
//! ```text
//! find x in K = {lo <= x <= hi, G x <= h}:  (M x + q)ᵀ (y − x) >= 0  for all y in K
//! ```
//!
//! Every combination of active rows and bound states is turned into a square
//! linear system; candidates that satisfy sign, feasibility and stationarity
//! conditions are KKT points. This is exhaustive, so it doubles as a
//! uniqueness test.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::OracleError;
use crate::game::Game;

/// Largest dimension the enumerator accepts.
pub const MAX_DIM: usize = 12;
/// Largest number of general inequality rows the enumerator accepts.
pub const MAX_ROWS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundState {
    Free,
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktPoint {
    pub x: DVector<f64>,
    /// Multipliers of the general rows (zero for inactive ones).
    pub lambda: DVector<f64>,
    pub active_rows: Vec<usize>,
    pub bounds: Vec<BoundState>,
    /// Largest violation among stationarity, sign, feasibility and
    /// complementarity conditions.
    pub residual: f64,
    /// The KKT matrix is singular in a direction that moves `x`.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktOutcome {
    /// Distinct KKT points (by `x`), in enumeration order.
    pub points: Vec<KktPoint>,
    /// Number of linear systems examined.
    pub systems: usize,
    /// Number of candidates that passed all checks, before deduplication.
    pub accepted: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineVi {
    pub m: DMatrix<f64>,
    pub q: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
}

/// Stacked joint rows `Σ_i A_i x_i <= b − Σ_i a_i`.
fn joint_rows(game: &Game) -> (DMatrix<f64>, DVector<f64>) {
    let joint = game.joint();
    let mut g = DMatrix::zeros(game.m(), game.dim());
    let mut h = joint.b.clone();
    for i in 0..game.num_players() {
        let r = game.block(i);
        g.view_mut((0, r.start), (game.m(), r.len())).copy_from(&joint.a[i]);
        h -= &joint.offsets[i];
    }
    (g, h)
}

impl AffineVi {
    /// Euclidean projection of `center` onto the common feasible set, as a VI
    /// with `M = I`. Quadratic constraint terms are ignored, so this is only
    /// meaningful for affine games.
    pub fn projection_onto_d(game: &Game, center: &DVector<f64>) -> Self {
        let (g, h) = joint_rows(game);
        Self {
            m: DMatrix::identity(game.dim(), game.dim()),
            q: -center,
            lower: game.lower().clone(),
            upper: game.upper().clone(),
            g,
            h,
        }
    }

    /// The VI whose solutions are the normalized (shared multiplier)
    /// equilibria of an affine game.
    pub fn normalized_equilibrium(game: &Game) -> Result<Self, OracleError> {
        if !game.joint().is_affine() {
            return Err(OracleError::NonAffine);
        }
        let (g, h) = joint_rows(game);
        Ok(Self {
            m: game.response_matrix().clone(),
            q: -game.linear_terms(),
            lower: game.lower().clone(),
            upper: game.upper().clone(),
            g,
            h,
        })
    }

    /// Player `i`'s best-response problem against the rest of `x`.
    pub fn best_response(game: &Game, i: usize, x: &DVector<f64>) -> Result<Self, OracleError> {
        if !game.joint().is_affine() {
            return Err(OracleError::NonAffine);
        }
        game.check_profile(x)?;
        let p = game.player(i)?;
        let joint = game.joint();
        let mut q = -&p.c;
        for (&j, r) in &p.couplings {
            q -= r * x.rows_range(game.block(j));
        }
        let mut h = joint.b.clone();
        for j in 0..game.num_players() {
            h -= &joint.offsets[j];
            if j != i {
                h -= &joint.a[j] * x.rows_range(game.block(j));
            }
        }
        Ok(Self {
            m: p.q.clone(),
            q,
            lower: p.lower.clone(),
            upper: p.upper.clone(),
            g: joint.a[i].clone(),
            h,
        })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    fn scale(&self) -> f64 {
        let finite = |v: &DVector<f64>| v.iter().filter(|a| a.is_finite()).fold(0.0f64, |m, a| m.max(a.abs()));
        self.m
            .amax()
            .max(self.q.amax())
            .max(if self.g.is_empty() { 0.0 } else { self.g.amax() })
            .max(finite(&self.h))
            .max(finite(&self.lower))
            .max(finite(&self.upper))
    }

    /// Enumerates every active set and returns the distinct KKT points.
    pub fn enumerate(&self) -> Result<KktOutcome, OracleError> {
        let n = self.dim();
        let p = self.h.len();
        if n > MAX_DIM || p > MAX_ROWS {
            return Err(OracleError::BudgetExceeded { n, rows: p });
        }
        let eps = 1e-10 * (1.0 + self.scale());

        let options: Vec<Vec<BoundState>> = (0..n)
            .map(|k| {
                let mut o = vec![BoundState::Free];
                if self.lower[k].is_finite() {
                    o.push(BoundState::Lower);
                }
                if self.upper[k].is_finite() && self.upper[k] != self.lower[k] {
                    o.push(BoundState::Upper);
                }
                o
            })
            .collect();

        let mut points: Vec<KktPoint> = Vec::new();
        let mut systems = 0;
        let mut accepted = 0;
        let mut digits = vec![0usize; n];
        loop {
            let bounds: Vec<BoundState> = digits.iter().enumerate().map(|(k, &d)| options[k][d]).collect();
            for mask in 0u32..(1u32 << p) {
                let rows: Vec<usize> = (0..p).filter(|r| mask & (1 << r) != 0).collect();
                systems += 1;
                if let Some(cand) = self.try_active_set(&bounds, &rows, eps) {
                    accepted += 1;
                    merge(&mut points, cand);
                }
            }
            // mixed-radix increment
            let mut k = 0;
            while k < n {
                digits[k] += 1;
                if digits[k] < options[k].len() {
                    break;
                }
                digits[k] = 0;
                k += 1;
            }
            if k == n {
                break;
            }
        }
        Ok(KktOutcome {
            points,
            systems,
            accepted,
        })
    }

    fn try_active_set(&self, bounds: &[BoundState], rows: &[usize], eps: f64) -> Option<KktPoint> {
        let n = self.dim();
        let size = n + rows.len();
        let mut k = DMatrix::zeros(size, size);
        let mut rhs = DVector::zeros(size);
        for c in 0..n {
            match bounds[c] {
                BoundState::Free => {
                    for j in 0..n {
                        k[(c, j)] = self.m[(c, j)];
                    }
                    for (a, &r) in rows.iter().enumerate() {
                        k[(c, n + a)] = self.g[(r, c)];
                    }
                    rhs[c] = -self.q[c];
                }
                BoundState::Lower => {
                    k[(c, c)] = 1.0;
                    rhs[c] = self.lower[c];
                }
                BoundState::Upper => {
                    k[(c, c)] = 1.0;
                    rhs[c] = self.upper[c];
                }
            }
        }
        for (a, &r) in rows.iter().enumerate() {
            for j in 0..n {
                k[(n + a, j)] = self.g[(r, j)];
            }
            rhs[n + a] = self.h[r];
        }

        let (z, singular) = match k.clone().lu().solve(&rhs) {
            Some(z) if z.iter().all(|v| v.is_finite()) && (&k * &z - &rhs).amax() <= eps => (z, false),
            _ => {
                // Singular system: accept a least-squares solution only if the
                // system is consistent.
                let svd = k.clone().svd(true, true);
                let z = svd.solve(&rhs, eps).ok()?;
                if (&k * &z - &rhs).amax() > eps {
                    return None;
                }
                (z, true)
            }
        };

        let x = z.rows(0, n).into_owned();
        let mut lambda = DVector::zeros(self.h.len());
        for (a, &r) in rows.iter().enumerate() {
            lambda[r] = z[n + a];
        }
        let residual = self.kkt_residual(&x, &lambda, bounds)?;
        if residual > eps {
            return None;
        }
        let degenerate = singular || moves_x(&k, n);
        Some(KktPoint {
            x,
            lambda,
            active_rows: rows.to_vec(),
            bounds: bounds.to_vec(),
            residual,
            degenerate,
        })
    }

    fn kkt_residual(&self, x: &DVector<f64>, lambda: &DVector<f64>, bounds: &[BoundState]) -> Option<f64> {
        if x.iter().chain(lambda.iter()).any(|v| !v.is_finite()) {
            return None;
        }
        let s = &self.m * x + &self.q + self.g.transpose() * lambda;
        let slack = &self.h - &self.g * x;
        let mut worst = 0.0f64;
        for (r, &l) in lambda.iter().enumerate() {
            worst = worst.max(-l).max(-slack[r]).max((l * slack[r]).abs());
        }
        for c in 0..x.len() {
            worst = worst.max(self.lower[c] - x[c]).max(x[c] - self.upper[c]);
            match bounds[c] {
                BoundState::Free => worst = worst.max(s[c].abs()),
                // μ_lo = s_c >= 0, μ_hi = −s_c >= 0
                BoundState::Lower => worst = worst.max(-s[c]),
                BoundState::Upper => worst = worst.max(s[c]),
            }
        }
        Some(worst)
    }
}

/// True when the null space of `k` has a component in the first `n`
/// coordinates.
fn moves_x(k: &DMatrix<f64>, n: usize) -> bool {
    let svd = k.clone().svd(false, true);
    let Some(vt) = svd.v_t else { return true };
    let smax = svd.singular_values.max();
    let cutoff = smax * 1e-11;
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s <= cutoff)
        .any(|(j, _)| vt.row(j).columns(0, n).amax() > 1e-8)
}

fn merge(points: &mut Vec<KktPoint>, cand: KktPoint) {
    let tol = 1e-8 * (1.0 + cand.x.amax());
    if let Some(existing) = points.iter_mut().find(|p| (&p.x - &cand.x).amax() <= tol) {
        if existing.degenerate && !cand.degenerate {
            *existing = cand;
        }
    } else {
        points.push(cand);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn s2_normalized_equilibrium() {
        let vi = AffineVi::normalized_equilibrium(&benchmarks::s2()).unwrap();
        let out = vi.enumerate().unwrap();
        assert_eq!(out.points.len(), 1);
        let p = &out.points[0];
        assert!((&p.x - v(&[1.0, 0.0])).amax() < 1e-12);
        assert!((p.lambda[0] - 1.0).abs() < 1e-12);
        assert_eq!(p.active_rows, vec![0]);
        assert!(!p.degenerate);
        // two players, three states each, one row
        assert_eq!(out.systems, 18);
    }

    #[test]
    fn s0_has_slack_constraint() {
        let out = AffineVi::normalized_equilibrium(&benchmarks::s0()).unwrap().enumerate().unwrap();
        assert_eq!(out.points.len(), 1);
        assert!((&out.points[0].x - v(&[1.0, 1.0])).amax() < 1e-12);
        assert_eq!(out.points[0].lambda[0], 0.0);
    }

    #[test]
    fn linear_game_is_degenerate() {
        let mut g = benchmarks::s1();
        let mut players = g.players().to_vec();
        for p in &mut players {
            p.q = DMatrix::zeros(1, 1);
            p.c = v(&[1.0]);
        }
        g = Game::new("flat", players, g.joint().clone()).unwrap();
        let out = AffineVi::normalized_equilibrium(&g).unwrap().enumerate().unwrap();
        // Every split of x1 + x2 = 1 is an equilibrium.
        assert!(out.points.len() >= 2 || out.points.iter().all(|p| p.degenerate));
    }

    #[test]
    fn projection_onto_feasible_set() {
        let vi = AffineVi::projection_onto_d(&benchmarks::s1(), &v(&[2.0, 2.0]));
        let out = vi.enumerate().unwrap();
        assert_eq!(out.points.len(), 1);
        assert!((&out.points[0].x - v(&[0.5, 0.5])).amax() < 1e-12);
    }

    #[test]
    fn best_response_of_s2() {
        let g = benchmarks::s2();
        let vi = AffineVi::best_response(&g, 0, &v(&[0.0, 0.25])).unwrap();
        let out = vi.enumerate().unwrap();
        // maximize 2y − y²/2 subject to y <= 0.75
        assert!((out.points[0].x[0] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn budget_is_enforced() {
        let n = MAX_DIM + 1;
        let vi = AffineVi {
            m: DMatrix::identity(n, n),
            q: DVector::zeros(n),
            lower: DVector::zeros(n),
            upper: DVector::from_element(n, 1.0),
            g: DMatrix::zeros(0, n),
            h: DVector::zeros(0),
        };
        assert!(matches!(vi.enumerate(), Err(OracleError::BudgetExceeded { n: 13, rows: 0 })));
    }
}
