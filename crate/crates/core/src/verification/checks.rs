//! Randomized checks of the structural properties the method relies on.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ModelError, SolveError};
use crate::game::Game;
use crate::master::project_u;
use crate::nep::{penalized_map, solve_nep, NepConfig};
use crate::penalty::{eval_g, penalty_grad_x, penalty_i, penalty_total, PenaltyFunction, ShareAllocation, ShareFlags};

/// Seeded sampler over `X` and `U`. Unbounded coordinates are drawn from
/// `[−radius, radius]` (clipped to the finite side, if any).
#[derive(Debug, Clone)]
pub struct Sampler {
    rng: ChaCha8Rng,
    pub radius: f64,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            radius: 10.0,
        }
    }

    fn interval(&mut self, lo: f64, hi: f64) -> f64 {
        let (a, b) = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => (lo, hi),
            (true, false) => (lo, lo.max(0.0) + self.radius),
            (false, true) => (hi.min(0.0) - self.radius, hi),
            (false, false) => (-self.radius, self.radius),
        };
        if a == b {
            a
        } else {
            self.rng.random_range(a..=b)
        }
    }

    pub fn sample_x(&mut self, game: &Game) -> DVector<f64> {
        DVector::from_fn(game.dim(), |k, _| self.interval(game.lower()[k], game.upper()[k]))
    }

    /// A point of `U`: a uniform draw around the equal split, projected.
    pub fn sample_u(&mut self, game: &Game, flags: ShareFlags) -> Result<ShareAllocation, ModelError> {
        let b = &game.joint().b;
        let l = game.num_players();
        let spread = 1.0 + b.amax();
        let raw = DMatrix::from_fn(l, game.m(), |_, t| {
            b[t] / l as f64 + self.rng.random_range(-spread..=spread)
        });
        project_u(&raw, b, flags)
    }

    pub fn unit(&mut self) -> f64 {
        self.rng.random_range(0.0..=1.0)
    }
}

/// Largest `Φ(x', x'') + Φ(x'', x')` over `n` random pairs in `X`.
/// Values above zero violate monotonicity.
pub fn check_phi_monotone(game: &Game, sampler: &mut Sampler, n: usize) -> Result<f64, ModelError> {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..n {
        let a = sampler.sample_x(game);
        let b = sampler.sample_x(game);
        let s = game.nikaido_isoda(&a, &b)? + game.nikaido_isoda(&b, &a)?;
        worst = worst.max(s);
    }
    Ok(worst)
}

/// Largest `γ‖g(u') − g(u'')‖² − ⟨u' − u'', g(u') − g(u'')⟩` over `n` random
/// pairs in `U`. Non-positive means co-coercive with modulus `γ` on the
/// sample.
pub fn check_g_cocoercive(
    game: &Game,
    phi: &dyn PenaltyFunction,
    tau: f64,
    flags: ShareFlags,
    sampler: &mut Sampler,
    n: usize,
    nep: &NepConfig,
) -> Result<f64, SolveError> {
    let gamma = phi.cocoercivity();
    let x0 = game.project(&DVector::zeros(game.dim()))?;
    let eval = |u: &ShareAllocation| -> Result<DMatrix<f64>, SolveError> {
        let r = solve_nep(game, phi, tau, u.matrix(), &x0, nep)?;
        Ok(eval_g(game, phi, u.matrix(), r.x.values())?)
    };
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..n {
        let u1 = sampler.sample_u(game, flags)?;
        let u2 = sampler.sample_u(game, flags)?;
        let dg = eval(&u1)? - eval(&u2)?;
        let du = u1.matrix() - u2.matrix();
        worst = worst.max(gamma * dg.norm_squared() - du.dot(&dg));
    }
    Ok(worst)
}

/// Relative errors of analytic derivatives against central differences.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradientReport {
    pub pseudo_gradient: f64,
    pub penalty_gradient: f64,
    pub phi_gradient: f64,
    pub penalized_map: f64,
}

impl GradientReport {
    pub fn max(&self) -> f64 {
        self.pseudo_gradient
            .max(self.penalty_gradient)
            .max(self.phi_gradient)
            .max(self.penalized_map)
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Compares `F`, `∇_{x_i} P_i`, `φ'` and `F̃` with central differences of
/// step `step` at `(x, u)`.
pub fn gradient_check(
    game: &Game,
    phi: &dyn PenaltyFunction,
    tau: f64,
    u: &ShareAllocation,
    x: &DVector<f64>,
    step: f64,
) -> Result<GradientReport, ModelError> {
    let mut rep = GradientReport::default();
    let f = game.pseudo_gradient(x)?;
    let ft = penalized_map(game, phi, tau, u.matrix(), x)?;
    for i in 0..game.num_players() {
        let block = game.block(i);
        let xi = x.rows_range(block.clone()).into_owned();
        let ui = u.share(i);
        let pg = penalty_grad_x(game, phi, i, &xi, &ui)?;
        for (c, k) in block.clone().enumerate() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += step;
            xm[k] -= step;
            let dfi = (game.payoff(i, &xp)? - game.payoff(i, &xm)?) / (2.0 * step);
            rep.pseudo_gradient = rep.pseudo_gradient.max(rel_err(f[k], -dfi));

            let xip = xp.rows_range(block.clone()).into_owned();
            let xim = xm.rows_range(block.clone()).into_owned();
            let dpi = (penalty_i(game, phi, i, &xip, &ui)? - penalty_i(game, phi, i, &xim, &ui)?) / (2.0 * step);
            rep.penalty_gradient = rep.penalty_gradient.max(rel_err(pg[c], dpi));
            rep.penalized_map = rep.penalized_map.max(rel_err(ft[k], -dfi + tau * dpi));
        }
        let v = game.player_constraints(i, &xi)? - &ui;
        let grad = phi.gradient(&v);
        for t in 0..v.len() {
            let mut vp = v.clone();
            let mut vm = v.clone();
            vp[t] += step;
            vm[t] -= step;
            let d = (phi.value(&vp) - phi.value(&vm)) / (2.0 * step);
            rep.phi_gradient = rep.phi_gradient.max(rel_err(grad[t], d));
        }
    }
    Ok(rep)
}

/// One-sided difference quotients of `P_i` along coordinate `k` of
/// player `i`: `(left, right)`. At a kink of `φ` these bracket the
/// analytic partial derivative.
pub fn one_sided_penalty_derivatives(
    game: &Game,
    phi: &dyn PenaltyFunction,
    i: usize,
    xi: &DVector<f64>,
    ui: &DVector<f64>,
    k: usize,
    step: f64,
) -> Result<(f64, f64), ModelError> {
    let p0 = penalty_i(game, phi, i, xi, ui)?;
    let mut xp = xi.clone();
    xp[k] += step;
    let mut xm = xi.clone();
    xm[k] -= step;
    let right = (penalty_i(game, phi, i, &xp, ui)? - p0) / step;
    let left = (p0 - penalty_i(game, phi, i, &xm, ui)?) / step;
    Ok((left, right))
}

/// `Φ_τ(w(τ), w) = Φ(x(τ), x) + τ [P(w) − P(w(τ))]`, non-negative for all
/// `w ∈ X × U` exactly when `w(τ)` solves the joint penalized problem.
pub fn penalty_gap(
    game: &Game,
    phi: &dyn PenaltyFunction,
    tau: f64,
    at: (&DVector<f64>, &DMatrix<f64>),
    w: (&DVector<f64>, &DMatrix<f64>),
) -> Result<f64, ModelError> {
    let (x_tau, u_tau) = at;
    let (x, u) = w;
    Ok(game.nikaido_isoda(x_tau, x)?
        + tau * (penalty_total(game, phi, x, u)? - penalty_total(game, phi, x_tau, u_tau)?))
}

/// Smallest [`penalty_gap`] over `n` sampled `w ∈ X × U`.
pub fn min_penalty_gap(
    game: &Game,
    phi: &dyn PenaltyFunction,
    tau: f64,
    at: (&DVector<f64>, &DMatrix<f64>),
    flags: ShareFlags,
    sampler: &mut Sampler,
    n: usize,
) -> Result<f64, ModelError> {
    let mut worst = f64::INFINITY;
    for _ in 0..n {
        let x = sampler.sample_x(game);
        let u = sampler.sample_u(game, flags)?;
        worst = worst.min(penalty_gap(game, phi, tau, at, (&x, u.matrix()))?);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks;
    use crate::penalty::QuadraticPlus;

    #[test]
    fn shipped_games_are_monotone() {
        for g in benchmarks::shipped() {
            let mut s = Sampler::new(7);
            assert!(check_phi_monotone(&g, &mut s, 200).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn adversarial_game_is_not_monotone() {
        let mut s = Sampler::new(7);
        assert!(check_phi_monotone(&benchmarks::adversarial(), &mut s, 200).unwrap() > 0.0);
    }

    #[test]
    fn g_is_cocoercive_on_s2() {
        let mut s = Sampler::new(3);
        let v = check_g_cocoercive(
            &benchmarks::s2(),
            &QuadraticPlus,
            10.0,
            ShareFlags::default(),
            &mut s,
            20,
            &NepConfig::default(),
        )
        .unwrap();
        assert!(v <= 1e-6, "{v}");
    }

    #[test]
    fn gradients_agree() {
        let g = benchmarks::random_instance(5);
        let mut s = Sampler::new(11);
        for _ in 0..20 {
            let x = s.sample_x(&g);
            let u = s.sample_u(&g, ShareFlags::default()).unwrap();
            let rep = gradient_check(&g, &QuadraticPlus, 10.0, &u, &x, 1e-6).unwrap();
            assert!(rep.max() <= 1e-6, "{rep:?}");
        }
    }

    #[test]
    fn kink_is_bracketed() {
        // h(x) = x − u = 0 at x = 0.5, u = 0.5: both one-sided slopes near 0.
        let g = benchmarks::s1();
        let (l, r) = one_sided_penalty_derivatives(
            &g,
            &QuadraticPlus,
            0,
            &DVector::from_element(1, 0.5),
            &DVector::from_element(1, 0.5),
            0,
            1e-6,
        )
        .unwrap();
        assert!(l <= 0.0 + 1e-12 && (0.0..1e-5).contains(&r));
    }

    #[test]
    fn gap_is_nonnegative_at_penalized_solution() {
        // S1 at τ = 1 with equal shares: x = 0.75 each.
        let g = benchmarks::s1();
        let x = DVector::from_element(2, 0.75);
        let u = DMatrix::from_element(2, 1, 0.5);
        let mut s = Sampler::new(1);
        let gap = min_penalty_gap(&g, &QuadraticPlus, 1.0, (&x, &u), ShareFlags::default(), &mut s, 500).unwrap();
        assert!(gap >= -1e-12, "{gap}");
        // a non-solution admits a negative gap
        let y = DVector::from_element(2, 0.2);
        let gap = min_penalty_gap(&g, &QuadraticPlus, 1.0, (&y, &u), ShareFlags::default(), &mut s, 500).unwrap();
        assert!(gap < 0.0);
    }
}
