//! Desk-scale benchmark games.
//!
//! * `s0`: two scalar players, `f_i = x_i − ½x_i²`, `X_i = [0, 10]`,
//!   `x_1 + x_2 ≤ 4` (slack at the unconstrained Nash point).
//! * `s1`: as `s0` with `b = 1` (symmetric, binding).
//! * `s2`: `f_1 = 2x_1 − ½x_1²`, otherwise as `s1` (asymmetric, binding).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::game::{Game, JointConstraints, PlayerSpec};

/// Two scalar players with `f_i = c_i x_i − ½x_i²` on `[0, 10]` sharing
/// `x_1 + x_2 ≤ b`.
pub fn scalar_pair(name: &str, c: [f64; 2], b: f64) -> Game {
    let players = c
        .iter()
        .map(|&ci| {
            PlayerSpec::new(
                DVector::from_element(1, ci),
                DMatrix::identity(1, 1),
                DVector::from_element(1, 0.0),
                DVector::from_element(1, 10.0),
            )
        })
        .collect();
    let joint = JointConstraints::affine(
        vec![DMatrix::identity(1, 1); 2],
        vec![DVector::zeros(1); 2],
        DVector::from_element(1, b),
    );
    Game::new(name, players, joint).expect("benchmark data is well formed")
}

pub fn s0() -> Game {
    scalar_pair("s0", [1.0, 1.0], 4.0)
}

pub fn s1() -> Game {
    scalar_pair("s1", [1.0, 1.0], 1.0)
}

pub fn s2() -> Game {
    scalar_pair("s2", [2.0, 1.0], 1.0)
}

/// The shipped benchmarks, in order.
pub fn shipped() -> Vec<Game> {
    vec![s0(), s1(), s2()]
}

/// `s1` with symmetric cross couplings `R_12 = R_21 = 3`, which breaks
/// monotonicity of the Nikaido–Isoda bifunction.
pub fn adversarial() -> Game {
    let base = s1();
    let mut players = base.players().to_vec();
    players[0] = players[0]
        .clone()
        .with_coupling(1, DMatrix::from_element(1, 1, 3.0));
    players[1] = players[1]
        .clone()
        .with_coupling(0, DMatrix::from_element(1, 1, 3.0));
    Game::new("adversarial", players, base.joint().clone()).expect("well formed")
}

/// Seeded random instance: `l ∈ {2,3}`, `n_i ∈ {1,2}`, `m ∈ {1,2}`,
/// positive definite `Q_i`, strongly monotone pseudo-gradient, affine
/// nonnegative constraint rows, boxes `[0, u]` and `b > 0` (so `0 ∈ D`).
pub fn random_instance(seed: u64) -> Game {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        if let Some(game) = try_random(&mut rng, seed) {
            return game;
        }
    }
}

fn try_random(rng: &mut ChaCha8Rng, seed: u64) -> Option<Game> {
    let l = rng.random_range(2..=3usize);
    let m = rng.random_range(1..=2usize);
    let dims: Vec<usize> = (0..l).map(|_| rng.random_range(1..=2usize)).collect();

    let mut players = Vec::with_capacity(l);
    for &ni in &dims {
        let b = DMatrix::from_fn(ni, ni, |_, _| rng.random_range(-1.0..1.0));
        let q = b.transpose() * &b + DMatrix::identity(ni, ni) * rng.random_range(0.5..1.5);
        let c = DVector::from_fn(ni, |_, _| rng.random_range(0.5..3.0));
        let upper = DVector::from_fn(ni, |_, _| rng.random_range(3.0..6.0));
        players.push(PlayerSpec::new(c, q, DVector::zeros(ni), upper));
    }
    // Mostly skew couplings with a small symmetric perturbation.
    for i in 0..l {
        for j in (i + 1)..l {
            if rng.random_bool(0.5) {
                let s = DMatrix::from_fn(dims[i], dims[j], |_, _| rng.random_range(-0.5..0.5));
                let e = DMatrix::from_fn(dims[i], dims[j], |_, _| rng.random_range(-0.1..0.1));
                let rij = &s + &e;
                let rji = (-&s + &e).transpose();
                players[i].couplings.insert(j, rij);
                players[j].couplings.insert(i, rji);
            }
        }
    }
    let a: Vec<DMatrix<f64>> = dims
        .iter()
        .map(|&ni| DMatrix::from_fn(m, ni, |_, _| rng.random_range(0.2..1.5)))
        .collect();
    let b = DVector::from_fn(m, |_, _| rng.random_range(0.5..3.0));
    let joint = JointConstraints::affine(a, vec![DVector::zeros(m); l], b);
    let game = Game::new(format!("random-{seed}"), players, joint).ok()?;

    let mtx = game.response_matrix();
    let sym = (mtx + mtx.transpose()) * 0.5;
    let min_eig = sym.symmetric_eigenvalues().min();
    (min_eig > 0.1).then_some(game)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_instances_are_deterministic_and_monotone() {
        for seed in 0..20 {
            let g = random_instance(seed);
            assert_eq!(g, random_instance(seed));
            assert!((2..=3).contains(&g.num_players()));
            assert!((1..=2).contains(&g.m()));
            let sym = (g.response_matrix() + g.response_matrix().transpose()) * 0.5;
            assert!(sym.symmetric_eigenvalues().min() > 0.1);
        }
    }
}
