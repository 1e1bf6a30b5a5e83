//! Game data model and the Nikaido–Isoda machinery.
//!
//! Every player `i` controls a block `x_i` of the strategy profile and
//! maximizes the concave quadratic payoff
//!
//! ```text
//! f_i(x) = c_iᵀx_i − ½ x_iᵀQ_i x_i + Σ_{j≠i} x_iᵀR_ij x_j
//! ```
//!
//! over a box `X_i`. All players share the joint constraints
//! `Σ_i h_i(x_i) ≤ b` with `h_ij(x_i) = a_ij + (A_i x_i)_j + x_iᵀC_ij x_i`.

use std::collections::BTreeMap;
use std::ops::{Deref, Range};

use nalgebra::{DMatrix, DVector};

use crate::error::ModelError;

/// Data of a single player.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerSpec {
    /// Linear payoff coefficients `c_i`.
    pub c: DVector<f64>,
    /// Own-block curvature `Q_i` (payoff contribution `−½ x_iᵀQ_i x_i`).
    pub q: DMatrix<f64>,
    /// Cross couplings `R_ij` keyed by the other player's index `j`.
    pub couplings: BTreeMap<usize, DMatrix<f64>>,
    /// Lower box bounds; `-inf` allowed.
    pub lower: DVector<f64>,
    /// Upper box bounds; `+inf` allowed.
    pub upper: DVector<f64>,
}

impl PlayerSpec {
    /// Uncoupled player on the box `[lower, upper]`.
    pub fn new(c: DVector<f64>, q: DMatrix<f64>, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        Self {
            c,
            q,
            couplings: BTreeMap::new(),
            lower,
            upper,
        }
    }

    pub fn with_coupling(mut self, other: usize, r: DMatrix<f64>) -> Self {
        self.couplings.insert(other, r);
        self
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.iter().chain(self.upper.iter()).all(|v| v.is_finite())
    }
}

/// The joint constraint data `Σ_i h_i(x_i) ≤ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointConstraints {
    /// Per-player affine parts `A_i` (m × n_i).
    pub a: Vec<DMatrix<f64>>,
    /// Per-player offsets `a_i` (length m).
    pub offsets: Vec<DVector<f64>>,
    /// Per-player quadratic parts: empty, or one `n_i × n_i` matrix per row.
    pub quad: Vec<Vec<DMatrix<f64>>>,
    /// Right-hand side `b`.
    pub b: DVector<f64>,
}

impl JointConstraints {
    /// Affine constraints `Σ_i (a_i + A_i x_i) ≤ b`.
    pub fn affine(a: Vec<DMatrix<f64>>, offsets: Vec<DVector<f64>>, b: DVector<f64>) -> Self {
        let quad = vec![Vec::new(); a.len()];
        Self { a, offsets, quad, b }
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    /// True when no player carries a nonzero quadratic term.
    pub fn is_affine(&self) -> bool {
        self.quad
            .iter()
            .all(|rows| rows.iter().all(|c| c.iter().all(|v| *v == 0.0)))
    }
}

/// A generalized game with joint constraints.
///
/// Immutable after construction. The stacked pseudo-gradient
/// `F(x) = M x − c` is precomputed so evaluations are a single product.
#[derive(Debug, Clone, PartialEq)]
pub struct Game {
    name: String,
    players: Vec<PlayerSpec>,
    joint: JointConstraints,
    offsets: Vec<usize>,
    response: DMatrix<f64>,
    linear: DVector<f64>,
    lower: DVector<f64>,
    upper: DVector<f64>,
}

fn check_dim(what: impl Into<String>, expected: usize, got: usize) -> Result<(), ModelError> {
    if expected == got {
        Ok(())
    } else {
        Err(ModelError::DimensionMismatch {
            what: what.into(),
            expected,
            got,
        })
    }
}

fn check_finite<'a>(what: &str, mut values: impl Iterator<Item = &'a f64>) -> Result<(), ModelError> {
    if values.all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::NonFinite(what.to_string()))
    }
}

impl Game {
    /// Assembles a game, checking shapes and finiteness only. Convexity and
    /// box sanity are the job of [`crate::validate::validate_game`].
    pub fn new(
        name: impl Into<String>,
        players: Vec<PlayerSpec>,
        joint: JointConstraints,
    ) -> Result<Self, ModelError> {
        let l = players.len();
        if l == 0 {
            return Err(ModelError::Invalid("a game needs at least one player".into()));
        }
        let m = joint.m();
        check_dim("joint.A (players)", l, joint.a.len())?;
        check_dim("joint.a (players)", l, joint.offsets.len())?;
        check_dim("joint.C (players)", l, joint.quad.len())?;
        check_finite("joint.b", joint.b.iter())?;

        let mut offsets = Vec::with_capacity(l + 1);
        offsets.push(0);
        for (i, p) in players.iter().enumerate() {
            let ni = p.dim();
            if ni == 0 {
                return Err(ModelError::Invalid(format!("player {i} has dimension 0")));
            }
            check_dim(format!("player {i} Q rows"), ni, p.q.nrows())?;
            check_dim(format!("player {i} Q cols"), ni, p.q.ncols())?;
            check_dim(format!("player {i} lower"), ni, p.lower.len())?;
            check_dim(format!("player {i} upper"), ni, p.upper.len())?;
            check_finite(&format!("player {i} c"), p.c.iter())?;
            check_finite(&format!("player {i} Q"), p.q.iter())?;
            if p.lower.iter().any(|v| v.is_nan() || *v == f64::INFINITY)
                || p.upper.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY)
            {
                return Err(ModelError::NonFinite(format!("player {i} box")));
            }
            check_dim(format!("joint.A[{i}] rows"), m, joint.a[i].nrows())?;
            check_dim(format!("joint.A[{i}] cols"), ni, joint.a[i].ncols())?;
            check_finite(&format!("joint.A[{i}]"), joint.a[i].iter())?;
            check_dim(format!("joint.a[{i}]"), m, joint.offsets[i].len())?;
            check_finite(&format!("joint.a[{i}]"), joint.offsets[i].iter())?;
            if !joint.quad[i].is_empty() {
                check_dim(format!("joint.C[{i}] rows"), m, joint.quad[i].len())?;
                for (t, c) in joint.quad[i].iter().enumerate() {
                    check_dim(format!("joint.C[{i}][{t}] rows"), ni, c.nrows())?;
                    check_dim(format!("joint.C[{i}][{t}] cols"), ni, c.ncols())?;
                    check_finite(&format!("joint.C[{i}][{t}]"), c.iter())?;
                }
            }
            offsets.push(offsets[i] + ni);
        }
        let n = offsets[l];

        let mut response = DMatrix::zeros(n, n);
        let mut linear = DVector::zeros(n);
        let mut lower = DVector::zeros(n);
        let mut upper = DVector::zeros(n);
        for (i, p) in players.iter().enumerate() {
            let (oi, ni) = (offsets[i], p.dim());
            response.view_mut((oi, oi), (ni, ni)).copy_from(&p.q);
            linear.rows_mut(oi, ni).copy_from(&p.c);
            lower.rows_mut(oi, ni).copy_from(&p.lower);
            upper.rows_mut(oi, ni).copy_from(&p.upper);
            for (&j, r) in &p.couplings {
                if j >= l || j == i {
                    return Err(ModelError::Invalid(format!(
                        "player {i} has a coupling to invalid player {j}"
                    )));
                }
                let nj = players[j].dim();
                check_dim(format!("R[{i}][{j}] rows"), ni, r.nrows())?;
                check_dim(format!("R[{i}][{j}] cols"), nj, r.ncols())?;
                check_finite(&format!("R[{i}][{j}]"), r.iter())?;
                response.view_mut((oi, offsets[j]), (ni, nj)).copy_from(&(-r));
            }
        }

        Ok(Self {
            name: name.into(),
            players,
            joint,
            offsets,
            response,
            linear,
            lower,
            upper,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn players(&self) -> &[PlayerSpec] {
        &self.players
    }

    pub fn player(&self, i: usize) -> Result<&PlayerSpec, ModelError> {
        self.players.get(i).ok_or(ModelError::NoSuchPlayer(i))
    }

    pub fn joint(&self) -> &JointConstraints {
        &self.joint
    }

    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    /// Total strategy dimension `n`.
    pub fn dim(&self) -> usize {
        self.offsets[self.players.len()]
    }

    /// Number of joint constraints `m`.
    pub fn m(&self) -> usize {
        self.joint.m()
    }

    /// Coordinates of player `i` inside the stacked profile.
    pub fn block(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Matrix `M` with `F(x) = M x − c`.
    pub fn response_matrix(&self) -> &DMatrix<f64> {
        &self.response
    }

    pub fn linear_terms(&self) -> &DVector<f64> {
        &self.linear
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn is_bounded(&self) -> bool {
        self.players.iter().all(PlayerSpec::is_bounded)
    }

    pub(crate) fn check_profile(&self, x: &DVector<f64>) -> Result<(), ModelError> {
        check_dim("strategy profile", self.dim(), x.len())
    }

    /// Payoff `f_i(x)`.
    pub fn payoff(&self, i: usize, x: &DVector<f64>) -> Result<f64, ModelError> {
        self.check_profile(x)?;
        let p = self.player(i)?;
        let xi = x.rows_range(self.block(i));
        let mut value = p.c.dot(&xi) - 0.5 * xi.dot(&(&p.q * xi));
        for (&j, r) in &p.couplings {
            value += xi.dot(&(r * x.rows_range(self.block(j))));
        }
        Ok(value)
    }

    /// `Ψ(x, y) = Σ_i f_i(x_{-i}, y_i)`.
    pub fn psi(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64, ModelError> {
        self.check_profile(x)?;
        self.check_profile(y)?;
        let mut total = 0.0;
        for (i, p) in self.players.iter().enumerate() {
            let yi = y.rows_range(self.block(i));
            total += p.c.dot(&yi) - 0.5 * yi.dot(&(&p.q * yi));
            for (&j, r) in &p.couplings {
                total += yi.dot(&(r * x.rows_range(self.block(j))));
            }
        }
        Ok(total)
    }

    /// Nikaido–Isoda bifunction `Φ(x, y) = Ψ(x, x) − Ψ(x, y)`.
    pub fn nikaido_isoda(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64, ModelError> {
        Ok(self.psi(x, x)? - self.psi(x, y)?)
    }

    /// Pseudo-gradient `F(x)`, block `i` equal to `−∇_{x_i} f_i(x)`.
    pub fn pseudo_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        self.check_profile(x)?;
        let mut out = DVector::zeros(self.dim());
        self.pseudo_gradient_into(x, &mut out);
        Ok(out)
    }

    pub(crate) fn pseudo_gradient_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        self.response.mul_to(x, out);
        *out -= &self.linear;
    }

    /// `h_i(x_i)` for a single player's block.
    pub fn player_constraints(&self, i: usize, xi: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        let p = self.player(i)?;
        check_dim(format!("player {i} strategy"), p.dim(), xi.len())?;
        Ok(self.h_block(i, xi.as_view()))
    }

    pub(crate) fn h_block(&self, i: usize, xi: nalgebra::DVectorView<'_, f64>) -> DVector<f64> {
        let mut h = &self.joint.offsets[i] + &self.joint.a[i] * xi;
        for (t, c) in self.joint.quad[i].iter().enumerate() {
            h[t] += xi.dot(&(c * xi));
        }
        h
    }

    /// Jacobian of `h_i` at `x_i` (m × n_i). Quadratic parts are assumed symmetric.
    pub fn constraint_jacobian(&self, i: usize, xi: &DVector<f64>) -> Result<DMatrix<f64>, ModelError> {
        let p = self.player(i)?;
        check_dim(format!("player {i} strategy"), p.dim(), xi.len())?;
        Ok(self.jacobian_block(i, xi.as_view()))
    }

    pub(crate) fn jacobian_block(&self, i: usize, xi: nalgebra::DVectorView<'_, f64>) -> DMatrix<f64> {
        let mut jac = self.joint.a[i].clone();
        for (t, c) in self.joint.quad[i].iter().enumerate() {
            let row = (c + c.transpose()) * xi;
            for k in 0..row.len() {
                jac[(t, k)] += row[k];
            }
        }
        jac
    }

    /// All `h_i(x_i)` as an `l × m` matrix (row `i` is player `i`).
    pub fn constraint_values(&self, x: &DVector<f64>) -> Result<DMatrix<f64>, ModelError> {
        self.check_profile(x)?;
        let (l, m) = (self.num_players(), self.m());
        let mut out = DMatrix::zeros(l, m);
        for i in 0..l {
            let h = self.h_block(i, x.rows_range(self.block(i)));
            out.row_mut(i).copy_from(&h.transpose());
        }
        Ok(out)
    }

    /// Joint violation `[Σ_i h_i(x_i) − b]_+`.
    pub fn joint_residual(&self, x: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        let h = self.constraint_values(x)?;
        let total = h.row_sum().transpose();
        Ok((total - &self.joint.b).map(|v| v.max(0.0)))
    }

    /// Euclidean projection onto the product of boxes `X`.
    pub fn project(&self, z: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        self.check_profile(z)?;
        let mut out = z.clone();
        self.project_in_place(&mut out);
        Ok(out)
    }

    pub(crate) fn project_in_place(&self, z: &mut DVector<f64>) {
        for k in 0..z.len() {
            z[k] = z[k].max(self.lower[k]).min(self.upper[k]);
        }
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .enumerate()
                .all(|(k, v)| *v >= self.lower[k] && *v <= self.upper[k])
    }

    /// Wraps a raw vector with this game's block layout.
    pub fn profile(&self, values: DVector<f64>) -> Result<StrategyProfile, ModelError> {
        self.check_profile(&values)?;
        Ok(StrategyProfile {
            values,
            offsets: self.offsets.clone(),
        })
    }
}

/// A stacked strategy profile `x = (x_1, …, x_l)` with its block layout.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyProfile {
    values: DVector<f64>,
    offsets: Vec<usize>,
}

impl StrategyProfile {
    pub fn block(&self, i: usize) -> nalgebra::DVectorView<'_, f64> {
        self.values
            .rows_range(self.offsets[i]..self.offsets[i + 1])
    }

    pub fn num_players(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }
}

impl Deref for StrategyProfile {
    type Target = DVector<f64>;

    fn deref(&self) -> &Self::Target {
        &self.values
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
    fn payoff_examples() {
        let s1 = benchmarks::s1();
        let s2 = benchmarks::s2();
        assert_eq!(s1.payoff(0, &v(&[1.0, 0.0])).unwrap(), 0.5);
        assert_eq!(s1.payoff(1, &v(&[1.0, 0.0])).unwrap(), 0.0);
        assert_eq!(s2.payoff(0, &v(&[1.0, 1.0])).unwrap(), 1.5);
    }

    #[test]
    fn payoff_dimension_mismatch() {
        let s1 = benchmarks::s1();
        assert!(matches!(
            s1.payoff(0, &v(&[1.0])),
            Err(ModelError::DimensionMismatch { .. })
        ));
        assert!(matches!(s1.payoff(5, &v(&[1.0, 0.0])), Err(ModelError::NoSuchPlayer(5))));
    }

    #[test]
    fn phi_examples() {
        let s1 = benchmarks::s1();
        let s2 = benchmarks::s2();
        let x = v(&[1.0, 0.0]);
        assert_eq!(s1.nikaido_isoda(&x, &x).unwrap(), 0.0);
        assert!((s1.nikaido_isoda(&x, &v(&[0.5, 0.5])).unwrap() + 0.25).abs() < 1e-15);
        assert!((s2.nikaido_isoda(&x, &v(&[0.0, 1.0])).unwrap() - 1.0).abs() < 1e-15);
        assert!(s1.nikaido_isoda(&x, &v(&[0.5])).is_err());
    }

    #[test]
    fn pseudo_gradient_examples() {
        let s1 = benchmarks::s1();
        let s2 = benchmarks::s2();
        assert_eq!(s1.pseudo_gradient(&v(&[0.0, 0.0])).unwrap(), v(&[-1.0, -1.0]));
        assert_eq!(s1.pseudo_gradient(&v(&[1.0, 1.0])).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(s2.pseudo_gradient(&v(&[2.0, 1.0])).unwrap(), v(&[0.0, 0.0]));
    }

    #[test]
    fn constraint_examples() {
        let s0 = benchmarks::s0();
        let s1 = benchmarks::s1();
        let h = s1.constraint_values(&v(&[0.5, 0.5])).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 1, &[0.5, 0.5]));
        assert_eq!(s1.joint_residual(&v(&[0.5, 0.5])).unwrap(), v(&[0.0]));
        assert_eq!(s1.joint_residual(&v(&[1.0, 1.0])).unwrap(), v(&[1.0]));
        assert_eq!(s0.joint_residual(&v(&[1.0, 1.0])).unwrap(), v(&[0.0]));
    }

    #[test]
    fn projection_examples() {
        let s1 = benchmarks::s1();
        assert_eq!(s1.project(&v(&[-1.0, 11.0])).unwrap(), v(&[0.0, 10.0]));
        assert_eq!(s1.project(&v(&[0.3, 0.7])).unwrap(), v(&[0.3, 0.7]));
        assert_eq!(s1.project(&v(&[10.0, 10.0])).unwrap(), v(&[10.0, 10.0]));
    }

    #[test]
    fn quadratic_constraint_jacobian() {
        let players = vec![PlayerSpec::new(
            v(&[1.0, 1.0]),
            DMatrix::identity(2, 2),
            v(&[-5.0, -5.0]),
            v(&[5.0, 5.0]),
        )];
        let mut joint = JointConstraints::affine(
            vec![DMatrix::from_row_slice(1, 2, &[1.0, -1.0])],
            vec![v(&[0.5])],
            v(&[2.0]),
        );
        joint.quad[0] = vec![DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])];
        let g = Game::new("quad", players, joint).unwrap();
        assert!(!g.joint().is_affine());
        let xi = v(&[0.3, -0.7]);
        let h = g.player_constraints(0, &xi).unwrap();
        // 0.5 + (0.3 + 0.7) + (2*0.09 + 2*0.5*0.3*(-0.7) + 0.49)
        let expected = 0.5 + 1.0 + (0.18 - 0.21 + 0.49);
        assert!((h[0] - expected).abs() < 1e-14);
        let jac = g.constraint_jacobian(0, &xi).unwrap();
        let step = 1e-6;
        for k in 0..2 {
            let mut xp = xi.clone();
            let mut xm = xi.clone();
            xp[k] += step;
            xm[k] -= step;
            let fd = (g.player_constraints(0, &xp).unwrap()[0]
                - g.player_constraints(0, &xm).unwrap()[0])
                / (2.0 * step);
            assert!((fd - jac[(0, k)]).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let players = vec![PlayerSpec::new(
            v(&[1.0]),
            DMatrix::identity(2, 2),
            v(&[0.0]),
            v(&[1.0]),
        )];
        let joint = JointConstraints::affine(vec![DMatrix::zeros(1, 1)], vec![v(&[0.0])], v(&[1.0]));
        assert!(matches!(
            Game::new("bad", players, joint),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }
}
