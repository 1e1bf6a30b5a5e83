//! Type-II Anderson extrapolation for fixed-point iterations `x ← T(x)`.
//!
//! Callers own the safeguard: a candidate is only a suggestion and must be
//! checked against the residual of the plain step.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub(crate) struct Anderson {
    memory: usize,
    last: Option<(DVector<f64>, DVector<f64>)>,
    dx: VecDeque<DVector<f64>>,
    df: VecDeque<DVector<f64>>,
}

impl Anderson {
    pub(crate) fn new(memory: usize) -> Self {
        Self {
            memory,
            last: None,
            dx: VecDeque::with_capacity(memory),
            df: VecDeque::with_capacity(memory),
        }
    }

    pub(crate) fn reset(&mut self) {
        self.last = None;
        self.dx.clear();
        self.df.clear();
    }

    /// Records the pair `(x, T(x))` and returns an extrapolated point, or
    /// `None` while the history is empty or degenerate.
    pub(crate) fn push(&mut self, x: &DVector<f64>, tx: &DVector<f64>) -> Option<DVector<f64>> {
        if self.memory == 0 {
            return None;
        }
        let f = tx - x;
        if let Some((px, pf)) = self.last.take() {
            if self.dx.len() == self.memory {
                self.dx.pop_front();
                self.df.pop_front();
            }
            self.dx.push_back(x - px);
            self.df.push_back(&f - pf);
        }
        self.last = Some((x.clone(), f.clone()));
        let k = self.df.len();
        if k == 0 {
            return None;
        }

        let n = x.len();
        let df = DMatrix::from_fn(n, k, |r, c| self.df[c][r]);
        let svd = df.clone().svd(true, true);
        let smax = svd.singular_values.max();
        if !(smax > 0.0) || !smax.is_finite() {
            return None;
        }
        let gamma = svd.solve(&f, smax * 1e-12).ok()?;
        if gamma.iter().any(|v| !v.is_finite()) {
            return None;
        }
        // x⁺ = T(x) − (ΔX + ΔF) γ
        let mut next = tx.clone();
        for (c, g) in gamma.iter().enumerate() {
            next.axpy(-g, &self.dx[c], 1.0);
            next.axpy(-g, &self.df[c], 1.0);
        }
        Some(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_linear_fixed_point_quickly() {
        // T(x) = A x + c with spectral radius close to one.
        let a = DMatrix::from_row_slice(3, 3, &[0.999, 0.0, 0.0, 0.0, 0.99, 0.001, 0.0, 0.0, 0.5]);
        let c = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
        let t = |x: &DVector<f64>| &a * x + &c;
        let fixed = (DMatrix::identity(3, 3) - &a).lu().solve(&c).unwrap();

        let mut acc = Anderson::new(5);
        let mut x = DVector::zeros(3);
        for _ in 0..10 {
            let tx = t(&x);
            x = acc.push(&x, &tx).unwrap_or(tx);
        }
        assert!((x - fixed).norm() < 1e-8);
    }

    #[test]
    fn disabled_returns_none() {
        let mut acc = Anderson::new(0);
        let x = DVector::zeros(2);
        assert!(acc.push(&x, &x).is_none());
    }
}
