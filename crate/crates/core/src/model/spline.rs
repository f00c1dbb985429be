//! B-spline basis evaluation on a clamped knot vector.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A univariate B-spline basis with clamped boundary knots. The basis
/// dimension is `degree + 1 + #internal_knots`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineBasis {
    degree: usize,
    /// Full knot vector with each boundary knot repeated `degree + 1` times.
    knots: Vec<f64>,
    n_basis: usize,
}

impl BSplineBasis {
    pub fn new(degree: usize, internal_knots: &[f64], boundary: (f64, f64)) -> Result<Self> {
        let (lo, hi) = boundary;
        if !(lo < hi) {
            return Err(Error::config(format!(
                "boundary knots ({lo}, {hi}) must be increasing"
            )));
        }
        let mut prev = f64::NEG_INFINITY;
        for &k in internal_knots {
            if !(k > lo && k < hi) {
                return Err(Error::config(format!(
                    "internal knot {k} outside boundary ({lo}, {hi})"
                )));
            }
            if k < prev {
                return Err(Error::config("internal knots must be sorted".to_string()));
            }
            prev = k;
        }
        let mut knots = Vec::with_capacity(internal_knots.len() + 2 * (degree + 1));
        knots.extend(std::iter::repeat(lo).take(degree + 1));
        knots.extend_from_slice(internal_knots);
        knots.extend(std::iter::repeat(hi).take(degree + 1));
        Ok(BSplineBasis {
            degree,
            knots,
            n_basis: internal_knots.len() + degree + 1,
        })
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn boundary(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    /// Index of the knot span containing `x`; the right boundary belongs to
    /// the last span.
    fn find_span(&self, x: f64) -> Result<usize> {
        let (lo, hi) = self.boundary();
        if x < lo || x > hi {
            return Err(Error::data(format!(
                "value {x} outside the spline boundary [{lo}, {hi}]; refusing to extrapolate"
            )));
        }
        if x == hi {
            return Ok(self.n_basis - 1);
        }
        // knots[degree..=n_basis] are the breakpoints
        let mut span = self.degree;
        while span + 1 < self.n_basis && self.knots[span + 1] <= x {
            span += 1;
        }
        Ok(span)
    }

    /// Nonzero basis values of the given degree at span `span`, by the
    /// triangular recurrence; output index `r` is basis function `span - d + r`.
    fn local_basis(&self, x: f64, span: usize, d: usize) -> Vec<f64> {
        let t = &self.knots;
        let mut n = vec![0.0; d + 1];
        let mut left = vec![0.0; d + 1];
        let mut right = vec![0.0; d + 1];
        n[0] = 1.0;
        for j in 1..=d {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        n
    }

    /// All basis function values at `x`.
    pub fn evaluate(&self, x: f64) -> Result<Vec<f64>> {
        let span = self.find_span(x)?;
        let local = self.local_basis(x, span, self.degree);
        let mut out = vec![0.0; self.n_basis];
        for (r, val) in local.into_iter().enumerate() {
            out[span - self.degree + r] = val;
        }
        Ok(out)
    }

    /// First derivatives of all basis functions at `x`, via the standard
    /// difference of degree-(p-1) functions.
    pub fn derivative(&self, x: f64) -> Result<Vec<f64>> {
        let p = self.degree;
        let mut out = vec![0.0; self.n_basis];
        if p == 0 {
            return Ok(out);
        }
        let span = self.find_span(x)?;
        let lower = self.local_basis(x, span, p - 1);
        // degree-(p-1) function index i is nonzero for i in span-p+1..=span
        let t = &self.knots;
        let low = |i: isize| -> f64 {
            let first = span as isize - p as isize + 1;
            if i < first || i > span as isize {
                0.0
            } else {
                lower[(i - first) as usize]
            }
        };
        for i in span - p..=span {
            let ii = i as isize;
            let denom1 = t[i + p] - t[i];
            let denom2 = t[i + p + 1] - t[i + 1];
            let term1 = if denom1 > 0.0 { low(ii) / denom1 } else { 0.0 };
            let term2 = if denom2 > 0.0 {
                low(ii + 1) / denom2
            } else {
                0.0
            };
            out[i] = p as f64 * (term1 - term2);
        }
        Ok(out)
    }

    /// Basis design matrix, `n_basis x J`, one column per input value.
    pub fn design_matrix(&self, values: &[f64]) -> Result<Array2<f64>> {
        let mut m = Array2::zeros((self.n_basis, values.len()));
        for (j, &x) in values.iter().enumerate() {
            for (b, val) in self.evaluate(x)?.into_iter().enumerate() {
                m[[b, j]] = val;
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // Direct Cox-de Boor recursion, the independent oracle.
    fn oracle_basis(t: &[f64], i: usize, d: usize, x: f64, right_end: f64) -> f64 {
        if d == 0 {
            let in_span = t[i] <= x && (x < t[i + 1] || (x == right_end && t[i + 1] == right_end));
            return if in_span { 1.0 } else { 0.0 };
        }
        let mut val = 0.0;
        if t[i + d] > t[i] {
            val += (x - t[i]) / (t[i + d] - t[i]) * oracle_basis(t, i, d - 1, x, right_end);
        }
        if t[i + d + 1] > t[i + 1] {
            val += (t[i + d + 1] - x) / (t[i + d + 1] - t[i + 1])
                * oracle_basis(t, i + 1, d - 1, x, right_end);
        }
        val
    }

    fn paper_basis() -> BSplineBasis {
        BSplineBasis::new(3, &[-1.0, 0.0, 1.0], (-2.0, 2.0)).unwrap()
    }

    #[test]
    fn cubic_with_three_internal_knots_has_seven_columns() {
        let b = paper_basis();
        assert_eq!(b.n_basis(), 7);
        let m = b.design_matrix(&[-2.0, 0.3, 2.0]).unwrap();
        assert_eq!(m.dim(), (7, 3));
    }

    #[test]
    fn partition_of_unity() {
        let b = paper_basis();
        for i in 0..=40 {
            let x = -2.0 + 4.0 * i as f64 / 40.0;
            let vals = b.evaluate(x).unwrap();
            assert_abs_diff_eq!(vals.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            assert!(vals.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn matches_recursive_oracle_on_grid() {
        let b = paper_basis();
        let t = b.knots.clone();
        for g in 0..20 {
            let x = -2.0 + 4.0 * (g as f64 + 0.5) / 20.0;
            let vals = b.evaluate(x).unwrap();
            for i in 0..b.n_basis() {
                let want = oracle_basis(&t, i, 3, x, 2.0);
                assert_abs_diff_eq!(vals[i], want, epsilon = 1e-10);
            }
        }
        // both boundaries included
        for x in [-2.0, 2.0] {
            let vals = b.evaluate(x).unwrap();
            for i in 0..b.n_basis() {
                assert_abs_diff_eq!(vals[i], oracle_basis(&t, i, 3, x, 2.0), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn derivative_matches_central_difference() {
        let b = paper_basis();
        let h = 1e-6;
        for g in 0..19 {
            let x = -1.9 + 3.8 * g as f64 / 19.0;
            let d = b.derivative(x).unwrap();
            let up = b.evaluate(x + h).unwrap();
            let dn = b.evaluate(x - h).unwrap();
            for i in 0..b.n_basis() {
                let fd = (up[i] - dn[i]) / (2.0 * h);
                assert_abs_diff_eq!(d[i], fd, epsilon = 1e-6);
            }
        }
        // derivatives of a partition of unity sum to zero
        let d = b.derivative(0.37).unwrap();
        assert_abs_diff_eq!(d.iter().sum::<f64>(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn extrapolation_is_an_error() {
        let b = paper_basis();
        assert!(b.evaluate(2.0 + 1e-9).is_err());
        assert!(b.evaluate(-2.5).is_err());
        assert!(b.design_matrix(&[0.0, 3.0]).is_err());
    }

    #[test]
    fn bad_knot_configurations_rejected() {
        assert!(BSplineBasis::new(3, &[0.0], (1.0, -1.0)).is_err());
        assert!(BSplineBasis::new(3, &[5.0], (-2.0, 2.0)).is_err());
        assert!(BSplineBasis::new(3, &[1.0, -1.0], (-2.0, 2.0)).is_err());
    }
}
