//! Identifiable-parameter transforms and covariate-effect summaries.
//!
//! The raw factor blocks are only identified up to rotation and scale, so
//! reporting goes through invariant functionals: coefficients rescaled by
//! the trace of the factor covariance, the between-individual correlation
//! matrix, normalized Gram matrices of species vectors, and compositional
//! effects (derivatives, counterfactual compositions, population trends,
//! discrete differences).

mod effects;
mod lowess;

pub use effects::{
    age_group_average, composition_at, composition_at_with_residuals, derivative,
    discrete_difference, population_average, population_average_with_residuals, population_trend,
    quantile, EffectContext, TrendCurve, TrendGrid,
};
pub use lowess::lowess;

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::linalg::symmetric_eigenvalues;
use crate::model::LatentState;
use crate::sampler::Draw;
use crate::{Error, Result};

/// Read-only access to the state functionals the summaries need; lets the
/// same code run on full latent states and on retained chain draws.
pub trait StateView {
    fn sigma(&self) -> ArrayView1<'_, f64>;
    fn x(&self) -> ArrayView2<'_, f64>;
    fn y(&self) -> ArrayView2<'_, f64>;
    fn v(&self) -> ArrayView2<'_, f64>;
    fn q(&self) -> ArrayView2<'_, f64>;
}

impl StateView for LatentState {
    fn sigma(&self) -> ArrayView1<'_, f64> {
        self.sigma.view()
    }
    fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }
    fn y(&self) -> ArrayView2<'_, f64> {
        self.y.view()
    }
    fn v(&self) -> ArrayView2<'_, f64> {
        self.v.view()
    }
    fn q(&self) -> ArrayView2<'_, f64> {
        self.q.view()
    }
}

impl StateView for Draw {
    fn sigma(&self) -> ArrayView1<'_, f64> {
        self.sigma.view()
    }
    fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }
    fn y(&self) -> ArrayView2<'_, f64> {
        self.y.view()
    }
    fn v(&self) -> ArrayView2<'_, f64> {
        self.v.view()
    }
    fn q(&self) -> ArrayView2<'_, f64> {
        self.q.view()
    }
}

/// `trace(Y^T Y + I)`: the squared Frobenius norm of the factors plus the
/// number of factor columns.
pub fn trace_factor_covariance(y: ArrayView2<f64>) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>() + y.ncols() as f64
}

/// The identifiable normalization of the regression coefficients:
/// `v / sqrt(trace(Y^T Y + I))`. Invariant under rotations of the factors.
pub fn rescaled_v(state: &impl StateView) -> Array2<f64> {
    let scale = trace_factor_covariance(state.y()).sqrt();
    state.v().mapv(|x| x / scale)
}

/// Correlation matrix of `Sigma = Y^T Y + I` between factor columns
/// (individuals in the longitudinal model).
pub fn sample_correlation(state: &impl StateView) -> Array2<f64> {
    let y = state.y();
    let u = y.ncols();
    let mut sigma = y.t().dot(&y);
    for d in 0..u {
        sigma[[d, d]] += 1.0;
    }
    let inv_sd: Vec<f64> = (0..u).map(|d| 1.0 / sigma[[d, d]].sqrt()).collect();
    for r in 0..u {
        for c in 0..u {
            sigma[[r, c]] *= inv_sd[r] * inv_sd[c];
        }
    }
    sigma
}

/// Which species vectors the Gram matrix is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramSource {
    /// Latent species vectors `X_i`.
    X,
    /// Fixed-effect coefficient vectors `v_i`.
    V,
}

/// A normalized Gram (cosine) matrix with the indices of any zero-norm
/// columns, whose off-diagonal similarities are defined as zero.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub matrix: Array2<f64>,
    pub zero_norm: Vec<usize>,
}

/// Cosine similarity between species vectors: entry `(i, i')` is
/// `<m_i, m_i'> / (|m_i| |m_i'|)` over the columns of the chosen block.
pub fn species_gram(state: &impl StateView, source: GramSource) -> GramMatrix {
    let m = match source {
        GramSource::X => state.x(),
        GramSource::V => state.v(),
    };
    let i = m.ncols();
    let norms: Vec<f64> = (0..i)
        .map(|c| m.column(c).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let zero_norm: Vec<usize> = (0..i).filter(|&c| norms[c] == 0.0).collect();
    let mut gram = Array2::zeros((i, i));
    for r in 0..i {
        gram[[r, r]] = 1.0;
        for c in r + 1..i {
            let val = if norms[r] == 0.0 || norms[c] == 0.0 {
                0.0
            } else {
                let dot = m.column(r).dot(&m.column(c));
                (dot / (norms[r] * norms[c])).clamp(-1.0, 1.0)
            };
            gram[[r, c]] = val;
            gram[[c, r]] = val;
        }
    }
    GramMatrix {
        matrix: gram,
        zero_norm,
    }
}

/// RV coefficient between two symmetric positive semidefinite matrices:
/// `trace(AB) / sqrt(trace(AA) trace(BB))`, bounded in [0, 1].
pub fn rv_coefficient(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    let n = a.nrows();
    if a.ncols() != n || b.dim() != (n, n) {
        return Err(Error::dim(format!(
            "RV coefficient needs square matrices of equal size, got {:?} and {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let tol = 1e-8;
    for r in 0..n {
        for c in r + 1..n {
            if (a[[r, c]] - a[[c, r]]).abs() > tol || (b[[r, c]] - b[[c, r]]).abs() > tol {
                return Err(Error::data(
                    "RV coefficient needs symmetric inputs".to_string(),
                ));
            }
        }
    }
    let mut tr_ab = 0.0;
    let mut tr_aa = 0.0;
    let mut tr_bb = 0.0;
    for r in 0..n {
        for c in 0..n {
            tr_ab += a[[r, c]] * b[[c, r]];
            tr_aa += a[[r, c]] * a[[c, r]];
            tr_bb += b[[r, c]] * b[[c, r]];
        }
    }
    if tr_aa == 0.0 || tr_bb == 0.0 {
        return Err(Error::data(
            "RV coefficient undefined for a zero matrix".to_string(),
        ));
    }
    Ok(tr_ab / (tr_aa * tr_bb).sqrt())
}

/// Largest eigenvalues of a symmetric matrix, descending.
pub fn top_eigenvalues(m: &Array2<f64>, k: usize) -> Result<Vec<f64>> {
    let mut eig = symmetric_eigenvalues(m)?;
    eig.truncate(k);
    Ok(eig)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array1};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn state_with(y: Array2<f64>, v: Array2<f64>, x: Array2<f64>) -> LatentState {
        let k = x.nrows();
        let i = x.ncols();
        LatentState {
            sigma: Array1::from_elem(i, 0.5),
            q: Array2::ones((i, 1)),
            t: Array1::ones(1),
            gamma: Array1::ones(k),
            delta: Array1::ones(k),
            x,
            y,
            v,
        }
    }

    #[test]
    fn rescaled_v_with_silent_factors_divides_by_sqrt_u() {
        let s = state_with(
            Array2::zeros((2, 9)),
            array![[3.0, -6.0], [0.0, 9.0]],
            Array2::zeros((2, 2)),
        );
        let r = rescaled_v(&s);
        assert_abs_diff_eq!(r[[0, 0]], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r[[1, 1]], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn rescaled_v_is_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let y = Array2::from_shape_fn((2, 5), |_| rng.sample::<f64, _>(StandardNormal));
        let v = Array2::from_shape_fn((3, 4), |_| rng.sample::<f64, _>(StandardNormal));
        let theta: f64 = 0.7;
        let rot = array![[theta.cos(), -theta.sin()], [theta.sin(), theta.cos()]];
        let s1 = state_with(y.clone(), v.clone(), Array2::zeros((2, 4)));
        let s2 = state_with(rot.dot(&y), v, Array2::zeros((2, 4)));
        let (r1, r2) = (rescaled_v(&s1), rescaled_v(&s2));
        for (a, b) in r1.iter().zip(r2.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        // direct trace oracle
        let trace = y.iter().map(|x| x * x).sum::<f64>() + 5.0;
        assert_abs_diff_eq!(r1[[0, 0]], s1.v[[0, 0]] / trace.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn correlation_identity_when_factors_silent() {
        let s = state_with(
            Array2::zeros((3, 4)),
            Array2::zeros((1, 2)),
            Array2::zeros((3, 2)),
        );
        let c = sample_correlation(&s);
        for r in 0..4 {
            for cc in 0..4 {
                assert_eq!(c[[r, cc]], if r == cc { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn correlation_block_structure_from_block_factors() {
        // individuals 0,1 load on factor 0 only; 2,3 on factor 1 only
        let y = array![[1.0, -2.0, 0.0, 0.0], [0.0, 0.0, 1.5, 0.7]];
        let s = state_with(y, Array2::zeros((1, 2)), Array2::zeros((2, 2)));
        let c = sample_correlation(&s);
        assert_eq!(c[[0, 2]], 0.0);
        assert_eq!(c[[0, 3]], 0.0);
        assert_eq!(c[[1, 2]], 0.0);
        assert!(c[[0, 1]] != 0.0);
        assert!(c[[2, 3]] != 0.0);
    }

    #[test]
    fn correlation_matches_naive_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let y = Array2::from_shape_fn((3, 6), |_| rng.sample::<f64, _>(StandardNormal));
        let s = state_with(y.clone(), Array2::zeros((1, 2)), Array2::zeros((3, 2)));
        let c = sample_correlation(&s);
        for a in 0..6 {
            for b in 0..6 {
                let mut sab = y.column(a).dot(&y.column(b));
                if a == b {
                    sab += 1.0;
                }
                let saa = y.column(a).dot(&y.column(a)) + 1.0;
                let sbb = y.column(b).dot(&y.column(b)) + 1.0;
                assert_abs_diff_eq!(c[[a, b]], sab / (saa * sbb).sqrt(), epsilon = 1e-12);
            }
        }
        // symmetric, unit diagonal, entries in [-1, 1], eigenvalues >= 0
        for a in 0..6 {
            assert_abs_diff_eq!(c[[a, a]], 1.0, epsilon = 1e-12);
            for b in 0..6 {
                assert!(c[[a, b]].abs() <= 1.0 + 1e-12);
                assert_abs_diff_eq!(c[[a, b]], c[[b, a]], epsilon = 1e-12);
            }
        }
        let eig = symmetric_eigenvalues(&c).unwrap();
        assert!(eig.iter().all(|&e| e >= -1e-8));
    }

    #[test]
    fn gram_trivial_and_oracle_cases() {
        let x = array![[1.0, 1.0, 0.0], [0.0, 0.0, 2.0]];
        let s = state_with(Array2::zeros((2, 1)), Array2::zeros((1, 3)), x);
        let g = species_gram(&s, GramSource::X);
        assert_abs_diff_eq!(g.matrix[[0, 1]], 1.0, epsilon = 1e-12);
        assert_eq!(g.matrix[[0, 2]], 0.0);
        assert!(g.zero_norm.is_empty());

        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let v = Array2::from_shape_fn((4, 5), |_| rng.sample::<f64, _>(StandardNormal));
        let s = state_with(Array2::zeros((2, 1)), v.clone(), Array2::zeros((2, 5)));
        let g = species_gram(&s, GramSource::V);
        for a in 0..5 {
            for b in 0..5 {
                let dot = v.column(a).dot(&v.column(b));
                let na = v.column(a).dot(&v.column(a)).sqrt();
                let nb = v.column(b).dot(&v.column(b)).sqrt();
                assert_abs_diff_eq!(
                    g.matrix[[a, b]],
                    (dot / (na * nb)).clamp(-1.0, 1.0),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn gram_flags_zero_norm_columns() {
        let x = array![[1.0, 0.0], [0.5, 0.0]];
        let s = state_with(Array2::zeros((2, 1)), Array2::zeros((1, 2)), x);
        let g = species_gram(&s, GramSource::X);
        assert_eq!(g.zero_norm, vec![1]);
        assert_eq!(g.matrix[[0, 1]], 0.0);
        assert_eq!(g.matrix[[1, 1]], 1.0);
    }

    #[test]
    fn rv_coefficient_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let g1 = Array2::from_shape_fn((4, 4), |_| rng.sample::<f64, _>(StandardNormal));
        let g2 = Array2::from_shape_fn((4, 4), |_| rng.sample::<f64, _>(StandardNormal));
        let a = g1.dot(&g1.t());
        let b = g2.dot(&g2.t());
        assert_abs_diff_eq!(
            rv_coefficient(a.view(), a.view()).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let rv_ab = rv_coefficient(a.view(), b.view()).unwrap();
        let rv_ba = rv_coefficient(b.view(), a.view()).unwrap();
        assert_abs_diff_eq!(rv_ab, rv_ba, epsilon = 1e-14);
        assert!(rv_ab >= 0.0 && rv_ab <= 1.0);
        let scaled = &a * 3.7;
        assert_abs_diff_eq!(
            rv_coefficient(scaled.view(), b.view()).unwrap(),
            rv_ab,
            epsilon = 1e-12
        );
        // trace-formula oracle
        let mut tr_ab = 0.0;
        let mut tr_aa = 0.0;
        let mut tr_bb = 0.0;
        for r in 0..4 {
            for c in 0..4 {
                tr_ab += a[[r, c]] * b[[c, r]];
                tr_aa += a[[r, c]] * a[[c, r]];
                tr_bb += b[[r, c]] * b[[c, r]];
            }
        }
        assert_abs_diff_eq!(rv_ab, tr_ab / (tr_aa * tr_bb).sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn rv_orthogonal_and_zero_cases() {
        let a = array![[1.0, 0.0], [0.0, 0.0]];
        let b = array![[0.0, 0.0], [0.0, 1.0]];
        assert_abs_diff_eq!(
            rv_coefficient(a.view(), b.view()).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        let z = Array2::<f64>::zeros((2, 2));
        assert!(rv_coefficient(a.view(), z.view()).is_err());
        let asym = array![[1.0, 0.5], [0.0, 1.0]];
        assert!(rv_coefficient(asym.view(), a.view()).is_err());
    }
}
