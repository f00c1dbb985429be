//! Covariate matrices and their declared transformations.
//!
//! The regression design for sample `j` is the raw covariate vector `w_j`
//! followed by the expansion `f(w_j)` (interaction products and spline
//! columns). Derivatives of compositions with respect to a raw covariate
//! need the chain rule through `f`, so the transformation also exposes its
//! gradient.

use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

use super::spline::BSplineBasis;
use crate::{Error, Result};

/// One declared expansion term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TransformTerm {
    /// Product of two raw covariates (indices into the raw rows).
    Interaction { a: usize, b: usize },
    /// B-spline expansion of one raw covariate; contributes
    /// `basis.n_basis()` columns.
    Spline {
        covariate: usize,
        basis: BSplineBasis,
    },
}

/// A declared covariate transformation: the expansion `f` is the
/// concatenation of all terms in order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TransformSpec {
    pub terms: Vec<TransformTerm>,
}

impl TransformSpec {
    pub fn identity() -> Self {
        TransformSpec { terms: Vec::new() }
    }

    pub fn validate(&self, n_raw: usize) -> Result<()> {
        for term in &self.terms {
            match term {
                TransformTerm::Interaction { a, b } => {
                    if *a >= n_raw || *b >= n_raw {
                        return Err(Error::config(format!(
                            "interaction ({a}, {b}) references a covariate beyond {n_raw}"
                        )));
                    }
                }
                TransformTerm::Spline { covariate, .. } => {
                    if *covariate >= n_raw {
                        return Err(Error::config(format!(
                            "spline covariate {covariate} beyond {n_raw}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of expanded columns `L'`.
    pub fn n_expanded(&self) -> usize {
        self.terms
            .iter()
            .map(|t| match t {
                TransformTerm::Interaction { .. } => 1,
                TransformTerm::Spline { basis, .. } => basis.n_basis(),
            })
            .sum()
    }

    /// Evaluates `f(w)` for one raw covariate vector.
    pub fn expand_point(&self, w: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.n_expanded());
        for term in &self.terms {
            match term {
                TransformTerm::Interaction { a, b } => out.push(w[*a] * w[*b]),
                TransformTerm::Spline { covariate, basis } => {
                    out.extend(basis.evaluate(w[*covariate])?)
                }
            }
        }
        Ok(out)
    }

    /// Gradient of `f(w)` with respect to raw covariate `l`.
    pub fn gradient_point(&self, w: &[f64], l: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.n_expanded());
        for term in &self.terms {
            match term {
                TransformTerm::Interaction { a, b } => {
                    let mut g = 0.0;
                    if *a == l {
                        g += w[*b];
                    }
                    if *b == l {
                        g += w[*a];
                    }
                    out.push(g);
                }
                TransformTerm::Spline { covariate, basis } => {
                    if *covariate == l {
                        out.extend(basis.derivative(w[*covariate])?);
                    } else {
                        out.extend(std::iter::repeat(0.0).take(basis.n_basis()));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Names of the expanded columns given the raw names.
    pub fn expanded_names(&self, raw_names: &[String]) -> Vec<String> {
        let mut out = Vec::with_capacity(self.n_expanded());
        for term in &self.terms {
            match term {
                TransformTerm::Interaction { a, b } => {
                    out.push(format!("{}x{}", raw_names[*a], raw_names[*b]))
                }
                TransformTerm::Spline { covariate, basis } => {
                    for k in 0..basis.n_basis() {
                        out.push(format!("bs({}){}", raw_names[*covariate], k + 1));
                    }
                }
            }
        }
        out
    }
}

/// Raw covariates plus their deterministic expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateMatrix {
    /// `L x J` raw covariates, one column per sample.
    pub raw: Array2<f64>,
    /// `L' x J` expanded columns; always `transform` applied to `raw`.
    pub expanded: Array2<f64>,
    pub transform: TransformSpec,
    /// Names of the raw rows followed by the expanded rows.
    pub column_names: Vec<String>,
}

impl CovariateMatrix {
    pub fn new(raw: Array2<f64>, transform: TransformSpec, raw_names: Vec<String>) -> Result<Self> {
        let (l, j) = raw.dim();
        if raw_names.len() != l {
            return Err(Error::dim(format!(
                "{} covariate names for {} rows",
                raw_names.len(),
                l
            )));
        }
        transform.validate(l)?;
        let lp = transform.n_expanded();
        let mut expanded = Array2::zeros((lp, j));
        for jj in 0..j {
            let w: Vec<f64> = raw.column(jj).to_vec();
            let f = transform.expand_point(&w)?;
            for (r, val) in f.into_iter().enumerate() {
                expanded[[r, jj]] = val;
            }
        }
        let mut column_names = raw_names.clone();
        column_names.extend(transform.expanded_names(&raw_names));
        Ok(CovariateMatrix {
            raw,
            expanded,
            transform,
            column_names,
        })
    }

    pub fn n_raw(&self) -> usize {
        self.raw.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.raw.ncols()
    }

    /// Total design dimension `L + L'`.
    pub fn n_design(&self) -> usize {
        self.raw.nrows() + self.expanded.nrows()
    }

    /// The stacked `(L + L') x J` design matrix `(w_j, f(w_j))`.
    pub fn design(&self) -> Array2<f64> {
        let (l, j) = self.raw.dim();
        let lp = self.expanded.nrows();
        let mut d = Array2::zeros((l + lp, j));
        d.slice_mut(s![..l, ..]).assign(&self.raw);
        d.slice_mut(s![l.., ..]).assign(&self.expanded);
        d
    }

    /// Design vector `(w0, f(w0))` for a counterfactual covariate value.
    pub fn design_point(&self, w0: &[f64]) -> Result<Array1<f64>> {
        if w0.len() != self.n_raw() {
            return Err(Error::dim(format!(
                "counterfactual point has {} entries, expected {}",
                w0.len(),
                self.n_raw()
            )));
        }
        let mut out = Vec::with_capacity(self.n_design());
        out.extend_from_slice(w0);
        out.extend(self.transform.expand_point(w0)?);
        Ok(Array1::from(out))
    }

    /// Gradient of the design vector with respect to raw covariate `l`,
    /// evaluated at `w`.
    pub fn design_gradient(&self, w: &[f64], l: usize) -> Result<Array1<f64>> {
        if l >= self.n_raw() {
            return Err(Error::dim(format!(
                "covariate index {l} beyond {} raw covariates",
                self.n_raw()
            )));
        }
        let mut out = vec![0.0; self.n_raw()];
        out[l] = 1.0;
        out.extend(self.transform.gradient_point(w, l)?);
        Ok(Array1::from(out))
    }

    /// True when raw covariate `l` only takes the values 0 and 1.
    pub fn is_binary(&self, l: usize) -> bool {
        self.raw.row(l).iter().all(|&x| x == 0.0 || x == 1.0)
    }
}
