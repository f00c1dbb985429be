//! Link functions mapping latent scores to compositions, and zero-inflation
//! truncation.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The map from a column of latent scores to a composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Link {
    /// `P_i ∝ sigma_i (Q_i)_+^2`; zero exactly where `Q_i <= 0`.
    SquaredPositive,
    /// `P_i ∝ sigma_i (Q_i)_+`; the misspecified-link generator.
    LinearPositive,
    /// `P_i ∝ exp(Q_i)`; strictly positive compositions.
    LogisticNormal,
}

impl Link {
    pub fn composition(
        self,
        sigma: ArrayView1<f64>,
        q_col: ArrayView1<f64>,
    ) -> Result<Vec<f64>> {
        match self {
            Link::SquaredPositive => composition_from_state(sigma, q_col),
            Link::LinearPositive => composition_linear_positive(sigma, q_col),
            Link::LogisticNormal => Ok(composition_logistic_normal(q_col)),
        }
    }
}

fn positive_part(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

fn normalized(weights: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::degenerate(format!(
            "{what}: no positive latent score in the column"
        )));
    }
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Composition under the squared-positive link,
/// `P_i = sigma_i (Q_i)_+^2 / sum_i' sigma_i' (Q_i')_+^2`.
///
/// Entry `i` is zero exactly when `Q_i <= 0`. Errors when every score in the
/// column is nonpositive.
pub fn composition_from_state(
    sigma: ArrayView1<f64>,
    q_col: ArrayView1<f64>,
) -> Result<Vec<f64>> {
    check_lengths(sigma.len(), q_col.len())?;
    let weights = sigma
        .iter()
        .zip(q_col.iter())
        .map(|(&s, &q)| {
            let qp = positive_part(q);
            s * qp * qp
        })
        .collect();
    normalized(weights, "squared-positive link")
}

/// Composition under the linear-positive link, `P_i ∝ sigma_i (Q_i)_+`.
pub fn composition_linear_positive(
    sigma: ArrayView1<f64>,
    q_col: ArrayView1<f64>,
) -> Result<Vec<f64>> {
    check_lengths(sigma.len(), q_col.len())?;
    let weights = sigma
        .iter()
        .zip(q_col.iter())
        .map(|(&s, &q)| s * positive_part(q))
        .collect();
    normalized(weights, "linear-positive link")
}

/// Composition under the logistic-normal link, `P_i ∝ exp(Q_i)`, stabilized
/// by subtracting the maximum score. Always strictly positive.
pub fn composition_logistic_normal(q_col: ArrayView1<f64>) -> Vec<f64> {
    let max = q_col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = q_col.iter().map(|&q| (q - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Hard truncation of a composition: entries below `threshold` drop to zero
/// and the remainder is renormalized so it stays a valid multinomial
/// parameter. Errors when truncation removes all mass.
pub fn apply_zero_inflation(p: &[f64], threshold: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::config(format!(
            "zero-inflation threshold {threshold} outside [0, 1)"
        )));
    }
    if threshold == 0.0 {
        return Ok(p.to_vec());
    }
    let kept: Vec<f64> = p
        .iter()
        .map(|&x| if x < threshold { 0.0 } else { x })
        .collect();
    normalized(kept, "zero-inflation truncation")
}

fn check_lengths(ns: usize, nq: usize) -> Result<()> {
    if ns != nq {
        return Err(Error::dim(format!(
            "sigma has {ns} entries but the score column has {nq}"
        )));
    }
    Ok(())
}
