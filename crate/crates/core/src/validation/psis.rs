//! Pareto-smoothed importance sampling and leave-one-out predictive checks.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::model::OtuTable;
use crate::sampler::Draw;
use crate::{Error, Result};

/// Result of smoothing a set of importance weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PsisResult {
    /// Smoothed weights on the log scale, same order as the input.
    pub log_weights: Vec<f64>,
    /// Fitted tail-shape parameter; negative infinity when degenerate.
    pub k_hat: f64,
    /// Set when the weights carry no tail to fit (all equal); the input is
    /// returned unchanged.
    pub degenerate: bool,
}

/// Generalized Pareto fit by the profile-posterior quadrature of Zhang &
/// Stephens (2009), with the weakly informative shape prior of the PSIS
/// paper. `exceedances` must be positive.
pub fn fit_generalized_pareto(exceedances: &[f64]) -> Result<(f64, f64)> {
    let n = exceedances.len();
    if n < 5 {
        return Err(Error::data(format!(
            "generalized Pareto fit needs at least 5 exceedances, got {n}"
        )));
    }
    let mut y: Vec<f64> = exceedances.to_vec();
    y.sort_by(|a, b| a.partial_cmp(b).expect("non-finite exceedance"));
    if y[0] <= 0.0 {
        return Err(Error::data("exceedances must be positive".to_string()));
    }
    let y_max = y[n - 1];
    let quartile = y[((n as f64 / 4.0 + 0.5).floor() as usize).clamp(1, n) - 1];

    let m_grid = 30 + (n as f64).sqrt().floor() as usize;
    let mut log_post = Vec::with_capacity(m_grid);
    let mut thetas = Vec::with_capacity(m_grid);
    for jj in 1..=m_grid {
        let theta =
            1.0 / y_max + (1.0 - (m_grid as f64 / (jj as f64 - 0.5)).sqrt()) / (3.0 * quartile);
        let k: f64 = y.iter().map(|&yi| (-theta * yi).ln_1p()).sum::<f64>() / n as f64;
        // profile log-likelihood of theta = -xi / sigma
        let l = if theta == 0.0 || k == 0.0 {
            f64::NEG_INFINITY
        } else {
            n as f64 * ((-theta / k).ln() - k - 1.0)
        };
        thetas.push(theta);
        log_post.push(l);
    }
    let max_l = log_post.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max_l.is_finite() {
        return Err(Error::numerical("Pareto profile likelihood degenerate".to_string()));
    }
    let weights: Vec<f64> = log_post.iter().map(|&l| (l - max_l).exp()).collect();
    let total: f64 = weights.iter().sum();
    let theta_hat = thetas
        .iter()
        .zip(&weights)
        .map(|(t, w)| t * w / total)
        .sum::<f64>();
    let k_hat: f64 = y.iter().map(|&yi| (-theta_hat * yi).ln_1p()).sum::<f64>() / n as f64;
    let sigma_hat = -k_hat / theta_hat;
    // weakly informative prior pulls the shape towards 0.5
    let k_reg = (k_hat * n as f64 + 0.5 * 10.0) / (n as f64 + 10.0);
    Ok((k_reg, sigma_hat))
}

/// Quantile of the generalized Pareto distribution with shape `k` and scale
/// `sigma` (location zero).
fn gpd_quantile(p: f64, k: f64, sigma: f64) -> f64 {
    if k.abs() < 1e-12 {
        -sigma * (1.0 - p).ln()
    } else {
        sigma * ((-k) * (1.0 - p).ln()).exp_m1() / k
    }
}

/// Pareto-smooths importance weights given on the log scale: fits a
/// generalized Pareto to the `M = ceil(min(S/5, 3 sqrt(S)))` largest
/// weights and replaces them with fitted quantiles, capped at the maximum
/// raw weight. Smoothing preserves weight ranks and never raises the
/// maximum. Needs at least 25 weights.
pub fn psis_smooth(log_weights: &[f64]) -> Result<PsisResult> {
    let s = log_weights.len();
    if s < 25 {
        return Err(Error::data(format!(
            "PSIS needs at least 25 weights, got {s}"
        )));
    }
    if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(Error::numerical("non-finite log weight".to_string()));
    }
    let max_lw = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_lw = log_weights.iter().cloned().fold(f64::INFINITY, f64::min);
    if max_lw - min_lw < 1e-12 {
        return Ok(PsisResult {
            log_weights: log_weights.to_vec(),
            k_hat: f64::NEG_INFINITY,
            degenerate: true,
        });
    }

    let m = ((s as f64 / 5.0).min(3.0 * (s as f64).sqrt())).ceil() as usize;
    let m = m.min(s - 1);
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| {
        log_weights[a]
            .partial_cmp(&log_weights[b])
            .expect("non-finite log weight")
    });
    let tail_ids = &order[s - m..];
    let cutoff_lw = log_weights[order[s - m - 1]];
    // relative scale: weights divided by the maximum
    let cutoff = (cutoff_lw - max_lw).exp();
    let exceedances: Vec<f64> = tail_ids
        .iter()
        .map(|&i| (log_weights[i] - max_lw).exp() - cutoff)
        .filter(|&e| e > 0.0)
        .collect();
    if exceedances.len() < 5 {
        // too many ties in the tail to fit anything
        return Ok(PsisResult {
            log_weights: log_weights.to_vec(),
            k_hat: f64::NEG_INFINITY,
            degenerate: true,
        });
    }
    let (k_hat, sigma) = fit_generalized_pareto(&exceedances)?;

    let mut out = log_weights.to_vec();
    for (rank, &idx) in tail_ids.iter().enumerate() {
        let p = (rank as f64 + 0.5) / m as f64;
        let smoothed = (cutoff + gpd_quantile(p, k_hat, sigma)).min(1.0);
        out[idx] = smoothed.ln() + max_lw;
    }
    Ok(PsisResult {
        log_weights: out,
        k_hat,
        degenerate: false,
    })
}

/// Weighted quantile: the smallest value whose cumulative normalized weight
/// reaches `p`.
pub fn weighted_quantile(values: &[f64], weights: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() || values.len() != weights.len() {
        return Err(Error::dim("weighted quantile needs matching nonempty inputs".to_string()));
    }
    if weights.iter().any(|&w| w < 0.0) {
        return Err(Error::data("negative weight".to_string()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::data("weights sum to zero".to_string()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("non-finite value"));
    let target = p.clamp(0.0, 1.0) * total;
    let mut acc = 0.0;
    for &i in &order {
        acc += weights[i];
        if acc >= target - 1e-15 * total {
            return Ok(values[i]);
        }
    }
    Ok(values[order[values.len() - 1]])
}

/// Log-likelihood contribution of one sample column under the
/// squared-positive link, without the multinomial coefficient.
pub fn sample_log_likelihood(
    table: &OtuTable,
    sigma: ArrayView1<f64>,
    q_col: ArrayView1<f64>,
    j: usize,
) -> f64 {
    let mut numer = 0.0;
    let mut denom = 0.0;
    for ii in 0..sigma.len() {
        let q = q_col[ii];
        let w = if q > 0.0 { sigma[ii] * q * q } else { 0.0 };
        denom += w;
        let n = table.counts[[ii, j]];
        if n > 0 {
            if w <= 0.0 {
                return f64::NEG_INFINITY;
            }
            numer += n as f64 * w.ln();
        }
    }
    if table.depths[j] == 0 {
        return 0.0;
    }
    if denom <= 0.0 {
        return f64::NEG_INFINITY;
    }
    numer - table.depths[j] as f64 * denom.ln()
}

/// Leave-one-out predictive interval of one species in one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooInterval {
    pub lower: f64,
    pub upper: f64,
    /// Observed relative abundance `n_ij / n_j`.
    pub observed: f64,
    pub covered: bool,
}

/// Leave-one-out predictive summary of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooSample {
    pub sample: usize,
    pub k_hat: f64,
    /// False when the Pareto tail shape exceeds 0.7.
    pub reliable: bool,
    pub species: Vec<LooInterval>,
}

/// Aggregated leave-one-out report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooReport {
    pub level: f64,
    pub samples: Vec<LooSample>,
    /// Per-species proportion of samples covered.
    pub species_coverage: Vec<f64>,
    /// Mean of the per-species coverage proportions.
    pub mean_coverage: f64,
}

/// Leave-one-out predictive intervals for the relative abundances of sample
/// `j`: posterior draws are importance-weighted by the reciprocal of the
/// sample's likelihood contribution (the draw's score column plays the role
/// of the predictive local variable), PSIS-smoothed, and summarized by
/// weighted quantiles at the equal-tailed `level`.
pub fn loo_predictive(
    draws: &[Draw],
    table: &OtuTable,
    j: usize,
    level: f64,
) -> Result<LooSample> {
    if draws.is_empty() {
        return Err(Error::data("leave-one-out needs a nonempty chain".to_string()));
    }
    if !(0.0 < level && level <= 1.0) {
        return Err(Error::config(format!("interval level {level} outside (0, 1]")));
    }
    if j >= table.n_samples() {
        return Err(Error::dim(format!("sample index {j} out of range")));
    }
    let s = draws.len();
    let mut log_w = Vec::with_capacity(s);
    for d in draws {
        let ll = sample_log_likelihood(table, d.sigma.view(), d.q.column(j), j);
        if !ll.is_finite() {
            return Err(Error::numerical(format!(
                "retained draw assigns zero likelihood to sample {j}"
            )));
        }
        log_w.push(-ll);
    }
    let (log_w, k_hat) = if s >= 25 {
        let r = psis_smooth(&log_w)?;
        (r.log_weights, r.k_hat)
    } else {
        (log_w, f64::NEG_INFINITY)
    };
    let max_lw = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_w.iter().map(|&lw| (lw - max_lw).exp()).collect();

    let compositions: Vec<Vec<f64>> = draws
        .iter()
        .map(|d| crate::model::composition_from_state(d.sigma.view(), d.q.column(j)))
        .collect::<Result<_>>()?;

    let nj = table.depths[j] as f64;
    let lo_p = (1.0 - level) / 2.0;
    let hi_p = 1.0 - lo_p;
    let mut species = Vec::with_capacity(table.n_species());
    let mut values = vec![0.0; s];
    for ii in 0..table.n_species() {
        for (slot, comp) in values.iter_mut().zip(compositions.iter()) {
            *slot = comp[ii];
        }
        let lower = weighted_quantile(&values, &weights, lo_p)?;
        let upper = weighted_quantile(&values, &weights, hi_p)?;
        let observed = table.counts[[ii, j]] as f64 / nj;
        species.push(LooInterval {
            lower,
            upper,
            observed,
            covered: lower <= observed && observed <= upper,
        });
    }
    Ok(LooSample {
        sample: j,
        k_hat,
        reliable: !(k_hat > 0.7),
        species,
    })
}

/// Leave-one-out predictive coverage over every sample.
pub fn loo_coverage(draws: &[Draw], table: &OtuTable, level: f64) -> Result<LooReport> {
    use rayon::prelude::*;
    let samples: Vec<LooSample> = (0..table.n_samples())
        .into_par_iter()
        .map(|j| loo_predictive(draws, table, j, level))
        .collect::<Result<_>>()?;
    let i = table.n_species();
    let mut species_coverage = vec![0.0; i];
    for s in &samples {
        for (ii, interval) in s.species.iter().enumerate() {
            if interval.covered {
                species_coverage[ii] += 1.0;
            }
        }
    }
    for c in species_coverage.iter_mut() {
        *c /= samples.len() as f64;
    }
    let mean_coverage = species_coverage.iter().sum::<f64>() / i as f64;
    Ok(LooReport {
        level,
        samples,
        species_coverage,
        mean_coverage,
    })
}
