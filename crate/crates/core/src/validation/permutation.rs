//! Permutation test for the global null of no effect of one covariate.
//!
//! The statistic is the Euclidean norm of the posterior-mean rescaled
//! coefficient row. Permuting the covariate's values across samples (and
//! re-deriving any interaction or spline columns) estimates the statistic's
//! null distribution; the test assumes the covariates are independent or
//! nearly so.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{CovariateMatrix, Hyperparams, OtuTable};
use crate::sampler::{run_chain, SamplerConfig};
use crate::summaries::rescaled_v;
use crate::{Error, Result};

/// Budget of one permutation test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationConfig {
    pub n_permutations: usize,
    pub hyper: Hyperparams,
    /// Chain budget of each refit; permutation refits typically use a
    /// shortened budget compared to the primary fit.
    pub sampler: SamplerConfig,
    pub seed: u64,
}

/// Observed statistic, permutation null, and add-one p-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub covariate: usize,
    pub observed_norm: f64,
    pub null_norms: Vec<f64>,
    /// `(1 + #{null >= observed}) / (1 + n_permutations)`; never zero.
    pub p_value: f64,
}

/// Norm of the posterior-mean rescaled coefficient row for covariate `l`.
fn fit_statistic(
    table: &OtuTable,
    covariates: &CovariateMatrix,
    l: usize,
    hyper: &Hyperparams,
    sampler: &SamplerConfig,
) -> Result<f64> {
    let chain = run_chain(table, covariates, hyper, sampler)?;
    if chain.draws.is_empty() {
        return Err(Error::config("permutation refit retained no draws".to_string()));
    }
    let i = table.n_species();
    let mut mean_row = vec![0.0; i];
    for draw in &chain.draws {
        let r = rescaled_v(draw);
        for (m, &val) in mean_row.iter_mut().zip(r.row(l).iter()) {
            *m += val / chain.draws.len() as f64;
        }
    }
    Ok(mean_row.iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Covariates with row `l` permuted by the given sample order and the
/// expansion re-derived.
fn permuted_covariates(
    covariates: &CovariateMatrix,
    l: usize,
    perm: &[usize],
) -> Result<CovariateMatrix> {
    let mut raw = covariates.raw.clone();
    for (new_j, &old_j) in perm.iter().enumerate() {
        raw[[l, new_j]] = covariates.raw[[l, old_j]];
    }
    let raw_names: Vec<String> = covariates.column_names[..covariates.n_raw()].to_vec();
    CovariateMatrix::new(raw, covariates.transform.clone(), raw_names)
}

/// Runs the permutation test for covariate `l`. Refits are independent
/// (stream-keyed RNG) and run in parallel; a failing refit aborts the test
/// with the completed null statistics attached to the error.
pub fn permutation_test(
    table: &OtuTable,
    covariates: &CovariateMatrix,
    l: usize,
    config: &PermutationConfig,
) -> Result<PermutationResult> {
    if l >= covariates.n_raw() {
        return Err(Error::dim(format!(
            "covariate index {l} beyond {} raw covariates",
            covariates.n_raw()
        )));
    }
    let observed_norm = fit_statistic(table, covariates, l, &config.hyper, &config.sampler)?;

    let j = table.n_samples();
    let results: Vec<Result<f64>> = (0..config.n_permutations)
        .into_par_iter()
        .map(|p| {
            let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
            shuffle_rng.set_stream(1_000_000 + p as u64);
            let mut perm: Vec<usize> = (0..j).collect();
            perm.shuffle(&mut shuffle_rng);
            let permuted = permuted_covariates(covariates, l, &perm)?;
            let sampler = SamplerConfig {
                seed: config.seed ^ (p as u64 + 1).wrapping_mul(0x9e3779b97f4a7c15),
                ..config.sampler
            };
            fit_statistic(table, &permuted, l, &config.hyper, &sampler)
        })
        .collect();

    let mut null_norms = Vec::with_capacity(config.n_permutations);
    for r in results {
        match r {
            Ok(stat) => null_norms.push(stat),
            Err(e) => {
                return Err(Error::PermutationAborted {
                    completed: null_norms,
                    message: e.to_string(),
                })
            }
        }
    }

    let exceed = null_norms.iter().filter(|&&s| s >= observed_norm).count();
    let p_value = (1.0 + exceed as f64) / (1.0 + null_norms.len() as f64);
    Ok(PermutationResult {
        covariate: l,
        observed_norm,
        null_norms,
        p_value,
    })
}
