//! Core data containers: the count table, hyperparameters, and latent state.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// An OTU table: counts of `I` species in `J` samples, with per-sample read
/// depths and an assignment of samples to individuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtuTable {
    /// `I x J` counts, species by sample.
    pub counts: Array2<u64>,
    /// Read depth of each sample; always the column sum of `counts`.
    pub depths: Vec<u64>,
    pub species_ids: Vec<String>,
    pub sample_ids: Vec<String>,
    /// 0-based individual index of each sample. Individuals form the
    /// contiguous set `0..n_individuals`. Samples of the same individual
    /// share latent factors.
    pub grouping: Vec<usize>,
}

impl OtuTable {
    /// Builds a table from counts and an optional grouping, computing depths.
    /// Without a grouping every sample is its own individual, which recovers
    /// the cross-sectional model from the longitudinal one.
    pub fn new(
        counts: Array2<u64>,
        species_ids: Vec<String>,
        sample_ids: Vec<String>,
        grouping: Option<Vec<usize>>,
    ) -> Result<Self> {
        let (i, j) = counts.dim();
        if species_ids.len() != i {
            return Err(Error::dim(format!(
                "{} species ids for {} count rows",
                species_ids.len(),
                i
            )));
        }
        if sample_ids.len() != j {
            return Err(Error::dim(format!(
                "{} sample ids for {} count columns",
                sample_ids.len(),
                j
            )));
        }
        let grouping = grouping.unwrap_or_else(|| (0..j).collect());
        if grouping.len() != j {
            return Err(Error::dim(format!(
                "grouping has {} entries for {} samples",
                grouping.len(),
                j
            )));
        }
        let depths = counts
            .columns()
            .into_iter()
            .map(|c| c.iter().sum())
            .collect();
        let table = OtuTable {
            counts,
            depths,
            species_ids,
            sample_ids,
            grouping,
        };
        table.validate()?;
        Ok(table)
    }

    /// Checks the structural invariants: depths equal column sums and the
    /// grouping indices form a contiguous `0..U` set.
    pub fn validate(&self) -> Result<()> {
        let (_, j) = self.counts.dim();
        if self.depths.len() != j {
            return Err(Error::dim("depths length != sample count".to_string()));
        }
        for (jj, col) in self.counts.columns().into_iter().enumerate() {
            let sum: u64 = col.iter().sum();
            if sum != self.depths[jj] {
                return Err(Error::data(format!(
                    "depth of sample {} is {} but counts sum to {}",
                    jj, self.depths[jj], sum
                )));
            }
        }
        let u = self.n_individuals();
        let mut seen = vec![false; u];
        for &g in &self.grouping {
            if g >= u {
                return Err(Error::data(
                    "grouping indices are not contiguous".to_string(),
                ));
            }
            seen[g] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::data(
                "grouping indices are not contiguous".to_string(),
            ));
        }
        Ok(())
    }

    pub fn n_species(&self) -> usize {
        self.counts.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.counts.ncols()
    }

    pub fn n_individuals(&self) -> usize {
        self.grouping.iter().copied().max().map_or(0, |m| m + 1)
    }

    /// Per-species total counts across samples.
    pub fn species_totals(&self) -> Vec<u64> {
        self.counts
            .rows()
            .into_iter()
            .map(|r| r.iter().sum())
            .collect()
    }
}

/// Model hyperparameters. The error variance of the latent scores is fixed
/// at one because compositions are invariant to a global rescaling of `Q`;
/// the constructor rejects any other value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Concentration of the Dirichlet-process prior; the finite-species
    /// prior on each `sigma_i` is `Beta(alpha/I, 1/2 - alpha/I)`.
    pub alpha: f64,
    /// Truncation level of the latent factors.
    pub k: usize,
    /// Shape of the first multiplicative-gamma increment.
    pub mgp_a1: f64,
    /// Shape of the remaining increments.
    pub mgp_a2: f64,
    /// Fixed at 1.0.
    pub error_variance: f64,
}

impl Hyperparams {
    pub fn new(alpha: f64, k: usize, mgp_a1: f64, mgp_a2: f64) -> Result<Self> {
        let h = Hyperparams {
            alpha,
            k,
            mgp_a1,
            mgp_a2,
            error_variance: 1.0,
        };
        h.validate_for(usize::MAX)?;
        Ok(h)
    }

    /// Defaults: `alpha = 1`, shrinkage shapes `(2, 3)`, and factor
    /// truncation `min(I, J, 30)`.
    pub fn default_for(n_species: usize, n_samples: usize) -> Self {
        Hyperparams {
            alpha: 1.0,
            k: n_species.min(n_samples).min(30),
            mgp_a1: 2.0,
            mgp_a2: 3.0,
            error_variance: 1.0,
        }
    }

    /// Validates against a species count: the truncated Beta prior on
    /// `sigma` needs `alpha/I < 1/2`.
    pub fn validate_for(&self, n_species: usize) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::config("alpha must be positive".to_string()));
        }
        if self.k == 0 {
            return Err(Error::config("k must be positive".to_string()));
        }
        if !(self.mgp_a1 > 0.0 && self.mgp_a2 > 0.0) {
            return Err(Error::config(
                "shrinkage shapes must be positive".to_string(),
            ));
        }
        if self.error_variance != 1.0 {
            return Err(Error::config(
                "error variance is fixed at 1 (the model is scale-fixed)".to_string(),
            ));
        }
        if n_species != usize::MAX && self.alpha / n_species as f64 >= 0.5 {
            return Err(Error::config(format!(
                "alpha/I = {} must be below 1/2",
                self.alpha / n_species as f64
            )));
        }
        Ok(())
    }

    /// First shape of the finite-species Beta prior on `sigma_i`.
    pub fn sigma_shape_a(&self, n_species: usize) -> f64 {
        self.alpha / n_species as f64
    }

    /// Second shape of the finite-species Beta prior on `sigma_i`.
    pub fn sigma_shape_b(&self, n_species: usize) -> f64 {
        0.5 - self.alpha / n_species as f64
    }
}

/// One joint configuration of all latent variables; the sampler's unit of
/// state. `gamma` is kept equal to the cumulative product of the reciprocals
/// of the multiplicative increments `delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    /// Species weights, each in (0, 1); length `I`.
    pub sigma: Array1<f64>,
    /// Species vectors, `K x I`.
    pub x: Array2<f64>,
    /// Individual factors, `K x U`.
    pub y: Array2<f64>,
    /// Fixed-effect coefficients, `(L + L') x I`.
    pub v: Array2<f64>,
    /// Latent Gaussian scores, `I x J`; the residual lives inside `q`.
    pub q: Array2<f64>,
    /// Positive augmentation variables, length `J`.
    pub t: Array1<f64>,
    /// Factor-scale variances, length `K`; `gamma[k] = prod_{h<=k} 1/delta[h]`.
    pub gamma: Array1<f64>,
    /// Multiplicative precision increments, length `K`.
    pub delta: Array1<f64>,
}

impl LatentState {
    pub fn n_species(&self) -> usize {
        self.sigma.len()
    }

    pub fn n_samples(&self) -> usize {
        self.q.ncols()
    }

    pub fn n_factors(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_individuals(&self) -> usize {
        self.y.ncols()
    }

    /// Recomputes `gamma` from `delta`.
    pub fn refresh_gamma(&mut self) {
        let mut acc = 1.0;
        for (g, d) in self.gamma.iter_mut().zip(self.delta.iter()) {
            acc /= d;
            *g = acc;
        }
    }

    /// Checks the state invariants: `sigma` in (0,1), `t` and `gamma`
    /// positive, `gamma` consistent with `delta`, and conforming shapes.
    pub fn validate(&self) -> Result<()> {
        let (k, i) = self.x.dim();
        if self.sigma.len() != i
            || self.v.ncols() != i
            || self.q.nrows() != i
            || self.y.nrows() != k
            || self.gamma.len() != k
            || self.delta.len() != k
            || self.t.len() != self.q.ncols()
        {
            return Err(Error::dim("latent state shapes do not conform".to_string()));
        }
        if !self.sigma.iter().all(|&s| s > 0.0 && s < 1.0) {
            return Err(Error::numerical("sigma outside (0,1)".to_string()));
        }
        if !self.t.iter().all(|&t| t > 0.0 && t.is_finite()) {
            return Err(Error::numerical("nonpositive augmentation T".to_string()));
        }
        if !self.delta.iter().all(|&d| d > 0.0 && d.is_finite()) {
            return Err(Error::numerical("nonpositive shrinkage increment".to_string()));
        }
        let mut acc = 1.0;
        for (g, d) in self.gamma.iter().zip(self.delta.iter()) {
            acc /= d;
            if (g - acc).abs() > 1e-12 * acc.abs().max(1.0) {
                return Err(Error::numerical(
                    "gamma is not the cumulative product of 1/delta".to_string(),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn table_depths_are_column_sums() {
        let counts = array![[1u64, 0, 4], [2, 3, 0]];
        let t = OtuTable::new(
            counts,
            vec!["a".into(), "b".into()],
            vec!["s1".into(), "s2".into(), "s3".into()],
            None,
        )
        .unwrap();
        assert_eq!(t.depths, vec![3, 3, 4]);
        assert_eq!(t.n_individuals(), 3);
        t.validate().unwrap();
    }

    #[test]
    fn non_contiguous_grouping_rejected() {
        let counts = array![[1u64, 1], [1, 1]];
        let err = OtuTable::new(
            counts,
            vec!["a".into(), "b".into()],
            vec!["s1".into(), "s2".into()],
            Some(vec![0, 2]),
        );
        assert!(err.is_err());
    }

    #[test]
    fn hyperparams_reject_large_alpha() {
        let h = Hyperparams::new(1.0, 4, 2.0, 3.0).unwrap();
        assert!(h.validate_for(30).is_ok());
        assert!(h.validate_for(2).is_err());
        assert_eq!(h.error_variance, 1.0);
    }

    #[test]
    fn gamma_refresh_matches_reciprocal_products() {
        let mut s = LatentState {
            sigma: array![0.5],
            x: Array2::zeros((3, 1)),
            y: Array2::zeros((3, 2)),
            v: Array2::zeros((1, 1)),
            q: Array2::zeros((1, 4)),
            t: Array1::ones(4),
            gamma: Array1::zeros(3),
            delta: array![2.0, 4.0, 0.5],
        };
        s.refresh_gamma();
        assert_eq!(s.gamma, array![0.5, 0.125, 0.25]);
        s.validate().unwrap();
    }
}
