//! The data-augmented Gibbs sampler: seeded, resumable chains built from the
//! full-conditional updates in [`steps`].

mod slice;
mod steps;

pub use slice::{slice_sample, SliceParams};
pub use steps::{
    gibbs_sweep, sample_q, sample_shrinkage, sample_sigma, sample_t, sample_v, sample_x, sample_y,
};
pub(crate) use steps::sample_sigma_with_shape_offset;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{q_mean, CovariateMatrix, Hyperparams, LatentState, OtuTable};
use crate::{Error, Result};

/// How the chain state is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// All blocks drawn from their priors; scores start at their conditional
    /// mean plus small jitter.
    PriorDraw,
    /// Like `PriorDraw`, but the sign of each score is set from whether its
    /// count is positive.
    DataInformed,
}

/// Tuning and budget of one chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub slice_width_q: f64,
    pub slice_width_sigma: f64,
    pub slice_max_steps: usize,
    pub init: InitStrategy,
    pub seed: u64,
    /// Write a resume checkpoint every this many iterations when a
    /// checkpoint path is configured; 0 disables periodic checkpoints.
    pub checkpoint_every: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_iterations: 100_000,
            burn_in: 60_000,
            thin: 10,
            slice_width_q: 1.0,
            slice_width_sigma: 0.1,
            slice_max_steps: 1000,
            init: InitStrategy::PriorDraw,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_iterations {
            return Err(Error::config(format!(
                "burn-in {} must be below the iteration count {}",
                self.burn_in, self.n_iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::config("thinning must be at least 1".to_string()));
        }
        if !(self.slice_width_q > 0.0 && self.slice_width_sigma > 0.0) {
            return Err(Error::config("slice widths must be positive".to_string()));
        }
        if self.slice_max_steps == 0 {
            return Err(Error::config(
                "slice_max_steps must be positive".to_string(),
            ));
        }
        Ok(())
    }

    /// Number of retained draws: `floor((n_iterations - burn_in) / thin)`.
    pub fn n_retained(&self) -> usize {
        (self.n_iterations - self.burn_in) / self.thin
    }
}

/// Immutable per-fit context shared by all conditional updates.
pub struct GibbsContext<'a> {
    pub table: &'a OtuTable,
    pub covariates: &'a CovariateMatrix,
    pub hyper: &'a Hyperparams,
    pub config: &'a SamplerConfig,
    /// Stacked `(L + L') x J` design matrix.
    pub design: Array2<f64>,
    /// Per-species total counts, as floats.
    pub species_totals: Vec<f64>,
    /// Sample indices of each individual.
    pub by_individual: Vec<Vec<usize>>,
}

impl<'a> GibbsContext<'a> {
    pub fn new(
        table: &'a OtuTable,
        covariates: &'a CovariateMatrix,
        hyper: &'a Hyperparams,
        config: &'a SamplerConfig,
    ) -> Result<Self> {
        table.validate()?;
        hyper.validate_for(table.n_species())?;
        config.validate()?;
        if covariates.n_samples() != table.n_samples() {
            return Err(Error::dim(format!(
                "covariates describe {} samples but the table has {}",
                covariates.n_samples(),
                table.n_samples()
            )));
        }
        if let Some(jj) = table.depths.iter().position(|&d| d == 0) {
            return Err(Error::data(format!(
                "sample {} ({}) has zero reads; the augmented likelihood needs n_j >= 1",
                jj, table.sample_ids[jj]
            )));
        }
        let mut by_individual = vec![Vec::new(); table.n_individuals()];
        for (jj, &u) in table.grouping.iter().enumerate() {
            by_individual[u].push(jj);
        }
        Ok(GibbsContext {
            table,
            covariates,
            hyper,
            config,
            design: covariates.design(),
            species_totals: table.species_totals().iter().map(|&n| n as f64).collect(),
            by_individual,
        })
    }
}

/// Prior draw of the shrinkage increments and scales.
fn draw_shrinkage<R: Rng + ?Sized>(hyper: &Hyperparams, rng: &mut R) -> (Array1<f64>, Array1<f64>) {
    let k = hyper.k;
    let mut delta = Array1::zeros(k);
    for h in 0..k {
        let shape = if h == 0 { hyper.mgp_a1 } else { hyper.mgp_a2 };
        delta[h] = Gamma::new(shape, 1.0)
            .expect("positive shape")
            .sample(rng)
            .max(f64::MIN_POSITIVE);
    }
    let mut gamma = Array1::zeros(k);
    let mut acc = 1.0;
    for h in 0..k {
        acc /= delta[h];
        gamma[h] = acc;
    }
    (delta, gamma)
}

/// Initializes a latent state for the given data.
pub fn init_state<R: Rng + ?Sized>(ctx: &GibbsContext, rng: &mut R) -> Result<LatentState> {
    let (i, j) = ctx.table.counts.dim();
    let u = ctx.table.n_individuals();
    let k = ctx.hyper.k;
    let l = ctx.design.nrows();

    let beta = Beta::new(ctx.hyper.sigma_shape_a(i), ctx.hyper.sigma_shape_b(i))
        .map_err(|e| Error::config(format!("sigma prior: {e}")))?;
    let sigma =
        Array1::from_iter((0..i).map(|_| beta.sample(rng).clamp(f64::MIN_POSITIVE, 1.0 - 1e-16)));

    let (delta, gamma) = draw_shrinkage(ctx.hyper, rng);
    let x = Array2::from_shape_fn((k, i), |_| rng.sample::<f64, _>(StandardNormal));
    let mut y = Array2::zeros((k, u));
    for uu in 0..u {
        for kk in 0..k {
            y[[kk, uu]] = gamma[kk].sqrt() * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let v = Array2::from_shape_fn((l, i), |_| rng.sample::<f64, _>(StandardNormal));

    let mu = q_mean(
        x.view(),
        y.view(),
        v.view(),
        ctx.design.view(),
        &ctx.table.grouping,
    )?;
    let mut q = Array2::zeros((i, j));
    for jj in 0..j {
        for ii in 0..i {
            let jitter = 0.1 * rng.sample::<f64, _>(StandardNormal);
            let base = mu[[ii, jj]] + jitter;
            q[[ii, jj]] = match ctx.config.init {
                InitStrategy::PriorDraw => base,
                InitStrategy::DataInformed => {
                    if ctx.table.counts[[ii, jj]] > 0 {
                        base.abs().max(0.1)
                    } else {
                        -base.abs()
                    }
                }
            };
        }
    }

    let state = LatentState {
        sigma,
        x,
        y,
        v,
        q,
        t: Array1::ones(j),
        gamma,
        delta,
    };
    state.validate()?;
    Ok(state)
}

/// One retained draw: the state functionals needed downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub sigma: Array1<f64>,
    pub q: Array2<f64>,
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub v: Array2<f64>,
    pub gamma: Array1<f64>,
}

impl Draw {
    fn from_state(state: &LatentState) -> Self {
        Draw {
            sigma: state.sigma.clone(),
            q: state.q.clone(),
            x: state.x.clone(),
            y: state.y.clone(),
            v: state.v.clone(),
            gamma: state.gamma.clone(),
        }
    }
}

/// Problem dimensions recorded with every chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_species: usize,
    pub n_samples: usize,
    pub n_individuals: usize,
    pub n_factors: usize,
    pub n_design: usize,
}

/// An ordered sequence of retained draws plus reproducibility metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Chain {
    pub dims: Dims,
    pub config: SamplerConfig,
    /// RNG stream index; chains of one run differ only in stream.
    pub stream: u64,
    /// Hash of the inputs the chain was fitted to.
    pub data_fingerprint: String,
    pub draws: Vec<Draw>,
}

/// Everything needed to continue an interrupted chain and reproduce the
/// uninterrupted draw sequence exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub state: LatentState,
    /// 1-based index of the next sweep to run.
    pub next_iteration: usize,
    pub seed: u64,
    pub stream: u64,
    pub rng_word_pos: u128,
    pub data_fingerprint: String,
    pub draws_so_far: Vec<Draw>,
}

/// SHA-256 fingerprint of the fitted inputs (counts, grouping, covariates).
pub fn data_fingerprint(table: &OtuTable, covariates: &CovariateMatrix) -> String {
    let mut h = Sha256::new();
    let (i, j) = table.counts.dim();
    h.update((i as u64).to_le_bytes());
    h.update((j as u64).to_le_bytes());
    for n in table.counts.iter() {
        h.update(n.to_le_bytes());
    }
    for g in &table.grouping {
        h.update((*g as u64).to_le_bytes());
    }
    for id in table.species_ids.iter().chain(table.sample_ids.iter()) {
        h.update(id.as_bytes());
        h.update([0u8]);
    }
    h.update((covariates.n_raw() as u64).to_le_bytes());
    for w in covariates.raw.iter().chain(covariates.expanded.iter()) {
        h.update(w.to_le_bytes());
    }
    format!("{:x}", h.finalize())
}

/// Incremental chain executor. Runs sweeps, retains thinned post-burn-in
/// draws, and can capture/resume exact checkpoints.
pub struct ChainRunner<'a> {
    ctx: GibbsContext<'a>,
    stream: u64,
    rng: ChaCha8Rng,
    state: LatentState,
    next_iteration: usize,
    fingerprint: String,
    draws: Vec<Draw>,
}

impl<'a> ChainRunner<'a> {
    pub fn new(
        table: &'a OtuTable,
        covariates: &'a CovariateMatrix,
        hyper: &'a Hyperparams,
        config: &'a SamplerConfig,
        stream: u64,
    ) -> Result<Self> {
        let ctx = GibbsContext::new(table, covariates, hyper, config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(stream);
        let state = init_state(&ctx, &mut rng)?;
        let fingerprint = data_fingerprint(table, covariates);
        Ok(ChainRunner {
            ctx,
            stream,
            rng,
            state,
            next_iteration: 1,
            fingerprint,
            draws: Vec::with_capacity(config.n_retained()),
        })
    }

    /// Rebuilds a runner from a checkpoint; the remaining draws are
    /// identical to those of an uninterrupted run.
    pub fn resume(
        table: &'a OtuTable,
        covariates: &'a CovariateMatrix,
        hyper: &'a Hyperparams,
        config: &'a SamplerConfig,
        checkpoint: Checkpoint,
    ) -> Result<Self> {
        let ctx = GibbsContext::new(table, covariates, hyper, config)?;
        let fingerprint = data_fingerprint(table, covariates);
        if fingerprint != checkpoint.data_fingerprint {
            return Err(Error::data(
                "checkpoint was produced from different inputs".to_string(),
            ));
        }
        if checkpoint.seed != config.seed {
            return Err(Error::config(
                "checkpoint seed differs from the configured seed".to_string(),
            ));
        }
        checkpoint.state.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(checkpoint.seed);
        rng.set_stream(checkpoint.stream);
        rng.set_word_pos(checkpoint.rng_word_pos);
        Ok(ChainRunner {
            ctx,
            stream: checkpoint.stream,
            rng,
            state: checkpoint.state,
            next_iteration: checkpoint.next_iteration,
            fingerprint,
            draws: checkpoint.draws_so_far,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            state: self.state.clone(),
            next_iteration: self.next_iteration,
            seed: self.ctx.config.seed,
            stream: self.stream,
            rng_word_pos: self.rng.get_word_pos(),
            data_fingerprint: self.fingerprint.clone(),
            draws_so_far: self.draws.clone(),
        }
    }

    pub fn state(&self) -> &LatentState {
        &self.state
    }

    pub fn draws(&self) -> &[Draw] {
        &self.draws
    }

    pub fn completed_iterations(&self) -> usize {
        self.next_iteration - 1
    }

    pub fn config(&self) -> &SamplerConfig {
        self.ctx.config
    }

    /// Runs sweeps until `upto` iterations have completed.
    pub fn run_until(&mut self, upto: usize) -> Result<()> {
        let cfg = self.ctx.config;
        while self.next_iteration <= upto.min(cfg.n_iterations) {
            gibbs_sweep(&mut self.state, &self.ctx, &mut self.rng)?;
            let it = self.next_iteration;
            if it > cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0 {
                self.draws.push(Draw::from_state(&self.state));
            }
            self.next_iteration += 1;
        }
        Ok(())
    }

    /// Runs to completion and returns the chain.
    pub fn finish(mut self) -> Result<Chain> {
        self.run_until(self.ctx.config.n_iterations)?;
        Ok(Chain {
            dims: Dims {
                n_species: self.ctx.table.n_species(),
                n_samples: self.ctx.table.n_samples(),
                n_individuals: self.ctx.table.n_individuals(),
                n_factors: self.ctx.hyper.k,
                n_design: self.ctx.design.nrows(),
            },
            config: *self.ctx.config,
            stream: self.stream,
            data_fingerprint: self.fingerprint,
            draws: self.draws,
        })
    }
}

/// Runs one chain on RNG stream 0.
pub fn run_chain(
    table: &OtuTable,
    covariates: &CovariateMatrix,
    hyper: &Hyperparams,
    config: &SamplerConfig,
) -> Result<Chain> {
    ChainRunner::new(table, covariates, hyper, config, 0)?.finish()
}

/// Runs independent chains on RNG streams `0..n_chains`. Results are
/// identical whether the chains execute in parallel or sequentially.
pub fn run_chains(
    table: &OtuTable,
    covariates: &CovariateMatrix,
    hyper: &Hyperparams,
    config: &SamplerConfig,
    n_chains: usize,
) -> Result<Vec<Chain>> {
    if n_chains == 0 {
        return Err(Error::config("need at least one chain".to_string()));
    }
    (0..n_chains as u64)
        .into_par_iter()
        .map(|stream| ChainRunner::new(table, covariates, hyper, config, stream)?.finish())
        .collect()
}
