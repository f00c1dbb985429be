//! `permtest`: permutation test of the global null for one covariate.

use std::path::Path;
use std::time::Instant;

use dpfactor::io::Manifest;
use dpfactor::sampler::SamplerConfig;
use dpfactor::validation::{permutation_test, PermutationConfig};
use dpfactor::{Error, Result};

use super::common::{covariate_index, load_inputs, prepare_output_dir, CsvFile, write_json};
use crate::config::{config_hash, RunConfig};

fn write_null_csv(out: &Path, norms: &[f64]) -> Result<()> {
    let mut csv = CsvFile::create(out, "permutation_null.csv", "permutation,norm")?;
    for (p, n) in norms.iter().enumerate() {
        csv.row(format_args!("{},{}", p + 1, n))?;
    }
    // finish without a manifest: the abort path persists partial results
    // before the command fails
    let mut throwaway = Manifest::new("permtest", 0, String::new());
    csv.finish(out, &mut throwaway)?;
    Ok(())
}

pub fn run(
    config_path: &Path,
    covariate: &str,
    n_permutations: Option<usize>,
    overrides: &[String],
    overwrite: bool,
) -> Result<Manifest> {
    let start = Instant::now();
    let cfg: RunConfig = crate::config::load_toml(config_path, overrides)?;
    let out = cfg.paths.output.clone();
    prepare_output_dir(&out, "permtest", overwrite)?;

    let (table, covariates) = load_inputs(&cfg)?;
    let l = covariate_index(&covariates, covariate)?;
    let hyper = cfg.model.hyperparams(table.n_species(), table.n_samples())?;
    let base = cfg.sampler.config(cfg.seed)?;
    let perm_cfg = PermutationConfig {
        n_permutations: n_permutations.unwrap_or(cfg.permtest.n_permutations),
        hyper,
        sampler: SamplerConfig {
            n_iterations: cfg.permtest.n_iterations,
            burn_in: cfg.permtest.burn_in,
            thin: cfg.permtest.thin,
            ..base
        },
        seed: cfg.seed,
    };

    let result = match permutation_test(&table, &covariates, l, &perm_cfg) {
        Ok(r) => r,
        Err(Error::PermutationAborted { completed, message }) => {
            write_null_csv(&out, &completed)?;
            return Err(Error::PermutationAborted { completed, message });
        }
        Err(e) => return Err(e),
    };

    let mut manifest = Manifest::new("permtest", cfg.seed, config_hash(&cfg)?);
    let mut csv = CsvFile::create(&out, "permutation_null.csv", "permutation,norm")?;
    for (p, n) in result.null_norms.iter().enumerate() {
        csv.row(format_args!("{},{}", p + 1, n))?;
    }
    csv.finish(&out, &mut manifest)?;
    write_json(&out, "permutation.json", &result, &mut manifest)?;

    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    manifest.write(&out)?;
    Ok(manifest)
}
