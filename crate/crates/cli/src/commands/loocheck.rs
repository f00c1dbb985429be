//! `loocheck`: leave-one-out predictive intervals and coverage from fitted
//! chains.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use dpfactor::io::Manifest;
use dpfactor::validation::loo_coverage;
use dpfactor::Result;

use super::common::{load_chains, load_inputs, pooled_draws, prepare_output_dir, CsvFile, write_json};
use crate::config::{config_hash, RunConfig};

#[derive(Serialize)]
struct LooDigest {
    level: f64,
    mean_coverage: f64,
    n_samples: usize,
    n_unreliable: usize,
}

pub fn run(
    config_path: &Path,
    level: f64,
    overrides: &[String],
    overwrite: bool,
) -> Result<Manifest> {
    let start = Instant::now();
    let cfg: RunConfig = crate::config::load_toml(config_path, overrides)?;
    let out = cfg.paths.output.clone();
    prepare_output_dir(&out, "loocheck", overwrite)?;

    let (table, _covariates) = load_inputs(&cfg)?;
    let chains = load_chains(&out)?;
    let draws = pooled_draws(&chains);
    let report = loo_coverage(&draws, &table, level)?;

    let mut manifest = Manifest::new("loocheck", cfg.seed, config_hash(&cfg)?);

    let mut samples_csv = CsvFile::create(&out, "loo_samples.csv", "sample,k_hat,reliable")?;
    for s in &report.samples {
        samples_csv.row(format_args!(
            "{},{},{}",
            table.sample_ids[s.sample], s.k_hat, s.reliable
        ))?;
    }
    samples_csv.finish(&out, &mut manifest)?;

    let mut intervals_csv = CsvFile::create(
        &out,
        "loo_intervals.csv",
        "sample,species,lower,upper,observed,covered",
    )?;
    for s in &report.samples {
        for (ii, interval) in s.species.iter().enumerate() {
            intervals_csv.row(format_args!(
                "{},{},{},{},{},{}",
                table.sample_ids[s.sample],
                table.species_ids[ii],
                interval.lower,
                interval.upper,
                interval.observed,
                interval.covered
            ))?;
        }
    }
    intervals_csv.finish(&out, &mut manifest)?;

    let mut species_csv = CsvFile::create(&out, "loo_species.csv", "species,coverage")?;
    for (ii, cov) in report.species_coverage.iter().enumerate() {
        species_csv.row(format_args!("{},{}", table.species_ids[ii], cov))?;
    }
    species_csv.finish(&out, &mut manifest)?;

    let digest = LooDigest {
        level,
        mean_coverage: report.mean_coverage,
        n_samples: report.samples.len(),
        n_unreliable: report.samples.iter().filter(|s| !s.reliable).count(),
    };
    write_json(&out, "loo.json", &digest, &mut manifest)?;

    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    manifest.write(&out)?;
    Ok(manifest)
}
