//! `simulate`: draw a synthetic dataset from a scenario file and write the
//! OTU table, covariates, and the generating ground truth.

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dpfactor::io::{save_covariates, save_otu, Manifest};
use dpfactor::model::simulate_dataset;
use dpfactor::Result;

use super::common::{prepare_output_dir, write_json};
use crate::config::{config_hash, load_toml, ScenarioFile};

pub fn run(spec_path: &Path, out: &Path, overrides: &[String], overwrite: bool) -> Result<Manifest> {
    let start = Instant::now();
    let file: ScenarioFile = load_toml(spec_path, overrides)?;
    let spec = file.resolve()?;
    prepare_output_dir(out, "simulate", overwrite)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dataset = simulate_dataset(&spec, &mut rng)?;

    let mut manifest = Manifest::new("simulate", spec.seed, config_hash(&spec)?);

    save_otu(&out.join("otu.tsv"), &dataset.table)?;
    manifest.add_file(out, "otu.tsv")?;

    let labels: Vec<String> = dataset
        .table
        .grouping
        .iter()
        .map(|&u| format!("u{}", u + 1))
        .collect();
    save_covariates(
        &out.join("covariates.csv"),
        &dataset.table.sample_ids,
        &["w1".to_string(), "w2".to_string()],
        &dataset.covariates.raw,
        Some(("individual", &labels)),
    )?;
    manifest.add_file(out, "covariates.csv")?;

    write_json(out, "ground_truth.json", &dataset, &mut manifest)?;

    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    manifest.write(out)?;
    Ok(manifest)
}
