//! `diagnose`: recompute the convergence report from chain files on disk.

use std::path::Path;
use std::time::Instant;

use dpfactor::diagnostics::diagnostic_report;
use dpfactor::io::Manifest;
use dpfactor::Result;

use super::common::{load_chains, prepare_output_dir};
use super::fit::write_diagnostics;
use crate::config::{config_hash, RunConfig};

pub fn run(config_path: &Path, overrides: &[String], overwrite: bool) -> Result<Manifest> {
    let start = Instant::now();
    let cfg: RunConfig = crate::config::load_toml(config_path, overrides)?;
    let out = cfg.paths.output.clone();
    prepare_output_dir(&out, "diagnose", overwrite)?;

    let chains = load_chains(&out)?;
    let rows = diagnostic_report(&chains)?;

    let mut manifest = Manifest::new("diagnose", cfg.seed, config_hash(&cfg)?);
    write_diagnostics(&out, &rows, &mut manifest)?;
    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    manifest.write(&out)?;
    Ok(manifest)
}
