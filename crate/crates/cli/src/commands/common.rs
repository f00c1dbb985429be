//! Shared plumbing for the commands: output directories, data loading,
//! chain discovery, and CSV writing.

use std::io::Write;
use std::path::{Path, PathBuf};

use dpfactor::io::{
    build_covariate_matrix, load_chain, load_covariates, load_otu, validate_binary, Manifest,
};
use dpfactor::model::{CovariateMatrix, OtuTable};
use dpfactor::sampler::{Chain, Draw};
use dpfactor::{Error, Result};

use crate::config::RunConfig;

/// Creates the output directory; refuses to clobber a completed run of the
/// same command unless `overwrite` is set.
pub fn prepare_output_dir(out: &Path, command: &str, overwrite: bool) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let manifest = Manifest::path_for(out, command);
    if manifest.exists() && !overwrite {
        return Err(Error::config(format!(
            "output directory {} already holds a completed '{command}' run; pass --overwrite to replace it",
            out.display()
        )));
    }
    Ok(())
}

/// Loads the OTU table and covariates per the run configuration, applies
/// the grouping column, validates declared-binary covariates, and builds
/// the expanded covariate matrix.
pub fn load_inputs(cfg: &RunConfig) -> Result<(OtuTable, CovariateMatrix)> {
    let mut table = load_otu(&cfg.paths.otu)?;
    let loaded = load_covariates(
        &cfg.paths.covariates,
        &table.sample_ids,
        cfg.model.grouping.as_deref(),
    )?;
    validate_binary(&loaded, &cfg.model.binary)?;
    if let Some(grouping) = &loaded.grouping {
        table.grouping = grouping.clone();
        table.validate()?;
    }
    let covariates = build_covariate_matrix(&loaded, &cfg.model.transform)?;
    Ok((table, covariates))
}

pub fn chain_path(out: &Path, index: usize) -> PathBuf {
    out.join(format!("chain_{index}.bin"))
}

pub fn checkpoint_path(out: &Path, index: usize) -> PathBuf {
    out.join(format!("chain_{index}.checkpoint"))
}

/// Loads `chain_0.bin..` until a file is missing.
pub fn load_chains(out: &Path) -> Result<Vec<Chain>> {
    let mut chains = Vec::new();
    loop {
        let path = chain_path(out, chains.len());
        if !path.exists() {
            break;
        }
        chains.push(load_chain(&path)?);
    }
    if chains.is_empty() {
        return Err(Error::data(format!(
            "no chain files found under {}; run 'fit' first",
            out.display()
        )));
    }
    Ok(chains)
}

/// All retained draws pooled across chains.
pub fn pooled_draws(chains: &[Chain]) -> Vec<Draw> {
    chains
        .iter()
        .flat_map(|c| c.draws.iter().cloned())
        .collect()
}

/// Resolves a covariate name against the raw covariate names.
pub fn covariate_index(covariates: &CovariateMatrix, name: &str) -> Result<usize> {
    covariates.column_names[..covariates.n_raw()]
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::data(format!("covariate '{name}' not found")))
}

/// A CSV writer that records itself in the manifest when finished.
pub struct CsvFile {
    out: std::io::BufWriter<std::fs::File>,
    rel: String,
}

impl CsvFile {
    pub fn create(root: &Path, rel: &str, header: &str) -> Result<Self> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(root.join(rel))?);
        writeln!(out, "{header}")?;
        Ok(CsvFile {
            out,
            rel: rel.to_string(),
        })
    }

    pub fn row(&mut self, fields: std::fmt::Arguments<'_>) -> Result<()> {
        writeln!(self.out, "{fields}")?;
        Ok(())
    }

    pub fn finish(mut self, root: &Path, manifest: &mut Manifest) -> Result<()> {
        self.out.flush()?;
        drop(self.out);
        manifest.add_file(root, &self.rel)
    }
}

/// Writes a JSON document and records it in the manifest.
pub fn write_json<T: serde::Serialize>(
    root: &Path,
    rel: &str,
    value: &T,
    manifest: &mut Manifest,
) -> Result<()> {
    std::fs::write(root.join(rel), serde_json::to_vec_pretty(value)?)?;
    manifest.add_file(root, rel)
}
