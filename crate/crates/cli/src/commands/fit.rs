//! `fit`: run the configured number of chains against the data and write
//! chain files plus the convergence report.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use dpfactor::diagnostics::{diagnostic_report, DiagnosticRow};
use dpfactor::io::{export_chain_csv, run_chain_persistent, Manifest};
use dpfactor::sampler::Chain;
use dpfactor::Result;

use super::common::{chain_path, checkpoint_path, load_inputs, prepare_output_dir, CsvFile};
use crate::config::{config_hash, RunConfig};

pub fn write_diagnostics(
    out: &Path,
    rows: &[DiagnosticRow],
    manifest: &mut Manifest,
) -> Result<()> {
    let mut csv = CsvFile::create(out, "diagnostics.csv", "parameter,rhat,rhat_upper,geweke_z,ess")?;
    for r in rows {
        let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x}"));
        csv.row(format_args!(
            "{},{},{},{},{}",
            r.name,
            fmt(r.rhat),
            fmt(r.rhat_upper),
            r.geweke_z,
            r.ess
        ))?;
    }
    csv.finish(out, manifest)?;

    let mut txt = std::io::BufWriter::new(std::fs::File::create(out.join("diagnostics.txt"))?);
    let worst_rhat = rows
        .iter()
        .filter_map(|r| r.rhat_upper)
        .fold(f64::NEG_INFINITY, f64::max);
    let worst_z = rows.iter().map(|r| r.geweke_z.abs()).fold(0.0, f64::max);
    let min_ess = rows.iter().map(|r| r.ess).fold(f64::INFINITY, f64::min);
    writeln!(txt, "monitored parameters: {}", rows.len())?;
    if worst_rhat.is_finite() {
        writeln!(txt, "largest split R-hat upper limit: {worst_rhat:.4}")?;
    } else {
        writeln!(txt, "split R-hat unavailable (single chain)")?;
    }
    writeln!(txt, "largest |Geweke z|: {worst_z:.3}")?;
    writeln!(txt, "smallest effective sample size: {min_ess:.1}")?;
    for flag in rows.iter().filter(|r| r.rhat_upper.is_some_and(|u| u > 1.1)) {
        writeln!(
            txt,
            "  warning: {} has R-hat upper limit {:.3}",
            flag.name,
            flag.rhat_upper.unwrap()
        )?;
    }
    txt.flush()?;
    drop(txt);
    manifest.add_file(out, "diagnostics.txt")?;
    Ok(())
}

pub fn run(
    config_path: &Path,
    overrides: &[String],
    overwrite: bool,
    export_csv: bool,
) -> Result<Manifest> {
    let start = Instant::now();
    let cfg: RunConfig = crate::config::load_toml(config_path, overrides)?;
    cfg.validate()?;
    let out = cfg.paths.output.clone();
    prepare_output_dir(&out, "fit", overwrite)?;

    let (table, covariates) = load_inputs(&cfg)?;
    let hyper = cfg.model.hyperparams(table.n_species(), table.n_samples())?;
    let sampler = cfg.sampler.config(cfg.seed)?;

    let chains: Vec<Chain> = (0..cfg.chains)
        .into_par_iter()
        .map(|idx| {
            run_chain_persistent(
                &table,
                &covariates,
                &hyper,
                &sampler,
                idx as u64,
                &chain_path(&out, idx),
                Some(&checkpoint_path(&out, idx)),
            )
        })
        .collect::<Result<_>>()?;

    let mut manifest = Manifest::new("fit", cfg.seed, config_hash(&cfg)?);
    for idx in 0..cfg.chains {
        manifest.add_file(&out, &format!("chain_{idx}.bin"))?;
        if export_csv {
            let rel = format!("chain_{idx}.csv");
            export_chain_csv(&out.join(&rel), &chains[idx])?;
            manifest.add_file(&out, &rel)?;
        }
    }

    let rows = diagnostic_report(&chains)?;
    write_diagnostics(&out, &rows, &mut manifest)?;

    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    manifest.write(&out)?;
    Ok(manifest)
}
