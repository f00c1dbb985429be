//! `summarize`: covariate-effect and similarity summaries from fitted
//! chains, written as plot-ready CSV plus a JSON digest.

use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use serde::Serialize;

use dpfactor::io::Manifest;
use dpfactor::model::Link;
use dpfactor::summaries::{
    derivative, discrete_difference, lowess, population_trend, quantile, rescaled_v,
    sample_correlation, species_gram, EffectContext, GramSource, TrendGrid,
};
use dpfactor::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::common::{
    covariate_index, load_chains, load_inputs, pooled_draws, prepare_output_dir, CsvFile,
    write_json,
};
use crate::config::{config_hash, RunConfig};

fn write_matrix_csv(
    out: &Path,
    rel: &str,
    labels: &[String],
    matrix: &Array2<f64>,
    manifest: &mut Manifest,
) -> Result<()> {
    let mut csv = CsvFile::create(out, rel, &format!("id,{}", labels.join(",")))?;
    for (r, label) in labels.iter().enumerate() {
        let cells: Vec<String> = (0..matrix.ncols())
            .map(|c| format!("{}", matrix[[r, c]]))
            .collect();
        csv.row(format_args!("{label},{}", cells.join(",")))?;
    }
    csv.finish(out, manifest)
}

#[derive(Serialize)]
struct SummaryDigest {
    n_draws: usize,
    n_chains: usize,
    level: f64,
    trends: Vec<TrendArm>,
}

#[derive(Serialize)]
struct TrendArm {
    fixed: Vec<f64>,
    grid: TrendGrid,
}

pub fn run(config_path: &Path, overrides: &[String], overwrite: bool) -> Result<Manifest> {
    let start = Instant::now();
    let cfg: RunConfig = crate::config::load_toml(config_path, overrides)?;
    let out = cfg.paths.output.clone();
    prepare_output_dir(&out, "summarize", overwrite)?;

    let (table, covariates) = load_inputs(&cfg)?;
    let chains = load_chains(&out)?;
    let draws = pooled_draws(&chains);
    if draws.is_empty() {
        return Err(Error::data("chains hold no retained draws".to_string()));
    }
    let ectx = EffectContext::new(&covariates, &table.grouping)?;
    let level = cfg.summarize.level;
    let (lo_p, hi_p) = ((1.0 - level) / 2.0, (1.0 + level) / 2.0);

    let mut manifest = Manifest::new("summarize", cfg.seed, config_hash(&cfg)?);

    // rescaled coefficients: posterior mean and equal-tailed interval
    {
        let per_draw: Vec<Array2<f64>> = draws.iter().map(rescaled_v).collect();
        let mut csv = CsvFile::create(
            &out,
            "rescaled_v.csv",
            "covariate,species,mean,lower,upper",
        )?;
        let names = &covariates.column_names;
        for l in 0..covariates.n_design() {
            for i in 0..table.n_species() {
                let mut vals: Vec<f64> = per_draw.iter().map(|m| m[[l, i]]).collect();
                vals.sort_by(|a, b| a.partial_cmp(b).expect("non-finite coefficient"));
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                csv.row(format_args!(
                    "{},{},{},{},{}",
                    names[l],
                    table.species_ids[i],
                    mean,
                    quantile(&vals, lo_p),
                    quantile(&vals, hi_p)
                ))?;
            }
        }
        csv.finish(&out, &mut manifest)?;
    }

    // posterior-mean similarity matrices
    {
        let u = table.n_individuals();
        let mut s_mean = Array2::<f64>::zeros((u, u));
        let i = table.n_species();
        let mut gx_mean = Array2::<f64>::zeros((i, i));
        let mut gv_mean = Array2::<f64>::zeros((i, i));
        for d in &draws {
            s_mean += &sample_correlation(d);
            gx_mean += &species_gram(d, GramSource::X).matrix;
            gv_mean += &species_gram(d, GramSource::V).matrix;
        }
        let n = draws.len() as f64;
        s_mean /= n;
        gx_mean /= n;
        gv_mean /= n;
        let individual_labels: Vec<String> = (1..=u).map(|k| format!("u{k}")).collect();
        write_matrix_csv(&out, "correlation_mean.csv", &individual_labels, &s_mean, &mut manifest)?;
        write_matrix_csv(&out, "gram_x.csv", &table.species_ids, &gx_mean, &mut manifest)?;
        write_matrix_csv(&out, "gram_v.csv", &table.species_ids, &gv_mean, &mut manifest)?;
    }

    // population trends
    let mut digest = SummaryDigest {
        n_draws: draws.len(),
        n_chains: chains.len(),
        level,
        trends: Vec::new(),
    };
    if let Some(name) = &cfg.summarize.trend_covariate {
        let l = covariate_index(&covariates, name)?;
        let grid = cfg.summarize.grid();
        let arms: Vec<Vec<f64>> = if cfg.summarize.trend_arms.is_empty() {
            vec![vec![0.0; covariates.n_raw()]]
        } else {
            cfg.summarize.trend_arms.clone()
        };
        for (arm_idx, fixed) in arms.iter().enumerate() {
            let trend = population_trend(
                &draws,
                &ectx,
                Link::SquaredPositive,
                l,
                &grid,
                fixed,
                level,
                cfg.seed ^ 0x7e6d,
            )?;
            let rel = format!("trend_{name}_arm{arm_idx}.csv");
            let mut csv = CsvFile::create(
                &out,
                &rel,
                "species,grid_value,mean,median,lower,upper",
            )?;
            for (i, curve) in trend.species.iter().enumerate() {
                for (g, &value) in grid.iter().enumerate() {
                    csv.row(format_args!(
                        "{},{},{},{},{},{}",
                        table.species_ids[i],
                        value,
                        curve.mean[g],
                        curve.median[g],
                        curve.lower[g],
                        curve.upper[g]
                    ))?;
                }
            }
            csv.finish(&out, &mut manifest)?;
            digest.trends.push(TrendArm {
                fixed: fixed.clone(),
                grid: trend,
            });
        }
    }

    // per-sample derivatives with a display smoother
    if let Some(name) = &cfg.summarize.derivative_covariate {
        let l = covariate_index(&covariates, name)?;
        let j = table.n_samples();
        let i = table.n_species();
        let mut mean_deriv = Array2::<f64>::zeros((i, j));
        for d in &draws {
            for jj in 0..j {
                let dv = derivative(d, &ectx, Link::SquaredPositive, jj, l)?;
                for ii in 0..i {
                    mean_deriv[[ii, jj]] += dv[ii] / draws.len() as f64;
                }
            }
        }
        let w: Vec<f64> = covariates.raw.row(l).to_vec();
        let rel = format!("derivatives_{name}.csv");
        let mut csv = CsvFile::create(
            &out,
            &rel,
            "species,sample,covariate_value,mean_derivative,lowess",
        )?;
        for ii in 0..i {
            let y: Vec<f64> = mean_deriv.row(ii).to_vec();
            let smooth = lowess(&w, &y, cfg.summarize.lowess_span, 2)?;
            for jj in 0..j {
                csv.row(format_args!(
                    "{},{},{},{},{}",
                    table.species_ids[ii],
                    table.sample_ids[jj],
                    w[jj],
                    y[jj],
                    smooth[jj]
                ))?;
            }
        }
        csv.finish(&out, &mut manifest)?;
    }

    // discrete differences of a binary covariate
    if let Some(name) = &cfg.summarize.difference_covariate {
        let l = covariate_index(&covariates, name)?;
        let j = table.n_samples();
        let i = table.n_species();
        // residuals: one stream per draw, shared across both arms inside
        let per_draw: Vec<Array2<f64>> = draws
            .iter()
            .enumerate()
            .map(|(d, state)| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xd1ff);
                rng.set_stream(d as u64);
                let mut m = Array2::<f64>::zeros((i, j));
                for jj in 0..j {
                    let diff =
                        discrete_difference(state, &ectx, Link::SquaredPositive, jj, l, &mut rng)?;
                    for ii in 0..i {
                        m[[ii, jj]] = diff[ii];
                    }
                }
                Ok(m)
            })
            .collect::<Result<_>>()?;
        let rel = format!("differences_{name}.csv");
        let mut csv = CsvFile::create(&out, &rel, "species,sample,mean,lower,upper")?;
        for ii in 0..i {
            for jj in 0..j {
                let mut vals: Vec<f64> = per_draw.iter().map(|m| m[[ii, jj]]).collect();
                vals.sort_by(|a, b| a.partial_cmp(b).expect("non-finite difference"));
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                csv.row(format_args!(
                    "{},{},{},{},{}",
                    table.species_ids[ii],
                    table.sample_ids[jj],
                    mean,
                    quantile(&vals, lo_p),
                    quantile(&vals, hi_p)
                ))?;
            }
        }
        csv.finish(&out, &mut manifest)?;
    }

    write_json(&out, "summary.json", &digest, &mut manifest)?;
    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    manifest.write(&out)?;
    Ok(manifest)
}
