//! `score`: recovery metrics of a fit against the generating ground truth.

use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use serde::Serialize;

use dpfactor::io::Manifest;
use dpfactor::model::{LatentState, SimulatedDataset};
use dpfactor::summaries::{
    population_trend, rescaled_v, rv_coefficient, sample_correlation, EffectContext,
};
use dpfactor::{Error, Result};

use super::common::{load_chains, pooled_draws, prepare_output_dir, CsvFile, write_json};
use crate::config::{config_hash, RunConfig};

#[derive(Serialize)]
struct SignAgreement {
    agree: usize,
    active: usize,
    fraction: f64,
}

#[derive(Serialize)]
struct TrendScore {
    fixed: Vec<f64>,
    rmse: f64,
    band_coverage: f64,
}

#[derive(Serialize)]
struct ScoreReport {
    rv_s: f64,
    v_mse: f64,
    sign_agreement: SignAgreement,
    level: f64,
    trend: Vec<TrendScore>,
}

/// Default trend arms: everything at zero, plus the one-hot arm of the
/// second covariate when it is binary (the benchmark scenarios' design).
fn default_arms(truth: &SimulatedDataset) -> Vec<Vec<f64>> {
    let l = truth.covariates.n_raw();
    let mut arms = vec![vec![0.0; l]];
    if l > 1 && truth.covariates.is_binary(1) {
        let mut arm = vec![0.0; l];
        arm[1] = 1.0;
        arms.push(arm);
    }
    arms
}

pub fn run(
    config_path: &Path,
    truth_path: &Path,
    overrides: &[String],
    overwrite: bool,
) -> Result<Manifest> {
    let start = Instant::now();
    let cfg: RunConfig = crate::config::load_toml(config_path, overrides)?;
    let out = cfg.paths.output.clone();
    prepare_output_dir(&out, "score", overwrite)?;

    let truth: SimulatedDataset = serde_json::from_slice(&std::fs::read(truth_path)?)?;
    let chains = load_chains(&out)?;
    let draws = pooled_draws(&chains);
    if draws.is_empty() {
        return Err(Error::data("chains hold no retained draws".to_string()));
    }
    let dims_match = chains[0].dims.n_species == truth.table.n_species()
        && chains[0].dims.n_individuals == truth.table.n_individuals();
    if !dims_match {
        return Err(Error::data(
            "ground truth dimensions do not match the fitted chains".to_string(),
        ));
    }

    // correlation recovery
    let u = truth.table.n_individuals();
    let mut s_mean = Array2::<f64>::zeros((u, u));
    for d in &draws {
        s_mean += &sample_correlation(d);
    }
    s_mean /= draws.len() as f64;
    let s_true = sample_correlation(&truth.truth);
    let rv_s = rv_coefficient(s_mean.view(), s_true.view())?;

    // rescaled coefficient recovery
    let (lt, i) = truth.truth.v.dim();
    let mut v_mean = Array2::<f64>::zeros((lt, i));
    for d in &draws {
        v_mean += &rescaled_v(d);
    }
    v_mean /= draws.len() as f64;
    let v_true = rescaled_v(&truth.truth);
    let mut v_mse = 0.0;
    let mut agree = 0usize;
    let mut active = 0usize;
    for l in 0..lt {
        for ii in 0..i {
            let d = v_mean[[l, ii]] - v_true[[l, ii]];
            v_mse += d * d;
            if v_true[[l, ii]].abs() > 1e-12 {
                active += 1;
                if v_mean[[l, ii]].signum() == v_true[[l, ii]].signum() {
                    agree += 1;
                }
            }
        }
    }
    v_mse /= (lt * i) as f64;

    // trend recovery: fitted bands against the generating trend, computed
    // from the ground truth by the same Monte Carlo estimator
    let level = cfg.summarize.level;
    let ectx = EffectContext::new(&truth.covariates, &truth.table.grouping)?;
    let grid = cfg.summarize.grid();
    let trend_cov = 0usize;
    let arms = if cfg.summarize.trend_arms.is_empty() {
        default_arms(&truth)
    } else {
        cfg.summarize.trend_arms.clone()
    };
    let truth_reps: Vec<LatentState> = vec![truth.truth.clone(); 400];

    let mut manifest = Manifest::new("score", cfg.seed, config_hash(&cfg)?);
    let mut trend_scores = Vec::new();
    let mut csv = CsvFile::create(&out, "trend_score.csv", "arm,species,rmse,band_coverage")?;
    for (arm_idx, fixed) in arms.iter().enumerate() {
        let bands = population_trend(
            &draws,
            &ectx,
            dpfactor::model::Link::SquaredPositive,
            trend_cov,
            &grid,
            fixed,
            level,
            cfg.seed ^ 0x5c02e,
        )?;
        let generating = population_trend(
            &truth_reps,
            &ectx,
            truth.spec.link,
            trend_cov,
            &grid,
            fixed,
            level,
            cfg.seed ^ 0x72e41,
        )?;
        let mut arm_sq = 0.0;
        let mut arm_cov = 0usize;
        for ii in 0..i {
            let mut sq = 0.0;
            let mut covered = 0usize;
            for g in 0..grid.len() {
                let t = generating.species[ii].mean[g];
                let m = bands.species[ii].mean[g];
                sq += (m - t) * (m - t);
                if bands.species[ii].lower[g] <= t && t <= bands.species[ii].upper[g] {
                    covered += 1;
                }
            }
            arm_sq += sq;
            arm_cov += covered;
            csv.row(format_args!(
                "{},{},{},{}",
                arm_idx,
                truth.table.species_ids[ii],
                (sq / grid.len() as f64).sqrt(),
                covered as f64 / grid.len() as f64
            ))?;
        }
        trend_scores.push(TrendScore {
            fixed: fixed.clone(),
            rmse: (arm_sq / (i * grid.len()) as f64).sqrt(),
            band_coverage: arm_cov as f64 / (i * grid.len()) as f64,
        });
    }
    csv.finish(&out, &mut manifest)?;

    let report = ScoreReport {
        rv_s,
        v_mse,
        sign_agreement: SignAgreement {
            agree,
            active,
            fraction: if active > 0 {
                agree as f64 / active as f64
            } else {
                1.0
            },
        },
        level,
        trend: trend_scores,
    };
    write_json(&out, "score.json", &report, &mut manifest)?;

    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    manifest.write(&out)?;
    Ok(manifest)
}
