//! Compositional covariate effects: analytic derivatives, counterfactual
//! compositions, population trends, and discrete differences.
//!
//! Counterfactual evaluations redraw the score residuals. Within one
//! posterior draw a single residual matrix is shared across all grid points
//! and across both arms of a discrete difference, which removes residual
//! noise from the contrasts.

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::StateView;
use crate::model::{CovariateMatrix, Link};
use crate::{Error, Result};

/// The fixed data context effects are evaluated against.
#[derive(Clone, Copy)]
pub struct EffectContext<'a> {
    pub covariates: &'a CovariateMatrix,
    /// 0-based individual index of each sample.
    pub grouping: &'a [usize],
}

impl<'a> EffectContext<'a> {
    pub fn new(covariates: &'a CovariateMatrix, grouping: &'a [usize]) -> Result<Self> {
        if covariates.n_samples() != grouping.len() {
            return Err(Error::dim(format!(
                "covariates describe {} samples but grouping has {}",
                covariates.n_samples(),
                grouping.len()
            )));
        }
        Ok(EffectContext {
            covariates,
            grouping,
        })
    }

    fn n_samples(&self) -> usize {
        self.grouping.len()
    }
}

/// Link weight and its derivative with respect to the score.
fn weight_and_slope(link: Link, sigma: f64, q: f64) -> (f64, f64) {
    match link {
        Link::SquaredPositive => {
            if q > 0.0 {
                (sigma * q * q, 2.0 * sigma * q)
            } else {
                (0.0, 0.0)
            }
        }
        Link::LinearPositive => {
            if q > 0.0 {
                (sigma * q, sigma)
            } else {
                (0.0, 0.0)
            }
        }
        Link::LogisticNormal => {
            let w = q.exp();
            (w, w)
        }
    }
}

/// Analytic derivative of the composition of sample `j` with respect to raw
/// covariate `l`, holding the score residuals fixed: with weights
/// `w_i = sigma_i (Q_i)_+^2` and `g_i = d Q_i / d w_l` (chain rule through
/// the declared transformation),
/// `dP_i = (w_i' g_i D - w_i sum_i' w_i'' g_i') / D^2`.
pub fn derivative(
    state: &impl StateView,
    ectx: &EffectContext,
    link: Link,
    j: usize,
    l: usize,
) -> Result<Vec<f64>> {
    let q = state.q();
    let sigma = state.sigma();
    let i = sigma.len();
    if j >= ectx.n_samples() {
        return Err(Error::dim(format!("sample index {j} out of range")));
    }
    let w_raw: Vec<f64> = ectx.covariates.raw.column(j).to_vec();
    let grad = ectx.covariates.design_gradient(&w_raw, l)?;
    let v = state.v();
    let mut weights = vec![0.0; i];
    let mut slopes = vec![0.0; i];
    let mut denom = 0.0;
    let mut denom_slope = 0.0;
    for ii in 0..i {
        let g = v.column(ii).dot(&grad);
        let (w, wdot) = weight_and_slope(link, sigma[ii], q[[ii, j]]);
        weights[ii] = w;
        slopes[ii] = wdot * g;
        denom += w;
        denom_slope += wdot * g;
    }
    if !(denom > 0.0) {
        return Err(Error::degenerate(format!(
            "sample {j}: composition denominator is zero"
        )));
    }
    Ok((0..i)
        .map(|ii| (slopes[ii] * denom - weights[ii] * denom_slope) / (denom * denom))
        .collect())
}

fn link_composition(
    link: Link,
    sigma: ArrayView1<f64>,
    scores: &Array1<f64>,
) -> Result<Vec<f64>> {
    link.composition(sigma, scores.view())
}

/// Counterfactual composition of sample `j` at the design point
/// `(w0, f(w0))` with explicit residuals: score
/// `<x_i, y_{u_j}> + <v_i, design> + eps_i`.
pub fn composition_at_with_residuals(
    state: &impl StateView,
    ectx: &EffectContext,
    link: Link,
    j: usize,
    design_point: &Array1<f64>,
    eps: &[f64],
) -> Result<Vec<f64>> {
    let i = state.sigma().len();
    if eps.len() != i {
        return Err(Error::dim(format!(
            "{} residuals for {i} species",
            eps.len()
        )));
    }
    let u = *ectx
        .grouping
        .get(j)
        .ok_or_else(|| Error::dim(format!("sample index {j} out of range")))?;
    let fx = state.x().t().dot(&state.y().column(u));
    let fv = state.v().t().dot(design_point);
    let scores = Array1::from_shape_fn(i, |ii| fx[ii] + fv[ii] + eps[ii]);
    link_composition(link, state.sigma(), &scores)
}

/// Counterfactual composition at raw covariate value `w0`, with fresh
/// standard-normal residuals.
pub fn composition_at<R: Rng + ?Sized>(
    state: &impl StateView,
    ectx: &EffectContext,
    link: Link,
    j: usize,
    w0: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let design_point = ectx.covariates.design_point(w0)?;
    let i = state.sigma().len();
    let eps: Vec<f64> = (0..i).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    composition_at_with_residuals(state, ectx, link, j, &design_point, &eps)
}

/// Population average abundance at `w0` with an explicit residual matrix
/// (`I x J`, one column per sample).
pub fn population_average_with_residuals(
    state: &impl StateView,
    ectx: &EffectContext,
    link: Link,
    design_point: &Array1<f64>,
    eps: &Array2<f64>,
) -> Result<Vec<f64>> {
    let j = ectx.n_samples();
    let i = state.sigma().len();
    if eps.dim() != (i, j) {
        return Err(Error::dim(format!(
            "residual matrix is {:?}, expected ({i}, {j})",
            eps.dim()
        )));
    }
    let mut avg = vec![0.0; i];
    for jj in 0..j {
        let col: Vec<f64> = eps.column(jj).to_vec();
        let p = composition_at_with_residuals(state, ectx, link, jj, design_point, &col)?;
        for (a, pi) in avg.iter_mut().zip(p.iter()) {
            *a += pi / j as f64;
        }
    }
    Ok(avg)
}

/// Composition of one sample at a counterfactual design point, falling back
/// to redrawn residuals when the shared residual column leaves every score
/// nonpositive (probability `~2^-I` per column). The fallback stream is
/// keyed by `(draw, column)` only, so all grid points of one posterior draw
/// see the same redraw sequence and contrasts stay residual-matched.
fn column_composition_with_fallback(
    state: &impl StateView,
    ectx: &EffectContext,
    link: Link,
    j: usize,
    design_point: &Array1<f64>,
    base_eps: &[f64],
    seed: u64,
    draw_index: usize,
) -> Result<Vec<f64>> {
    match composition_at_with_residuals(state, ectx, link, j, design_point, base_eps) {
        Err(Error::DegenerateSample(_)) => {}
        other => return other,
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c01d);
    rng.set_stream((1 << 63) | ((draw_index as u64) << 24) | j as u64);
    let i = base_eps.len();
    for _ in 0..1000 {
        let eps: Vec<f64> = (0..i).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        match composition_at_with_residuals(state, ectx, link, j, design_point, &eps) {
            Err(Error::DegenerateSample(_)) => continue,
            other => return other,
        }
    }
    Err(Error::degenerate(format!(
        "sample {j}: no valid counterfactual composition after 1000 residual redraws"
    )))
}

/// Population average abundance of every species if all samples had
/// covariates `w0`, with fresh residuals.
pub fn population_average<R: Rng + ?Sized>(
    state: &impl StateView,
    ectx: &EffectContext,
    link: Link,
    w0: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let design_point = ectx.covariates.design_point(w0)?;
    let i = state.sigma().len();
    let j = ectx.n_samples();
    let eps = Array2::from_shape_fn((i, j), |_| rng.sample::<f64, _>(StandardNormal));
    population_average_with_residuals(state, ectx, link, &design_point, &eps)
}

/// Posterior summary of one species' population trend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendCurve {
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Population trends of all species over a covariate grid, with pointwise
/// equal-tailed credible bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendGrid {
    pub covariate: usize,
    pub grid: Vec<f64>,
    pub fixed: Vec<f64>,
    pub level: f64,
    /// One curve per species.
    pub species: Vec<TrendCurve>,
}

/// Equal-tailed quantile with linear interpolation on the sorted sample.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n as f64 - 1.0) * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Population trend of every species with respect to raw covariate `l`
/// over `grid`, holding the remaining covariates at `fixed` (whose `l`-th
/// entry is overwritten), summarized across the supplied posterior draws.
/// One residual matrix is drawn per posterior draw (stream-seeded from
/// `seed`) and shared across grid points.
pub fn population_trend<S: StateView + Sync>(
    draws: &[S],
    ectx: &EffectContext,
    link: Link,
    l: usize,
    grid: &[f64],
    fixed: &[f64],
    level: f64,
    seed: u64,
) -> Result<TrendGrid> {
    if draws.is_empty() {
        return Err(Error::data("population trend needs a nonempty chain".to_string()));
    }
    if grid.is_empty() {
        return Err(Error::config("empty trend grid".to_string()));
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::config("trend grid must be sorted".to_string()));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::config(format!("band level {level} outside (0, 1)")));
    }
    if l >= fixed.len() || fixed.len() != ectx.covariates.n_raw() {
        return Err(Error::dim(format!(
            "fixed covariate vector has {} entries for {} raw covariates",
            fixed.len(),
            ectx.covariates.n_raw()
        )));
    }
    let design_points: Vec<Array1<f64>> = grid
        .iter()
        .map(|&g| {
            let mut w0 = fixed.to_vec();
            w0[l] = g;
            ectx.covariates.design_point(&w0)
        })
        .collect::<Result<_>>()?;

    let i = draws[0].sigma().len();
    let j = ectx.n_samples();
    // per draw: G x I matrix of population averages
    let per_draw: Vec<Vec<Vec<f64>>> = draws
        .par_iter()
        .enumerate()
        .map(|(d, state)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(d as u64);
            let eps = Array2::from_shape_fn((i, j), |_| rng.sample::<f64, _>(StandardNormal));
            design_points
                .iter()
                .map(|dp| {
                    let mut avg = vec![0.0; i];
                    for jj in 0..j {
                        let col: Vec<f64> = eps.column(jj).to_vec();
                        let p = column_composition_with_fallback(
                            state, ectx, link, jj, dp, &col, seed, d,
                        )?;
                        for (a, pi) in avg.iter_mut().zip(p.iter()) {
                            *a += pi / j as f64;
                        }
                    }
                    Ok(avg)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let lo_p = (1.0 - level) / 2.0;
    let hi_p = 1.0 - lo_p;
    let species = (0..i)
        .map(|ii| {
            let mut mean = Vec::with_capacity(grid.len());
            let mut median = Vec::with_capacity(grid.len());
            let mut lower = Vec::with_capacity(grid.len());
            let mut upper = Vec::with_capacity(grid.len());
            for g in 0..grid.len() {
                let mut vals: Vec<f64> = per_draw.iter().map(|d| d[g][ii]).collect();
                vals.sort_by(|a, b| a.partial_cmp(b).expect("non-finite trend value"));
                mean.push(vals.iter().sum::<f64>() / vals.len() as f64);
                median.push(quantile(&vals, 0.5));
                lower.push(quantile(&vals, lo_p));
                upper.push(quantile(&vals, hi_p));
            }
            TrendCurve {
                mean,
                median,
                lower,
                upper,
            }
        })
        .collect();

    Ok(TrendGrid {
        covariate: l,
        grid: grid.to_vec(),
        fixed: fixed.to_vec(),
        level,
        species,
    })
}

/// Discrete effect of a binary covariate on sample `j`: the difference
/// between the compositions with `w_l` forced to one and to zero, sharing
/// one residual draw across both arms.
pub fn discrete_difference<R: Rng + ?Sized>(
    state: &impl StateView,
    ectx: &EffectContext,
    link: Link,
    j: usize,
    l: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if l >= ectx.covariates.n_raw() {
        return Err(Error::dim(format!("covariate index {l} out of range")));
    }
    if !ectx.covariates.is_binary(l) {
        return Err(Error::data(format!(
            "covariate {l} is not binary (0/1); discrete differences are undefined"
        )));
    }
    let i = state.sigma().len();
    let eps: Vec<f64> = (0..i).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mut w1: Vec<f64> = ectx.covariates.raw.column(j).to_vec();
    let mut w0 = w1.clone();
    w1[l] = 1.0;
    w0[l] = 0.0;
    let p1 = composition_at_with_residuals(
        state,
        ectx,
        link,
        j,
        &ectx.covariates.design_point(&w1)?,
        &eps,
    )?;
    let p0 = composition_at_with_residuals(
        state,
        ectx,
        link,
        j,
        &ectx.covariates.design_point(&w0)?,
        &eps,
    )?;
    Ok(p1.iter().zip(p0.iter()).map(|(a, b)| a - b).collect())
}

/// Averages per-sample difference vectors over consecutive groups of a
/// grouping covariate (for example age), per posterior draw. Boundaries
/// `b_0 < b_1 < ... < b_G` define groups `[b_g, b_{g+1})`, the last closed.
/// Returns, per group, a draws-by-species matrix of group averages.
pub fn age_group_average(
    per_draw_differences: &[Array2<f64>],
    group_values: &[f64],
    boundaries: &[f64],
) -> Result<Vec<Array2<f64>>> {
    if per_draw_differences.is_empty() {
        return Err(Error::data("no draws supplied".to_string()));
    }
    if boundaries.len() < 2 || boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config(
            "group boundaries must be at least two strictly increasing values".to_string(),
        ));
    }
    let (i, j) = per_draw_differences[0].dim();
    if group_values.len() != j {
        return Err(Error::dim(format!(
            "{} group values for {j} samples",
            group_values.len()
        )));
    }
    let n_groups = boundaries.len() - 1;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_groups];
    for (jj, &val) in group_values.iter().enumerate() {
        let g = if val == *boundaries.last().unwrap() {
            n_groups - 1
        } else {
            match boundaries[..n_groups].iter().rposition(|&b| b <= val) {
                Some(g) if val < boundaries[g + 1] => g,
                _ => {
                    return Err(Error::data(format!(
                        "sample {jj} value {val} outside the group boundaries"
                    )))
                }
            }
        };
        members[g].push(jj);
    }
    // the groups partition the samples
    debug_assert_eq!(members.iter().map(|m| m.len()).sum::<usize>(), j);
    if let Some(g) = members.iter().position(|m| m.is_empty()) {
        return Err(Error::data(format!(
            "group {g} [{}, {}) contains no samples",
            boundaries[g],
            boundaries[g + 1]
        )));
    }
    let n_draws = per_draw_differences.len();
    let mut out = Vec::with_capacity(n_groups);
    for group in &members {
        let mut m = Array2::zeros((n_draws, i));
        for (d, diff) in per_draw_differences.iter().enumerate() {
            if diff.dim() != (i, j) {
                return Err(Error::dim("draws have inconsistent shapes".to_string()));
            }
            for ii in 0..i {
                let mut acc = 0.0;
                for &jj in group {
                    acc += diff[[ii, jj]];
                }
                m[[d, ii]] = acc / group.len() as f64;
            }
        }
        out.push(m);
    }
    Ok(out)
}
