//! Convergence diagnostics: split R-hat with an upper confidence limit,
//! Geweke z-scores, and autocorrelation-based effective sample size.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::{Error, Result};

/// One monitored scalar across the retained draws of a single chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarTrace {
    pub name: String,
    pub values: Vec<f64>,
}

impl ScalarTrace {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        ScalarTrace {
            name: name.into(),
            values,
        }
    }
}

/// Split potential scale reduction factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rhat {
    pub point: f64,
    pub upper: f64,
    /// Set when the traces carry no variance; the estimate is defined as 1.
    pub degenerate: bool,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

fn sample_covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = mean(xs);
    let my = mean(ys);
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (xs.len() - 1) as f64
}

/// Split R-hat over two or more equal-length traces, with the classical
/// degrees-of-freedom adjustment and F-quantile upper confidence limit.
/// Each trace is split in half, so chains that have not traversed their
/// stationary distribution inflate the between-chain variance even when
/// their endpoints agree. The point estimate is floored at one; values
/// below one only arise from finite-sample noise in the variance ratio.
pub fn split_rhat(traces: &[&[f64]]) -> Result<Rhat> {
    if traces.len() < 2 {
        return Err(Error::config(
            "split R-hat needs at least two traces".to_string(),
        ));
    }
    let n = traces[0].len();
    if n < 4 {
        return Err(Error::config(
            "split R-hat needs traces of length at least 4".to_string(),
        ));
    }
    if traces.iter().any(|t| t.len() != n) {
        return Err(Error::dim("traces must have equal lengths".to_string()));
    }
    let half = n / 2;
    let mut chains: Vec<&[f64]> = Vec::with_capacity(2 * traces.len());
    for t in traces {
        chains.push(&t[..half]);
        chains.push(&t[n - half..]);
    }
    let m = chains.len() as f64;
    let nn = half as f64;

    let xbar: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let s2: Vec<f64> = chains.iter().map(|c| sample_variance(c)).collect();
    let w = mean(&s2);
    let b = nn * sample_variance(&xbar);
    if w <= 0.0 {
        let degenerate_ok = b <= 0.0;
        return Ok(Rhat {
            point: if degenerate_ok { 1.0 } else { f64::INFINITY },
            upper: if degenerate_ok { 1.0 } else { f64::INFINITY },
            degenerate: true,
        });
    }

    let muhat = mean(&xbar);
    let var_w = sample_variance(&s2) / m;
    let var_b = 2.0 * b * b / (m - 1.0);
    let xbar2: Vec<f64> = xbar.iter().map(|x| x * x).collect();
    let cov_wb = (nn / m)
        * (sample_covariance(&s2, &xbar2) - 2.0 * muhat * sample_covariance(&s2, &xbar));

    let v = (nn - 1.0) / nn * w + (1.0 + 1.0 / m) * b / nn;
    let var_v = ((nn - 1.0) * (nn - 1.0) * var_w
        + (1.0 + 1.0 / m) * (1.0 + 1.0 / m) * var_b
        + 2.0 * (nn - 1.0) * (1.0 + 1.0 / m) * cov_wb)
        / (nn * nn);
    let df_adj = if var_v > 0.0 && v > 0.0 {
        let df_v = 2.0 * v * v / var_v;
        (df_v + 3.0) / (df_v + 1.0)
    } else {
        1.0
    };

    let r2_fixed = (nn - 1.0) / nn;
    let r2_random = (1.0 + 1.0 / m) * (1.0 / nn) * (b / w);
    let point = (df_adj * (r2_fixed + r2_random)).sqrt().max(1.0);

    let upper = if r2_random > 0.0 {
        let w_df = if var_w > 0.0 {
            (2.0 * w * w / var_w).min(1e6)
        } else {
            1e6
        };
        let q = FisherSnedecor::new(m - 1.0, w_df)
            .map_err(|e| Error::numerical(format!("F quantile: {e}")))?
            .inverse_cdf(0.975);
        (df_adj * (r2_fixed + q * r2_random)).sqrt().max(point)
    } else {
        point
    };

    Ok(Rhat {
        point,
        upper,
        degenerate: false,
    })
}

/// Autocovariance at the given lag, normalized by the window length.
fn autocovariance(xs: &[f64], lag: usize) -> f64 {
    let n = xs.len();
    let m = mean(xs);
    (0..n - lag)
        .map(|t| (xs[t] - m) * (xs[t + lag] - m))
        .sum::<f64>()
        / n as f64
}

/// Spectral density at frequency zero, estimated with a Bartlett lag window
/// of length `floor(sqrt(n))`.
fn spectral_density_zero(xs: &[f64]) -> f64 {
    let n = xs.len();
    let kappa = (n as f64).sqrt().floor() as usize;
    let mut s = autocovariance(xs, 0);
    for k in 1..=kappa.min(n - 1) {
        let weight = 1.0 - k as f64 / (kappa + 1) as f64;
        s += 2.0 * weight * autocovariance(xs, k);
    }
    s
}

/// Geweke convergence z-score: the standardized difference between the mean
/// of the first `first_frac` of the trace and the mean of the last
/// `last_frac`, with spectral-density variance estimates.
pub fn geweke_z(trace: &[f64], first_frac: f64, last_frac: f64) -> Result<f64> {
    if !(first_frac > 0.0 && last_frac > 0.0 && first_frac + last_frac <= 1.0) {
        return Err(Error::config(format!(
            "geweke window fractions ({first_frac}, {last_frac}) must be positive and sum to at most 1"
        )));
    }
    let n = trace.len();
    let n_a = (first_frac * n as f64).floor() as usize;
    let n_b = (last_frac * n as f64).floor() as usize;
    if n_a < 2 || n_b < 2 {
        return Err(Error::config(format!(
            "trace of length {n} too short for geweke windows ({first_frac}, {last_frac})"
        )));
    }
    let a = &trace[..n_a];
    let b = &trace[n - n_b..];
    let var = spectral_density_zero(a) / n_a as f64 + spectral_density_zero(b) / n_b as f64;
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::numerical(
            "geweke diagnostic: degenerate window variance".to_string(),
        ));
    }
    Ok((mean(a) - mean(b)) / var.sqrt())
}

/// Cap on the effective sample size, `n * log10(n)`; antithetic traces hit
/// the cap instead of reporting unbounded efficiency.
fn ess_cap(n: usize) -> f64 {
    n as f64 * (n as f64).log10()
}

/// Effective sample size from the initial positive sequence of paired
/// autocorrelations (stopping at the first nonpositive pair sum).
pub fn ess(trace: &[f64]) -> Result<f64> {
    let n = trace.len();
    if n < 2 {
        return Err(Error::config(
            "effective sample size needs at least two draws".to_string(),
        ));
    }
    let c0 = autocovariance(trace, 0);
    if !(c0 > 0.0) {
        return Err(Error::numerical(
            "effective sample size: trace has zero variance".to_string(),
        ));
    }
    let mut sum_pairs = 0.0;
    let mut m = 0;
    loop {
        let lag_even = 2 * m;
        let lag_odd = 2 * m + 1;
        if lag_even >= n - 1 {
            break;
        }
        let rho_even = autocovariance(trace, lag_even) / c0;
        let rho_odd = if lag_odd < n {
            autocovariance(trace, lag_odd) / c0
        } else {
            0.0
        };
        let pair = rho_even + rho_odd;
        if pair <= 0.0 {
            break;
        }
        sum_pairs += pair;
        m += 1;
    }
    let tau = (-1.0 + 2.0 * sum_pairs).max(1.0 / (n as f64).log10());
    Ok((n as f64 / tau).min(ess_cap(n)))
}

/// Diagnostics of one monitored parameter across chains. The Geweke column
/// reports the worst (largest absolute) per-chain z-score; the effective
/// sample size is summed over chains. R-hat is absent for single chains.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub name: String,
    pub rhat: Option<f64>,
    pub rhat_upper: Option<f64>,
    pub geweke_z: f64,
    pub ess: f64,
}

/// Builds the per-parameter diagnostic row from one trace per chain.
pub fn parameter_diagnostics(traces: &[ScalarTrace]) -> Result<DiagnosticRow> {
    if traces.is_empty() {
        return Err(Error::config("no traces supplied".to_string()));
    }
    let name = traces[0].name.clone();
    let (rhat, rhat_upper) = if traces.len() >= 2 {
        let slices: Vec<&[f64]> = traces.iter().map(|t| t.values.as_slice()).collect();
        let r = split_rhat(&slices)?;
        (Some(r.point), Some(r.upper))
    } else {
        (None, None)
    };
    let mut worst_z = 0.0f64;
    let mut total_ess = 0.0;
    for t in traces {
        let z = geweke_z(&t.values, 0.1, 0.5).unwrap_or(f64::NAN);
        if z.is_nan() || z.abs() > worst_z.abs() {
            worst_z = z;
        }
        total_ess += ess(&t.values).unwrap_or(0.0);
    }
    Ok(DiagnosticRow {
        name,
        rhat,
        rhat_upper,
        geweke_z: worst_z,
        ess: total_ess,
    })
}

/// The default monitored functionals of one chain: every rescaled
/// regression coefficient and the four largest eigenvalues of the
/// between-individual correlation matrix. These are the identifiable
/// quantities; raw factor blocks are not monitored because rotations make
/// their traces meaningless.
pub fn monitored_traces(chain: &crate::sampler::Chain) -> Result<Vec<ScalarTrace>> {
    use crate::summaries::{rescaled_v, sample_correlation, top_eigenvalues};
    let l_total = chain.dims.n_design;
    let i_total = chain.dims.n_species;
    let n_eigen = chain.dims.n_individuals.min(4);
    let mut traces: Vec<ScalarTrace> = Vec::with_capacity(l_total * i_total + n_eigen);
    for l in 0..l_total {
        for i in 0..i_total {
            traces.push(ScalarTrace::new(
                format!("v_rescaled[{},{}]", l + 1, i + 1),
                Vec::with_capacity(chain.draws.len()),
            ));
        }
    }
    for r in 0..n_eigen {
        traces.push(ScalarTrace::new(
            format!("eigen_S[{}]", r + 1),
            Vec::with_capacity(chain.draws.len()),
        ));
    }
    for draw in &chain.draws {
        let rv = rescaled_v(draw);
        for l in 0..l_total {
            for i in 0..i_total {
                traces[l * i_total + i].values.push(rv[[l, i]]);
            }
        }
        let eig = top_eigenvalues(&sample_correlation(draw), n_eigen)?;
        for (r, &e) in eig.iter().enumerate() {
            traces[l_total * i_total + r].values.push(e);
        }
    }
    Ok(traces)
}

/// Per-parameter diagnostic rows for the default monitored functionals
/// across chains.
pub fn diagnostic_report(chains: &[crate::sampler::Chain]) -> Result<Vec<DiagnosticRow>> {
    if chains.is_empty() {
        return Err(Error::config("no chains supplied".to_string()));
    }
    let per_chain: Vec<Vec<ScalarTrace>> = chains
        .iter()
        .map(monitored_traces)
        .collect::<Result<_>>()?;
    let n_params = per_chain[0].len();
    if per_chain.iter().any(|t| t.len() != n_params) {
        return Err(Error::dim("chains monitor different parameters".to_string()));
    }
    (0..n_params)
        .map(|p| {
            let traces: Vec<ScalarTrace> =
                per_chain.iter().map(|chain| chain[p].clone()).collect();
            parameter_diagnostics(&traces)
        })
        .collect()
}
