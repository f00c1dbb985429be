//! Locally weighted scatterplot smoothing for derivative display curves.

use crate::{Error, Result};

fn tricube(u: f64) -> f64 {
    let a = 1.0 - u.abs().powi(3);
    if a > 0.0 {
        a * a * a
    } else {
        0.0
    }
}

fn bisquare(u: f64) -> f64 {
    let a = 1.0 - u * u;
    if a > 0.0 {
        a * a
    } else {
        0.0
    }
}

/// LOWESS: local linear fits with tricube weights over a `span` fraction of
/// the data, plus `iterations` bisquare robustness passes. Returns fitted
/// values at the input points, in input order.
pub fn lowess(x: &[f64], y: &[f64], span: f64, iterations: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::dim(format!(
            "{} x values for {} y values",
            n,
            y.len()
        )));
    }
    if n < 2 {
        return Err(Error::data("lowess needs at least two points".to_string()));
    }
    if !(0.0 < span && span <= 1.0) {
        return Err(Error::config(format!("lowess span {span} outside (0, 1]")));
    }
    let r = ((span * n as f64).ceil() as usize).clamp(2, n);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("non-finite x"));
    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();

    let mut robustness = vec![1.0; n];
    let mut fitted = vec![0.0; n];
    for pass in 0..=iterations {
        for i in 0..n {
            // window of the r nearest neighbors in x
            let (mut lo, mut hi) = (i.saturating_sub(r - 1), (i + r).min(n));
            while hi - lo > r {
                if xs[i] - xs[lo] > xs[hi - 1] - xs[i] {
                    lo += 1;
                } else {
                    hi -= 1;
                }
            }
            let h = (xs[i] - xs[lo]).max(xs[hi - 1] - xs[i]).max(1e-300);
            let (mut sw, mut swx, mut swy, mut swxx, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for k in lo..hi {
                let w = tricube((xs[k] - xs[i]) / h) * robustness[k];
                sw += w;
                swx += w * xs[k];
                swy += w * ys[k];
                swxx += w * xs[k] * xs[k];
                swxy += w * xs[k] * ys[k];
            }
            if sw <= 0.0 {
                fitted[i] = ys[i];
                continue;
            }
            let denom = sw * swxx - swx * swx;
            fitted[i] = if denom.abs() > 1e-12 * sw * swxx.max(1.0) {
                let slope = (sw * swxy - swx * swy) / denom;
                let intercept = (swy - slope * swx) / sw;
                intercept + slope * xs[i]
            } else {
                swy / sw
            };
        }
        if pass == iterations {
            break;
        }
        let mut resid: Vec<f64> = ys.iter().zip(&fitted).map(|(y, f)| (y - f).abs()).collect();
        resid.sort_by(|a, b| a.partial_cmp(b).expect("non-finite residual"));
        let s = 6.0 * resid[n / 2].max(1e-300);
        for k in 0..n {
            robustness[k] = bisquare((ys[k] - fitted[k]) / s);
        }
    }

    let mut out = vec![0.0; n];
    for (pos, &orig) in order.iter().enumerate() {
        out[orig] = fitted[pos];
    }
    Ok(out)
}
