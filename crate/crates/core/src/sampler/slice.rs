//! Univariate slice sampling with stepping-out and shrinkage (Neal 2003).
//!
//! Targets declare their support by returning negative infinity outside it;
//! the `bounds` argument only clips the stepping interval so the expansion
//! cannot wander past a known support boundary.

use rand::Rng;
use rand_distr::Exp1;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct SliceParams {
    /// Initial bracket width for stepping out.
    pub width: f64,
    /// Maximum expansion steps per side before giving up.
    pub max_steps: usize,
}

const MAX_SHRINK: usize = 1000;

/// Draws one slice-sampling update from the (unnormalized) log density,
/// starting at `x0`, which must have finite log density.
pub fn slice_sample<R, F>(
    x0: f64,
    log_density: F,
    params: &SliceParams,
    bounds: (f64, f64),
    target: &str,
    rng: &mut R,
) -> Result<f64>
where
    R: Rng + ?Sized,
    F: Fn(f64) -> f64,
{
    let (lo, hi) = bounds;
    let f0 = log_density(x0);
    if !f0.is_finite() {
        return Err(Error::numerical(format!(
            "slice sampler for {target} started at x0={x0} with log density {f0}"
        )));
    }
    let level = f0 - rng.sample::<f64, _>(Exp1);

    let width = params.width;
    let mut left = x0 - width * rng.gen::<f64>();
    let mut right = left + width;
    if left < lo {
        left = lo;
    }
    if right > hi {
        right = hi;
    }

    let mut steps = 0usize;
    while left > lo && log_density(left) > level {
        left -= width;
        if left < lo {
            left = lo;
            break;
        }
        steps += 1;
        if steps > params.max_steps {
            return Err(Error::SliceExceeded {
                target: target.to_string(),
                start: x0,
                width,
                max_steps: params.max_steps,
            });
        }
    }
    steps = 0;
    while right < hi && log_density(right) > level {
        right += width;
        if right > hi {
            right = hi;
            break;
        }
        steps += 1;
        if steps > params.max_steps {
            return Err(Error::SliceExceeded {
                target: target.to_string(),
                start: x0,
                width,
                max_steps: params.max_steps,
            });
        }
    }

    for _ in 0..MAX_SHRINK {
        let x1 = left + (right - left) * rng.gen::<f64>();
        if log_density(x1) >= level {
            return Ok(x1);
        }
        if x1 < x0 {
            left = x1;
        } else {
            right = x1;
        }
    }
    Err(Error::numerical(format!(
        "slice sampler for {target} failed to shrink onto the level set from x0={x0}"
    )))
}
