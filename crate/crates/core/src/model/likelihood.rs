//! Latent score means and the multinomial log-likelihood.

use ndarray::{Array2, ArrayView1, ArrayView2};

use super::types::OtuTable;
use crate::{Error, Result};

/// Gaussian mean of the latent scores:
/// `mu[i, j] = <x_i, y_{u_j}> + <v_i, d_j>` where `d_j` is the design column
/// of sample `j` (raw covariates plus expansion). Adding unit-variance noise
/// to the result yields a draw of `Q`.
pub fn q_mean(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    v: ArrayView2<f64>,
    design: ArrayView2<f64>,
    grouping: &[usize],
) -> Result<Array2<f64>> {
    let (k, i) = x.dim();
    let (ky, u) = y.dim();
    let (l, ilv) = v.dim();
    let (ld, j) = design.dim();
    if ky != k {
        return Err(Error::dim(format!("x has {k} factors but y has {ky}")));
    }
    if ilv != i {
        return Err(Error::dim(format!("x has {i} species but v has {ilv}")));
    }
    if ld != l {
        return Err(Error::dim(format!(
            "v has {l} coefficient rows but the design has {ld}"
        )));
    }
    if grouping.len() != j {
        return Err(Error::dim(format!(
            "grouping has {} entries for {j} samples",
            grouping.len()
        )));
    }
    if let Some(&bad) = grouping.iter().find(|&&g| g >= u) {
        return Err(Error::dim(format!(
            "grouping index {bad} beyond {u} individuals"
        )));
    }
    // mu = x^T y[:, u_j] + v^T design
    let mut mu = Array2::zeros((i, j));
    let xt = x.t();
    for (jj, &uj) in grouping.iter().enumerate() {
        let yu = y.column(uj);
        let dj = design.column(jj);
        let fx = xt.dot(&yu);
        let fv = v.t().dot(&dj);
        for ii in 0..i {
            mu[[ii, jj]] = fx[ii] + fv[ii];
        }
    }
    Ok(mu)
}

/// Multinomial log-likelihood of the count table under the squared-positive
/// link, up to the multinomial coefficient (constant in the parameters and
/// deliberately omitted):
///
/// `sum_j sum_i n_ij log(sigma_i (Q_ij)_+^2) - sum_j n_j log(sum_i sigma_i (Q_ij)_+^2)`
///
/// Returns negative infinity when any positive count sits on a nonpositive
/// score, the impossible-data signal.
pub fn log_likelihood(table: &OtuTable, sigma: ArrayView1<f64>, q: ArrayView2<f64>) -> Result<f64> {
    let (i, j) = table.counts.dim();
    if sigma.len() != i || q.dim() != (i, j) {
        return Err(Error::dim(
            "sigma/q shapes do not match the count table".to_string(),
        ));
    }
    let mut total = 0.0;
    for jj in 0..j {
        let mut denom = 0.0;
        let mut numer = 0.0;
        for ii in 0..i {
            let qv = q[[ii, jj]];
            let w = if qv > 0.0 { sigma[ii] * qv * qv } else { 0.0 };
            denom += w;
            let n = table.counts[[ii, jj]];
            if n > 0 {
                if w <= 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                numer += n as f64 * w.ln();
            }
        }
        let nj = table.depths[jj];
        if nj > 0 {
            if denom <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            total += numer - nj as f64 * denom.ln();
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array1};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::function::gamma::ln_gamma;

    fn table_from(counts: Array2<u64>) -> OtuTable {
        let (i, j) = counts.dim();
        OtuTable::new(
            counts,
            (0..i).map(|k| format!("sp{k}")).collect(),
            (0..j).map(|k| format!("s{k}")).collect(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn q_mean_zero_factors_and_effects() {
        let x = Array2::zeros((2, 3));
        let y = Array2::zeros((2, 4));
        let v = Array2::zeros((1, 3));
        let design = Array2::ones((1, 4));
        let mu = q_mean(
            x.view(),
            y.view(),
            v.view(),
            design.view(),
            &[0, 1, 2, 3],
        )
        .unwrap();
        assert!(mu.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn q_mean_scalar_case() {
        let x = array![[2.0]];
        let y = array![[3.0]];
        let v = array![[1.0]];
        let design = array![[4.0]];
        let mu = q_mean(x.view(), y.view(), v.view(), design.view(), &[0]).unwrap();
        assert_eq!(mu[[0, 0]], 10.0);
    }

    #[test]
    fn q_mean_matches_looped_dot_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (k, i, u, j, l) = (3, 4, 2, 5, 2);
        let x = Array2::from_shape_fn((k, i), |_| rng.gen_range(-1.0..1.0));
        let y = Array2::from_shape_fn((k, u), |_| rng.gen_range(-1.0..1.0));
        let v = Array2::from_shape_fn((l, i), |_| rng.gen_range(-1.0..1.0));
        let design = Array2::from_shape_fn((l, j), |_| rng.gen_range(-1.0..1.0));
        let grouping = vec![0, 1, 1, 0, 1];
        let mu = q_mean(x.view(), y.view(), v.view(), design.view(), &grouping).unwrap();
        for jj in 0..j {
            for ii in 0..i {
                let mut want = 0.0;
                for kk in 0..k {
                    want += x[[kk, ii]] * y[[kk, grouping[jj]]];
                }
                for ll in 0..l {
                    want += v[[ll, ii]] * design[[ll, jj]];
                }
                assert_abs_diff_eq!(mu[[ii, jj]], want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn q_mean_rejects_mismatched_shapes() {
        let x = Array2::zeros((2, 3));
        let y = Array2::zeros((3, 4));
        let v = Array2::zeros((1, 3));
        let design = Array2::zeros((1, 4));
        assert!(q_mean(x.view(), y.view(), v.view(), design.view(), &[0, 1, 2, 3]).is_err());
    }

    #[test]
    fn single_species_log_likelihood_is_zero() {
        let t = table_from(array![[5u64, 17, 0]]);
        let sigma = array![0.7];
        let q = array![[1.2, 0.4, 2.0]];
        assert_eq!(log_likelihood(&t, sigma.view(), q.view()).unwrap(), 0.0);
    }

    #[test]
    fn all_zero_counts_log_likelihood_is_zero() {
        let t = table_from(array![[0u64, 0], [0, 0]]);
        let sigma = array![0.5, 0.5];
        let q = array![[1.0, -1.0], [-1.0, -1.0]];
        assert_eq!(log_likelihood(&t, sigma.view(), q.view()).unwrap(), 0.0);
    }

    #[test]
    fn positive_count_on_nonpositive_score_is_impossible() {
        let t = table_from(array![[1u64], [1]]);
        let sigma = array![0.5, 0.5];
        let q = array![[1.0], [-0.5]];
        assert_eq!(
            log_likelihood(&t, sigma.view(), q.view()).unwrap(),
            f64::NEG_INFINITY
        );
    }

    // Oracle: log multinomial pmf at the linked composition minus its
    // coefficient, computed independently with lgamma.
    #[test]
    fn matches_multinomial_pmf_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let (i, j) = (4, 3);
            let sigma = Array1::from_shape_fn(i, |_| rng.gen_range(0.05..0.95));
            let q = Array2::from_shape_fn((i, j), |_| rng.gen_range(-1.0..2.0));
            let mut counts = Array2::<u64>::zeros((i, j));
            for jj in 0..j {
                for ii in 0..i {
                    if q[[ii, jj]] > 0.0 {
                        counts[[ii, jj]] = rng.gen_range(0..30);
                    }
                }
            }
            if counts
                .columns()
                .into_iter()
                .any(|c| c.iter().sum::<u64>() == 0)
            {
                continue;
            }
            let t = table_from(counts.clone());
            let got = log_likelihood(&t, sigma.view(), q.view()).unwrap();

            let mut want = 0.0;
            for jj in 0..j {
                let p = crate::model::composition_from_state(sigma.view(), q.column(jj)).unwrap();
                let nj: u64 = counts.column(jj).iter().sum();
                let mut log_pmf = ln_gamma(nj as f64 + 1.0);
                for ii in 0..i {
                    let n = counts[[ii, jj]];
                    log_pmf -= ln_gamma(n as f64 + 1.0);
                    if n > 0 {
                        log_pmf += n as f64 * p[ii].ln();
                    }
                }
                let coeff = ln_gamma(nj as f64 + 1.0)
                    - counts
                        .column(jj)
                        .iter()
                        .map(|&n| ln_gamma(n as f64 + 1.0))
                        .sum::<f64>();
                want += log_pmf - coeff;
            }
            assert_abs_diff_eq!(got, want, epsilon = 1e-8 * (1.0 + want.abs()));
        }
    }
}
