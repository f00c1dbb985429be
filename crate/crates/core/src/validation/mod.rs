//! Model validation: permutation testing, Pareto-smoothed importance
//! sampling for leave-one-out predictive checks, and the
//! successive-conditional sampler-correctness harness.

mod permutation;
mod prior_repro;
mod psis;

pub use permutation::{permutation_test, PermutationConfig, PermutationResult};
pub use prior_repro::{prior_reproduction_test, FunctionalZ, PriorReproConfig};
pub use psis::{
    fit_generalized_pareto, loo_coverage, loo_predictive, psis_smooth, sample_log_likelihood,
    weighted_quantile, LooInterval, LooReport, LooSample, PsisResult,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OtuTable;
    use crate::sampler::Draw;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Pareto, StandardNormal};

    #[test]
    fn psis_equal_weights_is_identity_and_flagged() {
        let lw = vec![-3.2; 40];
        let r = psis_smooth(&lw).unwrap();
        assert_eq!(r.log_weights, lw);
        assert!(r.degenerate);
        assert_eq!(r.k_hat, f64::NEG_INFINITY);
    }

    #[test]
    fn psis_needs_enough_weights() {
        assert!(psis_smooth(&vec![0.0; 10]).is_err());
    }

    #[test]
    fn psis_preserves_ranks_and_never_raises_the_maximum() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        for _ in 0..20 {
            let lw: Vec<f64> = (0..200)
                .map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let r = psis_smooth(&lw).unwrap();
            let max_in = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let max_out = r.log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(max_out <= max_in + 1e-12);
            // order preserved
            let mut order_in: Vec<usize> = (0..lw.len()).collect();
            order_in.sort_by(|&a, &b| lw[a].partial_cmp(&lw[b]).unwrap());
            let smoothed: Vec<f64> = order_in.iter().map(|&i| r.log_weights[i]).collect();
            assert!(smoothed.windows(2).all(|w| w[0] <= w[1] + 1e-12));
        }
    }

    // Independent oracle: full two-parameter maximum likelihood by nested
    // grid refinement.
    fn mle_gpd(y: &[f64]) -> (f64, f64) {
        let n = y.len() as f64;
        let loglik = |k: f64, s: f64| -> f64 {
            let mut l = -n * s.ln();
            for &yi in y {
                let t = 1.0 + k * yi / s;
                if t <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                l -= (1.0 / k + 1.0) * t.ln();
            }
            l
        };
        let mean = y.iter().sum::<f64>() / n;
        let (mut k_lo, mut k_hi) = (0.01, 1.5);
        let (mut s_lo, mut s_hi) = (mean / 20.0, mean * 20.0);
        let mut best = (0.5, mean);
        for _ in 0..6 {
            let mut best_l = f64::NEG_INFINITY;
            for a in 0..40 {
                let k = k_lo + (k_hi - k_lo) * a as f64 / 39.0;
                for b in 0..40 {
                    let s = s_lo * (s_hi / s_lo).powf(b as f64 / 39.0);
                    let l = loglik(k, s);
                    if l > best_l {
                        best_l = l;
                        best = (k, s);
                    }
                }
            }
            let dk = (k_hi - k_lo) / 8.0;
            k_lo = (best.0 - dk).max(1e-3);
            k_hi = best.0 + dk;
            let ratio = (s_hi / s_lo).powf(1.0 / 8.0);
            s_lo = best.1 / ratio;
            s_hi = best.1 * ratio;
        }
        best
    }

    #[test]
    fn gpd_fit_matches_mle_oracle_on_synthetic_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(92);
        // Pareto tail: excesses of Pareto(scale 1, alpha) over 1 follow a
        // GPD with shape 1/alpha and scale 1/alpha
        let alpha = 2.5;
        let pareto = Pareto::new(1.0, alpha).unwrap();
        let y: Vec<f64> = (0..1000).map(|_| pareto.sample(&mut rng) - 1.0).collect();
        let (k_fit, s_fit) = fit_generalized_pareto(&y).unwrap();
        let (k_mle, s_mle) = mle_gpd(&y);
        assert!(
            (k_fit - k_mle).abs() < 0.05,
            "profile fit {k_fit} vs MLE {k_mle}"
        );
        assert!((s_fit / s_mle - 1.0).abs() < 0.2);
        assert!((k_fit - 1.0 / alpha).abs() < 0.1);
    }

    #[test]
    fn weighted_quantile_matches_sort_and_accumulate_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(93);
        for _ in 0..50 {
            let n = rng.gen_range(1..30);
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..2.0)).collect();
            let p: f64 = rng.gen_range(0.0..=1.0);
            let got = weighted_quantile(&values, &weights, p).unwrap();
            // brute force: sort pairs, accumulate, take first crossing
            let mut pairs: Vec<(f64, f64)> =
                values.iter().cloned().zip(weights.iter().cloned()).collect();
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let total: f64 = weights.iter().sum();
            let mut acc = 0.0;
            let mut want = pairs[pairs.len() - 1].0;
            for (v, w) in &pairs {
                acc += w;
                if acc >= p * total - 1e-15 * total {
                    want = *v;
                    break;
                }
            }
            assert_eq!(got, want);
        }
        assert!(weighted_quantile(&[1.0], &[0.0], 0.5).is_err());
        assert!(weighted_quantile(&[], &[], 0.5).is_err());
    }

    fn tiny_table() -> OtuTable {
        OtuTable::new(
            array![[6u64, 1], [4, 9]],
            vec!["a".into(), "b".into()],
            vec!["s1".into(), "s2".into()],
            None,
        )
        .unwrap()
    }

    fn draw_from(sigma: Vec<f64>, q: Array2<f64>) -> Draw {
        let i = sigma.len();
        Draw {
            sigma: Array1::from(sigma),
            q,
            x: Array2::zeros((1, i)),
            y: Array2::zeros((1, 2)),
            v: Array2::zeros((1, i)),
            gamma: Array1::ones(1),
        }
    }

    #[test]
    fn loo_identical_draws_collapse_to_single_parameter_quantiles() {
        let table = tiny_table();
        let d = draw_from(vec![0.5, 0.5], array![[1.0, 0.5], [2.0, 3.0]]);
        let draws: Vec<Draw> = (0..30).map(|_| d.clone()).collect();
        let s = loo_predictive(&draws, &table, 0, 0.95).unwrap();
        // every draw has the same composition, so the interval is a point
        let p = crate::model::composition_from_state(d.sigma.view(), d.q.column(0)).unwrap();
        for (ii, interval) in s.species.iter().enumerate() {
            assert_abs_diff_eq!(interval.lower, p[ii], epsilon = 1e-12);
            assert_abs_diff_eq!(interval.upper, p[ii], epsilon = 1e-12);
        }
        assert!(s.k_hat == f64::NEG_INFINITY);
    }

    #[test]
    fn loo_single_draw_coverage_is_a_pointwise_indicator() {
        let table = tiny_table();
        let d = draw_from(vec![0.5, 0.5], array![[1.0, 0.5], [1.0, 3.0]]);
        let report = loo_coverage(&[d.clone()], &table, 0.95).unwrap();
        for s in &report.samples {
            let p =
                crate::model::composition_from_state(d.sigma.view(), d.q.column(s.sample)).unwrap();
            for (ii, interval) in s.species.iter().enumerate() {
                let expected = (p[ii] - interval.observed).abs() < 1e-12;
                assert_eq!(interval.covered, expected);
            }
        }
    }

    #[test]
    fn loo_coverage_bookkeeping_and_level_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(94);
        let table = tiny_table();
        let draws: Vec<Draw> = (0..60)
            .map(|_| {
                draw_from(
                    vec![rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9)],
                    Array2::from_shape_fn((2, 2), |_| rng.gen_range(0.1..3.0)),
                )
            })
            .collect();
        let narrow = loo_coverage(&draws, &table, 0.5).unwrap();
        let wide = loo_coverage(&draws, &table, 0.95).unwrap();
        let full = loo_coverage(&draws, &table, 1.0).unwrap();
        for ii in 0..2 {
            assert!(narrow.species_coverage[ii] <= wide.species_coverage[ii] + 1e-12);
            assert!(wide.species_coverage[ii] <= full.species_coverage[ii] + 1e-12);
        }
        // covered flag agrees with interval membership
        for s in &wide.samples {
            for interval in &s.species {
                assert_eq!(
                    interval.covered,
                    interval.lower <= interval.observed && interval.observed <= interval.upper
                );
            }
        }
        // at level 1 the interval spans the full draw range; all observed
        // abundances here fall inside
        assert!(full.mean_coverage >= wide.mean_coverage);
    }

    #[test]
    fn prior_repro_rejects_zero_cycles() {
        let cfg = PriorReproConfig {
            n_cycles: 0,
            ..PriorReproConfig::standard(10, 1)
        };
        assert!(prior_reproduction_test(&cfg).is_err());
    }

    #[test]
    fn prior_repro_smoke_runs_and_reports_all_functionals() {
        let cfg = PriorReproConfig::standard(400, 11);
        let zs = prior_reproduction_test(&cfg).unwrap();
        assert_eq!(zs.len(), 7);
        assert!(zs.iter().all(|f| f.z.is_finite()));
    }
}
