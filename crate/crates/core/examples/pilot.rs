use dpfactor::model::*;
use dpfactor::sampler::*;
use dpfactor::summaries::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let mut spec = ScenarioSpec::desk();
    spec.seed = 42;
    let ds = simulate_dataset(&spec, &mut ChaCha8Rng::seed_from_u64(spec.seed)).unwrap();
    println!("depths: min {} max {}", ds.table.depths.iter().min().unwrap(), ds.table.depths.iter().max().unwrap());
    let zero_frac = ds.table.counts.iter().filter(|&&n| n == 0).count() as f64 / (30.0 * 90.0);
    println!("zero count fraction: {zero_frac:.3}");
    println!("sigma range: {:?} {:?}",
        ds.truth.sigma.iter().cloned().fold(f64::INFINITY, f64::min),
        ds.truth.sigma.iter().cloned().fold(f64::NEG_INFINITY, f64::max));

    let hyper = Hyperparams { alpha: 1.0, k: 4, mgp_a1: 2.0, mgp_a2: 3.0, error_variance: 1.0 };
    let config = SamplerConfig {
        n_iterations: 40_000,
        burn_in: 20_000,
        thin: 20,
        seed: 1,
        init: InitStrategy::DataInformed,
        ..SamplerConfig::default()
    };
    let t0 = Instant::now();
    let chains = run_chains(&ds.table, &ds.covariates, &hyper, &config, 3).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    let chain = Chain {
        draws: chains.iter().flat_map(|c| c.draws.iter().cloned()).collect(),
        ..chains.into_iter().next().unwrap()
    };
    println!("3x40k sweeps in {dt:.1}s, {} pooled draws", chain.draws.len());

    // posterior mean S vs truth
    let u = ds.table.n_individuals();
    let mut s_mean = ndarray::Array2::<f64>::zeros((u, u));
    for d in &chain.draws {
        s_mean += &sample_correlation(d);
    }
    s_mean /= chain.draws.len() as f64;
    let s_true = sample_correlation(&ds.truth);
    let rv = rv_coefficient(s_mean.view(), s_true.view()).unwrap();
    println!("RV(S): {rv:.4}");

    // rescaled v sign agreement on active entries
    let mut v_mean = ndarray::Array2::<f64>::zeros((3, 30));
    for d in &chain.draws {
        v_mean += &rescaled_v(d);
    }
    v_mean /= chain.draws.len() as f64;
    let v_true = rescaled_v(&ds.truth);
    let mut agree = 0; let mut active = 0;
    let mut mse = 0.0;
    for l in 0..3 {
        for i in 0..30 {
            mse += (v_mean[[l,i]] - v_true[[l,i]]).powi(2);
            if v_true[[l, i]].abs() > 1e-9 {
                active += 1;
                if v_mean[[l, i]].signum() == v_true[[l, i]].signum() { agree += 1; }
            }
        }
    }
    println!("sign agreement: {agree}/{active}; rescaled-v mse {:.2e}", mse / 90.0);
}
