use dpfactor::model::*;
use dpfactor::sampler::*;
use dpfactor::summaries::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let hyper = Hyperparams { alpha: 1.0, k: 4, mgp_a1: 2.0, mgp_a2: 3.0, error_variance: 1.0 };
    let cfg = SamplerConfig {
        n_iterations: 20_000, burn_in: 10_000, thin: 20, seed: 1,
        init: InitStrategy::DataInformed, ..SamplerConfig::default()
    };
    for seed in 0u64..12 {
        let mut spec = ScenarioSpec::desk();
        spec.seed = seed;
        let ds = match simulate_dataset(&spec, &mut ChaCha8Rng::seed_from_u64(spec.seed)) {
            Ok(d) => d,
            Err(e) => { println!("seed {seed}: simulate failed: {e}"); continue; }
        };
        let chain = run_chain(&ds.table, &ds.covariates, &hyper, &cfg).unwrap();
        let u = ds.table.n_individuals();
        let s_true = sample_correlation(&ds.truth);
        let mut s_mean = ndarray::Array2::<f64>::zeros((u, u));
        for d in &chain.draws { s_mean += &sample_correlation(d); }
        s_mean /= chain.draws.len() as f64;
        let rv = rv_coefficient(s_mean.view(), s_true.view()).unwrap();
        println!("seed {seed}: RV {rv:.4}");
    }
}
