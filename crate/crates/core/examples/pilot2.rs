use dpfactor::model::*;
use dpfactor::sampler::*;
use dpfactor::summaries::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rv_for(ds: &SimulatedDataset, cfg: &SamplerConfig, n_chains: usize, hyper: &Hyperparams) -> (f64, Vec<f64>) {
    let chains = run_chains(&ds.table, &ds.covariates, hyper, cfg, n_chains).unwrap();
    let u = ds.table.n_individuals();
    let s_true = sample_correlation(&ds.truth);
    let mut pooled = ndarray::Array2::<f64>::zeros((u, u));
    let mut per_chain = Vec::new();
    let mut total = 0usize;
    for c in &chains {
        let mut s_mean = ndarray::Array2::<f64>::zeros((u, u));
        for d in &c.draws {
            s_mean += &sample_correlation(d);
        }
        pooled += &s_mean;
        total += c.draws.len();
        s_mean /= c.draws.len() as f64;
        per_chain.push(rv_coefficient(s_mean.view(), s_true.view()).unwrap());
    }
    pooled /= total as f64;
    (rv_coefficient(pooled.view(), s_true.view()).unwrap(), per_chain)
}

fn main() {
    let hyper = Hyperparams { alpha: 1.0, k: 4, mgp_a1: 2.0, mgp_a2: 3.0, error_variance: 1.0 };
    for seed in [42u64, 7, 11] {
        let mut spec = ScenarioSpec::desk();
        spec.seed = seed;
        let ds = simulate_dataset(&spec, &mut ChaCha8Rng::seed_from_u64(spec.seed)).unwrap();
        let cfg = SamplerConfig {
            n_iterations: 40_000, burn_in: 20_000, thin: 20, seed: 1,
            init: InitStrategy::DataInformed, ..SamplerConfig::default()
        };
        let (rv, per) = rv_for(&ds, &cfg, 3, &hyper);
        println!("seed {seed}: pooled RV {rv:.4}, per-chain {per:?}");
    }
    // longer run on seed 42
    let mut spec = ScenarioSpec::desk();
    spec.seed = 42;
    let ds = simulate_dataset(&spec, &mut ChaCha8Rng::seed_from_u64(spec.seed)).unwrap();
    let cfg = SamplerConfig {
        n_iterations: 100_000, burn_in: 60_000, thin: 20, seed: 1,
        init: InitStrategy::DataInformed, ..SamplerConfig::default()
    };
    let (rv, per) = rv_for(&ds, &cfg, 2, &hyper);
    println!("seed 42 long (1e5): pooled RV {rv:.4}, per-chain {per:?}");
}
