use dpfactor::model::*;
use dpfactor::sampler::*;
use dpfactor::validation::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut spec = ScenarioSpec::desk();
    spec.seed = 7;
    let ds = simulate_dataset(&spec, &mut ChaCha8Rng::seed_from_u64(spec.seed)).unwrap();
    let hyper = Hyperparams { alpha: 1.0, k: 4, mgp_a1: 2.0, mgp_a2: 3.0, error_variance: 1.0 };
    let cfg = PermutationConfig {
        n_permutations: 100,
        hyper,
        sampler: SamplerConfig {
            n_iterations: 6_000, burn_in: 3_000, thin: 10, seed: 5,
            init: InitStrategy::DataInformed, ..SamplerConfig::default()
        },
        seed: 5,
    };
    match permutation_test(&ds.table, &ds.covariates, 0, &cfg) {
        Ok(r) => println!("ok p={}", r.p_value),
        Err(e) => println!("ERROR: {e}"),
    }
}
