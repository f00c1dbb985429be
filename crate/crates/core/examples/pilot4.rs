use dpfactor::model::*;
use dpfactor::sampler::*;
use dpfactor::summaries::*;
use dpfactor::validation::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn trend_coverage(ds: &SimulatedDataset, draws: &[Draw], seed: u64) -> f64 {
    let grouping = &ds.table.grouping;
    let ectx = EffectContext::new(&ds.covariates, grouping).unwrap();
    let grid: Vec<f64> = (0..20).map(|t| -2.0 + 4.0 * t as f64 / 19.0).collect();
    let truth_reps: Vec<LatentState> = vec![ds.truth.clone(); 400];
    let mut covered = 0usize;
    let mut total = 0usize;
    for w2 in [0.0, 1.0] {
        let bands = population_trend(
            draws, &ectx, Link::SquaredPositive, 0, &grid, &[0.0, w2], 0.95, seed,
        ).unwrap();
        let truth_trend = population_trend(
            &truth_reps, &ectx, ds.spec.link, 0, &grid, &[0.0, w2], 0.95, seed + 1,
        ).unwrap();
        for i in 0..ds.table.n_species() {
            for g in 0..grid.len() {
                let t = truth_trend.species[i].mean[g];
                if bands.species[i].lower[g] <= t && t <= bands.species[i].upper[g] {
                    covered += 1;
                }
                total += 1;
            }
        }
    }
    covered as f64 / total as f64
}

fn main() {
    let hyper = Hyperparams { alpha: 1.0, k: 4, mgp_a1: 2.0, mgp_a2: 3.0, error_variance: 1.0 };
    let cfg = SamplerConfig {
        n_iterations: 40_000, burn_in: 20_000, thin: 20, seed: 1,
        init: InitStrategy::DataInformed, ..SamplerConfig::default()
    };
    for threshold in [0.0, 1e-3] {
        let mut spec = ScenarioSpec::desk();
        spec.seed = 7;
        spec.zero_threshold = threshold;
        let ds = simulate_dataset(&spec, &mut ChaCha8Rng::seed_from_u64(spec.seed)).unwrap();
        let t0 = Instant::now();
        let chains = run_chains(&ds.table, &ds.covariates, &hyper, &cfg, 3).unwrap();
        let draws: Vec<Draw> = chains.iter().flat_map(|c| c.draws.iter().cloned()).collect();
        let cov = trend_coverage(&ds, &draws, 99);
        println!("threshold {threshold}: trend coverage {cov:.3} ({:.0}s)", t0.elapsed().as_secs_f64());
        if threshold == 0.0 {
            let t1 = Instant::now();
            let loo = loo_coverage(&draws, &ds.table, 0.95).unwrap();
            let unreliable = loo.samples.iter().filter(|s| !s.reliable).count();
            println!("LOO mean coverage {:.3}, k>0.7 for {}/{} samples ({:.0}s)",
                loo.mean_coverage, unreliable, loo.samples.len(), t1.elapsed().as_secs_f64());
        }
    }
}
