use dpfactor::validation::*;

fn main() {
    for seed in [11u64, 23, 37, 51, 64] {
        let cfg = PriorReproConfig::standard(50_000, seed);
        let zs = prior_reproduction_test(&cfg).unwrap();
        let line: Vec<String> = zs.iter().map(|f| format!("{:+.2}", f.z)).collect();
        println!("seed {seed}: {}", line.join("  "));
    }
    let broken = PriorReproConfig { break_sigma: true, ..PriorReproConfig::standard(50_000, 11) };
    let zs = prior_reproduction_test(&broken).unwrap();
    let max = zs.iter().map(|f| f.z.abs()).fold(0.0f64, f64::max);
    println!("broken sigma: max |z| = {max:.1}");
}
