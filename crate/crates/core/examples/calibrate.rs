use cmj_core::scaling::*;
use cmj_core::stick::*;
use std::time::Instant;

fn main() {
    // C5 true-bias curve at 1e6 replicas (noise floor ~0.00086)
    let t0 = Instant::now();
    let rows = stable_marginal_ks(0.5, &[100, 1000, 10_000], 1_000_000, 42, 0, levy_half_cdf);
    for (p, ks) in &rows {
        println!("C5-big p={p}: KS={:.5}", ks.statistic);
    }
    println!("C5-big runtime: {:?}", t0.elapsed());

    // C7 with the extended-BH pair: uniform ages vs births-at-death
    let ext = StickLaw::ExtendedBh { offspring: OffspringLaw::Geometric, life: LifeLaw::Pareto { alpha: 0.6 }, age_fraction: AgeFractionLaw::Uniform };
    let bh = StickLaw::BellmanHarris { offspring: OffspringLaw::Geometric, life: LifeLaw::Pareto { alpha: 0.6 } };
    for seed in [1u64, 7, 42, 123, 2024] {
        let t0 = Instant::now();
        let rows = universality_experiment(&ext, &bh, &[100, 1000, 10_000], 1.0, 5000, seed, 0).unwrap();
        let h: Vec<f64> = rows.iter().map(|r| r.ks_height.statistic).collect();
        let mono = h[0] > h[1] && h[1] > h[2];
        println!("C7-ext seed {seed}: {h:?} mono={mono} ({:?})", t0.elapsed());
    }
}
