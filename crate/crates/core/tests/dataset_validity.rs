mod oracles {
    pub mod revalidate;
}

use latent_throw::dataset::{generate, GenConfig};
use latent_throw::primitives::{PrimitiveBasis, PrimitiveConfig};
use latent_throw::sim::SimConfig;
use oracles::revalidate::revalidate;

fn small() -> GenConfig {
    GenConfig {
        target_count: 200,
        min_per_bin: 2,
        shards: 4,
        candidates_per_shard: 5_000,
        rng_seed: 5,
        ..GenConfig::default()
    }
}

#[test]
fn generated_records_revalidate_and_bins_are_level() {
    let sim = SimConfig::default();
    let basis = PrimitiveBasis::new(PrimitiveConfig::default(), sim.dt).unwrap();
    let gen = small();
    let (ds, report) = generate(&gen, &sim, &basis).unwrap();
    assert!(report.valid_before_balance >= gen.target_count);
    assert_eq!(ds.len(), report.balanced_count);
    assert_eq!(ds.len() % gen.num_bins(), 0);
    let check = revalidate(&ds, &gen, &sim, &basis, 1e-9);
    println!("worst distance gap {:.3e}", check.worst_distance_gap);
    assert_eq!(check.records, ds.len());
    assert!(check.all_valid(), "{check:?}");
    assert!(check.bins_equal(), "{:?}", check.histogram);
    assert_eq!(check.histogram, report.histogram_after);
}

#[test]
fn generation_is_reproducible() {
    let sim = SimConfig::default();
    let basis = PrimitiveBasis::new(PrimitiveConfig::default(), sim.dt).unwrap();
    let gen = GenConfig {
        target_count: 50,
        min_per_bin: 1,
        ..small()
    };
    let (a, _) = generate(&gen, &sim, &basis).unwrap();
    let (b, _) = generate(&gen, &sim, &basis).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
}
