mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simtcc::exec::{gen_random_kernel, random_input};
use simtcc::pipeline::{optimize, Toggles};

#[test]
fn fixtures_traced_accesses_are_covered() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for name in common::VALID {
        let p = common::fixture(name);
        let q = optimize(&p, Toggles::default()).unwrap();
        for _ in 0..3 {
            let input = common::input_for(&p, &mut rng);
            let (n, bad) = common::uncovered_accesses(&p, &input);
            assert!(n > 0, "{name}: no accesses traced");
            assert!(bad.is_empty(), "{name}: {bad:?}");
            let (_, bad) = common::uncovered_accesses(&q, &input);
            assert!(bad.is_empty(), "{name} optimized: {bad:?}");
        }
    }
}

#[test]
fn fuzzed_traced_accesses_are_covered() {
    let mut total = 0;
    for seed in 0..200 {
        let p = gen_random_kernel(seed, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = random_input(&p, &mut rng);
        let (n, bad) = common::uncovered_accesses(&p, &input);
        total += n;
        assert!(bad.is_empty(), "seed {seed}: {bad:?}");
    }
    assert!(total > 10_000, "only {total} accesses traced");
}
