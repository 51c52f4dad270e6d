mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simtcc::exec::{
    diff_test, gen_random_kernel, gen_random_source, race_check, random_input, run_simt, run_simt_with,
    inputs_for, mismatches, DiffOptions, Failure, RunOptions,
};
use simtcc::frontend::compile;
use simtcc::lowering::InnerMode;
use simtcc::pipeline::{PipelineConfig, Toggles};

#[test]
fn seed_zero_matches_golden() {
    let golden = include_str!("golden/seed0.gk");
    assert_eq!(gen_random_source(0, 16), golden);
}

#[test]
fn generation_is_deterministic() {
    for seed in [1, 17, 4242] {
        assert_eq!(gen_random_source(seed, 20), gen_random_source(seed, 20));
    }
    assert_ne!(gen_random_source(1, 16), gen_random_source(2, 16));
}

#[test]
fn generated_kernels_are_race_free() {
    for seed in 0..500 {
        let p = gen_random_kernel(seed, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..2 {
            let input = random_input(&p, &mut rng);
            let races = race_check(&p, &input).unwrap();
            assert!(races.is_empty(), "seed {seed}: {}", races[0]);
        }
    }
}

#[test]
fn output_is_independent_of_thread_order() {
    for seed in 0..200 {
        let p = gen_random_kernel(seed, 16);
        let input = random_input(&p, &mut ChaCha8Rng::seed_from_u64(seed));
        let fwd = run_simt(&p, &input).unwrap();
        let rev = run_simt_with(&p, &input, RunOptions { reverse: true, ..Default::default() }, None).unwrap();
        assert!(fwd.data.bits_eq(&rev.data), "seed {seed}");
    }
}

#[test]
fn grammar_exercises_synchronization() {
    let srcs: Vec<String> = (0..200).map(|s| gen_random_source(s, 16)).collect();
    let count = |pat: &str| srcs.iter().filter(|s| s.contains(pat)).count();
    assert!(count("sync;") > 150);
    assert!(count("while (ctl") > 40);
    assert!(count("shared s") > 100);
    let deep = srcs
        .iter()
        .filter(|s| s.lines().any(|l| l.starts_with("      ") && l.trim() == "sync;"))
        .count();
    assert!(deep > 20, "only {deep} kernels with nested barriers");
    for s in &srcs {
        compile(s).unwrap();
    }
}

#[test]
fn broken_spilling_is_caught_and_minimized() {
    let mut caught = 0;
    for seed in 0..100 {
        let p = gen_random_kernel(seed, 16);
        let mut cfg = PipelineConfig::new(Toggles { elim: false, mincut: true, ompopt: true }, InnerMode::Par);
        cfg.skip_spill_stores = true;
        let r = diff_test(&p, &[cfg], DiffOptions { n_inputs: 2, seed, shrink: true, check_races: false });
        if r.has_mismatch() {
            caught += 1;
            let small = simtcc::frontend::parse_ir(r.minimized.as_deref().unwrap()).unwrap();
            assert!(simtcc::ir::count_ops(&small.body, &|_| true) <= simtcc::ir::count_ops(&p.body, &|_| true));
            let Some(Failure::Mismatch { input, .. }) = r.failures.first() else { unreachable!() };
            let inputs = inputs_for(&p, 2, seed);
            assert!(mismatches(&small, &cfg, &inputs[*input]), "seed {seed}: minimized program passes");
        }
    }
    assert!(caught >= 10, "fault injection detected in only {caught} of 100 kernels");
}
