use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::exec::{random_input, run_cpu, run_simt, KernelData};
use crate::frontend::{compile, parse_ir};
use crate::ir::{count_ops, verify, BufferKind, Lit, Op, Program};

fn fixture(name: &str) -> Program {
    let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(path).unwrap();
    if name.ends_with(".ir") {
        parse_ir(&text).unwrap()
    } else {
        compile(&text).unwrap()
    }
}

fn agree_on(p: &Program, q: &Program, inp: &KernelData) -> bool {
    let a = run_simt(p, inp).unwrap();
    let b = run_cpu(q, inp).unwrap();
    a.data.bits_eq(&b.data)
}

fn agree(p: &Program, q: &Program, n: u64) {
    for seed in 0..n {
        let inp = random_input(p, &mut ChaCha8Rng::seed_from_u64(seed));
        assert!(agree_on(p, q, &inp), "seed {seed}");
    }
}

fn first_tp(p: &Program) -> Vec<usize> {
    crate::paropt::thread_loop_paths(&p.grid().unwrap().body).remove(0)
}

fn names(p: &Program, g: &ValueGraph, set: &BTreeSet<usize>) -> Vec<String> {
    set.iter().map(|&i| p.value_name(g.values[i]).to_string()).collect()
}

#[test]
fn fission_keeps_two_values_not_three() {
    let p = fixture("fission.ir");
    let tp = first_tp(&p);
    let (_, l) = crate::paropt::grid_and_tp(&p, &tp);
    let at = l.body.iter().position(Op::is_barrier).unwrap();
    let g = value_graph(&p, &tp, at);
    let plan = min_cut_live_values(&g);
    assert_eq!(names(&p, &g, &plan.cut), ["x", "y"]);
    assert_eq!(names(&p, &g, &plan.recompute), ["a", "b", "c"]);

    let q = split_parallel_at_barrier(&p, &tp, at, SplitOptions::default()).unwrap();
    verify(&q).unwrap();
    assert_eq!(q.barrier_count(), 0);
    let grid = q.grid().unwrap();
    let loops: Vec<&crate::ir::ParLoop> = grid
        .body
        .iter()
        .filter_map(|o| match o {
            Op::ThreadPar(l) => Some(l),
            _ => None,
        })
        .collect();
    assert_eq!(loops.len(), 2);
    let spill = |o: &Op| match o {
        Op::Store { buf, .. } | Op::Load { buf, .. } => q.buffer(*buf).name.starts_with("spill"),
        _ => false,
    };
    assert_eq!(count_ops(&loops[0].body, &|o| matches!(o, Op::Store { .. }) && spill(o)), 2);
    assert_eq!(count_ops(&loops[1].body, &|o| matches!(o, Op::Load { .. }) && spill(o)), 2);
    let arith = |o: &Op| matches!(o, Op::Pure { expr: crate::ir::Expr::Binary(..), .. });
    assert!(count_ops(&loops[1].body, &arith) >= 3);
    assert_eq!(count_ops(&grid.body, &|o| matches!(o, Op::SharedAlloc { .. })), 2);
    agree(&p, &q, 5);
}

#[test]
fn spilling_every_live_value_takes_three() {
    let p = fixture("fission.ir");
    let tp = first_tp(&p);
    let q = split_parallel_at_barrier(&p, &tp, 5, SplitOptions { mincut: false, skip_spill_stores: false }).unwrap();
    let spills = q.buffers.iter().filter(|b| b.name.starts_with("spill")).count();
    assert_eq!(spills, 3);
    agree(&p, &q, 3);
}

#[test]
fn dropped_spill_stores_are_observable() {
    let p = fixture("fission.ir");
    let tp = first_tp(&p);
    let q = split_parallel_at_barrier(&p, &tp, 5, SplitOptions { mincut: true, skip_spill_stores: true }).unwrap();
    let inp = random_input(&p, &mut ChaCha8Rng::seed_from_u64(0));
    assert!(!agree_on(&p, &q, &inp));
}

#[test]
fn small_graphs() {
    let empty = ValueGraph::default();
    assert!(min_cut_live_values(&empty).cut.is_empty());
    let one = ValueGraph {
        values: vec![crate::ir::ValueId(0)],
        edges: vec![],
        sources: [0].into(),
        sinks: [0].into(),
    };
    assert_eq!(min_cut_live_values(&one).cut, [0].into());
}

#[test]
fn leading_barrier_leaves_one_loop() {
    let p = compile("kernel k(a: f64[4]) grid(1) block(4) { sync; a[threadIdx.x] = 1.0; }").unwrap();
    let tp = first_tp(&p);
    let q = split_parallel_at_barrier(&p, &tp, 0, SplitOptions::default()).unwrap();
    assert_eq!(q.barrier_count(), 0);
    let n = count_ops(&q.body, &|o| matches!(o, Op::ThreadPar(_)));
    assert_eq!(n, 1);
    agree(&p, &q, 2);
}

fn brute_min(g: &ValueGraph) -> usize {
    let n = g.len();
    (0u32..1 << n)
        .filter(|m| g.separates(&(0..n).filter(|i| m >> i & 1 == 1).collect()))
        .map(|m| m.count_ones() as usize)
        .min()
        .unwrap()
}

fn graph() -> impl Strategy<Value = ValueGraph> {
    (1usize..=10).prop_flat_map(|n| {
        (
            proptest::collection::vec((0..n, 0..n), 0..3 * n),
            proptest::collection::btree_set(0..n, 0..=n),
            proptest::collection::btree_set(0..n, 0..=n),
        )
            .prop_map(move |(e, sources, sinks)| ValueGraph {
                values: (0..n as u32).map(crate::ir::ValueId).collect(),
                edges: e.into_iter().filter(|(a, b)| a < b).collect(),
                sources,
                sinks,
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]
    #[test]
    fn cut_is_minimum_and_separates(g in graph()) {
        let plan = min_cut_live_values(&g);
        prop_assert!(g.separates(&plan.cut));
        prop_assert_eq!(plan.cut.len(), brute_min(&g));
        for i in &plan.recompute {
            prop_assert!(!g.sources.contains(i));
        }
    }
}

fn cpuified(name: &str) -> (Program, Program) {
    let p = fixture(name);
    let q = cpuify(&p, CpuifyOptions::default()).unwrap();
    verify(&q).unwrap();
    assert_eq!(q.barrier_count(), 0, "{name}");
    (p, q)
}

#[test]
fn fixtures_lose_every_barrier() {
    for f in ["backprop.gk", "reduction.gk", "uniform_if.gk", "converge.gk", "normalize.gk", "exclusion0.gk", "exclusion1.gk"] {
        let (p, q) = cpuified(f);
        agree(&p, &q, 6);
        let r = cpuify(&p, CpuifyOptions { elim: false, split: SplitOptions { mincut: false, skip_spill_stores: false } }).unwrap();
        assert_eq!(r.barrier_count(), 0, "{f}");
        agree(&p, &r, 3);
    }
}

#[test]
fn matmul_lowers() {
    let (p, q) = cpuified("matmul.gk");
    let n = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut inp = random_input(&p, &mut rng);
    inp.scalars.insert("n".into(), Lit::I64(n));
    for b in ["a", "b", "c"] {
        let v: Vec<Lit> = (0..n * n).map(|i| Lit::F64((i % 7) as f64 * 0.25)).collect();
        inp.buffers.insert(b.into(), v);
    }
    assert!(agree_on(&p, &q, &inp));
}

#[test]
fn thread_dependent_control_is_rejected() {
    let no_elim = CpuifyOptions { elim: false, ..Default::default() };
    let p = fixture("divergent_if.gk");
    assert_eq!(cpuify(&p, no_elim).unwrap_err(), SyncError::DivergentBarrier);
    // the barrier orders nothing, so elimination makes the kernel legal
    assert_eq!(cpuify(&p, CpuifyOptions::default()).unwrap().barrier_count(), 0);
    let p = fixture("divergent_loop.gk");
    assert_eq!(cpuify(&p, no_elim).unwrap_err(), SyncError::DivergentTripCount);
}

#[test]
fn while_runs_zero_times_when_false_on_entry() {
    let (p, q) = cpuified("converge.gk");
    let mut inp = random_input(&p, &mut ChaCha8Rng::seed_from_u64(4));
    inp.scalars.insert("steps".into(), Lit::I64(0));
    assert!(agree_on(&p, &q, &inp));
    let helpers = q.buffers.iter().filter(|b| b.kind == BufferKind::Shared && b.extent == Some(1)).count();
    assert!(helpers >= 2);
    inp.scalars.insert("steps".into(), Lit::I64(5));
    assert!(agree_on(&p, &q, &inp));
}

#[test]
fn empty_for_runs_no_thread_bodies() {
    let p = compile(
        "kernel k(a: f64[4], m: i64 in 0..3) grid(1) block(4) {
           shared s: f64[4];
           for i = 0 .. m { s[threadIdx.x] = a[threadIdx.x] + s[(threadIdx.x + 1) % 4]; sync; }
           a[threadIdx.x] = s[threadIdx.x];
         }",
    )
    .unwrap();
    let q = cpuify(&p, CpuifyOptions::default()).unwrap();
    let mut inp = random_input(&p, &mut ChaCha8Rng::seed_from_u64(2));
    for m in 0..=3 {
        inp.scalars.insert("m".into(), Lit::I64(m));
        assert!(agree_on(&p, &q, &inp), "m = {m}");
    }
}

#[test]
fn constant_condition_folds() {
    let p = compile(
        "kernel k(a: f64[4]) grid(1) block(4) {
           shared s: f64[4];
           if (1 == 1) { s[threadIdx.x] = a[threadIdx.x]; sync; a[threadIdx.x] = s[3 - threadIdx.x]; }
         }",
    )
    .unwrap();
    let q = cpuify(&p, CpuifyOptions::default()).unwrap();
    assert_eq!(count_ops(&q.body, &|o| matches!(o, Op::If(_))), 0);
    agree(&p, &q, 2);
}

#[test]
fn wrapping_is_idempotent() {
    let p = fixture("reduction.gk");
    let tp = first_tp(&p);
    let (_, l) = crate::paropt::grid_and_tp(&p, &tp);
    let c = l.body.iter().position(|o| matches!(o, Op::For(_))).unwrap();
    let q = wrap_with_barriers(&p, &tp, c);
    let r = wrap_with_barriers(&q, &tp, c + 1);
    assert_eq!(q.barrier_count(), r.barrier_count());
    let inp = random_input(&p, &mut ChaCha8Rng::seed_from_u64(1));
    assert!(run_simt(&p, &inp).unwrap().data.bits_eq(&run_simt(&q, &inp).unwrap().data));
}
