use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::effects::{barrier_paths, op_at, Ctx};
use crate::exec::{random_input, run_cpu, run_simt, KernelData};
use crate::frontend::{compile, parse_ir};
use crate::ir::{count_ops, verify, Lit, Op, Program};

fn fixture(name: &str) -> Program {
    let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(path).unwrap();
    if name.ends_with(".ir") {
        parse_ir(&text).unwrap()
    } else {
        compile(&text).unwrap()
    }
}

/// Both programs produce bit-identical outputs on `n` random inputs.
fn same_outputs(a: &Program, b: &Program, n: u64) {
    for seed in 0..n {
        let inp = random_input(a, &mut ChaCha8Rng::seed_from_u64(seed));
        let x = run_simt(a, &inp).unwrap();
        let y = run_simt(b, &inp).unwrap();
        assert!(x.data.bits_eq(&y.data), "seed {seed}: {:?}", x.data.first_difference(&y.data));
    }
}

fn tp_path(p: &Program) -> Vec<usize> {
    thread_loop_paths(&p.grid().unwrap().body).remove(0)
}

#[test]
fn backprop_drops_the_two_outer_barriers() {
    let p = fixture("backprop.gk");
    assert_eq!(p.barrier_count(), 5);
    let (q, report) = eliminate_barriers(&p);
    assert_eq!(report.removed, vec![1, 5]);
    assert_eq!(report.kept, vec![2, 3, 4]);
    assert_eq!(q.barrier_count(), 3);
    verify(&q).unwrap();
    same_outputs(&p, &q, 5);
    let (_, again) = eliminate_barriers(&q);
    assert!(again.removed.is_empty());
}

#[test]
fn exclusion_hole_decides_removal() {
    let (_, r0) = eliminate_barriers(&fixture("exclusion0.gk"));
    assert_eq!(r0.removed, vec![1]);
    let (_, r1) = eliminate_barriers(&fixture("exclusion1.gk"));
    assert_eq!(r1.kept, vec![1]);
}

#[test]
fn barrier_with_nothing_around_it_goes() {
    let p = compile("kernel k() grid(1) block(4) { sync; }").unwrap();
    let (q, r) = eliminate_barriers(&p);
    assert_eq!(r.removed, vec![1]);
    assert_eq!(q.barrier_count(), 0);
}

#[test]
fn reduction_barriers_stay() {
    let p = fixture("reduction.gk");
    let (_, r) = eliminate_barriers(&p);
    assert!(r.removed.is_empty(), "{r:?}");
}

fn weights_loads(p: &Program) -> usize {
    let w = p.buffer_by_name("weights").unwrap();
    count_ops(&p.body, &|o| matches!(o, Op::Load { buf, .. } if *buf == w))
}

fn weights_stores(p: &Program) -> usize {
    let w = p.buffer_by_name("weights").unwrap();
    count_ops(&p.body, &|o| matches!(o, Op::Store { buf, .. } if *buf == w))
}

#[test]
fn backprop_store_load_pair_is_promoted() {
    let p = fixture("backprop.gk");
    let (q, r) = mem2reg(&p);
    verify(&q).unwrap();
    assert_eq!(r.forwarded, 1, "{r:?}");
    assert_eq!(r.dead_stores, 1, "{r:?}");
    assert_eq!(weights_loads(&q), weights_loads(&p) - 1);
    assert_eq!(weights_stores(&q), weights_stores(&p) - 1);
    same_outputs(&p, &q, 5);
}

#[test]
fn plain_store_load_is_forwarded() {
    let p = compile(
        "kernel k(a: f64[4], b: f64[4]) grid(1) block(4) {
           shared s: f64[4];
           s[threadIdx.x] = a[threadIdx.x];
           b[threadIdx.x] = s[threadIdx.x] + 1.0;
         }",
    )
    .unwrap();
    let (q, r) = mem2reg(&p);
    assert_eq!(r.forwarded, 1);
    same_outputs(&p, &q, 3);
}

#[test]
fn offset_load_is_not_forwarded() {
    let p = fixture("exclusion1.gk");
    let (q, r) = mem2reg(&p);
    assert_eq!(r.forwarded, 0);
    same_outputs(&p, &q, 3);
}

#[test]
fn moving_the_middle_barrier_above_its_store_is_rejected() {
    let p = fixture("backprop.gk");
    let tp = tp_path(&p);
    let (_, l) = grid_and_tp(&p, &tp);
    let bps = barrier_paths(&l.body);
    let w = p.buffer_by_name("weights").unwrap();
    let store = l
        .body
        .iter()
        .position(|o| matches!(o, Op::Store { buf, .. } if *buf == w))
        .unwrap();
    assert!(move_barrier(&p, &tp, &bps[1], &[store]).is_err());
}

#[test]
fn moving_past_pure_ops_is_accepted() {
    let p = compile(
        "kernel k(a: f64[4], b: f64[4], out_k: i64[4]) grid(1) block(4) {
           shared s: f64[4];
           s[threadIdx.x] = a[threadIdx.x];
           sync;
           let j = (threadIdx.x + 1) % 4;
           let k = j * 2;
           b[threadIdx.x] = s[j] + 1.0;
           out_k[threadIdx.x] = k;
         }",
    )
    .unwrap();
    let tp = tp_path(&p);
    let (_, l) = grid_and_tp(&p, &tp);
    let b = barrier_paths(&l.body).remove(0);
    let target = (b[0]..l.body.len())
        .find(|&i| matches!(l.body[i], Op::Load { .. }))
        .unwrap();
    assert!(target > b[0] + 1);
    let q = move_barrier(&p, &tp, &b, &[target]).unwrap();
    assert_eq!(q.barrier_count(), 1);
    let (_, l2) = grid_and_tp(&q, &tp);
    let moved = barrier_paths(&l2.body).remove(0);
    assert_eq!(moved, vec![target - 1]);
    same_outputs(&p, &q, 4);
}

fn normalize_input(n: i64) -> KernelData {
    let v: Vec<Lit> = (0..n).map(|i| Lit::F64(1.0 + i as f64)).collect();
    KernelData {
        scalars: [("n".to_string(), Lit::I64(n))].into(),
        buffers: [("out".to_string(), vec![Lit::F64(0.0); n as usize]), ("inp".to_string(), v)].into(),
    }
}

#[test]
fn normalize_sum_leaves_the_grid() {
    let p = fixture("normalize.gk");
    let (q, r) = parallel_licm(&p);
    verify(&q).unwrap();
    assert!(r.from_grid > 0, "{r:?}");
    let host_for = q.body.iter().any(|o| matches!(o, Op::For(_)));
    assert!(host_for, "sum loop should sit in host code");
    let mut before = Vec::new();
    let mut after = Vec::new();
    for n in [64, 128, 256] {
        let inp = normalize_input(n);
        let a = run_simt(&p, &inp).unwrap();
        let b = run_simt(&q, &inp).unwrap();
        assert!(a.data.bits_eq(&b.data));
        before.push(a.counters.arith_ops as f64);
        after.push(b.counters.arith_ops as f64);
    }
    // quadruple n: quadratic grows ~16x, linear ~4x
    assert!(before[2] / before[0] > 12.0, "{before:?}");
    assert!(after[2] / after[0] < 5.0, "{after:?}");
}

#[test]
fn lockstep_hoists_what_serial_licm_cannot() {
    let p = compile(
        "kernel k(c: f64[1], out: f64[4], z: i64 in 0..0) grid(1) block(4) {
           let v = c[z];
           out[threadIdx.x] = v;
           sync;
           if (threadIdx.x == 0) { c[0] = v + 1.0; }
         }",
    )
    .unwrap();
    let tp = tp_path(&p);
    let (g, l) = grid_and_tp(&p, &tp);
    let ctx = Ctx::thread(&p, g, l);
    let inner = thread_inner(l);
    let load = l.body.iter().position(|o| matches!(o, Op::Load { .. })).unwrap();
    assert!(parallel_hoistable(&ctx, &l.body, load, &inner, true));
    assert!(!serially_hoistable(&ctx, &l.body, load, &inner));
    let (q, r) = parallel_licm(&p);
    assert!(r.from_threads > 0);
    same_outputs(&p, &q, 4);
}

#[test]
fn load_after_conflicting_store_is_pinned() {
    let p = compile(
        "kernel k(c: f64[4], out: f64[4]) grid(1) block(4) {
           c[threadIdx.x] = 2.0;
           out[threadIdx.x] = c[1];
         }",
    )
    .unwrap();
    let tp = tp_path(&p);
    let (g, l) = grid_and_tp(&p, &tp);
    let ctx = Ctx::thread(&p, g, l);
    let inner = thread_inner(l);
    let load = l.body.iter().position(|o| matches!(o, Op::Load { .. })).unwrap();
    assert!(!parallel_hoistable(&ctx, &l.body, load, &inner, true));
    assert!(!serially_hoistable(&ctx, &l.body, load, &inner));
}

#[test]
fn serial_hoistability_implies_parallel_on_fixtures() {
    for f in ["normalize.gk", "backprop.gk", "reduction.gk", "converge.gk", "matmul.gk", "uniform_if.gk", "exclusion0.gk"] {
        let p = fixture(f);
        for tpp in thread_loop_paths(&p.grid().unwrap().body) {
            let (g, l) = grid_and_tp(&p, &tpp);
            let ctx = Ctx::thread(&p, g, l);
            let inner = thread_inner(l);
            for i in 0..l.body.len() {
                if serially_hoistable(&ctx, &l.body, i, &inner) {
                    assert!(parallel_hoistable(&ctx, &l.body, i, &inner, true), "{f} op {i}");
                }
            }
        }
        let (q, _) = parallel_licm(&p);
        verify(&q).unwrap();
        if f != "matmul.gk" {
            same_outputs(&p, &q, 3);
        }
    }
}

fn hoist_input(n: i64) -> KernelData {
    KernelData {
        scalars: [("n".to_string(), Lit::I64(n))].into(),
        buffers: [("A".to_string(), vec![Lit::F64(0.5); 64])].into(),
    }
}

#[test]
fn hoisting_a_team_out_of_a_loop() {
    let p = fixture("hoist.ir");
    let (q, k) = hoist_team_regions(&p);
    assert_eq!(k, 1);
    let a = run_cpu(&p, &hoist_input(5)).unwrap();
    let b = run_cpu(&q, &hoist_input(5)).unwrap();
    assert_eq!(a.counters.team_launches, 5);
    assert_eq!(b.counters.team_launches, 1);
    assert_eq!(b.counters.workshare_execs, 5);
    assert_eq!(b.counters.team_barriers, 5);
    assert!(a.data.bits_eq(&b.data));
    let z = run_cpu(&q, &hoist_input(0)).unwrap();
    assert_eq!(z.counters.team_launches, 1);
    assert_eq!(z.counters.workshare_execs, 0);
}

#[test]
fn fusing_adjacent_teams() {
    let p = fixture("fuse.ir");
    let (q, k) = fuse_team_regions(&p);
    assert_eq!(k, 1);
    assert_eq!(count_ops(&q.body, &|o| matches!(o, Op::TeamBarrier)), 1);
    let inp = random_input(&p, &mut ChaCha8Rng::seed_from_u64(3));
    let a = run_cpu(&p, &inp).unwrap();
    let b = run_cpu(&q, &inp).unwrap();
    assert_eq!(a.counters.team_launches - b.counters.team_launches, 1);
    assert!(a.data.bits_eq(&b.data));
    let (same, none) = fuse_team_regions(&q);
    assert_eq!(none, 0);
    assert_eq!(same, q);
}

#[test]
fn serializing_nested_teams() {
    let text = "kernel nest(@A: f64[16]) {
  %four.0 = const 4
  team {
    workshare (%b.1) in (%four.0) {
      team {
        workshare (%t.2) in (%four.0) {
          %i.3 = mul %b.1, %four.0
          %j.4 = add %i.3, %t.2
          %v.5 = load @A[%j.4]
          %w.6 = add %v.5, %v.5
          store %w.6, @A[%j.4]
        }
      }
    }
  }
}";
    let p = parse_ir(text).unwrap();
    let q = serialize_inner(&p);
    assert_eq!(count_ops(&q.body, &|o| matches!(o, Op::TeamRegion(_))), 1);
    assert_eq!(count_ops(&q.body, &|o| matches!(o, Op::WorkShare(_))), 1);
    assert_eq!(count_ops(&q.body, &|o| matches!(o, Op::SerialNest(_))), 1);
    let inp = random_input(&p, &mut ChaCha8Rng::seed_from_u64(1));
    let a = run_cpu(&p, &inp).unwrap();
    let b = run_cpu(&q, &inp).unwrap();
    assert!(a.data.bits_eq(&b.data));
    assert_eq!(b.counters.team_launches, 1);
    assert_eq!(serialize_inner(&q), q);
    let _ = op_at;
}
