#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use simtcc::effects::{effects_of, Ctx, EffectSet, Kind, Sym};
use simtcc::exec::{run_simt_with, Event, KernelData, RunOptions};
use simtcc::frontend::{compile, parse_ir};
use simtcc::ir::{Lit, Op, Program};
use simtcc::paropt::thread_loop_paths;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixture(name: &str) -> Program {
    let path = fixture_dir().join(name);
    let text = std::fs::read_to_string(&path).unwrap();
    let p = if name.ends_with(".ir") { parse_ir(&text) } else { compile(&text) };
    p.unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Fixtures that are valid race-free kernels.
pub const VALID: [&str; 9] = [
    "backprop.gk",
    "converge.gk",
    "exclusion0.gk",
    "exclusion1.gk",
    "normalize.gk",
    "reduction.gk",
    "uniform_if.gk",
    "matmul.gk",
    "fission.ir",
];

fn collect<'a>(ops: &'a [Op], owner: usize, out: &mut HashMap<*const Op, usize>) {
    for op in ops {
        if matches!(op, Op::Load { .. } | Op::Store { .. }) {
            out.insert(op as *const Op, owner);
        }
        for r in op.regions() {
            collect(r, owner, out);
        }
    }
}

/// Runs `p` on `input` and counts traced accesses not covered by the static
/// effects of the enclosing thread loop (or the grid, outside thread loops).
pub fn uncovered_accesses(p: &Program, input: &KernelData) -> (usize, Vec<String>) {
    let Some(grid) = p.grid() else { return (0, Vec::new()) };
    let tps = thread_loop_paths(&p.body);
    let mut sets: Vec<(Ctx<'_>, EffectSet)> = Vec::new();
    let mut owner = HashMap::new();
    let gctx = Ctx::grid(p, grid);
    let geff = effects_of(&gctx, &grid.body);
    collect(&grid.body, usize::MAX, &mut owner);
    for (i, path) in tps.iter().enumerate() {
        let Op::ThreadPar(tp) = simtcc::effects::op_at(&p.body, path) else { unreachable!() };
        let ctx = Ctx::thread(p, grid, tp);
        let eff = effects_of(&ctx, &tp.body);
        collect(&tp.body, i, &mut owner);
        sets.push((ctx, eff));
    }
    let mut bad = Vec::new();
    let mut checked = 0;
    let mut obs = |e: &Event<'_>| {
        checked += 1;
        let set = match owner.get(&(e.op as *const Op)) {
            Some(&i) if i != usize::MAX => &sets[i].1,
            _ => &geff,
        };
        let eval = |a: &simtcc::effects::Affine| {
            a.eval(&|s| match s {
                Sym::Thread(d) => e.thread.map(|t| t[d]),
                Sym::Block(d) => e.block.map(|b| b[d]),
                Sym::Value(v) => match e.env.lookup(v) {
                    Some(Lit::I64(x)) => Some(x),
                    _ => None,
                },
            })
        };
        let kind = if e.write { Kind::Write } else { Kind::Read };
        if !set.covers(p, e.buf, kind, e.index, &eval) {
            bad.push(format!("{:?} @{}[{}]", kind, p.buffer(e.buf).name, e.index));
        }
    };
    run_simt_with(p, input, RunOptions::default(), Some(&mut obs)).expect("oracle run");
    (checked, bad)
}

/// A random input, with matmul pinned to n = 32 to keep runs short.
pub fn input_for(p: &Program, rng: &mut impl rand::Rng) -> KernelData {
    if p.name != "matmul" {
        return simtcc::exec::random_input(p, rng);
    }
    let mut d = KernelData::default();
    d.scalars.insert("n".into(), Lit::I64(32));
    for b in ["a", "b", "c"] {
        d.buffers.insert(b.into(), (0..1024).map(|_| Lit::F64(rng.gen_range(-1.0..1.0))).collect());
    }
    d
}
