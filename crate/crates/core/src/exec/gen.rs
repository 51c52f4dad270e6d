//! Random kernels that are race-free by construction.
//!
//! Within a barrier segment each shared buffer is either written at the
//! thread's own slot or read at other threads' slots, never both. Loops
//! containing barriers end with one, so a segment never wraps around an
//! iteration; barrier-free loops never write shared memory.

use std::collections::BTreeSet;
use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::frontend::compile;
use crate::ir::Program;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Ty {
    F,
    I,
}

struct Var {
    name: String,
    ty: Ty,
    uniform: bool,
    fixed: bool,
}

#[derive(Clone, Default)]
struct Seg {
    dirty: BTreeSet<usize>,
    xread: BTreeSet<usize>,
}

impl Seg {
    fn join(&mut self, o: &Seg) {
        self.dirty.extend(o.dirty.iter().copied());
        self.xread.extend(o.xread.iter().copied());
    }
}

#[derive(Clone, Copy)]
struct Cx {
    sync_ok: bool,
    depth: usize,
    shared_write: bool,
}

struct Gen {
    rng: ChaCha8Rng,
    out: String,
    indent: usize,
    bx: i64,
    threads: i64,
    n_in: i64,
    gx: i64,
    shared: Vec<(String, Ty)>,
    ctls: usize,
    scopes: Vec<Vec<Var>>,
    /// Variables in scopes below this index may not be reassigned.
    floor: usize,
    seg: Seg,
    budget: usize,
    fresh: usize,
}

const FLITS: [&str; 8] = ["0.5", "1.0", "-1.25", "2.0", "0.125", "-0.75", "3.0", "0.0"];

impl Gen {
    fn line(&mut self, s: &str) {
        for _ in 0..self.indent {
            self.out.push_str("  ");
        }
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn name(&mut self, base: &str) -> String {
        self.fresh += 1;
        format!("{base}{}", self.fresh)
    }

    fn vars(&self, ty: Ty) -> Vec<&Var> {
        self.scopes.iter().flatten().filter(|v| v.ty == ty).collect()
    }

    fn uniform_i(&mut self, depth: usize) -> String {
        let uv: Vec<String> = self.vars(Ty::I).into_iter().filter(|v| v.uniform).map(|v| v.name.clone()).collect();
        match self.rng.gen_range(0..if depth > 1 { 3 } else { 5 }) {
            0 => self.rng.gen_range(0..4).to_string(),
            1 => "m".into(),
            2 => uv.choose(&mut self.rng).cloned().unwrap_or_else(|| "blockIdx.x".into()),
            3 => format!("({} + {})", self.uniform_i(depth + 1), self.uniform_i(depth + 1)),
            _ => format!("({} % {})", self.uniform_i(depth + 1), self.rng.gen_range(1..4)),
        }
    }

    fn uniform_cond(&mut self) -> String {
        let op = ["<", "==", "!=", ">="].choose(&mut self.rng).unwrap();
        format!("{} {op} {}", self.uniform_i(0), self.rng.gen_range(0..3))
    }

    fn in_index(&mut self) -> String {
        let n = self.n_in;
        if self.rng.gen_bool(0.2) {
            format!("((iin[gid] % {n}) + {n}) % {n}")
        } else {
            format!("(gid + {}) % {n}", self.rng.gen_range(0..n))
        }
    }

    fn shared_read(&mut self, ty: Ty) -> Option<String> {
        let cands: Vec<usize> = (0..self.shared.len()).filter(|&i| self.shared[i].1 == ty).collect();
        let &i = cands.choose(&mut self.rng)?;
        let name = self.shared[i].0.clone();
        if !self.seg.dirty.contains(&i) && self.rng.gen_bool(0.6) {
            self.seg.xread.insert(i);
            let c = self.rng.gen_range(0..self.threads);
            if self.rng.gen_bool(0.3) {
                return Some(format!("{name}[{c}]"));
            }
            return Some(format!("{name}[(tid + {c}) % {}]", self.threads));
        }
        Some(format!("{name}[tid]"))
    }

    fn own_out(&mut self) -> String {
        if self.rng.gen_bool(0.3) {
            format!("gid + {}", self.gx * self.threads)
        } else {
            "gid".into()
        }
    }

    fn expr(&mut self, ty: Ty, depth: usize) -> String {
        let leaf = depth >= 3 || self.rng.gen_bool(0.3);
        if leaf {
            let vs: Vec<String> = self.vars(ty).into_iter().map(|v| v.name.clone()).collect();
            if !vs.is_empty() && self.rng.gen_bool(0.4) {
                return vs.choose(&mut self.rng).unwrap().clone();
            }
            return match self.rng.gen_range(0..5) {
                1 => {
                    let idx = self.in_index();
                    format!("{}[{idx}]", if ty == Ty::F { "fin" } else { "iin" })
                }
                2 => self.shared_read(ty).unwrap_or_else(|| if ty == Ty::F { "k".into() } else { "m".into() }),
                3 => match ty {
                    Ty::F => "k".into(),
                    Ty::I => ["tid", "gid", "threadIdx.x", "blockIdx.x", "m"].choose(&mut self.rng).unwrap().to_string(),
                },
                _ => match ty {
                    Ty::F => FLITS.choose(&mut self.rng).unwrap().to_string(),
                    Ty::I => self.rng.gen_range(-3..8).to_string(),
                },
            };
        }
        let a = self.expr(ty, depth + 1);
        let b = self.expr(ty, depth + 1);
        match (ty, self.rng.gen_range(0..8)) {
            (_, 0) => format!("({a} + {b})"),
            (_, 1) => format!("({a} - {b})"),
            (_, 2) => format!("({a} * {b})"),
            (Ty::F, 3) => format!("({a} / ({b} * {b} + 1.0))"),
            (Ty::I, 3) => format!("({a} / {})", self.rng.gen_range(1..5)),
            (Ty::I, 4) => format!("({a} % {b})"),
            (Ty::I, 5) => format!("({a} << {})", self.rng.gen_range(0..4)),
            (Ty::F, 4) => format!("f64({})", self.expr(Ty::I, depth + 1)),
            (Ty::I, 6) => format!("i64({})", self.expr(Ty::F, depth + 1)),
            (_, 7) => format!("select({}, {a}, {b})", self.cond(depth + 1)),
            _ => format!("({a} + {b})"),
        }
    }

    fn cond(&mut self, depth: usize) -> String {
        let ty = if self.rng.gen_bool(0.5) { Ty::F } else { Ty::I };
        let op = ["<", "<=", ">", "==", "!="].choose(&mut self.rng).unwrap();
        let c = format!("{} {op} {}", self.expr(ty, depth + 1), self.expr(ty, depth + 1));
        if depth < 2 && self.rng.gen_bool(0.15) {
            format!("({c}) && ({})", self.cond(depth + 1))
        } else {
            c
        }
    }

    fn thread_cond(&mut self) -> String {
        match self.rng.gen_range(0..3) {
            0 => format!("tid < {}", self.rng.gen_range(0..=self.threads)),
            1 => format!("tid % 2 == {}", self.rng.gen_range(0..2)),
            _ => self.cond(0),
        }
    }

    fn block(&mut self, cx: Cx, n: usize) {
        self.scopes.push(Vec::new());
        self.indent += 1;
        for _ in 0..n {
            if self.budget == 0 {
                break;
            }
            self.stmt(cx);
        }
        self.indent -= 1;
        self.scopes.pop();
    }

    fn sync(&mut self) {
        self.line("sync;");
        self.seg = Seg::default();
    }

    fn stmt(&mut self, cx: Cx) {
        self.budget = self.budget.saturating_sub(1);
        let nest = self.budget > 2;
        let sync_here = cx.sync_ok && cx.depth < 2;
        match self.rng.gen_range(0..15) {
            0 | 1 => {
                let ty = if self.rng.gen_bool(0.6) { Ty::F } else { Ty::I };
                let e = self.expr(ty, 0);
                let name = self.name("x");
                self.line(&format!("let {name} = {e};"));
                self.scopes.last_mut().unwrap().push(Var { name, ty, uniform: false, fixed: false });
            }
            2 => {
                let cands: Vec<(String, Ty)> = self.scopes[self.floor.min(self.scopes.len())..]
                    .iter()
                    .flatten()
                    .filter(|v| !v.uniform && !v.fixed)
                    .map(|v| (v.name.clone(), v.ty))
                    .collect();
                if let Some((name, ty)) = cands.choose(&mut self.rng).cloned() {
                    let e = self.expr(ty, 0);
                    self.line(&format!("{name} = {e};"));
                } else {
                    self.stmt(cx);
                }
            }
            3 | 4 => {
                let ty = if self.rng.gen_bool(0.7) { Ty::F } else { Ty::I };
                let e = self.expr(ty, 0);
                let idx = self.own_out();
                self.line(&format!("{}[{idx}] = {e};", if ty == Ty::F { "fout" } else { "iout" }));
            }
            5 | 6 if cx.shared_write && !self.shared.is_empty() => {
                let i = self.rng.gen_range(0..self.shared.len());
                if self.seg.xread.contains(&i) {
                    if sync_here {
                        self.sync();
                    } else {
                        return;
                    }
                }
                let (name, ty) = self.shared[i].clone();
                self.seg.dirty.insert(i);
                let e = self.expr(ty, 0);
                self.line(&format!("{name}[tid] = {e};"));
            }
            7 if sync_here => self.sync(),
            8 if nest => {
                let c = self.thread_cond();
                self.line(&format!("if ({c}) {{"));
                // both branches may run in the same segment on different threads
                let inner = Cx { sync_ok: false, ..cx };
                self.block(inner, 2);
                if self.rng.gen_bool(0.4) {
                    self.line("} else {");
                    self.block(inner, 2);
                }
                self.line("}");
            }
            9 if nest && sync_here => {
                let c = self.uniform_cond();
                self.line(&format!("if ({c}) {{"));
                let inner = Cx { depth: cx.depth + 1, ..cx };
                let saved_floor = self.floor;
                self.floor = self.scopes.len();
                let start = self.seg.clone();
                self.block(inner, 3);
                let then_end = std::mem::replace(&mut self.seg, start);
                self.line("} else {");
                self.block(inner, 2);
                self.seg.join(&then_end);
                self.line("}");
                self.floor = saved_floor;
            }
            10 | 11 if nest => {
                let with_sync = sync_here && self.rng.gen_bool(0.6);
                let iv = self.name("i");
                let uniform = with_sync || self.rng.gen_bool(0.7);
                let hi = if uniform {
                    if self.rng.gen_bool(0.5) { "m".to_string() } else { self.rng.gen_range(0..4).to_string() }
                } else {
                    format!("tid % {}", self.rng.gen_range(1..4))
                };
                self.line(&format!("for {iv} = 0 .. {hi} {{"));
                self.scopes.push(vec![Var { name: iv, ty: Ty::I, uniform, fixed: true }]);
                let saved_floor = self.floor;
                let start = self.seg.clone();
                if with_sync {
                    self.floor = self.scopes.len();
                    self.block(Cx { depth: cx.depth + 1, ..cx }, 3);
                    self.indent += 1;
                    self.sync();
                    self.indent -= 1;
                    self.seg = start;
                } else {
                    self.block(Cx { sync_ok: false, shared_write: false, ..cx }, 3);
                }
                self.floor = saved_floor;
                self.scopes.pop();
                self.line("}");
            }
            12 if nest && sync_here && self.ctls < 2 => {
                let ctl = format!("ctl{}", self.ctls);
                self.ctls += 1;
                let init = format!("({} + {}) % 3", self.uniform_i(1), self.rng.gen_range(0..3));
                self.line(&format!("if (tid == 0) {{ {ctl}[0] = {init}; }}"));
                self.sync();
                self.line(&format!("while ({ctl}[0] > 0) {{"));
                let saved_floor = self.floor;
                self.floor = self.scopes.len();
                self.block(Cx { depth: cx.depth + 1, ..cx }, 3);
                self.indent += 1;
                self.sync();
                self.line(&format!("if (tid == 0) {{ {ctl}[0] = {ctl}[0] - 1; }}"));
                self.sync();
                self.indent -= 1;
                self.floor = saved_floor;
                self.line("}");
            }
            13 if sync_here => {
                // values live across a barrier that cannot be recomputed
                let a = self.name("x");
                let b = self.name("x");
                let src = match self.shared_read(Ty::F) {
                    Some(r) if self.rng.gen_bool(0.3) => r,
                    _ => "fout[gid]".to_string(),
                };
                let e = self.expr(Ty::F, 2);
                self.line(&format!("let {a} = {src} * {e};"));
                let e2 = self.expr(Ty::F, 2);
                self.line(&format!("let {b} = {a} + {e2};"));
                let c = self.name("x");
                self.line(&format!("let {c} = {a} * {b};"));
                for v in [&a, &b, &c] {
                    self.scopes.last_mut().unwrap().push(Var { name: v.clone(), ty: Ty::F, uniform: false, fixed: false });
                }
                self.sync();
                let idx = self.own_out();
                let other = if self.rng.gen_bool(0.5) { a } else { b };
                self.line(&format!("fout[{idx}] = {c} + {other};"));
            }
            _ => {
                let e = self.expr(Ty::F, 0);
                self.line(&format!("fout[gid] = {e};"));
            }
        }
    }
}

/// Generates DSL source for a random race-free kernel. `budget` bounds the
/// number of statements.
pub fn gen_random_source(seed: u64, budget: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bx = *[1i64, 2, 3, 4, 8].choose(&mut rng).unwrap();
    let by = *[1i64, 1, 2].choose(&mut rng).unwrap();
    let gx = rng.gen_range(1..=3);
    let threads = bx * by;
    let n_in = 2 * gx * threads;
    let mut shared = Vec::new();
    for i in 0..rng.gen_range(0..=2) {
        shared.push((format!("s{i}"), Ty::F));
    }
    if rng.gen_bool(0.4) {
        shared.push(("si".to_string(), Ty::I));
    }
    let mut g = Gen {
        rng,
        out: String::new(),
        indent: 1,
        bx,
        threads,
        n_in,
        gx,
        shared,
        ctls: 0,
        scopes: vec![vec![
            Var { name: "tid".into(), ty: Ty::I, uniform: false, fixed: true },
            Var { name: "gid".into(), ty: Ty::I, uniform: false, fixed: true },
        ]],
        floor: 1,
        seg: Seg::default(),
        budget,
        fresh: 0,
    };
    let cx = Cx { sync_ok: true, depth: 0, shared_write: true };
    let mut body = std::mem::take(&mut g.out);
    g.line(&format!("let tid = threadIdx.x + {} * threadIdx.y;", g.bx));
    g.line(&format!("let gid = blockIdx.x * {threads} + tid;"));
    g.scopes.push(Vec::new());
    while g.budget > 0 {
        g.stmt(cx);
    }
    let e = g.expr(Ty::F, 1);
    g.line(&format!("fout[gid] = fout[gid] + {e};"));
    body.push_str(&g.out);

    let mut src = String::new();
    let m_out = 2 * gx * threads;
    let _ = writeln!(
        src,
        "kernel fuzz{seed}(fin: f64[{n_in}], iin: i64[{n_in}], fout: f64[{m_out}], iout: i64[{m_out}], m: i64 in 0..3, k: f64) grid({gx}) block({bx}, {by}) {{"
    );
    for (name, ty) in &g.shared {
        let t = if *ty == Ty::F { "f64" } else { "i64" };
        let _ = writeln!(src, "  shared {name}: {t}[{threads}];");
    }
    for i in 0..g.ctls {
        let _ = writeln!(src, "  shared ctl{i}: i64[1];");
    }
    src.push_str(&body);
    src.push_str("}\n");
    src
}

/// Compiles [`gen_random_source`].
pub fn gen_random_kernel(seed: u64, budget: usize) -> Program {
    let src = gen_random_source(seed, budget);
    compile(&src).unwrap_or_else(|e| panic!("generated kernel does not compile: {e}\n{src}"))
}
