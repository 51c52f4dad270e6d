//! The SIMT reference interpreter and the sequential CPU interpreter.

use std::collections::HashMap;

use serde::Serialize;

use super::data::{buffer_len, KernelData};
use super::value::{as_bool, as_i64, eval_expr_lits};
use super::ExecError;
use crate::effects::barrier_paths;
use crate::ir::{
    BufferId, BufferKind, Expr, ForLoop, IfOp, Lit, Op, ParLoop, ParamKind, Program, ScalarTy,
    ValueId, WhileLoop,
};

/// Execution counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub team_launches: u64,
    pub team_barriers: u64,
    pub gpu_barrier_waits: u64,
    /// Non-constant pure ops executed.
    pub arith_ops: u64,
    pub workshare_execs: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelOutput {
    pub data: KernelData,
    pub counters: Counters,
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Run the threads of each segment in reverse order.
    pub reverse: bool,
    pub fuel: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            reverse: false,
            fuel: 200_000_000,
        }
    }
}

/// SSA value environment.
#[derive(Debug, Clone)]
pub struct Env {
    vals: Vec<Option<Lit>>,
}

impl Env {
    fn new(n: usize) -> Self {
        Env { vals: vec![None; n] }
    }

    pub fn get(&self, p: &Program, v: ValueId) -> Result<Lit, ExecError> {
        self.vals[v.0 as usize]
            .ok_or_else(|| ExecError::Undefined(format!("{}.{}", p.value_name(v), v.0)))
    }

    pub fn lookup(&self, v: ValueId) -> Option<Lit> {
        self.vals.get(v.0 as usize).copied().flatten()
    }

    fn set(&mut self, v: ValueId, l: Lit) {
        self.vals[v.0 as usize] = Some(l);
    }
}

/// A traced memory access.
pub struct Event<'a> {
    pub op: &'a Op,
    pub buf: BufferId,
    pub index: i64,
    pub write: bool,
    pub thread: Option<[i64; 3]>,
    pub block: Option<[i64; 3]>,
    /// Barrier-free phase the access belongs to.
    pub segment: u64,
    pub env: &'a Env,
}

pub type Observer<'o> = &'o mut dyn FnMut(&Event<'_>);

fn ids3(v: &[i64]) -> [i64; 3] {
    let mut r = [0; 3];
    for (i, x) in v.iter().take(3).enumerate() {
        r[i] = *x;
    }
    r
}

/// Iteration points of a parallel space, first dimension fastest.
pub fn space(ext: &[i64]) -> Vec<Vec<i64>> {
    if ext.iter().any(|e| *e <= 0) {
        return Vec::new();
    }
    let total: i64 = ext.iter().product();
    (0..total)
        .map(|mut lin| {
            ext.iter()
                .map(|e| {
                    let x = lin % e;
                    lin /= e;
                    x
                })
                .collect()
        })
        .collect()
}

struct Machine<'p, 'o> {
    p: &'p Program,
    mem: Vec<Vec<Lit>>,
    counters: Counters,
    fuel: u64,
    opts: RunOptions,
    simt: bool,
    obs: Option<Observer<'o>>,
    block: Option<[i64; 3]>,
    thread: Option<[i64; 3]>,
    segment: u64,
}

enum FrameKind<'a> {
    Plain,
    For { f: &'a ForLoop, iv: i64, upper: i64 },
    While(&'a WhileLoop),
    If { i: &'a IfOp, then: bool },
}

struct Frame<'a> {
    ops: &'a [Op],
    pc: usize,
    iter: u64,
    kind: FrameKind<'a>,
}

struct Thread<'a> {
    ids: [i64; 3],
    env: Env,
    frames: Vec<Frame<'a>>,
    done: bool,
}

type BarrierId = (usize, Vec<u64>);

impl<'p, 'o> Machine<'p, 'o> {
    fn burn(&mut self) -> Result<(), ExecError> {
        if self.fuel == 0 {
            return Err(ExecError::Fuel);
        }
        self.fuel -= 1;
        Ok(())
    }

    fn index(&self, buf: BufferId, idx: Lit) -> Result<usize, ExecError> {
        let i = as_i64(idx)?;
        let len = self.mem[buf.0 as usize].len();
        if i < 0 || i as usize >= len {
            let who = match (self.block, self.thread) {
                (Some(b), Some(t)) => format!(" in block {b:?} thread {t:?}"),
                (Some(b), None) => format!(" in block {b:?}"),
                _ => String::new(),
            };
            return Err(ExecError::OutOfBounds {
                buf: self.p.buffer(buf).name.clone(),
                index: i,
                len,
                who,
            });
        }
        Ok(i as usize)
    }

    fn notify(&mut self, op: &Op, buf: BufferId, index: usize, write: bool, env: &Env) {
        if let Some(obs) = self.obs.as_mut() {
            obs(&Event {
                op,
                buf,
                index: index as i64,
                write,
                thread: self.thread,
                block: self.block,
                segment: self.segment,
                env,
            });
        }
    }

    fn extents(&self, env: &Env, l: &ParLoop) -> Result<Vec<i64>, ExecError> {
        l.extents.iter().map(|v| as_i64(env.get(self.p, *v)?)).collect()
    }

    /// Executes one op without suspension points.
    fn leaf(&mut self, env: &mut Env, op: &'p Op) -> Result<(), ExecError> {
        let p = self.p;
        match op {
            Op::Pure { dst, expr } => {
                if !matches!(expr, Expr::Const(_)) {
                    self.counters.arith_ops += 1;
                }
                let vals = expr
                    .operands()
                    .into_iter()
                    .map(|v| env.get(p, v))
                    .collect::<Result<Vec<_>, _>>()?;
                let r = eval_expr_lits(expr, &vals, p.ty(*dst))?;
                env.set(*dst, r);
            }
            Op::Load { dst, buf, index } => {
                let i = self.index(*buf, env.get(p, *index)?)?;
                self.notify(op, *buf, i, false, env);
                let v = self.mem[buf.0 as usize][i];
                env.set(*dst, v);
            }
            Op::Store { buf, index, value } => {
                let i = self.index(*buf, env.get(p, *index)?)?;
                let v = env.get(p, *value)?;
                if v.ty() != p.buffer(*buf).elem.scalar() {
                    return Err(ExecError::Type(format!(
                        "store of {:?} into @{}",
                        v,
                        p.buffer(*buf).name
                    )));
                }
                self.notify(op, *buf, i, true, env);
                self.mem[buf.0 as usize][i] = v;
            }
            Op::SharedAlloc { buf } => {
                let info = p.buffer(*buf);
                let zero = match info.elem.scalar() {
                    ScalarTy::F64 => Lit::F64(0.0),
                    _ => Lit::I64(0),
                };
                self.mem[buf.0 as usize] = vec![zero; info.extent.unwrap_or(0)];
            }
            Op::TeamBarrier => self.counters.team_barriers += 1,
            Op::Barrier => return Err(ExecError::Unlowered),
            _ => unreachable!("leaf called on region op"),
        }
        Ok(())
    }

    fn run_ops(&mut self, env: &mut Env, ops: &'p [Op]) -> Result<(), ExecError> {
        for op in ops {
            self.run_op(env, op)?;
        }
        Ok(())
    }

    fn bind(&self, env: &mut Env, dsts: impl Iterator<Item = ValueId>, srcs: &[ValueId]) -> Result<(), ExecError> {
        let vals = srcs
            .iter()
            .map(|v| env.get(self.p, *v))
            .collect::<Result<Vec<_>, _>>()?;
        for (d, v) in dsts.zip(vals) {
            env.set(d, v);
        }
        Ok(())
    }

    fn run_op(&mut self, env: &mut Env, op: &'p Op) -> Result<(), ExecError> {
        self.burn()?;
        let p = self.p;
        match op {
            Op::GridPar(l) => {
                let ext = self.extents(env, l)?;
                for ids in space(&ext) {
                    let mut benv = env.clone();
                    for (iv, x) in l.ivs.iter().zip(&ids) {
                        benv.set(*iv, Lit::I64(*x));
                    }
                    self.block = Some(ids3(&ids));
                    self.run_ops(&mut benv, &l.body)?;
                }
                self.block = None;
            }
            Op::ThreadPar(l) if self.simt => {
                self.run_threads(env, l)?;
            }
            Op::ThreadPar(l) | Op::WorkShare(l) | Op::SerialNest(l) => {
                if matches!(op, Op::WorkShare(_)) {
                    self.counters.workshare_execs += 1;
                }
                let ext = self.extents(env, l)?;
                for ids in space(&ext) {
                    for (iv, x) in l.ivs.iter().zip(&ids) {
                        env.set(*iv, Lit::I64(*x));
                    }
                    self.run_ops(env, &l.body)?;
                }
            }
            Op::For(f) => {
                let lo = as_i64(env.get(p, f.lower)?)?;
                let hi = as_i64(env.get(p, f.upper)?)?;
                let inits: Vec<ValueId> = f.carried.iter().map(|c| c.init).collect();
                self.bind(env, f.carried.iter().map(|c| c.arg), &inits)?;
                let mut i = lo;
                while i < hi {
                    self.burn()?;
                    env.set(f.iv, Lit::I64(i));
                    self.run_ops(env, &f.body)?;
                    self.bind(env, f.carried.iter().map(|c| c.arg), &f.yields)?;
                    i += 1;
                }
                let args: Vec<ValueId> = f.carried.iter().map(|c| c.arg).collect();
                self.bind(env, f.carried.iter().map(|c| c.result), &args)?;
            }
            Op::While(w) => {
                let inits: Vec<ValueId> = w.carried.iter().map(|c| c.init).collect();
                self.bind(env, w.carried.iter().map(|c| c.arg), &inits)?;
                loop {
                    self.burn()?;
                    self.run_ops(env, &w.cond_ops)?;
                    if !as_bool(env.get(p, w.cond)?)? {
                        break;
                    }
                    self.run_ops(env, &w.body)?;
                    self.bind(env, w.carried.iter().map(|c| c.arg), &w.yields)?;
                }
                let args: Vec<ValueId> = w.carried.iter().map(|c| c.arg).collect();
                self.bind(env, w.carried.iter().map(|c| c.result), &args)?;
            }
            Op::If(i) => {
                let c = as_bool(env.get(p, i.cond)?)?;
                let (ops, ys) = if c {
                    (&i.then_ops, &i.then_yields)
                } else {
                    (&i.else_ops, &i.else_yields)
                };
                self.run_ops(env, ops)?;
                self.bind(env, i.results.iter().copied(), ys)?;
            }
            Op::TeamRegion(t) => {
                self.counters.team_launches += 1;
                self.run_ops(env, &t.body)?;
            }
            _ => self.leaf(env, op)?,
        }
        Ok(())
    }

    /// Runs a thread until its next barrier (`Some`) or its end (`None`).
    fn step_thread(&mut self, th: &mut Thread<'p>) -> Result<Option<BarrierId>, ExecError> {
        let p = self.p;
        loop {
            let Some(fr) = th.frames.last_mut() else {
                return Ok(None);
            };
            if fr.pc < fr.ops.len() {
                let op = &fr.ops[fr.pc];
                fr.pc += 1;
                match op {
                    Op::Barrier => {
                        self.burn()?;
                        let iters = th.frames.iter().map(|f| f.iter).collect();
                        return Ok(Some((op as *const Op as usize, iters)));
                    }
                    Op::For(f) if op.contains_barrier() => {
                        self.burn()?;
                        let lo = as_i64(th.env.get(p, f.lower)?)?;
                        let hi = as_i64(th.env.get(p, f.upper)?)?;
                        let inits: Vec<ValueId> = f.carried.iter().map(|c| c.init).collect();
                        self.bind(&mut th.env, f.carried.iter().map(|c| c.arg), &inits)?;
                        if lo < hi {
                            th.env.set(f.iv, Lit::I64(lo));
                            th.frames.push(Frame {
                                ops: &f.body,
                                pc: 0,
                                iter: 0,
                                kind: FrameKind::For { f, iv: lo, upper: hi },
                            });
                        } else {
                            self.bind(&mut th.env, f.carried.iter().map(|c| c.result), &inits)?;
                        }
                    }
                    Op::While(w) if op.contains_barrier() => {
                        self.burn()?;
                        let inits: Vec<ValueId> = w.carried.iter().map(|c| c.init).collect();
                        self.bind(&mut th.env, w.carried.iter().map(|c| c.arg), &inits)?;
                        self.run_ops(&mut th.env, &w.cond_ops)?;
                        if as_bool(th.env.get(p, w.cond)?)? {
                            th.frames.push(Frame {
                                ops: &w.body,
                                pc: 0,
                                iter: 0,
                                kind: FrameKind::While(w),
                            });
                        } else {
                            self.bind(&mut th.env, w.carried.iter().map(|c| c.result), &inits)?;
                        }
                    }
                    Op::If(i) if op.contains_barrier() => {
                        self.burn()?;
                        let then = as_bool(th.env.get(p, i.cond)?)?;
                        th.frames.push(Frame {
                            ops: if then { &i.then_ops } else { &i.else_ops },
                            pc: 0,
                            iter: 0,
                            kind: FrameKind::If { i, then },
                        });
                    }
                    _ => self.run_op(&mut th.env, op)?,
                }
                continue;
            }
            let fr = th.frames.pop().unwrap();
            match fr.kind {
                FrameKind::Plain => return Ok(None),
                FrameKind::For { f, iv, upper } => {
                    self.bind(&mut th.env, f.carried.iter().map(|c| c.arg), &f.yields)?;
                    if iv + 1 < upper {
                        self.burn()?;
                        th.env.set(f.iv, Lit::I64(iv + 1));
                        th.frames.push(Frame {
                            ops: fr.ops,
                            pc: 0,
                            iter: fr.iter + 1,
                            kind: FrameKind::For { f, iv: iv + 1, upper },
                        });
                    } else {
                        let args: Vec<ValueId> = f.carried.iter().map(|c| c.arg).collect();
                        self.bind(&mut th.env, f.carried.iter().map(|c| c.result), &args)?;
                    }
                }
                FrameKind::While(w) => {
                    self.bind(&mut th.env, w.carried.iter().map(|c| c.arg), &w.yields)?;
                    self.burn()?;
                    self.run_ops(&mut th.env, &w.cond_ops)?;
                    if as_bool(th.env.get(p, w.cond)?)? {
                        th.frames.push(Frame {
                            ops: fr.ops,
                            pc: 0,
                            iter: fr.iter + 1,
                            kind: FrameKind::While(w),
                        });
                    } else {
                        let args: Vec<ValueId> = w.carried.iter().map(|c| c.arg).collect();
                        self.bind(&mut th.env, w.carried.iter().map(|c| c.result), &args)?;
                    }
                }
                FrameKind::If { i, then } => {
                    let ys = if then { &i.then_yields } else { &i.else_yields };
                    self.bind(&mut th.env, i.results.iter().copied(), ys)?;
                }
            }
        }
    }

    fn run_threads(&mut self, env: &Env, l: &'p ParLoop) -> Result<(), ExecError> {
        let ext = self.extents(env, l)?;
        let mut threads: Vec<Thread<'p>> = space(&ext)
            .into_iter()
            .map(|ids| {
                let mut tenv = env.clone();
                for (iv, x) in l.ivs.iter().zip(&ids) {
                    tenv.set(*iv, Lit::I64(*x));
                }
                Thread {
                    ids: ids3(&ids),
                    env: tenv,
                    frames: vec![Frame {
                        ops: &l.body,
                        pc: 0,
                        iter: 0,
                        kind: FrameKind::Plain,
                    }],
                    done: false,
                }
            })
            .collect();
        let mut order: Vec<usize> = (0..threads.len()).collect();
        if self.opts.reverse {
            order.reverse();
        }
        let names: HashMap<usize, usize> = barrier_paths(&l.body)
            .iter()
            .enumerate()
            .map(|(k, path)| (crate::effects::op_at(&l.body, path) as *const Op as usize, k + 1))
            .collect();
        let describe = |id: &BarrierId| match names.get(&id.0) {
            Some(k) => format!("barrier #{k} (iteration {:?})", &id.1[1..]),
            None => "barrier".to_string(),
        };
        loop {
            self.segment += 1;
            let mut waits: Vec<Option<BarrierId>> = vec![None; threads.len()];
            for &i in &order {
                if threads[i].done {
                    continue;
                }
                self.thread = Some(threads[i].ids);
                let mut th = std::mem::replace(
                    &mut threads[i],
                    Thread {
                        ids: [0; 3],
                        env: Env::new(0),
                        frames: Vec::new(),
                        done: true,
                    },
                );
                let r = self.step_thread(&mut th);
                threads[i] = th;
                match r? {
                    None => threads[i].done = true,
                    Some(id) => waits[i] = Some(id),
                }
            }
            self.thread = None;
            let waiting: Vec<usize> = (0..threads.len()).filter(|i| waits[*i].is_some()).collect();
            if waiting.is_empty() {
                return Ok(());
            }
            if waiting.len() != threads.len() {
                let finished = (0..threads.len()).find(|i| waits[*i].is_none()).unwrap();
                let w = waits[waiting[0]].as_ref().unwrap();
                return Err(ExecError::Divergence(format!(
                    "thread {:?} exited while thread {:?} waits at {}",
                    threads[finished].ids,
                    threads[waiting[0]].ids,
                    describe(w)
                )));
            }
            let first = waits[0].as_ref().unwrap();
            if let Some(j) = waiting.iter().find(|j| waits[**j].as_ref() != Some(first)) {
                return Err(ExecError::Divergence(format!(
                    "thread {:?} waits at {} but thread {:?} waits at {}",
                    threads[0].ids,
                    describe(first),
                    threads[*j].ids,
                    describe(waits[*j].as_ref().unwrap())
                )));
            }
            self.counters.gpu_barrier_waits += 1;
        }
    }
}

fn run(
    p: &Program,
    input: &KernelData,
    simt: bool,
    opts: RunOptions,
    obs: Option<Observer<'_>>,
) -> Result<KernelOutput, ExecError> {
    let mut env = Env::new(p.values.len());
    let mut mem = vec![Vec::new(); p.buffers.len()];
    for param in &p.params {
        match &param.kind {
            ParamKind::Scalar { value, range } => {
                let l = *input
                    .scalars
                    .get(&param.name)
                    .ok_or_else(|| ExecError::Input(format!("missing scalar {}", param.name)))?;
                if l.ty() != p.ty(*value) {
                    return Err(ExecError::Input(format!("scalar {} has the wrong type", param.name)));
                }
                if let (Some((lo, hi)), Lit::I64(x)) = (range, l) {
                    if x < *lo || x > *hi {
                        return Err(ExecError::Input(format!(
                            "scalar {} = {x} outside {lo}..{hi}",
                            param.name
                        )));
                    }
                }
                env.set(*value, l);
            }
            ParamKind::Buffer { buf, .. } => {
                let vals = input
                    .buffers
                    .get(&param.name)
                    .ok_or_else(|| ExecError::Input(format!("missing buffer {}", param.name)))?;
                if let Some(n) = buffer_len(p, &param.name, &input.scalars) {
                    if p.params.iter().any(|q| q.name == param.name && matches!(q.kind, ParamKind::Buffer { size: Some(_), .. })) && n != vals.len() {
                        return Err(ExecError::Input(format!(
                            "buffer {} has {} elements, expected {n}",
                            param.name,
                            vals.len()
                        )));
                    }
                }
                let elem = p.buffer(*buf).elem.scalar();
                if vals.iter().any(|v| v.ty() != elem) {
                    return Err(ExecError::Input(format!("buffer {} has the wrong type", param.name)));
                }
                mem[buf.0 as usize] = vals.clone();
            }
        }
    }
    let mut m = Machine {
        p,
        mem,
        counters: Counters::default(),
        fuel: opts.fuel,
        opts,
        simt,
        obs,
        block: None,
        thread: None,
        segment: 0,
    };
    m.run_ops(&mut env, &p.body)?;
    let mut data = KernelData {
        scalars: input.scalars.clone(),
        buffers: Default::default(),
    };
    for (name, buf) in p.param_buffers() {
        debug_assert_eq!(p.buffer(buf).kind, BufferKind::Param);
        data.buffers
            .insert(name.to_string(), std::mem::take(&mut m.mem[buf.0 as usize]));
    }
    Ok(KernelOutput {
        data,
        counters: m.counters,
    })
}

/// Reference SIMT execution with the canonical schedule.
pub fn run_simt(p: &Program, input: &KernelData) -> Result<KernelOutput, ExecError> {
    run(p, input, true, RunOptions::default(), None)
}

pub fn run_simt_with(
    p: &Program,
    input: &KernelData,
    opts: RunOptions,
    obs: Option<Observer<'_>>,
) -> Result<KernelOutput, ExecError> {
    run(p, input, true, opts, obs)
}

/// Sequential execution of a barrier-free program (typically lowered).
pub fn run_cpu(p: &Program, input: &KernelData) -> Result<KernelOutput, ExecError> {
    run(p, input, false, RunOptions::default(), None)
}

pub fn run_cpu_with(
    p: &Program,
    input: &KernelData,
    opts: RunOptions,
    obs: Option<Observer<'_>>,
) -> Result<KernelOutput, ExecError> {
    run(p, input, false, opts, obs)
}
