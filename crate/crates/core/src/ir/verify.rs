use std::collections::HashSet;
use std::fmt;

use super::{
    BinOp, BufferId, BufferKind, Carried, Expr, Op, ParLoop, ParamKind, Program, ScalarTy, UnOp,
    ValueId,
};

/// A verifier finding, naming the offending op.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub op: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.op, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Form {
    Parallel,
    Cpu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Level {
    Host,
    Block,
    Thread,
}

#[derive(Debug, Clone, Copy)]
struct Ctx {
    level: Level,
    /// Inside a team region but not inside one of its work-share loops.
    team_direct: bool,
    grids_seen: usize,
}

struct Verifier<'a> {
    p: &'a Program,
    form: Form,
    diags: Vec<Diagnostic>,
    defined: HashSet<ValueId>,
    scope: Vec<ValueId>,
    in_scope: HashSet<ValueId>,
    shared_in_scope: HashSet<BufferId>,
    thread_ivs: HashSet<ValueId>,
    thread_dependent: HashSet<ValueId>,
    roots: usize,
}

impl<'a> Verifier<'a> {
    fn diag(&mut self, op: &str, msg: impl Into<String>) {
        self.diags.push(Diagnostic {
            op: op.to_string(),
            message: msg.into(),
        });
    }

    fn define(&mut self, op: &str, v: ValueId) {
        if v.0 as usize >= self.p.values.len() {
            self.diag(op, format!("value {v} is not in the symbol table"));
            return;
        }
        if !self.defined.insert(v) {
            self.diag(op, format!("value {v} defined more than once"));
        }
        self.scope.push(v);
        self.in_scope.insert(v);
    }

    fn mark(&self) -> usize {
        self.scope.len()
    }

    fn release(&mut self, mark: usize) {
        for v in self.scope.drain(mark..) {
            self.in_scope.remove(&v);
        }
    }

    fn use_val(&mut self, op: &str, v: ValueId) -> Option<ScalarTy> {
        if v.0 as usize >= self.p.values.len() {
            self.diag(op, format!("value {v} is not in the symbol table"));
            return None;
        }
        if !self.in_scope.contains(&v) {
            self.diag(op, format!("use of {v} is not dominated by its definition"));
        }
        Some(self.p.ty(v))
    }

    fn expect(&mut self, op: &str, v: ValueId, ty: ScalarTy) {
        if let Some(t) = self.use_val(op, v) {
            if t != ty {
                self.diag(op, format!("type mismatch: {v} is {t}, expected {ty}"));
            }
        }
    }

    fn check_buf(&mut self, op: &str, b: BufferId) -> Option<ScalarTy> {
        if b.0 as usize >= self.p.buffers.len() {
            self.diag(op, format!("unknown buffer #{}", b.0));
            return None;
        }
        let info = self.p.buffer(b);
        if info.kind == BufferKind::Shared && !self.shared_in_scope.contains(&b) {
            self.diag(op, format!("shared buffer @{} used outside its block", info.name));
        }
        Some(info.elem.scalar())
    }

    fn par_header(&mut self, op: &str, l: &ParLoop) {
        if l.ivs.len() != l.extents.len() || l.ivs.is_empty() {
            self.diag(op, "induction variables and extents differ in rank");
        }
        for e in &l.extents {
            self.expect(op, *e, ScalarTy::I64);
        }
        for iv in &l.ivs {
            self.define(op, *iv);
            if self.p.ty(*iv) != ScalarTy::I64 {
                self.diag(op, "induction variable must be i64");
            }
        }
    }

    fn carried_in(&mut self, op: &str, cs: &[Carried]) {
        for c in cs {
            if let Some(t) = self.use_val(op, c.init) {
                if t != self.p.ty(c.arg) || t != self.p.ty(c.result) {
                    self.diag(op, "type mismatch in loop-carried value");
                }
            }
        }
        for c in cs {
            self.define(op, c.arg);
        }
    }

    fn yields(&mut self, op: &str, ys: &[ValueId], targets: &[ValueId]) {
        if ys.len() != targets.len() {
            self.diag(op, "yield arity mismatch");
            return;
        }
        for (y, t) in ys.iter().zip(targets) {
            self.expect(op, *y, self.p.ty(*t));
        }
    }

    fn expr_ty(&mut self, op: &str, e: &Expr) -> Option<ScalarTy> {
        match e {
            Expr::Const(l) => Some(l.ty()),
            Expr::Unary(u, a) => {
                let t = self.use_val(op, *a)?;
                match (u, t) {
                    (UnOp::Neg, ScalarTy::I64 | ScalarTy::F64) => Some(t),
                    (UnOp::Not, ScalarTy::Bool) => Some(t),
                    _ => {
                        self.diag(op, "type mismatch in unary operator");
                        None
                    }
                }
            }
            Expr::Binary(b, x, y) => {
                let tx = self.use_val(op, *x)?;
                let ty = self.use_val(op, *y)?;
                if tx != ty {
                    self.diag(op, format!("type mismatch: {tx} {} {ty}", b.mnemonic()));
                    return None;
                }
                if b.is_logic() {
                    if tx != ScalarTy::Bool {
                        self.diag(op, "type mismatch: logical operator on non-bool");
                    }
                    return Some(ScalarTy::Bool);
                }
                if b.is_cmp() {
                    if tx == ScalarTy::Bool && !matches!(b, BinOp::Eq | BinOp::Ne) {
                        self.diag(op, "type mismatch: ordered comparison on bool");
                    }
                    return Some(ScalarTy::Bool);
                }
                if tx == ScalarTy::Bool
                    || (tx == ScalarTy::F64 && matches!(b, BinOp::Shl | BinOp::Shr | BinOp::Rem))
                {
                    self.diag(op, format!("type mismatch: {} on {tx}", b.mnemonic()));
                }
                Some(tx)
            }
            Expr::Select(c, a, b) => {
                self.expect(op, *c, ScalarTy::Bool);
                let ta = self.use_val(op, *a)?;
                let tb = self.use_val(op, *b)?;
                if ta != tb {
                    self.diag(op, "type mismatch in select");
                }
                Some(ta)
            }
            Expr::Cast(t, a) => {
                self.use_val(op, *a)?;
                Some(*t)
            }
        }
    }

    /// Does `v` depend (through pure ops) on a thread induction variable?
    fn note_thread_dependence(&mut self, dst: ValueId, operands: &[ValueId]) {
        if operands
            .iter()
            .any(|o| self.thread_ivs.contains(o) || self.thread_dependent.contains(o))
        {
            self.thread_dependent.insert(dst);
        }
    }

    fn ops(&mut self, ops: &[Op], ctx: Ctx) {
        for op in ops {
            self.op(op, ctx);
        }
    }

    fn op(&mut self, op: &Op, ctx: Ctx) {
        let name = op.name();
        match op {
            Op::Pure { dst, expr } => {
                let t = self.expr_ty(name, expr);
                if let Some(t) = t {
                    if t != self.p.ty(*dst) {
                        self.diag(name, format!("type mismatch: result {dst} is not {t}"));
                    }
                }
                self.note_thread_dependence(*dst, &expr.operands());
                self.define(name, *dst);
            }
            Op::Load { dst, buf, index } => {
                self.expect(name, *index, ScalarTy::I64);
                if let Some(t) = self.check_buf(name, *buf) {
                    if t != self.p.ty(*dst) {
                        self.diag(name, "type mismatch: load result");
                    }
                }
                self.thread_dependent.insert(*dst);
                self.define(name, *dst);
            }
            Op::Store { buf, index, value } => {
                self.expect(name, *index, ScalarTy::I64);
                if let Some(t) = self.check_buf(name, *buf) {
                    self.expect(name, *value, t);
                }
            }
            Op::Barrier => {
                if self.form == Form::Cpu {
                    self.diag(name, "unlowered synchronization");
                } else if ctx.level != Level::Thread {
                    self.diag(name, "barrier outside parallel region");
                }
            }
            Op::TeamBarrier => {
                if self.form != Form::Cpu {
                    self.diag(name, "team barrier in parallel IR");
                } else if !ctx.team_direct {
                    self.diag(name, "team barrier outside a team region");
                }
            }
            Op::SharedAlloc { buf } => {
                let ok = match self.form {
                    Form::Parallel => ctx.level == Level::Block,
                    Form::Cpu => ctx.level == Level::Block,
                };
                if !ok {
                    self.diag(name, "shared allocation outside block scope");
                }
                if buf.0 as usize >= self.p.buffers.len()
                    || self.p.buffer(*buf).kind != BufferKind::Shared
                {
                    self.diag(name, "alloca of a non-shared buffer");
                } else {
                    self.shared_in_scope.insert(*buf);
                }
            }
            Op::GridPar(l) => {
                if self.form == Form::Cpu {
                    self.diag(name, "grid loop in CPU program");
                }
                if ctx.level != Level::Host {
                    self.diag(name, "grid loop must be at host level");
                }
                self.roots += 1;
                let m = self.mark();
                let saved = self.shared_in_scope.clone();
                self.par_header(name, l);
                self.ops(
                    &l.body,
                    Ctx {
                        level: Level::Block,
                        grids_seen: ctx.grids_seen + 1,
                        ..ctx
                    },
                );
                self.shared_in_scope = saved;
                self.release(m);
            }
            Op::ThreadPar(l) => {
                if self.form == Form::Cpu {
                    self.diag(name, "thread loop in CPU program");
                }
                match ctx.level {
                    Level::Block => {}
                    Level::Thread => self.diag(name, "nested thread.par"),
                    Level::Host => self.diag(name, "thread loop outside a grid loop"),
                }
                for e in &l.extents {
                    if self.thread_ivs.contains(e) || self.thread_dependent.contains(e) {
                        self.diag(name, "non-uniform extent");
                    }
                }
                let m = self.mark();
                self.par_header(name, l);
                let added: Vec<ValueId> = l.ivs.clone();
                self.thread_ivs.extend(added.iter().copied());
                self.ops(
                    &l.body,
                    Ctx {
                        level: Level::Thread,
                        ..ctx
                    },
                );
                for iv in added {
                    self.thread_ivs.remove(&iv);
                }
                self.release(m);
            }
            Op::TeamRegion(t) => {
                if self.form != Form::Cpu {
                    self.diag(name, "team region in parallel IR");
                }
                if ctx.level == Level::Host {
                    self.roots += 1;
                }
                let m = self.mark();
                self.ops(
                    &t.body,
                    Ctx {
                        team_direct: true,
                        ..ctx
                    },
                );
                self.release(m);
            }
            Op::WorkShare(l) | Op::SerialNest(l) => {
                if self.form != Form::Cpu {
                    self.diag(name, "CPU loop in parallel IR");
                }
                if matches!(op, Op::WorkShare(_)) && !ctx.team_direct {
                    self.diag(name, "work-share loop outside a team region");
                }
                let m = self.mark();
                let saved = self.shared_in_scope.clone();
                self.par_header(name, l);
                let level = match ctx.level {
                    Level::Host => Level::Block,
                    _ => Level::Thread,
                };
                self.ops(
                    &l.body,
                    Ctx {
                        level,
                        team_direct: false,
                        ..ctx
                    },
                );
                self.shared_in_scope = saved;
                self.release(m);
            }
            Op::For(f) => {
                self.expect(name, f.lower, ScalarTy::I64);
                self.expect(name, f.upper, ScalarTy::I64);
                let m = self.mark();
                self.define(name, f.iv);
                self.carried_in(name, &f.carried);
                self.ops(&f.body, ctx);
                let results: Vec<ValueId> = f.carried.iter().map(|c| c.result).collect();
                self.yields(name, &f.yields, &results);
                self.release(m);
                for r in results {
                    self.define(name, r);
                }
            }
            Op::While(w) => {
                let m = self.mark();
                self.carried_in(name, &w.carried);
                for c in &w.cond_ops {
                    if !matches!(c, Op::Pure { .. } | Op::Load { .. }) {
                        self.diag(name, "condition region may only compute values");
                    }
                }
                self.ops(&w.cond_ops, ctx);
                self.expect(name, w.cond, ScalarTy::Bool);
                self.ops(&w.body, ctx);
                let results: Vec<ValueId> = w.carried.iter().map(|c| c.result).collect();
                self.yields(name, &w.yields, &results);
                self.release(m);
                for r in results {
                    self.define(name, r);
                }
            }
            Op::If(i) => {
                self.expect(name, i.cond, ScalarTy::Bool);
                let m = self.mark();
                self.ops(&i.then_ops, ctx);
                self.yields(name, &i.then_yields, &i.results);
                self.release(m);
                let m = self.mark();
                self.ops(&i.else_ops, ctx);
                self.yields(name, &i.else_yields, &i.results);
                self.release(m);
                for r in &i.results {
                    self.define(name, *r);
                }
            }
        }
    }
}

fn run(p: &Program, form: Form) -> Result<(), Vec<Diagnostic>> {
    let mut v = Verifier {
        p,
        form,
        diags: Vec::new(),
        defined: HashSet::new(),
        scope: Vec::new(),
        in_scope: HashSet::new(),
        shared_in_scope: HashSet::new(),
        thread_ivs: HashSet::new(),
        thread_dependent: HashSet::new(),
        roots: 0,
    };
    for param in &p.params {
        match &param.kind {
            ParamKind::Scalar { value, .. } => v.define("param", *value),
            ParamKind::Buffer { buf, .. } => {
                if buf.0 as usize >= p.buffers.len() || p.buffer(*buf).kind != BufferKind::Param {
                    v.diag("param", format!("parameter {} is not a global buffer", param.name));
                }
            }
        }
    }
    v.ops(
        &p.body,
        Ctx {
            level: Level::Host,
            team_direct: false,
            grids_seen: 0,
        },
    );
    if form == Form::Parallel && v.roots != 1 {
        v.diag(
            "kernel",
            format!("expected exactly one grid loop, found {}", v.roots),
        );
    }
    if v.diags.is_empty() {
        Ok(())
    } else {
        Err(v.diags)
    }
}

/// Checks the parallel-IR invariants: SSA dominance, typing, a single grid
/// root, barriers only under thread loops, block-scoped shared memory and
/// uniform thread extents.
pub fn verify(p: &Program) -> Result<(), Vec<Diagnostic>> {
    run(p, Form::Parallel)
}

/// Checks the lowered CPU form: no GPU barriers or parallel-IR loops, team
/// barriers and work-share loops only directly inside team regions.
pub fn verify_cpu(p: &Program) -> Result<(), Vec<Diagnostic>> {
    run(p, Form::Cpu)
}
