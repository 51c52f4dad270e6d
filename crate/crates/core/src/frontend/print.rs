//! Canonical textual form of the IR.

use std::fmt::Write;

use crate::ir::{
    BufferId, Carried, Expr, Lit, Op, ParLoop, ParamKind, Program, SizeExpr, SizeOp, UnOp, ValueId,
};

/// Optional per-op annotation printed as a `;` comment line above the op.
pub type Annotate<'a> = &'a dyn Fn(&Op) -> Option<String>;

struct Printer<'a> {
    p: &'a Program,
    out: String,
    annotate: Option<Annotate<'a>>,
}

pub fn size_expr_text(e: &SizeExpr) -> String {
    match e {
        SizeExpr::Const(c) => c.to_string(),
        SizeExpr::Param(n) => n.clone(),
        SizeExpr::Bin(op, a, b) => {
            let o = match op {
                SizeOp::Add => "+",
                SizeOp::Sub => "-",
                SizeOp::Mul => "*",
                SizeOp::Div => "/",
            };
            format!("({} {o} {})", size_expr_text(a), size_expr_text(b))
        }
    }
}

pub fn lit_text(l: Lit) -> String {
    match l {
        Lit::I64(v) => v.to_string(),
        Lit::F64(v) => format!("{v:?}"),
        Lit::Bool(b) => b.to_string(),
    }
}

impl Printer<'_> {
    fn v(&self, v: ValueId) -> String {
        let name = self.p.value_name(v);
        let name = if name.is_empty() { "v" } else { name };
        format!("%{name}.{}", v.0)
    }

    fn vs(&self, vs: &[ValueId]) -> String {
        vs.iter().map(|v| self.v(*v)).collect::<Vec<_>>().join(", ")
    }

    fn typed(&self, vs: &[ValueId]) -> String {
        vs.iter()
            .map(|v| format!("{}: {}", self.v(*v), self.p.ty(*v)))
            .collect::<Vec<_>>()
            .join(", ")
    }

    fn b(&self, b: BufferId) -> String {
        format!("@{}", self.p.buffer(b).name)
    }

    fn line(&mut self, depth: usize, s: &str) {
        for _ in 0..depth {
            self.out.push_str("  ");
        }
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn iter_args(&self, cs: &[Carried]) -> String {
        if cs.is_empty() {
            return String::new();
        }
        let args: Vec<String> = cs
            .iter()
            .map(|c| format!("{} = {}", self.v(c.arg), self.v(c.init)))
            .collect();
        format!(" iter({})", args.join(", "))
    }

    fn results_prefix(&self, rs: &[ValueId]) -> String {
        if rs.is_empty() {
            String::new()
        } else {
            format!("{} = ", self.typed(rs))
        }
    }

    fn yields(&mut self, depth: usize, ys: &[ValueId], force: bool) {
        if force {
            let s = format!("yield {}", self.vs(ys));
            self.line(depth, s.trim_end());
        }
    }

    fn par(&mut self, depth: usize, kw: &str, l: &ParLoop) {
        let s = format!("{kw} ({}) in ({}) {{", self.vs(&l.ivs), self.vs(&l.extents));
        self.line(depth, &s);
        self.ops(depth + 1, &l.body);
        self.line(depth, "}");
    }

    fn ops(&mut self, depth: usize, ops: &[Op]) {
        for op in ops {
            self.op(depth, op);
        }
    }

    fn op(&mut self, depth: usize, op: &Op) {
        if let Some(a) = self.annotate.and_then(|f| f(op)) {
            for l in a.lines() {
                self.line(depth, &format!("; {l}"));
            }
        }
        match op {
            Op::Pure { dst, expr } => {
                let rhs = match expr {
                    Expr::Const(l) => format!("const {}", lit_text(*l)),
                    Expr::Unary(UnOp::Neg, a) => format!("neg {}", self.v(*a)),
                    Expr::Unary(UnOp::Not, a) => format!("not {}", self.v(*a)),
                    Expr::Binary(op, a, b) => {
                        format!("{} {}, {}", op.mnemonic(), self.v(*a), self.v(*b))
                    }
                    Expr::Select(c, a, b) => {
                        format!("select {}, {}, {}", self.v(*c), self.v(*a), self.v(*b))
                    }
                    Expr::Cast(t, a) => format!("cast {t} {}", self.v(*a)),
                };
                let s = format!("{} = {rhs}", self.v(*dst));
                self.line(depth, &s);
            }
            Op::Load { dst, buf, index } => {
                let s = format!("{} = load {}[{}]", self.v(*dst), self.b(*buf), self.v(*index));
                self.line(depth, &s);
            }
            Op::Store { buf, index, value } => {
                let s = format!("store {}, {}[{}]", self.v(*value), self.b(*buf), self.v(*index));
                self.line(depth, &s);
            }
            Op::Barrier => self.line(depth, "barrier"),
            Op::TeamBarrier => self.line(depth, "team.barrier"),
            Op::SharedAlloc { buf } => {
                let info = self.p.buffer(*buf);
                let s = format!(
                    "alloca shared {}: {}[{}]",
                    self.b(*buf),
                    info.elem,
                    info.extent.unwrap_or(0)
                );
                self.line(depth, &s);
            }
            Op::GridPar(l) => self.par(depth, "grid.par", l),
            Op::ThreadPar(l) => self.par(depth, "thread.par", l),
            Op::WorkShare(l) => self.par(depth, "workshare", l),
            Op::SerialNest(l) => self.par(depth, "serial.nest", l),
            Op::TeamRegion(t) => {
                let s = match t.threads {
                    Some(n) => format!("team threads({n}) {{"),
                    None => "team {".to_string(),
                };
                self.line(depth, &s);
                self.ops(depth + 1, &t.body);
                self.line(depth, "}");
            }
            Op::For(f) => {
                let results: Vec<ValueId> = f.carried.iter().map(|c| c.result).collect();
                let s = format!(
                    "{}for {} = {} to {}{} {{",
                    self.results_prefix(&results),
                    self.v(f.iv),
                    self.v(f.lower),
                    self.v(f.upper),
                    self.iter_args(&f.carried)
                );
                self.line(depth, &s);
                self.ops(depth + 1, &f.body);
                self.yields(depth + 1, &f.yields, !f.carried.is_empty());
                self.line(depth, "}");
            }
            Op::While(w) => {
                let results: Vec<ValueId> = w.carried.iter().map(|c| c.result).collect();
                let s = format!(
                    "{}while{} {{",
                    self.results_prefix(&results),
                    self.iter_args(&w.carried)
                );
                self.line(depth, &s);
                self.ops(depth + 1, &w.cond_ops);
                let c = format!("condition {}", self.v(w.cond));
                self.line(depth + 1, &c);
                self.line(depth, "} do {");
                self.ops(depth + 1, &w.body);
                self.yields(depth + 1, &w.yields, !w.carried.is_empty());
                self.line(depth, "}");
            }
            Op::If(i) => {
                let s = format!("{}if {} {{", self.results_prefix(&i.results), self.v(i.cond));
                self.line(depth, &s);
                let force = !i.results.is_empty();
                self.ops(depth + 1, &i.then_ops);
                self.yields(depth + 1, &i.then_yields, force);
                if force || !i.else_ops.is_empty() {
                    self.line(depth, "} else {");
                    self.ops(depth + 1, &i.else_ops);
                    self.yields(depth + 1, &i.else_yields, force);
                }
                self.line(depth, "}");
            }
        }
    }
}

pub fn print_ir(p: &Program) -> String {
    print_ir_annotated(p, None)
}

pub fn print_ir_annotated(p: &Program, annotate: Option<Annotate<'_>>) -> String {
    let mut pr = Printer {
        p,
        out: String::new(),
        annotate,
    };
    let params: Vec<String> = p
        .params
        .iter()
        .map(|param| match &param.kind {
            ParamKind::Buffer { buf, size } => format!(
                "{}: {}[{}]",
                pr.b(*buf),
                p.buffer(*buf).elem,
                size.as_ref().map(size_expr_text).unwrap_or_default()
            ),
            ParamKind::Scalar { value, range } => {
                let mut s = format!("{}: {}", pr.v(*value), p.ty(*value));
                if let Some((lo, hi)) = range {
                    let _ = write!(s, " in {lo}..{hi}");
                }
                s
            }
        })
        .collect();
    let header = format!(
        "{}kernel {}({}) {{",
        if p.mayalias { "mayalias " } else { "" },
        p.name,
        params.join(", ")
    );
    pr.line(0, &header);
    pr.ops(1, &p.body);
    pr.line(0, "}");
    pr.out
}
