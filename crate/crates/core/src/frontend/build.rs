//! Lowers a checked [`SourceKernel`] into the launch form
//! `grid.par { alloca shared*; thread.par { body } }` in SSA.

use std::collections::{BTreeSet, HashMap};

use super::ast::*;
use crate::ir::{
    BinOp, BufferInfo, BufferKind, Carried, Expr as IrExpr, ForLoop, IfOp, Lit, Op, Param,
    ParLoop, ParamKind, Program, ScalarTy, SizeExpr, SizeOp, ValueId, WhileLoop,
};

struct Builder {
    p: Program,
    scopes: Vec<HashMap<String, ValueId>>,
    bufs: HashMap<String, crate::ir::BufferId>,
    tid: [ValueId; 3],
    bid: [ValueId; 3],
    bdim: [ValueId; 3],
    gdim: [ValueId; 3],
}

const DIMS: [&str; 3] = ["x", "y", "z"];

fn konst(p: &mut Program, out: &mut Vec<Op>, name: &str, l: Lit) -> ValueId {
    let dst = p.new_value(name, l.ty());
    out.push(Op::Pure {
        dst,
        expr: IrExpr::Const(l),
    });
    dst
}

fn host_size(
    p: &mut Program,
    out: &mut Vec<Op>,
    e: &SizeExpr,
    scalars: &HashMap<String, ValueId>,
    name: &str,
) -> ValueId {
    match e {
        SizeExpr::Const(c) => konst(p, out, name, Lit::I64(*c)),
        SizeExpr::Param(n) => scalars[n],
        SizeExpr::Bin(op, a, b) => {
            let a = host_size(p, out, a, scalars, "t");
            let b = host_size(p, out, b, scalars, "t");
            let op = match op {
                SizeOp::Add => BinOp::Add,
                SizeOp::Sub => BinOp::Sub,
                SizeOp::Mul => BinOp::Mul,
                SizeOp::Div => BinOp::Div,
            };
            let dst = p.new_value(name, ScalarTy::I64);
            out.push(Op::Pure {
                dst,
                expr: IrExpr::Binary(op, a, b),
            });
            dst
        }
    }
}

/// Outer locals assigned anywhere in `ss`, in first-assignment order.
fn assigned_outer(ss: &[Stmt]) -> Vec<String> {
    fn walk(ss: &[Stmt], bound: &mut Vec<BTreeSet<String>>, out: &mut Vec<String>) {
        bound.push(BTreeSet::new());
        for s in ss {
            match &s.kind {
                StmtKind::Let(n, ..) => {
                    bound.last_mut().unwrap().insert(n.clone());
                }
                StmtKind::Assign(n, _) => {
                    if !bound.iter().any(|b| b.contains(n)) && !out.contains(n) {
                        out.push(n.clone());
                    }
                }
                StmtKind::If(_, t, e) => {
                    walk(t, bound, out);
                    walk(e, bound, out);
                }
                StmtKind::For(v, _, _, body) => {
                    let mut b = BTreeSet::new();
                    b.insert(v.clone());
                    bound.push(b);
                    walk(body, bound, out);
                    bound.pop();
                }
                StmtKind::While(_, body) => walk(body, bound, out),
                _ => {}
            }
        }
        bound.pop();
    }
    let mut out = Vec::new();
    walk(ss, &mut Vec::new(), &mut out);
    out
}

impl Builder {
    fn lookup(&self, name: &str) -> ValueId {
        self.scopes
            .iter()
            .rev()
            .find_map(|s| s.get(name).copied())
            .unwrap_or_else(|| panic!("unchecked identifier {name}"))
    }

    fn rebind(&mut self, name: &str, v: ValueId) {
        for s in self.scopes.iter_mut().rev() {
            if let Some(slot) = s.get_mut(name) {
                *slot = v;
                return;
            }
        }
        panic!("unchecked identifier {name}");
    }

    fn pure(&mut self, out: &mut Vec<Op>, name: &str, ty: ScalarTy, expr: IrExpr) -> ValueId {
        let dst = self.p.new_value(name, ty);
        out.push(Op::Pure { dst, expr });
        dst
    }

    fn expr(&mut self, e: &Expr, out: &mut Vec<Op>, name: &str) -> ValueId {
        let ty = e.ty();
        match &e.kind {
            ExprKind::Int(v) => self.pure(out, name, ty, IrExpr::Const(Lit::I64(*v))),
            ExprKind::Float(v) => self.pure(out, name, ty, IrExpr::Const(Lit::F64(*v))),
            ExprKind::Bool(v) => self.pure(out, name, ty, IrExpr::Const(Lit::Bool(*v))),
            ExprKind::Var(n) => self.lookup(n),
            ExprKind::Builtin(b, d) => match b {
                Builtin::ThreadIdx => self.tid[*d],
                Builtin::BlockIdx => self.bid[*d],
                Builtin::BlockDim => self.bdim[*d],
                Builtin::GridDim => self.gdim[*d],
            },
            ExprKind::Load(buf, idx) => {
                let index = self.expr(idx, out, "idx");
                let dst = self.p.new_value(name, ty);
                out.push(Op::Load {
                    dst,
                    buf: self.bufs[buf],
                    index,
                });
                dst
            }
            ExprKind::Unary(op, a) => {
                let a = self.expr(a, out, "t");
                self.pure(out, name, ty, IrExpr::Unary(*op, a))
            }
            ExprKind::Binary(op, a, b) => {
                let a = self.expr(a, out, "t");
                let b = self.expr(b, out, "t");
                self.pure(out, name, ty, IrExpr::Binary(*op, a, b))
            }
            ExprKind::Select(c, a, b) => {
                let c = self.expr(c, out, "t");
                let a = self.expr(a, out, "t");
                let b = self.expr(b, out, "t");
                self.pure(out, name, ty, IrExpr::Select(c, a, b))
            }
            ExprKind::Cast(t, a) => {
                let a = self.expr(a, out, "t");
                self.pure(out, name, *t, IrExpr::Cast(*t, a))
            }
        }
    }

    fn block(&mut self, ss: &[Stmt], out: &mut Vec<Op>) {
        self.scopes.push(HashMap::new());
        for s in ss {
            self.stmt(s, out);
        }
        self.scopes.pop();
    }

    fn carried(&mut self, names: &[String]) -> Vec<Carried> {
        names
            .iter()
            .map(|n| {
                let init = self.lookup(n);
                let ty = self.p.ty(init);
                let arg = self.p.new_value(n.as_str(), ty);
                let result = self.p.new_value(n.as_str(), ty);
                self.rebind(n, arg);
                Carried { arg, init, result }
            })
            .collect()
    }

    fn stmt(&mut self, s: &Stmt, out: &mut Vec<Op>) {
        match &s.kind {
            StmtKind::Let(n, _, e) => {
                let v = self.expr(e, out, n);
                self.scopes.last_mut().unwrap().insert(n.clone(), v);
            }
            StmtKind::Assign(n, e) => {
                let v = self.expr(e, out, n);
                self.rebind(n, v);
            }
            StmtKind::Store(buf, idx, v) => {
                let index = self.expr(idx, out, "idx");
                let value = self.expr(v, out, "val");
                out.push(Op::Store {
                    buf: self.bufs[buf],
                    index,
                    value,
                });
            }
            StmtKind::Sync => out.push(Op::Barrier),
            StmtKind::Shared(..) => {}
            StmtKind::If(cond, then, els) => {
                let cond = self.expr(cond, out, "cond");
                let mut names = assigned_outer(then);
                for n in assigned_outer(els) {
                    if !names.contains(&n) {
                        names.push(n);
                    }
                }
                let before: Vec<ValueId> = names.iter().map(|n| self.lookup(n)).collect();
                let mut then_ops = Vec::new();
                self.block(then, &mut then_ops);
                let then_yields: Vec<ValueId> = names.iter().map(|n| self.lookup(n)).collect();
                for (n, v) in names.iter().zip(&before) {
                    self.rebind(n, *v);
                }
                let mut else_ops = Vec::new();
                self.block(els, &mut else_ops);
                let else_yields: Vec<ValueId> = names.iter().map(|n| self.lookup(n)).collect();
                let results: Vec<ValueId> = names
                    .iter()
                    .zip(&before)
                    .map(|(n, v)| {
                        let ty = self.p.ty(*v);
                        self.p.new_value(n.as_str(), ty)
                    })
                    .collect();
                for (n, r) in names.iter().zip(&results) {
                    self.rebind(n, *r);
                }
                out.push(Op::If(IfOp {
                    cond,
                    results,
                    then_ops,
                    then_yields,
                    else_ops,
                    else_yields,
                }));
            }
            StmtKind::For(var, lo, hi, body) => {
                let lower = self.expr(lo, out, "lb");
                let upper = self.expr(hi, out, "ub");
                let names = assigned_outer(body);
                let iv = self.p.new_value(var.as_str(), ScalarTy::I64);
                let carried = self.carried(&names);
                let mut scope = HashMap::new();
                scope.insert(var.clone(), iv);
                self.scopes.push(scope);
                let mut ops = Vec::new();
                self.block(body, &mut ops);
                self.scopes.pop();
                let yields = names.iter().map(|n| self.lookup(n)).collect();
                for (n, c) in names.iter().zip(&carried) {
                    self.rebind(n, c.result);
                }
                out.push(Op::For(ForLoop {
                    iv,
                    lower,
                    upper,
                    carried,
                    body: ops,
                    yields,
                }));
            }
            StmtKind::While(cond, body) => {
                let names = assigned_outer(body);
                let carried = self.carried(&names);
                let mut cond_ops = Vec::new();
                let c = self.expr(cond, &mut cond_ops, "cond");
                let mut ops = Vec::new();
                self.block(body, &mut ops);
                let yields = names.iter().map(|n| self.lookup(n)).collect();
                for (n, cr) in names.iter().zip(&carried) {
                    self.rebind(n, cr.result);
                }
                out.push(Op::While(WhileLoop {
                    carried,
                    cond_ops,
                    cond: c,
                    body: ops,
                    yields,
                }));
            }
        }
    }
}

pub fn build_ir(k: &SourceKernel) -> Program {
    let mut p = Program::new(k.name.clone());
    p.mayalias = k.mayalias;
    let mut scalars = HashMap::new();
    let mut bufs = HashMap::new();
    for d in &k.params {
        let kind = match &d.ty {
            ParamTy::Buffer(elem, size) => {
                let buf = p.new_buffer(BufferInfo {
                    name: d.name.clone(),
                    elem: *elem,
                    kind: BufferKind::Param,
                    extent: None,
                });
                bufs.insert(d.name.clone(), buf);
                ParamKind::Buffer {
                    buf,
                    size: size.clone(),
                }
            }
            ParamTy::Scalar(elem, range) => {
                let value = p.new_value(d.name.as_str(), elem.scalar());
                scalars.insert(d.name.clone(), value);
                ParamKind::Scalar {
                    value,
                    range: *range,
                }
            }
        };
        p.params.push(Param {
            name: d.name.clone(),
            kind,
        });
    }
    let mut host = Vec::new();
    let gdim: Vec<ValueId> = (0..3)
        .map(|d| host_size(&mut p, &mut host, &k.grid[d], &scalars, &format!("grid_{}", DIMS[d])))
        .collect();
    let bdim: Vec<ValueId> = (0..3)
        .map(|d| konst(&mut p, &mut host, &format!("block_{}", DIMS[d]), Lit::I64(k.block[d])))
        .collect();
    let bid: Vec<ValueId> = (0..3)
        .map(|d| p.new_value(format!("b{}", DIMS[d]), ScalarTy::I64))
        .collect();
    let tid: Vec<ValueId> = (0..3)
        .map(|d| p.new_value(format!("t{}", DIMS[d]), ScalarTy::I64))
        .collect();
    let mut block_ops = Vec::new();
    for s in &k.body {
        if let StmtKind::Shared(name, elem, n) = &s.kind {
            let buf = p.new_buffer(BufferInfo {
                name: name.clone(),
                elem: *elem,
                kind: BufferKind::Shared,
                extent: Some(*n),
            });
            bufs.insert(name.clone(), buf);
            block_ops.push(Op::SharedAlloc { buf });
        }
    }
    let arr = |v: &[ValueId]| [v[0], v[1], v[2]];
    let mut b = Builder {
        p,
        scopes: vec![scalars],
        bufs,
        tid: arr(&tid),
        bid: arr(&bid),
        bdim: arr(&bdim),
        gdim: arr(&gdim),
    };
    let mut body = Vec::new();
    b.block(&k.body, &mut body);
    let mut p = b.p;
    block_ops.push(Op::ThreadPar(ParLoop {
        ivs: tid,
        extents: bdim,
        body,
    }));
    host.push(Op::GridPar(ParLoop {
        ivs: bid,
        extents: gdim,
        body: block_ops,
    }));
    p.body = host;
    p
}
