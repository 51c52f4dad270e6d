//! Alpha-equivalence of programs: equal up to SSA value and buffer naming.

use std::collections::HashMap;

use super::{BufferId, Carried, Expr, Op, ParLoop, ParamKind, Program, ValueId};

struct Matcher<'a> {
    a: &'a Program,
    b: &'a Program,
    values: HashMap<ValueId, ValueId>,
    values_rev: HashMap<ValueId, ValueId>,
    bufs: HashMap<BufferId, BufferId>,
    bufs_rev: HashMap<BufferId, BufferId>,
}

impl Matcher<'_> {
    fn bind(&mut self, x: ValueId, y: ValueId) -> bool {
        if self.a.ty(x) != self.b.ty(y) {
            return false;
        }
        match (self.values.get(&x), self.values_rev.get(&y)) {
            (None, None) => {
                self.values.insert(x, y);
                self.values_rev.insert(y, x);
                true
            }
            (Some(&yy), Some(&xx)) => yy == y && xx == x,
            _ => false,
        }
    }

    fn use_eq(&self, x: ValueId, y: ValueId) -> bool {
        self.values.get(&x) == Some(&y)
    }

    fn uses_eq(&self, xs: &[ValueId], ys: &[ValueId]) -> bool {
        xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| self.use_eq(*x, *y))
    }

    fn buf_eq(&mut self, x: BufferId, y: BufferId) -> bool {
        let (bx, by) = (self.a.buffer(x), self.b.buffer(y));
        if bx.elem != by.elem || bx.kind != by.kind || bx.extent != by.extent {
            return false;
        }
        match (self.bufs.get(&x), self.bufs_rev.get(&y)) {
            (None, None) => {
                self.bufs.insert(x, y);
                self.bufs_rev.insert(y, x);
                true
            }
            (Some(&yy), Some(&xx)) => yy == y && xx == x,
            _ => false,
        }
    }

    fn par(&mut self, x: &ParLoop, y: &ParLoop) -> bool {
        if !self.uses_eq(&x.extents, &y.extents) || x.ivs.len() != y.ivs.len() {
            return false;
        }
        for (a, b) in x.ivs.iter().zip(&y.ivs) {
            if !self.bind(*a, *b) {
                return false;
            }
        }
        self.ops(&x.body, &y.body)
    }

    fn carried_args(&mut self, x: &[Carried], y: &[Carried]) -> bool {
        if x.len() != y.len() {
            return false;
        }
        for (cx, cy) in x.iter().zip(y) {
            if !self.use_eq(cx.init, cy.init) || !self.bind(cx.arg, cy.arg) {
                return false;
            }
        }
        true
    }

    fn carried_results(&mut self, x: &[Carried], y: &[Carried]) -> bool {
        x.iter().zip(y).all(|(cx, cy)| self.bind(cx.result, cy.result))
    }

    fn expr(&self, x: &Expr, y: &Expr) -> bool {
        match (x, y) {
            (Expr::Const(a), Expr::Const(b)) => match (a, b) {
                (super::Lit::F64(a), super::Lit::F64(b)) => {
                    a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
                }
                _ => a == b,
            },
            (Expr::Unary(o1, a), Expr::Unary(o2, b)) => o1 == o2 && self.use_eq(*a, *b),
            (Expr::Binary(o1, a1, b1), Expr::Binary(o2, a2, b2)) => {
                o1 == o2 && self.use_eq(*a1, *a2) && self.use_eq(*b1, *b2)
            }
            (Expr::Select(c1, a1, b1), Expr::Select(c2, a2, b2)) => {
                self.use_eq(*c1, *c2) && self.use_eq(*a1, *a2) && self.use_eq(*b1, *b2)
            }
            (Expr::Cast(t1, a), Expr::Cast(t2, b)) => t1 == t2 && self.use_eq(*a, *b),
            _ => false,
        }
    }

    fn ops(&mut self, xs: &[Op], ys: &[Op]) -> bool {
        xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| self.op(x, y))
    }

    fn op(&mut self, x: &Op, y: &Op) -> bool {
        match (x, y) {
            (Op::Pure { dst: d1, expr: e1 }, Op::Pure { dst: d2, expr: e2 }) => {
                self.expr(e1, e2) && self.bind(*d1, *d2)
            }
            (
                Op::Load {
                    dst: d1,
                    buf: b1,
                    index: i1,
                },
                Op::Load {
                    dst: d2,
                    buf: b2,
                    index: i2,
                },
            ) => self.buf_eq(*b1, *b2) && self.use_eq(*i1, *i2) && self.bind(*d1, *d2),
            (
                Op::Store {
                    buf: b1,
                    index: i1,
                    value: v1,
                },
                Op::Store {
                    buf: b2,
                    index: i2,
                    value: v2,
                },
            ) => self.buf_eq(*b1, *b2) && self.use_eq(*i1, *i2) && self.use_eq(*v1, *v2),
            (Op::Barrier, Op::Barrier) | (Op::TeamBarrier, Op::TeamBarrier) => true,
            (Op::SharedAlloc { buf: a }, Op::SharedAlloc { buf: b }) => self.buf_eq(*a, *b),
            (Op::GridPar(a), Op::GridPar(b))
            | (Op::ThreadPar(a), Op::ThreadPar(b))
            | (Op::WorkShare(a), Op::WorkShare(b))
            | (Op::SerialNest(a), Op::SerialNest(b)) => self.par(a, b),
            (Op::For(a), Op::For(b)) => {
                self.use_eq(a.lower, b.lower)
                    && self.use_eq(a.upper, b.upper)
                    && self.bind(a.iv, b.iv)
                    && self.carried_args(&a.carried, &b.carried)
                    && self.ops(&a.body, &b.body)
                    && self.uses_eq(&a.yields, &b.yields)
                    && self.carried_results(&a.carried, &b.carried)
            }
            (Op::While(a), Op::While(b)) => {
                self.carried_args(&a.carried, &b.carried)
                    && self.ops(&a.cond_ops, &b.cond_ops)
                    && self.use_eq(a.cond, b.cond)
                    && self.ops(&a.body, &b.body)
                    && self.uses_eq(&a.yields, &b.yields)
                    && self.carried_results(&a.carried, &b.carried)
            }
            (Op::If(a), Op::If(b)) => {
                a.results.len() == b.results.len()
                    && self.use_eq(a.cond, b.cond)
                    && self.ops(&a.then_ops, &b.then_ops)
                    && self.uses_eq(&a.then_yields, &b.then_yields)
                    && self.ops(&a.else_ops, &b.else_ops)
                    && self.uses_eq(&a.else_yields, &b.else_yields)
                    && a
                        .results
                        .iter()
                        .zip(&b.results)
                        .all(|(x, y)| self.bind(*x, *y))
            }
            (Op::TeamRegion(a), Op::TeamRegion(b)) => {
                a.threads == b.threads && self.ops(&a.body, &b.body)
            }
            _ => false,
        }
    }
}

/// Structural equality ignoring SSA value names and ids.
pub fn structurally_equal(a: &Program, b: &Program) -> bool {
    if a.name != b.name
        || a.mayalias != b.mayalias
        || a.params.len() != b.params.len()
    {
        return false;
    }
    let mut m = Matcher {
        a,
        b,
        values: HashMap::new(),
        values_rev: HashMap::new(),
        bufs: HashMap::new(),
        bufs_rev: HashMap::new(),
    };
    for (pa, pb) in a.params.iter().zip(&b.params) {
        if pa.name != pb.name {
            return false;
        }
        match (&pa.kind, &pb.kind) {
            (
                ParamKind::Buffer { buf: x, size: sx },
                ParamKind::Buffer { buf: y, size: sy },
            ) => {
                if !m.buf_eq(*x, *y) || sx != sy {
                    return false;
                }
            }
            (
                ParamKind::Scalar { value: x, range: rx },
                ParamKind::Scalar { value: y, range: ry },
            ) => {
                if rx != ry || !m.bind(*x, *y) {
                    return false;
                }
            }
            _ => return false,
        }
    }
    m.ops(&a.body, &b.body)
}
