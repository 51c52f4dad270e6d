//! Structural editing toolkit: cloning with fresh SSA names, use
//! replacement and insertion.

use std::collections::HashMap;

use super::{Carried, Op, ParLoop, Program, ValueId};

/// Value substitution applied while cloning or rewriting.
#[derive(Debug, Default, Clone)]
pub struct Remap {
    map: HashMap<ValueId, ValueId>,
}

impl Remap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, from: ValueId, to: ValueId) {
        self.map.insert(from, to);
    }

    pub fn get(&self, v: ValueId) -> ValueId {
        self.map.get(&v).copied().unwrap_or(v)
    }

    pub fn contains(&self, v: ValueId) -> bool {
        self.map.contains_key(&v)
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Allocates a value with the same type and debug name as `like`.
pub fn fresh_value(p: &mut Program, like: ValueId) -> ValueId {
    let info = p.values[like.0 as usize].clone();
    p.new_value(info.name, info.ty)
}

fn fresh(p: &mut Program, v: ValueId, remap: &mut Remap) -> ValueId {
    let n = fresh_value(p, v);
    remap.insert(v, n);
    n
}

fn clone_par(p: &mut Program, l: &ParLoop, remap: &mut Remap) -> ParLoop {
    let extents = l.extents.iter().map(|e| remap.get(*e)).collect();
    let ivs = l.ivs.iter().map(|iv| fresh(p, *iv, remap)).collect();
    ParLoop {
        ivs,
        extents,
        body: clone_ops(p, &l.body, remap),
    }
}

fn clone_carried(p: &mut Program, cs: &[Carried], remap: &mut Remap) -> Vec<(ValueId, ValueId, ValueId)> {
    cs.iter()
        .map(|c| {
            let init = remap.get(c.init);
            let arg = fresh(p, c.arg, remap);
            (arg, init, c.result)
        })
        .collect()
}

/// Deep-copies `ops`, giving every value defined inside a fresh id.
/// Uses of values defined outside go through `remap`, which is extended
/// with the new definitions so callers can redirect later uses.
pub fn clone_ops(p: &mut Program, ops: &[Op], remap: &mut Remap) -> Vec<Op> {
    let mut out = Vec::with_capacity(ops.len());
    for op in ops {
        let new = match op {
            Op::Pure { dst, expr } => {
                let mut expr = expr.clone();
                for o in expr.operands_mut() {
                    *o = remap.get(*o);
                }
                Op::Pure {
                    dst: fresh(p, *dst, remap),
                    expr,
                }
            }
            Op::Load { dst, buf, index } => Op::Load {
                buf: *buf,
                index: remap.get(*index),
                dst: fresh(p, *dst, remap),
            },
            Op::Store { buf, index, value } => Op::Store {
                buf: *buf,
                index: remap.get(*index),
                value: remap.get(*value),
            },
            Op::Barrier => Op::Barrier,
            Op::TeamBarrier => Op::TeamBarrier,
            Op::SharedAlloc { buf } => Op::SharedAlloc { buf: *buf },
            Op::GridPar(l) => Op::GridPar(clone_par(p, l, remap)),
            Op::ThreadPar(l) => Op::ThreadPar(clone_par(p, l, remap)),
            Op::WorkShare(l) => Op::WorkShare(clone_par(p, l, remap)),
            Op::SerialNest(l) => Op::SerialNest(clone_par(p, l, remap)),
            Op::For(f) => {
                let lower = remap.get(f.lower);
                let upper = remap.get(f.upper);
                let iv = fresh(p, f.iv, remap);
                let cs = clone_carried(p, &f.carried, remap);
                let body = clone_ops(p, &f.body, remap);
                let yields = f.yields.iter().map(|y| remap.get(*y)).collect();
                let carried = cs
                    .into_iter()
                    .map(|(arg, init, result)| Carried {
                        arg,
                        init,
                        result: fresh(p, result, remap),
                    })
                    .collect();
                Op::For(super::ForLoop {
                    iv,
                    lower,
                    upper,
                    carried,
                    body,
                    yields,
                })
            }
            Op::While(w) => {
                let cs = clone_carried(p, &w.carried, remap);
                let cond_ops = clone_ops(p, &w.cond_ops, remap);
                let cond = remap.get(w.cond);
                let body = clone_ops(p, &w.body, remap);
                let yields = w.yields.iter().map(|y| remap.get(*y)).collect();
                let carried = cs
                    .into_iter()
                    .map(|(arg, init, result)| Carried {
                        arg,
                        init,
                        result: fresh(p, result, remap),
                    })
                    .collect();
                Op::While(super::WhileLoop {
                    carried,
                    cond_ops,
                    cond,
                    body,
                    yields,
                })
            }
            Op::If(i) => {
                let cond = remap.get(i.cond);
                let then_ops = clone_ops(p, &i.then_ops, remap);
                let then_yields = i.then_yields.iter().map(|y| remap.get(*y)).collect();
                let else_ops = clone_ops(p, &i.else_ops, remap);
                let else_yields = i.else_yields.iter().map(|y| remap.get(*y)).collect();
                let results = i.results.iter().map(|r| fresh(p, *r, remap)).collect();
                Op::If(super::IfOp {
                    cond,
                    results,
                    then_ops,
                    then_yields,
                    else_ops,
                    else_yields,
                })
            }
            Op::TeamRegion(t) => Op::TeamRegion(super::TeamRegion {
                threads: t.threads,
                body: clone_ops(p, &t.body, remap),
            }),
        };
        out.push(new);
    }
    out
}

fn rewrite_op_uses(op: &mut Op, remap: &Remap) {
    let r = |v: &mut ValueId| *v = remap.get(*v);
    match op {
        Op::Pure { expr, .. } => {
            for o in expr.operands_mut() {
                r(o);
            }
        }
        Op::Load { index, .. } => r(index),
        Op::Store { index, value, .. } => {
            r(index);
            r(value);
        }
        Op::GridPar(l) | Op::ThreadPar(l) | Op::WorkShare(l) | Op::SerialNest(l) => {
            l.extents.iter_mut().for_each(r)
        }
        Op::For(f) => {
            r(&mut f.lower);
            r(&mut f.upper);
            f.carried.iter_mut().for_each(|c| r(&mut c.init));
            f.yields.iter_mut().for_each(r);
        }
        Op::While(w) => {
            w.carried.iter_mut().for_each(|c| r(&mut c.init));
            r(&mut w.cond);
            w.yields.iter_mut().for_each(r);
        }
        Op::If(i) => {
            r(&mut i.cond);
            i.then_yields.iter_mut().for_each(r);
            i.else_yields.iter_mut().for_each(r);
        }
        _ => {}
    }
}

/// Rewrites every use (at any depth) according to `remap`.
pub fn replace_uses(ops: &mut [Op], remap: &Remap) {
    if remap.is_empty() {
        return;
    }
    for op in ops {
        rewrite_op_uses(op, remap);
        for r in op.regions_mut() {
            replace_uses(r, remap);
        }
    }
}

/// Inserts `op` in front of `ops[at]`.
pub fn insert_before(ops: &mut Vec<Op>, at: usize, op: Op) {
    ops.insert(at.min(ops.len()), op);
}
