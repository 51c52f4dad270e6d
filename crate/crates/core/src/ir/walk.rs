use std::collections::{BTreeSet, HashMap};

use super::{BufferId, Expr, Lit, Op, Program, ValueId};

/// How a value came to be.
#[derive(Debug, Clone, PartialEq)]
pub enum DefSite {
    Param,
    Pure(Expr),
    Load { buf: BufferId, index: ValueId },
    /// Induction variable `dim` of a grid, thread, work-share or serial nest.
    ParIv { kind: &'static str, dim: usize },
    ForIv,
    CarriedArg,
    RegionResult,
}

/// Definition lookup for every value in a program.
#[derive(Debug, Default, Clone)]
pub struct DefIndex {
    defs: HashMap<ValueId, DefSite>,
}

impl DefIndex {
    pub fn build(p: &Program) -> Self {
        let mut idx = DefIndex::default();
        for (_, v) in p.scalar_params() {
            idx.defs.insert(v, DefSite::Param);
        }
        idx.add_ops(&p.body);
        idx
    }

    pub fn from_ops(ops: &[Op]) -> Self {
        let mut idx = DefIndex::default();
        idx.add_ops(ops);
        idx
    }

    fn add_ops(&mut self, ops: &[Op]) {
        for op in ops {
            match op {
                Op::Pure { dst, expr } => {
                    self.defs.insert(*dst, DefSite::Pure(expr.clone()));
                }
                Op::Load { dst, buf, index } => {
                    self.defs.insert(
                        *dst,
                        DefSite::Load {
                            buf: *buf,
                            index: *index,
                        },
                    );
                }
                Op::GridPar(l) | Op::ThreadPar(l) | Op::WorkShare(l) | Op::SerialNest(l) => {
                    for (dim, iv) in l.ivs.iter().enumerate() {
                        self.defs.insert(
                            *iv,
                            DefSite::ParIv {
                                kind: op.name(),
                                dim,
                            },
                        );
                    }
                }
                Op::For(f) => {
                    self.defs.insert(f.iv, DefSite::ForIv);
                    for c in &f.carried {
                        self.defs.insert(c.arg, DefSite::CarriedArg);
                        self.defs.insert(c.result, DefSite::RegionResult);
                    }
                }
                Op::While(w) => {
                    for c in &w.carried {
                        self.defs.insert(c.arg, DefSite::CarriedArg);
                        self.defs.insert(c.result, DefSite::RegionResult);
                    }
                }
                Op::If(i) => {
                    for r in &i.results {
                        self.defs.insert(*r, DefSite::RegionResult);
                    }
                }
                _ => {}
            }
            for r in op.regions() {
                self.add_ops(r);
            }
        }
    }

    pub fn get(&self, v: ValueId) -> Option<&DefSite> {
        self.defs.get(&v)
    }

    pub fn const_value(&self, p: &Program, v: ValueId) -> Option<Lit> {
        self.const_value_depth(p, v, 0)
    }

    fn const_value_depth(&self, p: &Program, v: ValueId, depth: usize) -> Option<Lit> {
        if depth > 64 {
            return None;
        }
        let DefSite::Pure(expr) = self.get(v)? else {
            return None;
        };
        match expr {
            Expr::Const(l) => Some(*l),
            _ => {
                let ops: Option<Vec<Lit>> = expr
                    .operands()
                    .into_iter()
                    .map(|o| self.const_value_depth(p, o, depth + 1))
                    .collect();
                let ops = ops?;
                crate::exec::eval_expr_lits(expr, &ops, p.ty(v)).ok()
            }
        }
    }

    pub fn const_i64(&self, p: &Program, v: ValueId) -> Option<i64> {
        match self.const_value(p, v)? {
            Lit::I64(x) => Some(x),
            _ => None,
        }
    }
}

/// Values read directly by `op` (excluding uses inside nested regions).
pub fn op_uses(op: &Op) -> Vec<ValueId> {
    match op {
        Op::Pure { expr, .. } => expr.operands(),
        Op::Load { index, .. } => vec![*index],
        Op::Store { index, value, .. } => vec![*index, *value],
        Op::GridPar(l) | Op::ThreadPar(l) | Op::WorkShare(l) | Op::SerialNest(l) => {
            l.extents.clone()
        }
        Op::For(f) => {
            let mut v = vec![f.lower, f.upper];
            v.extend(f.carried.iter().map(|c| c.init));
            v.extend(f.yields.iter().copied());
            v
        }
        Op::While(w) => {
            let mut v: Vec<ValueId> = w.carried.iter().map(|c| c.init).collect();
            v.push(w.cond);
            v.extend(w.yields.iter().copied());
            v
        }
        Op::If(i) => {
            let mut v = vec![i.cond];
            v.extend(i.then_yields.iter().copied());
            v.extend(i.else_yields.iter().copied());
            v
        }
        _ => vec![],
    }
}

/// Values defined by `op` that are visible to later ops in the same list.
pub fn defined_values(op: &Op) -> Vec<ValueId> {
    match op {
        Op::Pure { dst, .. } | Op::Load { dst, .. } => vec![*dst],
        Op::For(f) => f.carried.iter().map(|c| c.result).collect(),
        Op::While(w) => w.carried.iter().map(|c| c.result).collect(),
        Op::If(i) => i.results.clone(),
        _ => vec![],
    }
}

fn internal_defs(op: &Op, out: &mut BTreeSet<ValueId>) {
    out.extend(defined_values(op));
    match op {
        Op::GridPar(l) | Op::ThreadPar(l) | Op::WorkShare(l) | Op::SerialNest(l) => {
            out.extend(l.ivs.iter().copied())
        }
        Op::For(f) => {
            out.insert(f.iv);
            out.extend(f.carried.iter().map(|c| c.arg));
        }
        Op::While(w) => out.extend(w.carried.iter().map(|c| c.arg)),
        _ => {}
    }
    for r in op.regions() {
        for o in r {
            internal_defs(o, out);
        }
    }
}

fn all_uses(op: &Op, out: &mut BTreeSet<ValueId>) {
    out.extend(op_uses(op));
    for r in op.regions() {
        for o in r {
            all_uses(o, out);
        }
    }
}

/// Values used inside `ops` (at any depth) but defined outside them.
pub fn free_uses(ops: &[Op]) -> BTreeSet<ValueId> {
    let mut uses = BTreeSet::new();
    let mut defs = BTreeSet::new();
    for op in ops {
        all_uses(op, &mut uses);
        internal_defs(op, &mut defs);
    }
    uses.difference(&defs).copied().collect()
}

/// Every value defined anywhere inside `ops`.
pub fn all_defs(ops: &[Op]) -> BTreeSet<ValueId> {
    let mut defs = BTreeSet::new();
    for op in ops {
        internal_defs(op, &mut defs);
    }
    defs
}

pub fn count_ops(ops: &[Op], pred: &dyn Fn(&Op) -> bool) -> usize {
    ops.iter()
        .map(|op| {
            usize::from(pred(op))
                + op
                    .regions()
                    .into_iter()
                    .map(|r| count_ops(r, pred))
                    .sum::<usize>()
        })
        .sum()
}
