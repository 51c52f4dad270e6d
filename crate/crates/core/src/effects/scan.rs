use std::collections::HashMap;

use super::{effects_of, effects_of_op, Ctx, EffectSet};
use crate::ir::{Op, ParLoop, Program};

/// Position of an op inside a thread loop body: alternating op index and
/// region index, ending with an op index.
pub type Path = Vec<usize>;

pub fn op_at<'a>(body: &'a [Op], path: &[usize]) -> &'a Op {
    let mut op = &body[path[0]];
    for pair in path[1..].chunks(2) {
        op = &op.regions()[pair[0]][pair[1]];
    }
    op
}

pub fn op_at_mut<'a>(body: &'a mut [Op], path: &[usize]) -> &'a mut Op {
    let mut op = &mut body[path[0]];
    for pair in path[1..].chunks(2) {
        op = &mut op.regions_mut().into_iter().nth(pair[0]).unwrap()[pair[1]];
    }
    op
}

/// Every barrier in `body`, in pre-order.
pub fn barrier_paths(body: &[Op]) -> Vec<Path> {
    fn go(ops: &[Op], prefix: &mut Path, out: &mut Vec<Path>) {
        for (i, op) in ops.iter().enumerate() {
            prefix.push(i);
            if op.is_barrier() {
                out.push(prefix.clone());
            }
            for (r, ops) in op.regions().into_iter().enumerate() {
                prefix.push(r);
                go(ops, prefix, out);
                prefix.pop();
            }
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    go(body, &mut Vec::new(), &mut out);
    out
}

/// Effects reachable from a barrier without crossing another barrier
/// (`*_b`) and without that bound.
#[derive(Debug, Clone, Default)]
pub struct Neighborhood {
    pub before: EffectSet,
    pub after: EffectSet,
    pub before_b: EffectSet,
    pub after_b: EffectSet,
}

struct Level<'a> {
    list: &'a [Op],
    idx: usize,
    region: usize,
}

fn levels<'a>(body: &'a [Op], path: &[usize]) -> Vec<Level<'a>> {
    let mut out = vec![Level {
        list: body,
        idx: path[0],
        region: 0,
    }];
    for pair in path[1..].chunks(2) {
        let last = out.last().unwrap();
        let op = &last.list[last.idx];
        out.push(Level {
            list: op.regions()[pair[0]],
            idx: pair[1],
            region: pair[0],
        });
    }
    out
}

fn direct_barriers(ops: &[Op]) -> Vec<usize> {
    ops.iter()
        .enumerate()
        .filter(|(_, o)| o.is_barrier())
        .map(|(i, _)| i)
        .collect()
}

/// For ops that are guaranteed to execute a barrier, the part adjacent to
/// the scan point.
fn stopper<'a>(ctx: &Ctx<'_>, op: &'a Op, before: bool) -> Option<Vec<&'a Op>> {
    let part = |ops: &'a [Op]| -> Option<Vec<&'a Op>> {
        let bs = direct_barriers(ops);
        let (first, last) = (*bs.first()?, *bs.last()?);
        Some(if before {
            ops[last + 1..].iter().collect()
        } else {
            ops[..first].iter().collect()
        })
    };
    match op {
        Op::For(f) => {
            let lo = ctx.defs.const_i64(ctx.p, f.lower)?;
            let hi = ctx.defs.const_i64(ctx.p, f.upper)?;
            if hi.checked_sub(lo)? < 1 {
                return None;
            }
            part(&f.body)
        }
        Op::If(i) => {
            let mut t = part(&i.then_ops)?;
            t.extend(part(&i.else_ops)?);
            Some(t)
        }
        _ => None,
    }
}

struct Scanner<'c, 'p> {
    ctx: &'c Ctx<'p>,
    bounded: bool,
    acc: EffectSet,
}

impl Scanner<'_, '_> {
    fn ops<'a>(&mut self, ops: impl Iterator<Item = &'a Op>, before: bool) -> bool {
        for op in ops {
            if self.bounded {
                if op.is_barrier() {
                    return true;
                }
                if let Some(part) = stopper(self.ctx, op, before) {
                    for o in part {
                        self.acc.union(&effects_of_op(self.ctx, o));
                    }
                    return true;
                }
            }
            self.acc.union(&effects_of_op(self.ctx, op));
        }
        false
    }

    fn before(&mut self, lv: &[Level<'_>], k: usize) {
        let (list, start) = (lv[k].list, lv[k].idx);
        if self.ops(list[..start].iter().rev(), true) || k == 0 {
            return;
        }
        let parent = &lv[k - 1].list[lv[k - 1].idx];
        let looping = match parent {
            Op::For(_) => true,
            Op::While(w) if lv[k].region == 1 => {
                self.acc.union(&effects_of(self.ctx, &w.cond_ops));
                true
            }
            _ => false,
        };
        if looping {
            let stopped = self.ops(list[start + 1..].iter().rev(), true);
            if !stopped && k + 1 != lv.len() {
                self.acc.union(&effects_of_op(self.ctx, &list[start]));
            }
        }
        self.before(lv, k - 1);
    }

    fn after(&mut self, lv: &[Level<'_>], k: usize) {
        let (list, start) = (lv[k].list, lv[k].idx);
        if self.ops(list[start + 1..].iter(), false) || k == 0 {
            return;
        }
        let parent = &lv[k - 1].list[lv[k - 1].idx];
        let looping = match parent {
            Op::For(_) => true,
            Op::While(w) if lv[k].region == 1 => {
                self.acc.union(&effects_of(self.ctx, &w.cond_ops));
                true
            }
            _ => false,
        };
        if looping {
            let stopped = self.ops(list[..start].iter(), false);
            if !stopped && k + 1 != lv.len() {
                self.acc.union(&effects_of_op(self.ctx, &list[start]));
            }
        }
        self.after(lv, k - 1);
    }
}

/// Effects around the op at `path` (normally a barrier) in a thread body.
pub fn neighborhood(ctx: &Ctx<'_>, body: &[Op], path: &[usize]) -> Neighborhood {
    let lv = levels(body, path);
    let run = |bounded: bool, before: bool| {
        let mut s = Scanner {
            ctx,
            bounded,
            acc: EffectSet::new(),
        };
        if before {
            s.before(&lv, lv.len() - 1);
        } else {
            s.after(&lv, lv.len() - 1);
        }
        s.acc
    };
    Neighborhood {
        before: run(false, true),
        after: run(false, false),
        before_b: run(true, true),
        after_b: run(true, false),
    }
}

/// The marked accesses a barrier orders between neighbouring barriers.
pub fn barrier_footprint(ctx: &Ctx<'_>, body: &[Op], path: &[usize]) -> EffectSet {
    let n = neighborhood(ctx, body, path);
    let mut s = n.before_b;
    s.union(&n.after_b);
    s.mark(ctx)
}

fn thread_loops(grid: &ParLoop) -> impl Iterator<Item = &ParLoop> {
    grid.body.iter().filter_map(|o| match o {
        Op::ThreadPar(t) => Some(t),
        _ => None,
    })
}

/// The program text with each barrier annotated by its footprint.
pub fn dump_effects(p: &Program) -> String {
    let mut notes: HashMap<usize, String> = HashMap::new();
    if let Some(grid) = p.grid() {
        for tp in thread_loops(grid) {
            let ctx = Ctx::thread(p, grid, tp);
            for path in barrier_paths(&tp.body) {
                let fp = barrier_footprint(&ctx, &tp.body, &path);
                let op = op_at(&tp.body, &path) as *const Op as usize;
                notes.insert(op, format!("effects: {}", fp.display(p)));
            }
        }
    }
    let annotate = |op: &Op| notes.get(&(op as *const Op as usize)).cloned();
    crate::frontend::print_ir_annotated(p, Some(&annotate))
}
