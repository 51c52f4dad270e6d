use std::collections::BTreeSet;

use super::{grid_and_tp, parent_list_mut, thread_loop_paths, tp_mut};
use crate::effects::{effects_of, effects_of_op, may_conflict, Ctx, Kind};
use crate::ir::{
    all_defs, free_uses, BinOp, BufferKind, DefIndex, DefSite, Expr, Lit, Op, ParamKind, Program,
    ValueId,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LicmReport {
    pub from_threads: usize,
    pub from_grid: usize,
}

fn movable_kind(ctx: &Ctx<'_>, op: &Op, allow_shared: bool) -> bool {
    let shared_ok = |ctx: &Ctx<'_>| {
        allow_shared
            || effects_of_op(ctx, op)
                .iter()
                .all(|a| ctx.p.buffer(a.base).kind == BufferKind::Param)
    };
    match op {
        Op::Pure { .. } => true,
        Op::Load { .. } => shared_ok(ctx),
        Op::For(_) | Op::While(_) | Op::If(_) => {
            !op.contains_barrier()
                && crate::ir::count_ops(std::slice::from_ref(op), &|o| {
                    matches!(o, Op::ThreadPar(_) | Op::GridPar(_) | Op::SharedAlloc { .. })
                }) == 0
                && effects_of_op(ctx, op).iter().all(|a| a.kind == Kind::Read)
                && shared_ok(ctx)
        }
        _ => false,
    }
}

fn invariant(op: &Op, inner: &BTreeSet<ValueId>) -> bool {
    free_uses(std::slice::from_ref(op)).is_disjoint(inner)
}

/// Lock-step rule: operands defined outside and no earlier op in the loop
/// body may conflict with the op.
pub fn parallel_hoistable(ctx: &Ctx<'_>, body: &[Op], i: usize, inner: &BTreeSet<ValueId>, allow_shared: bool) -> bool {
    let op = &body[i];
    movable_kind(ctx, op, allow_shared)
        && invariant(op, inner)
        && (matches!(op, Op::Pure { .. })
            || !may_conflict(ctx, &effects_of(ctx, &body[..i]), &effects_of_op(ctx, op), true))
}

/// The classic serial criterion: no other op of the loop body may conflict.
/// Used as an oracle; it is never weaker than the parallel rule.
pub fn serially_hoistable(ctx: &Ctx<'_>, body: &[Op], i: usize, inner: &BTreeSet<ValueId>) -> bool {
    let op = &body[i];
    if !movable_kind(ctx, op, true) || !invariant(op, inner) {
        return false;
    }
    if matches!(op, Op::Pure { .. }) {
        return true;
    }
    let others: Vec<Op> = body
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, o)| o.clone())
        .collect();
    !may_conflict(ctx, &effects_of(ctx, &others), &effects_of_op(ctx, op), true)
}

/// Values defined in the thread loop, including its ids.
pub fn thread_inner(l: &crate::ir::ParLoop) -> BTreeSet<ValueId> {
    let mut inner = all_defs(&l.body);
    inner.extend(l.ivs.iter().copied());
    inner
}

fn range(p: &Program, defs: &DefIndex, v: ValueId, depth: usize) -> Option<(i64, i64)> {
    if depth > 32 {
        return None;
    }
    match defs.get(v)? {
        DefSite::Param => p.params.iter().find_map(|q| match &q.kind {
            ParamKind::Scalar { value, range } if *value == v => *range,
            _ => None,
        }),
        DefSite::Pure(Expr::Const(Lit::I64(c))) => Some((*c, *c)),
        DefSite::Pure(Expr::Binary(op, a, b)) => {
            let (a0, a1) = range(p, defs, *a, depth + 1)?;
            let (b0, b1) = range(p, defs, *b, depth + 1)?;
            match op {
                BinOp::Add => Some((a0.checked_add(b0)?, a1.checked_add(b1)?)),
                BinOp::Sub => Some((a0.checked_sub(b1)?, a1.checked_sub(b0)?)),
                BinOp::Mul => {
                    let c = [a0.checked_mul(b0)?, a0.checked_mul(b1)?, a1.checked_mul(b0)?, a1.checked_mul(b1)?];
                    Some((*c.iter().min()?, *c.iter().max()?))
                }
                BinOp::Div if b0 == b1 && b0 > 0 => Some((a0 / b0, a1 / b0)),
                _ => None,
            }
        }
        _ => None,
    }
}

/// Hoisting out of the grid loop is only safe if it runs at least once.
fn grid_nonempty(p: &Program) -> bool {
    let defs = DefIndex::build(p);
    p.grid()
        .is_some_and(|g| g.extents.iter().all(|e| range(p, &defs, *e, 0).is_some_and(|(lo, _)| lo >= 1)))
}

fn hoist_from_threads(q: &mut Program) -> bool {
    let Some(grid) = q.grid() else { return false };
    for tpp in thread_loop_paths(&grid.body) {
        let (g, tp) = grid_and_tp(q, &tpp);
        let ctx = Ctx::thread(q, g, tp);
        let inner = thread_inner(tp);
        let found = (0..tp.body.len()).find(|&i| parallel_hoistable(&ctx, &tp.body, i, &inner, true));
        if let Some(i) = found {
            let op = tp_mut(q, &tpp).body.remove(i);
            let grid = q.grid_mut().unwrap();
            let list = parent_list_mut(&mut grid.body, &tpp);
            list.insert(*tpp.last().unwrap(), op);
            return true;
        }
    }
    false
}

fn hoist_from_grid(q: &mut Program) -> bool {
    if !grid_nonempty(q) {
        return false;
    }
    let Some(gi) = q.body.iter().position(|o| matches!(o, Op::GridPar(_))) else {
        return false;
    };
    let grid = q.grid().unwrap();
    let ctx = Ctx::grid(q, grid);
    let mut inner = all_defs(&grid.body);
    inner.extend(grid.ivs.iter().copied());
    let found = (0..grid.body.len()).find(|&i| parallel_hoistable(&ctx, &grid.body, i, &inner, false));
    if let Some(i) = found {
        let op = q.grid_mut().unwrap().body.remove(i);
        q.body.insert(gi, op);
        return true;
    }
    false
}

/// Parallel loop-invariant code motion out of thread loops and then out of
/// the grid loop.
pub fn parallel_licm(p: &Program) -> (Program, LicmReport) {
    let mut q = p.clone();
    let mut report = LicmReport::default();
    loop {
        if hoist_from_threads(&mut q) {
            report.from_threads += 1;
        } else if hoist_from_grid(&mut q) {
            report.from_grid += 1;
        } else {
            break;
        }
    }
    (q, report)
}
