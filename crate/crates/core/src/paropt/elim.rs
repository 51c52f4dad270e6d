use super::{grid_and_tp, parent_list_mut, thread_loop_paths, tp_mut};
use crate::effects::{barrier_paths, may_conflict, neighborhood, Ctx, Path};
use crate::ir::{Op, Program};

/// Barriers are numbered 1.. in program pre-order before elimination.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ElimReport {
    pub removed: Vec<usize>,
    pub kept: Vec<usize>,
}

fn removable_in(ctx: &Ctx<'_>, body: &[Op], path: &[usize]) -> bool {
    let n = neighborhood(ctx, body, path);
    let before_b = n.before_b.mark(ctx);
    let after_b = n.after_b.mark(ctx);
    (before_b.is_empty() && after_b.is_empty())
        || !may_conflict(ctx, &before_b, &n.after, true)
        || !may_conflict(ctx, &n.before, &after_b, true)
}

/// Is the barrier at `barrier` (inside the thread loop at `tp`) redundant?
pub fn barrier_removable(p: &Program, tp: &[usize], barrier: &[usize]) -> bool {
    let (g, l) = grid_and_tp(p, tp);
    let ctx = Ctx::thread(p, g, l);
    removable_in(&ctx, &l.body, barrier)
}

fn find_removable(p: &Program) -> Option<(Path, Path, usize)> {
    let grid = p.grid()?;
    let mut offset = 0;
    for tpp in thread_loop_paths(&grid.body) {
        let (g, tp) = grid_and_tp(p, &tpp);
        let ctx = Ctx::thread(p, g, tp);
        let bps = barrier_paths(&tp.body);
        for (k, bp) in bps.iter().enumerate() {
            if removable_in(&ctx, &tp.body, bp) {
                return Some((tpp, bp.clone(), offset + k));
            }
        }
        offset += bps.len();
    }
    None
}

fn remove_at(p: &mut Program, tp: &[usize], path: &[usize]) {
    let l = tp_mut(p, tp);
    let list = parent_list_mut(&mut l.body, path);
    let removed = list.remove(*path.last().unwrap());
    debug_assert!(removed.is_barrier());
}

/// Removes redundant barriers one at a time until none is left.
pub fn eliminate_barriers(p: &Program) -> (Program, ElimReport) {
    let mut q = p.clone();
    let mut ids: Vec<usize> = (1..=q.barrier_count()).collect();
    let mut report = ElimReport::default();
    while let Some((tp, path, k)) = find_removable(&q) {
        remove_at(&mut q, &tp, &path);
        report.removed.push(ids.remove(k));
    }
    report.kept = ids;
    (q, report)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("barrier motion rejected: {0}")]
pub struct MoveRejected(pub String);

/// Moves the barrier at `from` to the position `to` (the barrier is placed
/// in front of the op currently at `to`) inside the thread loop `tp`.
pub fn move_barrier(p: &Program, tp: &[usize], from: &[usize], to: &[usize]) -> Result<Program, MoveRejected> {
    let mut q = p.clone();
    {
        let l = tp_mut(&mut q, tp);
        if !crate::effects::op_at(&l.body, from).is_barrier() {
            return Err(MoveRejected("source is not a barrier".into()));
        }
        let list = parent_list_mut(&mut l.body, to);
        let at = *to.last().unwrap();
        if at > list.len() {
            return Err(MoveRejected("target out of range".into()));
        }
        list.insert(at, Op::Barrier);
    }
    let mut from = from.to_vec();
    let d = to.len() - 1;
    if d < from.len() && to[..d] == from[..d] && to[d] <= from[d] {
        from[d] += 1;
    }
    if !barrier_removable(&q, tp, &from) {
        return Err(MoveRejected(
            "the original barrier still orders conflicting accesses".into(),
        ));
    }
    remove_at(&mut q, tp, &from);
    Ok(q)
}
