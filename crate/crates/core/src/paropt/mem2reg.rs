use super::{grid_and_tp, parent_list_mut, thread_loop_paths, tp_mut};
use crate::effects::{
    barrier_footprint, effects_of_op, may_alias_same_thread, may_conflict, Access, Ctx, EffectSet,
    Kind, Path,
};
use crate::ir::{replace_uses, BufferKind, Op, Program, Remap, ValueId};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Mem2RegReport {
    pub forwarded: usize,
    pub dead_stores: usize,
}

struct Forward {
    tp: Path,
    list: Path,
    loads: Vec<usize>,
    value: ValueId,
}

/// Loads in `list` after `i` that must observe the store at `i`.
fn forwardable(ctx: &Ctx<'_>, tp_body: &[Op], prefix: &[usize], list: &[Op], i: usize) -> Vec<usize> {
    let p = ctx.p;
    let Op::Store { buf, index, .. } = &list[i] else {
        return Vec::new();
    };
    let e = ctx.affine(*index);
    let mut loads = Vec::new();
    for (j, op) in list.iter().enumerate().skip(i + 1) {
        match op {
            Op::Load { buf: b2, index: i2, .. } => {
                if b2 == buf && (i2 == index || (e.is_some() && ctx.affine(*i2) == e)) {
                    loads.push(j);
                }
            }
            Op::Store { buf: b2, index: i2, .. } => {
                if p.may_alias(*b2, *buf)
                    && (b2 != buf || may_alias_same_thread(ctx, e.as_ref(), ctx.affine(*i2).as_ref()))
                {
                    break;
                }
            }
            Op::Pure { .. } => {}
            Op::Barrier => {
                let Some(e) = &e else { break };
                let mut path = prefix.to_vec();
                path.push(j);
                let writes = barrier_footprint(ctx, tp_body, &path).writes();
                let mut mine = EffectSet::new();
                mine.insert(Access {
                    base: *buf,
                    index: Some(e.clone()),
                    kind: Kind::Read,
                    marked: false,
                });
                if may_conflict(ctx, &writes, &mine, false) {
                    break;
                }
            }
            _ => {
                if op.contains_barrier() {
                    break;
                }
                let clobbers = effects_of_op(ctx, op).iter().any(|a| {
                    a.kind != Kind::Read
                        && p.may_alias(a.base, *buf)
                        && (a.base != *buf || may_alias_same_thread(ctx, e.as_ref(), a.index.as_ref()))
                });
                if clobbers {
                    break;
                }
            }
        }
    }
    loads
}

fn find_in_list(ctx: &Ctx<'_>, tp_body: &[Op], prefix: &mut Path, list: &[Op]) -> Option<(Path, Vec<usize>, ValueId)> {
    for (i, op) in list.iter().enumerate() {
        if let Op::Store { value, .. } = op {
            let loads = forwardable(ctx, tp_body, prefix, list, i);
            if !loads.is_empty() {
                return Some((prefix.clone(), loads, *value));
            }
        }
    }
    for (i, op) in list.iter().enumerate() {
        for (r, ops) in op.regions().into_iter().enumerate() {
            prefix.extend([i, r]);
            let found = find_in_list(ctx, tp_body, prefix, ops);
            prefix.truncate(prefix.len() - 2);
            if found.is_some() {
                return found;
            }
        }
    }
    None
}

fn find_forward(p: &Program) -> Option<Forward> {
    let grid = p.grid()?;
    for tpp in thread_loop_paths(&grid.body) {
        let (g, tp) = grid_and_tp(p, &tpp);
        let ctx = Ctx::thread(p, g, tp);
        if let Some((list, loads, value)) = find_in_list(&ctx, &tp.body, &mut Vec::new(), &tp.body) {
            return Some(Forward {
                tp: tpp,
                list,
                loads,
                value,
            });
        }
    }
    None
}

fn list_mut<'a>(body: &'a mut Vec<Op>, list: &[usize]) -> &'a mut Vec<Op> {
    let mut probe = list.to_vec();
    probe.push(0);
    parent_list_mut(body, &probe)
}

fn apply_forward(p: &mut Program, f: Forward) {
    let mut remap = Remap::new();
    {
        let tp = tp_mut(p, &f.tp);
        let list = list_mut(&mut tp.body, &f.list);
        for &j in f.loads.iter().rev() {
            if let Op::Load { dst, .. } = list.remove(j) {
                remap.insert(dst, f.value);
            }
        }
    }
    replace_uses(&mut p.body, &remap);
}

/// A shared-memory store at the thread body's top level that is overwritten
/// at the same thread-injective address before any thread can observe it.
fn find_dead_store(p: &Program) -> Option<(Path, usize)> {
    let grid = p.grid()?;
    for tpp in thread_loop_paths(&grid.body) {
        let (g, tp) = grid_and_tp(p, &tpp);
        let ctx = Ctx::thread(p, g, tp);
        let body = &tp.body;
        for (i, op) in body.iter().enumerate() {
            let Op::Store { buf, index, .. } = op else { continue };
            if p.buffer(*buf).kind != BufferKind::Shared {
                continue;
            }
            let Some(e) = ctx.affine(*index) else { continue };
            let me = Access {
                base: *buf,
                index: Some(e.clone()),
                kind: Kind::Write,
                marked: false,
            };
            if !ctx.can_mark(&me) {
                continue;
            }
            let touches = |op: &Op| effects_of_op(&ctx, op).iter().any(|a| a.base == *buf);
            let at_e = |op: &Op| {
                effects_of_op(&ctx, op)
                    .iter()
                    .all(|a| a.base != *buf || (a.index.as_ref() == Some(&e) && matches!(a.kind, Kind::Read | Kind::Write)))
            };
            let Some(j) = (i + 1..body.len()).find(|&j| touches(&body[j]) || (body[j].contains_barrier() && !body[j].is_barrier())) else {
                continue;
            };
            match &body[j] {
                Op::Store { buf: b2, index: i2, .. } if b2 == buf && ctx.affine(*i2).as_ref() == Some(&e) => {}
                _ => continue,
            }
            let lo = body[..i].iter().rposition(Op::is_barrier).map_or(0, |k| k + 1);
            let hi = body[j..].iter().position(Op::is_barrier).map_or(body.len(), |k| j + k);
            let window = &body[lo..hi];
            if window.iter().all(|o| at_e(o) && !(o.contains_barrier() && !o.is_barrier())) {
                return Some((tpp, i));
            }
        }
    }
    None
}

/// Store-to-load forwarding inside thread loops, across barriers when
/// the barrier footprint proves no other thread writes the location, plus
/// removal of dead shared-memory stores.
pub fn mem2reg(p: &Program) -> (Program, Mem2RegReport) {
    let mut q = p.clone();
    let mut report = Mem2RegReport::default();
    loop {
        if let Some(f) = find_forward(&q) {
            report.forwarded += f.loads.len();
            apply_forward(&mut q, f);
            continue;
        }
        if let Some((tp, i)) = find_dead_store(&q) {
            tp_mut(&mut q, &tp).body.remove(i);
            report.dead_stores += 1;
            continue;
        }
        break;
    }
    (q, report)
}
