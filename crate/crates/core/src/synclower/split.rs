use std::collections::{BTreeMap, BTreeSet};

use super::mincut::{min_cut_live_values, SpillPlan, ValueGraph};
use super::{linear_id, pure, thread_extents, SyncError};
use crate::ir::{
    clone_ops, count_ops, defined_values, fresh_value, free_uses, op_uses, replace_uses, BufferInfo,
    BufferKind, ElemTy, Expr, Op, ParLoop, Program, Remap, ScalarTy, ValueId,
};
use crate::paropt::{grid_and_tp, parent_list_mut};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitOptions {
    /// Choose cached values by minimum cut; otherwise cache every live
    /// value that depends on a non-recomputable one.
    pub mincut: bool,
    /// Fault injection: forget the scratch stores in the first loop.
    pub skip_spill_stores: bool,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions { mincut: true, skip_spill_stores: false }
    }
}

fn written_anywhere(p: &Program, ops: &[Op], buf: crate::ir::BufferId) -> bool {
    count_ops(ops, &|o| matches!(o, Op::Store { buf: b, .. } if p.may_alias(*b, buf))) > 0
}

/// Graph of the values defined before the barrier at `at` in the thread
/// loop `tp`. Pure values are recomputable; so are loads from buffers the
/// loop never writes.
pub fn value_graph(p: &Program, tp: &[usize], at: usize) -> ValueGraph {
    let (_, l) = grid_and_tp(p, tp);
    let before = &l.body[..at];
    let mut g = ValueGraph::default();
    let mut node: BTreeMap<ValueId, usize> = BTreeMap::new();
    for op in before {
        let recomputable = match op {
            Op::Pure { .. } => true,
            Op::Load { buf, .. } => !written_anywhere(p, &l.body, *buf),
            _ => false,
        };
        let uses: BTreeSet<ValueId> = match op {
            Op::Pure { .. } | Op::Load { .. } => op_uses(op).into_iter().collect(),
            _ => free_uses(std::slice::from_ref(op)),
        };
        for v in defined_values(op) {
            let i = g.values.len();
            g.values.push(v);
            node.insert(v, i);
            if !recomputable {
                g.sources.insert(i);
            }
            for u in &uses {
                if let Some(&j) = node.get(u) {
                    g.edges.push((j, i));
                }
            }
        }
    }
    for v in free_uses(&l.body[at + 1..]) {
        if let Some(&i) = node.get(&v) {
            g.sinks.insert(i);
        }
    }
    g
}

fn reachable_from_sources(g: &ValueGraph) -> BTreeSet<usize> {
    let mut seen: BTreeSet<usize> = g.sources.clone();
    let mut stack: Vec<usize> = seen.iter().copied().collect();
    while let Some(v) = stack.pop() {
        for &(a, b) in &g.edges {
            if a == v && seen.insert(b) {
                stack.push(b);
            }
        }
    }
    seen
}

fn plan(g: &ValueGraph, mincut: bool) -> SpillPlan {
    if mincut {
        return min_cut_live_values(g);
    }
    let tainted = reachable_from_sources(g);
    let cut: BTreeSet<usize> = g.sinks.intersection(&tainted).copied().collect();
    let recompute = g.recompute_set(&cut);
    SpillPlan { cut, recompute }
}

fn ident(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

/// Splits the thread loop `tp` at its direct child barrier `at` into two
/// loops over the same thread space. Cached values travel through block
/// scratch buffers indexed by the linear thread id; everything else the
/// second loop needs is recomputed.
pub fn split_parallel_at_barrier(p: &Program, tp: &[usize], at: usize, opts: SplitOptions) -> Result<Program, SyncError> {
    let (_, l) = grid_and_tp(p, tp);
    let l: ParLoop = l.clone();
    if !l.body.get(at).is_some_and(Op::is_barrier) {
        return Err(SyncError::Malformed("split point is not a direct barrier".into()));
    }
    let g = value_graph(p, tp, at);
    let plan = plan(&g, opts.mincut);
    let mut q = p.clone();
    let ext = thread_extents(&q, &l)?;
    let size: i64 = ext.iter().product();

    let recompute: BTreeSet<ValueId> = plan.recompute.iter().map(|&i| g.values[i]).collect();
    let mut first = l.body[..at].to_vec();
    let mut second = Vec::new();
    let ivs2: Vec<ValueId> = l.ivs.iter().map(|v| fresh_value(&mut q, *v)).collect();
    let mut remap = Remap::new();
    for (a, b) in l.ivs.iter().zip(&ivs2) {
        remap.insert(*a, *b);
    }
    let mut allocs = Vec::new();
    if !plan.cut.is_empty() {
        let (ops1, lin1) = linear_id(&mut q, &l.ivs, &ext);
        first.extend(ops1);
        let (ops2, lin2) = linear_id(&mut q, &ivs2, &ext);
        second.extend(ops2);
        for &i in &plan.cut {
            let v = g.values[i];
            let ty = q.ty(v);
            let elem = if ty == ScalarTy::F64 { ElemTy::F64 } else { ElemTy::I64 };
            let name = format!("spill_{}_{}", ident(q.value_name(v)), v.0);
            let buf = q.new_buffer(BufferInfo { name, elem, kind: BufferKind::Shared, extent: Some(size as usize) });
            allocs.push(Op::SharedAlloc { buf });
            if !opts.skip_spill_stores {
                let stored = if ty == ScalarTy::Bool {
                    pure(&mut q, &mut first, "spill", ScalarTy::I64, Expr::Cast(ScalarTy::I64, v))
                } else {
                    v
                };
                first.push(Op::Store { buf, index: lin1, value: stored });
            }
            let loaded = q.new_value(q.value_name(v).to_string(), elem.scalar());
            second.push(Op::Load { dst: loaded, buf, index: lin2 });
            let v2 = if ty == ScalarTy::Bool {
                pure(&mut q, &mut second, "unspill", ScalarTy::Bool, Expr::Cast(ScalarTy::Bool, loaded))
            } else {
                loaded
            };
            remap.insert(v, v2);
        }
    }
    for op in &l.body[..at] {
        if defined_values(op).iter().any(|v| recompute.contains(v)) {
            second.extend(clone_ops(&mut q, std::slice::from_ref(op), &mut remap));
        }
    }
    let mut after = l.body[at + 1..].to_vec();
    replace_uses(&mut after, &remap);
    let keep_second = !after.is_empty();
    second.extend(after);

    let mut loops = Vec::new();
    if !l.body[..at].is_empty() {
        loops.push(Op::ThreadPar(ParLoop { ivs: l.ivs.clone(), extents: l.extents.clone(), body: first }));
    }
    if keep_second {
        loops.push(Op::ThreadPar(ParLoop { ivs: ivs2, extents: l.extents.clone(), body: second }));
    }
    let grid = q.grid_mut().unwrap();
    let list = parent_list_mut(&mut grid.body, tp);
    let pos = *tp.last().unwrap();
    list.splice(pos..pos + 1, loops);
    grid.body.splice(0..0, allocs);
    Ok(q)
}
