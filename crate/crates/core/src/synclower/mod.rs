//! Removal of GPU barriers from thread loops: fission at a barrier with
//! min-cut live-value spilling, wrapping nested barrier-carrying ops, and
//! interchange of thread loops with serial `for`, uniform `if` and `while`.

mod interchange;
mod mincut;
mod split;

pub use interchange::{interchange, interchange_for, interchange_if, interchange_while, wrap_with_barriers};
pub use mincut::{min_cut_live_values, spill_all_sinks, SpillPlan, ValueGraph};
pub use split::{split_parallel_at_barrier, value_graph, SplitOptions};

use crate::effects::Path;
use crate::ir::{BinOp, DefIndex, Expr, Lit, Op, ParLoop, Program, ScalarTy, ValueId};
use crate::paropt::{eliminate_barriers, thread_loop_paths};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SyncError {
    #[error("divergent trip count")]
    DivergentTripCount,
    #[error("divergent barrier")]
    DivergentBarrier,
    #[error("loop-carried value across a barrier")]
    Carried,
    #[error("barrier inside an if with results")]
    IfResults,
    #[error("thread extents must be constant")]
    BlockExtent,
    #[error("{0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CpuifyOptions {
    pub elim: bool,
    pub split: SplitOptions,
}

impl Default for CpuifyOptions {
    fn default() -> Self {
        CpuifyOptions { elim: true, split: SplitOptions::default() }
    }
}

pub(crate) fn konst(p: &mut Program, lit: Lit, name: &str) -> (Op, ValueId) {
    let v = p.new_value(name, lit.ty());
    (Op::Pure { dst: v, expr: Expr::Const(lit) }, v)
}

pub(crate) fn pure(p: &mut Program, ops: &mut Vec<Op>, name: &str, ty: ScalarTy, expr: Expr) -> ValueId {
    let v = p.new_value(name, ty);
    ops.push(Op::Pure { dst: v, expr });
    v
}

pub(crate) fn thread_extents(p: &Program, l: &ParLoop) -> Result<Vec<i64>, SyncError> {
    let defs = DefIndex::build(p);
    l.extents
        .iter()
        .map(|e| defs.const_i64(p, *e).ok_or(SyncError::BlockExtent))
        .collect()
}

/// `tx + BX*(ty + BY*tz)` over the given thread ids.
pub(crate) fn linear_id(p: &mut Program, ivs: &[ValueId], ext: &[i64]) -> (Vec<Op>, ValueId) {
    let mut ops = Vec::new();
    let mut acc = ivs[0];
    let mut stride = 1;
    for d in 1..ivs.len() {
        stride *= ext[d - 1];
        if ext[d] == 1 {
            continue;
        }
        let (c, cv) = konst(p, Lit::I64(stride), "stride");
        ops.push(c);
        let m = pure(p, &mut ops, "lin", ScalarTy::I64, Expr::Binary(BinOp::Mul, ivs[d], cv));
        acc = pure(p, &mut ops, "lin", ScalarTy::I64, Expr::Binary(BinOp::Add, acc, m));
    }
    (ops, acc)
}

/// First thread loop (pre-order) that still contains a barrier.
pub fn first_synchronizing_loop(p: &Program) -> Option<Path> {
    let grid = p.grid()?;
    thread_loop_paths(&grid.body).into_iter().find(|tp| {
        matches!(crate::effects::op_at(&grid.body, tp), Op::ThreadPar(l) if l.body.iter().any(Op::contains_barrier))
    })
}

fn step(p: &Program, tp: &Path, opts: SplitOptions) -> Result<Program, SyncError> {
    let (_, l) = crate::paropt::grid_and_tp(p, tp);
    if let Some(at) = l.body.iter().position(Op::is_barrier) {
        return split_parallel_at_barrier(p, tp, at, opts);
    }
    let c = l.body.iter().position(Op::contains_barrier).expect("nested barrier");
    if interchange::ready(p, tp, c) {
        interchange(p, tp)
    } else {
        Ok(interchange::wrap_minimal(p, tp, c))
    }
}

/// Removes every barrier: optional elimination first, then repeatedly
/// split at a direct barrier, wrap a barrier-carrying op, or interchange
/// it with its thread loop.
pub fn cpuify(p: &Program, opts: CpuifyOptions) -> Result<Program, SyncError> {
    let mut q = if opts.elim { eliminate_barriers(p).0 } else { p.clone() };
    let limit = 64 + 16 * crate::ir::count_ops(&q.body, &|_| true);
    for _ in 0..limit {
        let Some(tp) = first_synchronizing_loop(&q) else {
            return Ok(q);
        };
        q = step(&q, &tp, opts.split)?;
    }
    Err(SyncError::Malformed("synchronization lowering did not converge".into()))
}

#[cfg(test)]
mod tests;
