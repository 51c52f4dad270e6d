use super::{konst, linear_id, pure, thread_extents, SyncError};
use crate::effects::Path;
use crate::ir::{
    clone_ops, count_ops, BinOp, BufferInfo, BufferKind, DefIndex, ElemTy, Expr, ForLoop, IfOp, Lit,
    Op, ParLoop, Program, Remap, ScalarTy, ValueId, WhileLoop,
};
use crate::paropt::{grid_and_tp, parent_list_mut, thread_inner};

/// Ops that may be re-executed in front of every iteration of `c`.
fn prefix_ok(p: &Program, op: &Op, c: &Op) -> bool {
    match op {
        Op::Pure { .. } => true,
        Op::Load { buf, .. } => {
            count_ops(std::slice::from_ref(c), &|o| matches!(o, Op::Store { buf: b, .. } if p.may_alias(*b, *buf)))
                == 0
        }
        _ => false,
    }
}

/// The barrier-carrying op `c` is the last op of its thread loop and only
/// re-executable ops precede it.
pub(crate) fn ready(p: &Program, tp: &[usize], c: usize) -> bool {
    let (_, l) = grid_and_tp(p, tp);
    c + 1 == l.body.len() && l.body[..c].iter().all(|o| prefix_ok(p, o, &l.body[c]))
}

fn with_tp_list(q: &mut Program, tp: &[usize], f: impl FnOnce(&mut Vec<Op>, usize)) {
    let grid = q.grid_mut().unwrap();
    let list = parent_list_mut(&mut grid.body, tp);
    f(list, *tp.last().unwrap());
}

fn tp_body_mut<'a>(list: &'a mut [Op], at: usize) -> &'a mut Vec<Op> {
    match &mut list[at] {
        Op::ThreadPar(l) => &mut l.body,
        _ => unreachable!(),
    }
}

/// Flanks the op `c` of thread loop `tp` with barriers. Positions that
/// already hold a barrier, or lie at the loop boundary, are left alone.
pub fn wrap_with_barriers(p: &Program, tp: &[usize], c: usize) -> Program {
    let mut q = p.clone();
    with_tp_list(&mut q, tp, |list, at| {
        let body = tp_body_mut(list, at);
        if c + 1 < body.len() && !body[c + 1].is_barrier() {
            body.insert(c + 1, Op::Barrier);
        }
        if c > 0 && !body[c - 1].is_barrier() {
            body.insert(c, Op::Barrier);
        }
    });
    q
}

/// Like [`wrap_with_barriers`] but only where a split is needed before
/// the op can be interchanged.
pub(crate) fn wrap_minimal(p: &Program, tp: &[usize], c: usize) -> Program {
    let (_, l) = grid_and_tp(p, tp);
    let need_before = !l.body[..c].iter().all(|o| prefix_ok(p, o, &l.body[c]));
    let mut q = p.clone();
    with_tp_list(&mut q, tp, |list, at| {
        let body = tp_body_mut(list, at);
        if c + 1 < body.len() && !body[c + 1].is_barrier() {
            body.insert(c + 1, Op::Barrier);
        }
        if need_before && c > 0 && !body[c - 1].is_barrier() {
            body.insert(c, Op::Barrier);
        }
    });
    q
}

/// Rebuilds `v` outside the thread loop if it is a pure function of
/// values defined outside. New ops are appended to `out`.
fn uniform(q: &mut Program, l: &ParLoop, v: ValueId, out: &mut Vec<Op>, remap: &mut Remap) -> Option<ValueId> {
    if remap.contains(v) {
        return Some(remap.get(v));
    }
    if !thread_inner(l).contains(&v) {
        return Some(v);
    }
    let expr = l.body.iter().find_map(|o| match o {
        Op::Pure { dst, expr } if *dst == v => Some(expr.clone()),
        _ => None,
    })?;
    let mut expr = expr;
    for o in expr.operands_mut() {
        *o = uniform(q, l, *o, out, remap)?;
    }
    let n = crate::ir::fresh_value(q, v);
    out.push(Op::Pure { dst: n, expr });
    remap.insert(v, n);
    Some(n)
}

fn parts(p: &Program, tp: &[usize]) -> (ParLoop, Vec<Op>, Op) {
    let (_, l) = grid_and_tp(p, tp);
    let mut prefix = l.body.clone();
    let c = prefix.pop().expect("non-empty thread loop");
    (l.clone(), prefix, c)
}

fn replace(q: &mut Program, tp: &[usize], hoisted: Vec<Op>, new: Vec<Op>) {
    with_tp_list(q, tp, |list, at| {
        let mut ops = hoisted;
        ops.extend(new);
        list.splice(at..at + 1, ops);
    });
}

/// `par { pre; for i { body } }` becomes `for i { par { pre; body } }`.
pub fn interchange_for(p: &Program, tp: &[usize]) -> Result<Program, SyncError> {
    let (l, prefix, c) = parts(p, tp);
    let Op::For(f) = c else {
        return Err(SyncError::Malformed("expected a for loop".into()));
    };
    if !f.carried.is_empty() {
        return Err(SyncError::Carried);
    }
    let mut q = p.clone();
    let mut hoisted = Vec::new();
    let mut remap = Remap::new();
    let lower = uniform(&mut q, &l, f.lower, &mut hoisted, &mut remap).ok_or(SyncError::DivergentTripCount)?;
    let upper = uniform(&mut q, &l, f.upper, &mut hoisted, &mut remap).ok_or(SyncError::DivergentTripCount)?;
    let mut body = prefix;
    body.extend(f.body);
    let new = Op::For(ForLoop {
        iv: f.iv,
        lower,
        upper,
        carried: Vec::new(),
        body: vec![Op::ThreadPar(ParLoop { ivs: l.ivs, extents: l.extents, body })],
        yields: Vec::new(),
    });
    replace(&mut q, tp, hoisted, vec![new]);
    Ok(q)
}

/// `par { pre; if c { a } else { b } }` becomes
/// `if c { par { pre; a } } else { par { pre; b } }` for uniform `c`.
pub fn interchange_if(p: &Program, tp: &[usize]) -> Result<Program, SyncError> {
    let (l, prefix, c) = parts(p, tp);
    let Op::If(i) = c else {
        return Err(SyncError::Malformed("expected an if".into()));
    };
    if !i.results.is_empty() {
        return Err(SyncError::IfResults);
    }
    let mut q = p.clone();
    if let Some(Lit::Bool(b)) = DefIndex::build(p).const_value(p, i.cond) {
        let mut body = prefix;
        body.extend(if b { i.then_ops } else { i.else_ops });
        let new = Op::ThreadPar(ParLoop { ivs: l.ivs, extents: l.extents, body });
        replace(&mut q, tp, Vec::new(), vec![new]);
        return Ok(q);
    }
    let mut hoisted = Vec::new();
    let cond = uniform(&mut q, &l, i.cond, &mut hoisted, &mut Remap::new()).ok_or(SyncError::DivergentBarrier)?;
    let branch = |q: &mut Program, ops: Vec<Op>, fresh: bool| -> Vec<Op> {
        if ops.is_empty() {
            return Vec::new();
        }
        let mut body = prefix.clone();
        body.extend(ops);
        let tp = Op::ThreadPar(ParLoop { ivs: l.ivs.clone(), extents: l.extents.clone(), body });
        if fresh {
            clone_ops(q, &[tp], &mut Remap::new())
        } else {
            vec![tp]
        }
    };
    let then_ops = branch(&mut q, i.then_ops, false);
    let else_ops = branch(&mut q, i.else_ops, true);
    let new = Op::If(IfOp {
        cond,
        results: Vec::new(),
        then_ops,
        then_yields: Vec::new(),
        else_ops,
        else_yields: Vec::new(),
    });
    replace(&mut q, tp, hoisted, vec![new]);
    Ok(q)
}

/// `if lin == 0 { helper[0] = cond }`
fn publish(q: &mut Program, l: &ParLoop, ext: &[i64], helper: crate::ir::BufferId, cond: ValueId) -> Vec<Op> {
    let (mut ops, lin) = linear_id(q, &l.ivs, ext);
    let (z, zero) = konst(q, Lit::I64(0), "zero");
    ops.push(z);
    let first = pure(q, &mut ops, "first", ScalarTy::Bool, Expr::Binary(BinOp::Eq, lin, zero));
    let mut then_ops = Vec::new();
    let c = pure(q, &mut then_ops, "cond", ScalarTy::I64, Expr::Cast(ScalarTy::I64, cond));
    then_ops.push(Op::Store { buf: helper, index: zero, value: c });
    ops.push(Op::If(IfOp {
        cond: first,
        results: Vec::new(),
        then_ops,
        then_yields: Vec::new(),
        else_ops: Vec::new(),
        else_yields: Vec::new(),
    }));
    ops
}

/// `par { pre; while (c) { body } }` becomes a pre-check loop that
/// evaluates `c` in every thread and publishes thread 0's value in a
/// one-element block helper, followed by a block-level loop on the helper
/// whose thread loop runs the body and re-evaluates the condition.
pub fn interchange_while(p: &Program, tp: &[usize]) -> Result<Program, SyncError> {
    let (l, prefix, c) = parts(p, tp);
    let Op::While(w) = c else {
        return Err(SyncError::Malformed("expected a while loop".into()));
    };
    if !w.carried.is_empty() {
        return Err(SyncError::Carried);
    }
    let mut q = p.clone();
    let ext = thread_extents(&q, &l)?;
    let helper = q.new_buffer(BufferInfo {
        name: format!("while_cond_{}", q.buffers.len()),
        elem: ElemTy::I64,
        kind: BufferKind::Shared,
        extent: Some(1),
    });

    let mut check = prefix.clone();
    check.extend(w.cond_ops.iter().cloned());
    check.extend(publish(&mut q, &l, &ext, helper, w.cond));
    let check = Op::ThreadPar(ParLoop { ivs: l.ivs.clone(), extents: l.extents.clone(), body: check });
    let check = clone_ops(&mut q, &[check], &mut Remap::new());

    let mut body = prefix;
    body.extend(w.body);
    body.extend(w.cond_ops);
    body.extend(publish(&mut q, &l, &ext, helper, w.cond));
    let inner = Op::ThreadPar(ParLoop { ivs: l.ivs, extents: l.extents, body });

    let mut cond_ops = Vec::new();
    let (z, zero) = konst(&mut q, Lit::I64(0), "zero");
    cond_ops.push(z);
    let hv = q.new_value("again", ScalarTy::I64);
    cond_ops.push(Op::Load { dst: hv, buf: helper, index: zero });
    let cond = pure(&mut q, &mut cond_ops, "again", ScalarTy::Bool, Expr::Binary(BinOp::Ne, hv, zero));
    let lp = Op::While(WhileLoop { carried: Vec::new(), cond_ops, cond, body: vec![inner], yields: Vec::new() });

    let mut new = check;
    new.push(lp);
    replace(&mut q, tp, Vec::new(), new);
    q.grid_mut().unwrap().body.insert(0, Op::SharedAlloc { buf: helper });
    Ok(q)
}

/// Interchanges the thread loop at `tp` with its last op.
pub fn interchange(p: &Program, tp: &Path) -> Result<Program, SyncError> {
    let (_, l) = grid_and_tp(p, tp);
    match l.body.last() {
        Some(Op::For(_)) => interchange_for(p, tp),
        Some(Op::If(_)) => interchange_if(p, tp),
        Some(Op::While(_)) => interchange_while(p, tp),
        _ => Err(SyncError::Malformed("nothing to interchange".into())),
    }
}
