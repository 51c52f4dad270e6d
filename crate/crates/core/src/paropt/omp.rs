use crate::ir::{ForLoop, Op, ParLoop, Program, TeamRegion};

fn fuse_list(ops: &mut Vec<Op>) -> usize {
    let mut n = 0;
    for op in ops.iter_mut() {
        for r in op.regions_mut() {
            n += fuse_list(r);
        }
    }
    let mut out: Vec<Op> = Vec::with_capacity(ops.len());
    for op in ops.drain(..) {
        match (out.last_mut(), op) {
            (Some(Op::TeamRegion(a)), Op::TeamRegion(b)) if a.threads == b.threads => {
                a.body.push(Op::TeamBarrier);
                a.body.extend(b.body);
                n += 1;
            }
            (_, op) => out.push(op),
        }
    }
    *ops = out;
    n
}

/// Merges adjacent team regions, separating their bodies by a team barrier.
/// Returns the number of merges.
pub fn fuse_team_regions(p: &Program) -> (Program, usize) {
    let mut q = p.clone();
    let n = fuse_list(&mut q.body);
    (q, n)
}

fn hoist_list(ops: &mut [Op]) -> usize {
    let mut n = 0;
    for op in ops.iter_mut() {
        for r in op.regions_mut() {
            n += hoist_list(r);
        }
        let Op::For(f) = op else { continue };
        let Some(Op::TeamRegion(_)) = f.body.last() else { continue };
        let rest_pure = f.body[..f.body.len() - 1]
            .iter()
            .all(|o| matches!(o, Op::Pure { .. }));
        if !f.carried.is_empty() || !rest_pure {
            continue;
        }
        let Some(Op::TeamRegion(team)) = f.body.pop() else { unreachable!() };
        let mut body = std::mem::take(&mut f.body);
        body.extend(team.body);
        body.push(Op::TeamBarrier);
        let inner = ForLoop {
            iv: f.iv,
            lower: f.lower,
            upper: f.upper,
            carried: Vec::new(),
            body,
            yields: Vec::new(),
        };
        *op = Op::TeamRegion(TeamRegion {
            threads: team.threads,
            body: vec![Op::For(inner)],
        });
        n += 1;
    }
    n
}

/// Moves a team region out of a serial loop whose body is that region
/// (plus pure ops); each iteration ends with a team barrier instead.
pub fn hoist_team_regions(p: &Program) -> (Program, usize) {
    let mut q = p.clone();
    let n = hoist_list(&mut q.body);
    (q, n)
}

fn inline_nested(ops: Vec<Op>) -> Vec<Op> {
    let mut out = Vec::with_capacity(ops.len());
    for op in ops {
        match op {
            Op::TeamRegion(t) => out.extend(inline_nested(t.body)),
            Op::TeamBarrier => {}
            Op::WorkShare(l) => out.push(Op::SerialNest(ParLoop {
                body: inline_nested(l.body),
                ..l
            })),
            mut op => {
                for r in op.regions_mut() {
                    *r = inline_nested(std::mem::take(r));
                }
                out.push(op);
            }
        }
    }
    out
}

/// Runs every team region nested in another one serially on the
/// enclosing worker.
pub fn serialize_inner(p: &Program) -> Program {
    let mut q = p.clone();
    for op in q.body.iter_mut() {
        if let Op::TeamRegion(t) = op {
            let body = std::mem::take(&mut t.body);
            t.body = body
                .into_iter()
                .flat_map(|o| match o {
                    Op::TeamRegion(inner) => inline_nested(inner.body),
                    mut o => {
                        for r in o.regions_mut() {
                            *r = inline_nested(std::mem::take(r));
                        }
                        vec![o]
                    }
                })
                .collect();
        }
    }
    q
}
