//! Lowering of barrier-free parallel IR to team regions and work-share
//! loops, and C code generation for the result.

mod emit;

pub use emit::emit_c;

use crate::ir::{count_ops, Op, ParLoop, Program, TeamRegion};
use crate::paropt::{fuse_team_regions, hoist_team_regions, serialize_inner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerMode {
    /// Thread loops become nested team regions.
    #[default]
    Par,
    /// Thread loops run serially inside each block iteration.
    Ser,
}

impl std::str::FromStr for InnerMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "par" => Ok(InnerMode::Par),
            "ser" => Ok(InnerMode::Ser),
            _ => Err(format!("unknown inner mode {s}, expected par or ser")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LowerOptions {
    pub mode: InnerMode,
    /// Fuse and hoist team regions.
    pub ompopt: bool,
}

impl Default for LowerOptions {
    fn default() -> Self {
        LowerOptions { mode: InnerMode::Par, ompopt: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LowerError {
    #[error("unlowered synchronization")]
    Unlowered,
    #[error("program has no grid loop")]
    NoGrid,
}

fn team(body: Vec<Op>) -> Op {
    Op::TeamRegion(TeamRegion { threads: None, body })
}

/// Grid body of `Pure* ThreadPar` without shared memory: one work-share
/// loop over threads and blocks, blocks outermost.
fn collapse(g: &ParLoop) -> Option<Op> {
    let (last, pre) = g.body.split_last()?;
    let Op::ThreadPar(tp) = last else { return None };
    if !pre.iter().all(|o| matches!(o, Op::Pure { .. })) {
        return None;
    }
    let mut body = pre.to_vec();
    body.extend(tp.body.iter().cloned());
    let mut ivs = tp.ivs.clone();
    ivs.extend(g.ivs.iter().copied());
    let mut extents = tp.extents.clone();
    extents.extend(g.extents.iter().copied());
    Some(Op::WorkShare(ParLoop { ivs, extents, body }))
}

fn lower_threads(ops: &[Op]) -> Vec<Op> {
    ops.iter()
        .map(|op| match op {
            Op::ThreadPar(l) => team(vec![Op::WorkShare(l.clone())]),
            other => {
                let mut o = other.clone();
                for r in o.regions_mut() {
                    *r = lower_threads(r);
                }
                o
            }
        })
        .collect()
}

/// Turns the grid loop into a team region work-sharing blocks, and each
/// thread loop into a nested team region (`Par`) or a serial nest (`Ser`).
pub fn lower_to_cpu(p: &Program, opts: LowerOptions) -> Result<Program, LowerError> {
    if p.barrier_count() > 0 {
        return Err(LowerError::Unlowered);
    }
    let mut q = p.clone();
    let gi = q.body.iter().position(|o| matches!(o, Op::GridPar(_))).ok_or(LowerError::NoGrid)?;
    let Op::GridPar(g) = q.body[gi].clone() else { unreachable!() };
    let no_shared = count_ops(&g.body, &|o| matches!(o, Op::SharedAlloc { .. })) == 0;
    let lowered = match collapse(&g) {
        Some(ws) if no_shared => team(vec![ws]),
        _ => {
            let body = lower_threads(&g.body);
            team(vec![Op::WorkShare(ParLoop { ivs: g.ivs.clone(), extents: g.extents.clone(), body })])
        }
    };
    q.body[gi] = lowered;
    if opts.mode == InnerMode::Ser {
        q = serialize_inner(&q);
    }
    if opts.ompopt {
        loop {
            let (h, a) = hoist_team_regions(&q);
            let (f, b) = fuse_team_regions(&h);
            q = f;
            if a + b == 0 {
                break;
            }
        }
    }
    Ok(q)
}

#[cfg(test)]
mod tests;
