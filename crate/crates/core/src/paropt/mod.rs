//! Parallel-aware optimizations: barrier elimination and motion,
//! store-to-load forwarding across barriers, parallel loop-invariant code
//! motion, and team-region fusion, hoisting and serialization.

mod elim;
mod licm;
mod mem2reg;
mod omp;

pub use elim::{barrier_removable, eliminate_barriers, move_barrier, ElimReport, MoveRejected};
pub use licm::{parallel_hoistable, parallel_licm, serially_hoistable, thread_inner, LicmReport};
pub use mem2reg::{mem2reg, Mem2RegReport};
pub use omp::{fuse_team_regions, hoist_team_regions, serialize_inner};

use crate::effects::Path;
use crate::ir::{Op, ParLoop, Program};

/// Paths (relative to the grid body) of every thread loop, in pre-order.
pub fn thread_loop_paths(body: &[Op]) -> Vec<Path> {
    fn go(ops: &[Op], prefix: &mut Path, out: &mut Vec<Path>) {
        for (i, op) in ops.iter().enumerate() {
            prefix.push(i);
            if let Op::ThreadPar(_) = op {
                out.push(prefix.clone());
            } else {
                for (r, ops) in op.regions().into_iter().enumerate() {
                    prefix.push(r);
                    go(ops, prefix, out);
                    prefix.pop();
                }
            }
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    go(body, &mut Vec::new(), &mut out);
    out
}

pub fn grid_and_tp<'a>(p: &'a Program, tp: &[usize]) -> (&'a ParLoop, &'a ParLoop) {
    let grid = p.grid().expect("grid loop");
    match crate::effects::op_at(&grid.body, tp) {
        Op::ThreadPar(l) => (grid, l),
        _ => panic!("not a thread loop"),
    }
}

pub fn tp_mut<'a>(p: &'a mut Program, tp: &[usize]) -> &'a mut ParLoop {
    let grid = p.grid_mut().expect("grid loop");
    match crate::effects::op_at_mut(&mut grid.body, tp) {
        Op::ThreadPar(l) => l,
        _ => panic!("not a thread loop"),
    }
}

/// The op list containing the op at `path`.
pub fn parent_list_mut<'a>(body: &'a mut Vec<Op>, path: &[usize]) -> &'a mut Vec<Op> {
    if path.len() == 1 {
        return body;
    }
    let n = path.len();
    let op = crate::effects::op_at_mut(body, &path[..n - 2]);
    op.regions_mut().into_iter().nth(path[n - 2]).unwrap()
}

#[cfg(test)]
mod tests;
