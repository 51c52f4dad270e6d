//! Dynamic race detection over the canonical SIMT schedule.

use std::collections::HashMap;

use super::data::KernelData;
use super::interp::{run_simt_with, RunOptions};
use super::ExecError;
use crate::ir::{BufferKind, Program};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Race {
    pub buffer: String,
    pub index: i64,
    pub first: ([i64; 3], [i64; 3]),
    pub second: ([i64; 3], [i64; 3]),
    pub writes: (bool, bool),
}

impl std::fmt::Display for Race {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = |w| if w { "write" } else { "read" };
        write!(
            f,
            "@{}[{}]: {} by block {:?} thread {:?} races with {} by block {:?} thread {:?}",
            self.buffer,
            self.index,
            kind(self.writes.0),
            self.first.0,
            self.first.1,
            kind(self.writes.1),
            self.second.0,
            self.second.1
        )
    }
}

#[derive(Clone, Copy)]
struct Acc {
    block: [i64; 3],
    thread: [i64; 3],
    segment: u64,
    write: bool,
}

/// Conflicting accesses that no barrier orders: same block and segment but
/// different threads, or different blocks on a global buffer.
pub fn race_check(p: &Program, input: &KernelData) -> Result<Vec<Race>, ExecError> {
    let mut by_addr: HashMap<(u32, i64), Vec<Acc>> = HashMap::new();
    {
        let mut obs = |e: &super::interp::Event<'_>| {
            if let (Some(block), Some(thread)) = (e.block, e.thread) {
                by_addr.entry((e.buf.0, e.index)).or_default().push(Acc {
                    block,
                    thread,
                    segment: e.segment,
                    write: e.write,
                });
            }
        };
        run_simt_with(p, input, RunOptions::default(), Some(&mut obs))?;
    }
    let mut races = Vec::new();
    let mut keys: Vec<_> = by_addr.keys().copied().collect();
    keys.sort();
    for key in keys {
        let accs = &by_addr[&key];
        if !accs.iter().any(|a| a.write) {
            continue;
        }
        let global = p.buffer(crate::ir::BufferId(key.0)).kind == BufferKind::Param;
        'outer: for (i, a) in accs.iter().enumerate() {
            if !a.write {
                continue;
            }
            for b in accs.iter().skip(i + 1).chain(accs[..i].iter()) {
                let clash = if a.block == b.block {
                    a.segment == b.segment && a.thread != b.thread
                } else {
                    global
                };
                if clash {
                    races.push(Race {
                        buffer: p.buffer(crate::ir::BufferId(key.0)).name.clone(),
                        index: key.1,
                        first: (a.block, a.thread),
                        second: (b.block, b.thread),
                        writes: (a.write, b.write),
                    });
                    break 'outer;
                }
            }
        }
    }
    Ok(races)
}
