//! Memory effects, barrier footprints and conflict queries.
//!
//! Indices are kept as affine forms over thread ids, block ids and values
//! defined outside the analysed parallel loop. Anything else is unknown
//! (`None`, printed `?`). An entry may be *marked*: it then stands for the
//! accesses of every thread except the current one, which is only sound
//! when the index is injective in the thread id.

mod affine;
mod conflict;
mod scan;

use std::collections::BTreeSet;
use std::fmt;

pub use affine::{Affine, Ctx, Sym};
pub use conflict::{indices_may_equal, is_thread_injective, may_alias_same_thread, may_conflict, ThreadVars};
pub use scan::{
    barrier_footprint, barrier_paths, dump_effects, neighborhood, op_at, op_at_mut, Neighborhood,
    Path,
};

use crate::ir::{BufferId, Op, Program};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Kind {
    Read,
    Write,
    Alloc,
    Free,
}

impl Kind {
    fn letter(self) -> &'static str {
        match self {
            Kind::Read => "R",
            Kind::Write => "W",
            Kind::Alloc => "A",
            Kind::Free => "F",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Access {
    pub base: BufferId,
    /// `None` is the unknown index.
    pub index: Option<Affine>,
    pub kind: Kind,
    /// Excludes the current thread's own access.
    pub marked: bool,
}

/// A normalized set of accesses.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EffectSet {
    pub entries: BTreeSet<Access>,
}

impl EffectSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, a: Access) {
        self.entries.insert(a);
    }

    pub fn union(&mut self, other: &EffectSet) {
        self.entries.extend(other.entries.iter().cloned());
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Access> {
        self.entries.iter()
    }

    pub fn writes(&self) -> EffectSet {
        self.filter(|a| a.kind != Kind::Read)
    }

    pub fn filter(&self, f: impl Fn(&Access) -> bool) -> EffectSet {
        EffectSet {
            entries: self.entries.iter().filter(|a| f(a)).cloned().collect(),
        }
    }

    pub fn on_buffer(&self, p: &Program, b: BufferId) -> EffectSet {
        self.filter(|a| p.may_alias(a.base, b))
    }

    /// Marks every entry whose index is injective in the thread id.
    pub fn mark(&self, ctx: &Ctx<'_>) -> EffectSet {
        EffectSet {
            entries: self
                .entries
                .iter()
                .map(|a| {
                    let mut a = a.clone();
                    a.marked = ctx.can_mark(&a);
                    a
                })
                .collect(),
        }
    }

    /// Does the set cover a concrete access? `eval` evaluates an index.
    pub fn covers(&self, p: &Program, base: BufferId, kind: Kind, addr: i64, eval: &dyn Fn(&Affine) -> Option<i64>) -> bool {
        self.entries.iter().any(|a| {
            a.kind == kind
                && p.may_alias(a.base, base)
                && match &a.index {
                    None => true,
                    Some(e) => a.base != base || eval(e).is_none_or(|v| v == addr),
                }
        })
    }

    pub fn display<'a>(&'a self, p: &'a Program) -> impl fmt::Display + 'a {
        DisplaySet(self, p)
    }
}

struct DisplaySet<'a>(&'a EffectSet, &'a Program);

impl fmt::Display for DisplaySet<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("{}");
        }
        for (i, a) in self.0.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            let idx = match &a.index {
                Some(e) => e.display(self.1).to_string(),
                None => "?".to_string(),
            };
            write!(f, "{} @{}[{}]", a.kind.letter(), self.1.buffer(a.base).name, idx)?;
            if a.marked {
                f.write_str(" excl")?;
            }
        }
        Ok(())
    }
}

/// Effects of a list of ops (at any depth).
pub fn effects_of(ctx: &Ctx<'_>, ops: &[Op]) -> EffectSet {
    let mut s = EffectSet::new();
    for op in ops {
        add_op(ctx, op, &mut s);
    }
    s
}

pub fn effects_of_op(ctx: &Ctx<'_>, op: &Op) -> EffectSet {
    let mut s = EffectSet::new();
    add_op(ctx, op, &mut s);
    s
}

fn add_op(ctx: &Ctx<'_>, op: &Op, s: &mut EffectSet) {
    match op {
        Op::Load { buf, index, .. } => s.insert(Access {
            base: *buf,
            index: ctx.affine(*index),
            kind: Kind::Read,
            marked: false,
        }),
        Op::Store { buf, index, .. } => s.insert(Access {
            base: *buf,
            index: ctx.affine(*index),
            kind: Kind::Write,
            marked: false,
        }),
        Op::SharedAlloc { buf } => {
            for kind in [Kind::Alloc, Kind::Free] {
                s.insert(Access {
                    base: *buf,
                    index: None,
                    kind,
                    marked: false,
                });
            }
        }
        _ => {
            for r in op.regions() {
                for o in r {
                    add_op(ctx, o, s);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests;
