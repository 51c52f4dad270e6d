//! Region-structured SSA IR for kernel launches.
//!
//! A [`Program`] is a host-level op list holding exactly one launch root
//! (a [`Op::GridPar`] before lowering, a [`Op::TeamRegion`] after). Blocks
//! own their shared allocations, threads live inside [`Op::ThreadPar`], and
//! synchronization is the explicit [`Op::Barrier`].

mod edit;
mod equiv;
mod verify;
mod walk;

pub use edit::{clone_ops, fresh_value, insert_before, replace_uses, Remap};
pub use equiv::structurally_equal;
pub use verify::{verify, verify_cpu, Diagnostic};
pub use walk::{all_defs, count_ops, defined_values, free_uses, op_uses, DefIndex, DefSite};

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ValueId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BufferId(pub u32);

impl fmt::Display for ValueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "%{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScalarTy {
    I64,
    F64,
    Bool,
}

impl fmt::Display for ScalarTy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalarTy::I64 => "i64",
            ScalarTy::F64 => "f64",
            ScalarTy::Bool => "bool",
        })
    }
}

/// Element type of a buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElemTy {
    I64,
    F64,
}

impl ElemTy {
    pub fn scalar(self) -> ScalarTy {
        match self {
            ElemTy::I64 => ScalarTy::I64,
            ElemTy::F64 => ScalarTy::F64,
        }
    }
}

impl fmt::Display for ElemTy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.scalar().fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BufferKind {
    /// Kernel argument living in global memory.
    Param,
    /// Block-scoped allocation (user `shared`, spill scratch, loop helpers).
    Shared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BufferInfo {
    pub name: String,
    pub elem: ElemTy,
    pub kind: BufferKind,
    /// Element count for shared buffers.
    pub extent: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueInfo {
    pub name: String,
    pub ty: ScalarTy,
}

/// Host-side size expression over scalar parameters, used to size
/// parameter buffers when synthesizing inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum SizeExpr {
    Const(i64),
    Param(String),
    Bin(SizeOp, Box<SizeExpr>, Box<SizeExpr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl SizeExpr {
    pub fn eval(&self, lookup: &dyn Fn(&str) -> Option<i64>) -> Option<i64> {
        Some(match self {
            SizeExpr::Const(c) => *c,
            SizeExpr::Param(p) => lookup(p)?,
            SizeExpr::Bin(op, a, b) => {
                let (a, b) = (a.eval(lookup)?, b.eval(lookup)?);
                match op {
                    SizeOp::Add => a.wrapping_add(b),
                    SizeOp::Sub => a.wrapping_sub(b),
                    SizeOp::Mul => a.wrapping_mul(b),
                    SizeOp::Div => {
                        if b == 0 {
                            return None;
                        }
                        a / b
                    }
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamKind {
    Buffer { buf: BufferId, size: Option<SizeExpr> },
    Scalar { value: ValueId, range: Option<(i64, i64)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lit {
    I64(i64),
    F64(f64),
    Bool(bool),
}

impl Lit {
    pub fn ty(self) -> ScalarTy {
        match self {
            Lit::I64(_) => ScalarTy::I64,
            Lit::F64(_) => ScalarTy::F64,
            Lit::Bool(_) => ScalarTy::Bool,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Shl,
    Shr,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn is_cmp(self) -> bool {
        matches!(
            self,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne
        )
    }

    pub fn is_logic(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or)
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
            BinOp::Rem => "rem",
            BinOp::Shl => "shl",
            BinOp::Shr => "shr",
            BinOp::Lt => "lt",
            BinOp::Le => "le",
            BinOp::Gt => "gt",
            BinOp::Ge => "ge",
            BinOp::Eq => "eq",
            BinOp::Ne => "ne",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }

    pub const ALL: [BinOp; 15] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Div,
        BinOp::Rem,
        BinOp::Shl,
        BinOp::Shr,
        BinOp::Lt,
        BinOp::Le,
        BinOp::Gt,
        BinOp::Ge,
        BinOp::Eq,
        BinOp::Ne,
        BinOp::And,
        BinOp::Or,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

/// Right-hand side of a [`Op::Pure`].
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(Lit),
    Unary(UnOp, ValueId),
    Binary(BinOp, ValueId, ValueId),
    Select(ValueId, ValueId, ValueId),
    Cast(ScalarTy, ValueId),
}

impl Expr {
    pub fn operands(&self) -> Vec<ValueId> {
        match self {
            Expr::Const(_) => vec![],
            Expr::Unary(_, a) | Expr::Cast(_, a) => vec![*a],
            Expr::Binary(_, a, b) => vec![*a, *b],
            Expr::Select(c, a, b) => vec![*c, *a, *b],
        }
    }

    pub fn operands_mut(&mut self) -> Vec<&mut ValueId> {
        match self {
            Expr::Const(_) => vec![],
            Expr::Unary(_, a) | Expr::Cast(_, a) => vec![a],
            Expr::Binary(_, a, b) => vec![a, b],
            Expr::Select(c, a, b) => vec![c, a, b],
        }
    }
}

/// A multi-dimensional parallel loop. The first induction variable varies
/// fastest, so `(x, y, z)` iterates `z` outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct ParLoop {
    pub ivs: Vec<ValueId>,
    pub extents: Vec<ValueId>,
    pub body: Vec<Op>,
}

/// Loop-carried value: `arg` is visible in the body, seeded from `init`,
/// and its final value is bound to `result` after the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Carried {
    pub arg: ValueId,
    pub init: ValueId,
    pub result: ValueId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForLoop {
    pub iv: ValueId,
    pub lower: ValueId,
    pub upper: ValueId,
    pub carried: Vec<Carried>,
    pub body: Vec<Op>,
    pub yields: Vec<ValueId>,
}

/// `while` with a condition region evaluated before every iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct WhileLoop {
    pub carried: Vec<Carried>,
    pub cond_ops: Vec<Op>,
    pub cond: ValueId,
    pub body: Vec<Op>,
    pub yields: Vec<ValueId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IfOp {
    pub cond: ValueId,
    pub results: Vec<ValueId>,
    pub then_ops: Vec<Op>,
    pub then_yields: Vec<ValueId>,
    pub else_ops: Vec<Op>,
    pub else_yields: Vec<ValueId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeamRegion {
    /// Requested worker count; `None` means the runtime default.
    pub threads: Option<u32>,
    pub body: Vec<Op>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Pure { dst: ValueId, expr: Expr },
    Load { dst: ValueId, buf: BufferId, index: ValueId },
    Store { buf: BufferId, index: ValueId, value: ValueId },
    Barrier,
    SharedAlloc { buf: BufferId },
    GridPar(ParLoop),
    ThreadPar(ParLoop),
    For(ForLoop),
    While(WhileLoop),
    If(IfOp),
    TeamRegion(TeamRegion),
    WorkShare(ParLoop),
    /// A thread space executed serially by one worker.
    SerialNest(ParLoop),
    TeamBarrier,
}

impl Op {
    /// Nested op lists, in execution-relevant order.
    pub fn regions(&self) -> Vec<&Vec<Op>> {
        match self {
            Op::GridPar(l) | Op::ThreadPar(l) | Op::WorkShare(l) | Op::SerialNest(l) => {
                vec![&l.body]
            }
            Op::For(f) => vec![&f.body],
            Op::While(w) => vec![&w.cond_ops, &w.body],
            Op::If(i) => vec![&i.then_ops, &i.else_ops],
            Op::TeamRegion(t) => vec![&t.body],
            _ => vec![],
        }
    }

    pub fn regions_mut(&mut self) -> Vec<&mut Vec<Op>> {
        match self {
            Op::GridPar(l) | Op::ThreadPar(l) | Op::WorkShare(l) | Op::SerialNest(l) => {
                vec![&mut l.body]
            }
            Op::For(f) => vec![&mut f.body],
            Op::While(w) => vec![&mut w.cond_ops, &mut w.body],
            Op::If(i) => vec![&mut i.then_ops, &mut i.else_ops],
            Op::TeamRegion(t) => vec![&mut t.body],
            _ => vec![],
        }
    }

    pub fn is_barrier(&self) -> bool {
        matches!(self, Op::Barrier)
    }

    /// True if a GPU barrier occurs anywhere inside (or is) this op.
    pub fn contains_barrier(&self) -> bool {
        self.is_barrier()
            || self
                .regions()
                .into_iter()
                .any(|r| r.iter().any(Op::contains_barrier))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Op::Pure { .. } => "pure",
            Op::Load { .. } => "load",
            Op::Store { .. } => "store",
            Op::Barrier => "barrier",
            Op::SharedAlloc { .. } => "alloca",
            Op::GridPar(_) => "grid.par",
            Op::ThreadPar(_) => "thread.par",
            Op::For(_) => "for",
            Op::While(_) => "while",
            Op::If(_) => "if",
            Op::TeamRegion(_) => "team",
            Op::WorkShare(_) => "workshare",
            Op::SerialNest(_) => "serial.nest",
            Op::TeamBarrier => "team.barrier",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub name: String,
    pub params: Vec<Param>,
    /// Parameter buffers may alias each other.
    pub mayalias: bool,
    pub values: Vec<ValueInfo>,
    pub buffers: Vec<BufferInfo>,
    pub body: Vec<Op>,
}

impl Program {
    pub fn new(name: impl Into<String>) -> Self {
        Program {
            name: name.into(),
            params: Vec::new(),
            mayalias: false,
            values: Vec::new(),
            buffers: Vec::new(),
            body: Vec::new(),
        }
    }

    pub fn new_value(&mut self, name: impl Into<String>, ty: ScalarTy) -> ValueId {
        let id = ValueId(self.values.len() as u32);
        self.values.push(ValueInfo {
            name: name.into(),
            ty,
        });
        id
    }

    pub fn new_buffer(&mut self, info: BufferInfo) -> BufferId {
        let id = BufferId(self.buffers.len() as u32);
        self.buffers.push(info);
        id
    }

    pub fn ty(&self, v: ValueId) -> ScalarTy {
        self.values[v.0 as usize].ty
    }

    pub fn value_name(&self, v: ValueId) -> &str {
        &self.values[v.0 as usize].name
    }

    pub fn buffer(&self, b: BufferId) -> &BufferInfo {
        &self.buffers[b.0 as usize]
    }

    pub fn buffer_by_name(&self, name: &str) -> Option<BufferId> {
        self.buffers
            .iter()
            .position(|b| b.name == name)
            .map(|i| BufferId(i as u32))
    }

    pub fn param_buffers(&self) -> impl Iterator<Item = (&str, BufferId)> {
        self.params.iter().filter_map(|p| match &p.kind {
            ParamKind::Buffer { buf, .. } => Some((p.name.as_str(), *buf)),
            _ => None,
        })
    }

    pub fn scalar_params(&self) -> impl Iterator<Item = (&str, ValueId)> {
        self.params.iter().filter_map(|p| match &p.kind {
            ParamKind::Scalar { value, .. } => Some((p.name.as_str(), *value)),
            _ => None,
        })
    }

    /// Two buffers may refer to overlapping storage.
    pub fn may_alias(&self, a: BufferId, b: BufferId) -> bool {
        if a == b {
            return true;
        }
        self.mayalias
            && self.buffer(a).kind == BufferKind::Param
            && self.buffer(b).kind == BufferKind::Param
            && self.buffer(a).elem == self.buffer(b).elem
    }

    /// The launch root, if the program is still in parallel-IR form.
    pub fn grid(&self) -> Option<&ParLoop> {
        self.body.iter().find_map(|op| match op {
            Op::GridPar(g) => Some(g),
            _ => None,
        })
    }

    pub fn grid_mut(&mut self) -> Option<&mut ParLoop> {
        self.body.iter_mut().find_map(|op| match op {
            Op::GridPar(g) => Some(g),
            _ => None,
        })
    }

    /// Number of GPU barriers anywhere in the program.
    pub fn barrier_count(&self) -> usize {
        count_ops(&self.body, &|op| op.is_barrier())
    }

    /// Resolves `v` to a constant if it is computed from literals only.
    pub fn const_value(&self, v: ValueId) -> Option<Lit> {
        let defs = DefIndex::build(self);
        defs.const_value(self, v)
    }
}
