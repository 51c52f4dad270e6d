//! Surface syntax of the kernel DSL.

use crate::ir::{BinOp, ElemTy, ScalarTy, SizeExpr, UnOp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamTy {
    Buffer(ElemTy, Option<SizeExpr>),
    Scalar(ElemTy, Option<(i64, i64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDecl {
    pub name: String,
    pub ty: ParamTy,
    pub pos: Pos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    ThreadIdx,
    BlockIdx,
    BlockDim,
    GridDim,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Int(i64),
    Float(f64),
    Bool(bool),
    Var(String),
    Builtin(Builtin, usize),
    Load(String, Box<Expr>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Select(Box<Expr>, Box<Expr>, Box<Expr>),
    Cast(ScalarTy, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
    /// Filled in by the checker.
    pub ty: Option<ScalarTy>,
}

impl Expr {
    pub fn new(kind: ExprKind, pos: Pos) -> Self {
        Expr { kind, pos, ty: None }
    }

    pub fn ty(&self) -> ScalarTy {
        self.ty.expect("expression not type-checked")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Let(String, Option<ScalarTy>, Expr),
    Assign(String, Expr),
    Store(String, Expr, Expr),
    If(Expr, Vec<Stmt>, Vec<Stmt>),
    For(String, Expr, Expr, Vec<Stmt>),
    While(Expr, Vec<Stmt>),
    Sync,
    Shared(String, ElemTy, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceKernel {
    pub name: String,
    pub mayalias: bool,
    pub params: Vec<ParamDecl>,
    pub grid: [SizeExpr; 3],
    pub block: [i64; 3],
    pub body: Vec<Stmt>,
}
