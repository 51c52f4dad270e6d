//! Kernel DSL (`.gk`) and textual IR front ends.

mod ast;
mod build;
mod irparse;
mod lexer;
mod parser;
mod print;

use std::fmt;

pub use ast::*;
pub use build::build_ir;
pub use irparse::parse_ir_unverified;
pub use parser::parse_kernel;
pub use print::{lit_text, print_ir, print_ir_annotated, size_expr_text, Annotate};

use crate::ir::{self, Diagnostic, Program};

/// A diagnostic anchored at a source position.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl ParseError {
    pub fn new(line: usize, col: usize, msg: impl Into<String>) -> Self {
        ParseError {
            line,
            col,
            msg: msg.into(),
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum FrontendError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("verifier: {}", DiagList(.0))]
    Verify(Vec<Diagnostic>),
}

struct DiagList<'a>(&'a [Diagnostic]);

impl fmt::Display for DiagList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl FrontendError {
    pub fn diagnostics(&self) -> &[Diagnostic] {
        match self {
            FrontendError::Verify(d) => d,
            FrontendError::Parse(_) => &[],
        }
    }
}

/// Parses, lowers and verifies a DSL kernel.
pub fn compile(text: &str) -> Result<Program, FrontendError> {
    let k = parse_kernel(text)?;
    let p = build_ir(&k);
    ir::verify(&p).map_err(FrontendError::Verify)?;
    Ok(p)
}

/// Parses IR text and verifies it (CPU-form checks if it contains team regions).
pub fn parse_ir(text: &str) -> Result<Program, FrontendError> {
    let p = parse_ir_unverified(text)?;
    let cpu = ir::count_ops(&p.body, &|op| matches!(op, ir::Op::TeamRegion(_))) > 0;
    let r = if cpu { ir::verify_cpu(&p) } else { ir::verify(&p) };
    r.map_err(FrontendError::Verify)?;
    Ok(p)
}
