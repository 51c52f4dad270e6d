//! A miniature SIMT-to-CPU transpiler.
//!
//! Kernels written in a small CUDA-like DSL become nested parallel loops
//! with explicit barriers ([`ir`]). Barrier memory semantics ([`effects`])
//! drive parallel optimizations ([`paropt`]) and the removal of
//! synchronization by loop fission and interchange ([`synclower`]). The
//! result is lowered to team regions and work-sharing loops ([`lowering`])
//! and every step can be checked against a reference SIMT interpreter
//! ([`exec`]).

pub mod effects;
pub mod exec;
pub mod frontend;
pub mod ir;
pub mod lowering;
pub mod paropt;
pub mod pipeline;
pub mod synclower;

pub use exec::eval_expr_lits;
