//! Scalar semantics shared by both interpreters and constant folding.
//!
//! Integer arithmetic wraps. Division or remainder by zero yields 0 and
//! shift amounts are masked to six bits, so every expression is total.

use crate::ir::{BinOp, Expr, Lit, ScalarTy, UnOp};

use super::ExecError;

pub fn as_i64(v: Lit) -> Result<i64, ExecError> {
    match v {
        Lit::I64(x) => Ok(x),
        other => Err(ExecError::Type(format!("expected i64, found {other:?}"))),
    }
}

pub fn as_bool(v: Lit) -> Result<bool, ExecError> {
    match v {
        Lit::Bool(b) => Ok(b),
        other => Err(ExecError::Type(format!("expected bool, found {other:?}"))),
    }
}

pub fn int_div(a: i64, b: i64) -> i64 {
    if b == 0 {
        0
    } else {
        a.wrapping_div(b)
    }
}

pub fn int_rem(a: i64, b: i64) -> i64 {
    if b == 0 {
        0
    } else {
        a.wrapping_rem(b)
    }
}

/// Saturating float-to-int conversion with NaN mapped to zero.
pub fn f64_to_i64(x: f64) -> i64 {
    x as i64
}

pub fn eval_binary(op: BinOp, a: Lit, b: Lit) -> Result<Lit, ExecError> {
    use BinOp::*;
    Ok(match (a, b) {
        (Lit::I64(x), Lit::I64(y)) => match op {
            Add => Lit::I64(x.wrapping_add(y)),
            Sub => Lit::I64(x.wrapping_sub(y)),
            Mul => Lit::I64(x.wrapping_mul(y)),
            Div => Lit::I64(int_div(x, y)),
            Rem => Lit::I64(int_rem(x, y)),
            Shl => Lit::I64(x.wrapping_shl((y & 63) as u32)),
            Shr => Lit::I64(x.wrapping_shr((y & 63) as u32)),
            Lt => Lit::Bool(x < y),
            Le => Lit::Bool(x <= y),
            Gt => Lit::Bool(x > y),
            Ge => Lit::Bool(x >= y),
            Eq => Lit::Bool(x == y),
            Ne => Lit::Bool(x != y),
            And | Or => return Err(ExecError::Type("logical op on i64".into())),
        },
        (Lit::F64(x), Lit::F64(y)) => match op {
            Add => Lit::F64(x + y),
            Sub => Lit::F64(x - y),
            Mul => Lit::F64(x * y),
            Div => Lit::F64(x / y),
            Lt => Lit::Bool(x < y),
            Le => Lit::Bool(x <= y),
            Gt => Lit::Bool(x > y),
            Ge => Lit::Bool(x >= y),
            Eq => Lit::Bool(x == y),
            Ne => Lit::Bool(x != y),
            _ => return Err(ExecError::Type(format!("{} on f64", op.mnemonic()))),
        },
        (Lit::Bool(x), Lit::Bool(y)) => match op {
            And => Lit::Bool(x && y),
            Or => Lit::Bool(x || y),
            Eq => Lit::Bool(x == y),
            Ne => Lit::Bool(x != y),
            _ => return Err(ExecError::Type(format!("{} on bool", op.mnemonic()))),
        },
        (a, b) => {
            return Err(ExecError::Type(format!(
                "operand mismatch for {}: {a:?}, {b:?}",
                op.mnemonic()
            )))
        }
    })
}

pub fn eval_cast(to: ScalarTy, v: Lit) -> Lit {
    match (to, v) {
        (ScalarTy::I64, Lit::I64(x)) => Lit::I64(x),
        (ScalarTy::I64, Lit::F64(x)) => Lit::I64(f64_to_i64(x)),
        (ScalarTy::I64, Lit::Bool(b)) => Lit::I64(b as i64),
        (ScalarTy::F64, Lit::I64(x)) => Lit::F64(x as f64),
        (ScalarTy::F64, Lit::F64(x)) => Lit::F64(x),
        (ScalarTy::F64, Lit::Bool(b)) => Lit::F64(if b { 1.0 } else { 0.0 }),
        (ScalarTy::Bool, Lit::I64(x)) => Lit::Bool(x != 0),
        (ScalarTy::Bool, Lit::F64(x)) => Lit::Bool(x != 0.0),
        (ScalarTy::Bool, Lit::Bool(b)) => Lit::Bool(b),
    }
}

/// Evaluates `expr` given its operand values in [`Expr::operands`] order.
pub fn eval_expr_lits(expr: &Expr, ops: &[Lit], _ty: ScalarTy) -> Result<Lit, ExecError> {
    match expr {
        Expr::Const(l) => Ok(*l),
        Expr::Unary(UnOp::Neg, _) => match ops[0] {
            Lit::I64(x) => Ok(Lit::I64(x.wrapping_neg())),
            Lit::F64(x) => Ok(Lit::F64(-x)),
            Lit::Bool(_) => Err(ExecError::Type("neg on bool".into())),
        },
        Expr::Unary(UnOp::Not, _) => Ok(Lit::Bool(!as_bool(ops[0])?)),
        Expr::Binary(op, _, _) => eval_binary(*op, ops[0], ops[1]),
        Expr::Select(..) => Ok(if as_bool(ops[0])? { ops[1] } else { ops[2] }),
        Expr::Cast(t, _) => Ok(eval_cast(*t, ops[0])),
    }
}
