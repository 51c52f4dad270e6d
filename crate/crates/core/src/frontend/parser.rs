//! Recursive-descent parser and type checker for the kernel DSL.

use std::collections::HashMap;

use super::ast::*;
use super::lexer::{tokenize, Cursor, Mode, Tok};
use super::ParseError;
use crate::ir::{BinOp, ElemTy, ScalarTy, SizeExpr, SizeOp, UnOp};

pub fn parse_kernel(text: &str) -> Result<SourceKernel, ParseError> {
    let mut c = Cursor::new(tokenize(text, Mode::Dsl)?);
    let mut k = kernel(&mut c)?;
    if !c.at_eof() {
        return Err(c.unexpected("end of input"));
    }
    check(&mut k)?;
    Ok(k)
}

fn pos(c: &Cursor) -> Pos {
    let (line, col) = c.here();
    Pos { line, col }
}

fn elem_ty(c: &mut Cursor) -> Result<ElemTy, ParseError> {
    if c.eat_kw("f64") {
        Ok(ElemTy::F64)
    } else if c.eat_kw("i64") {
        Ok(ElemTy::I64)
    } else {
        Err(c.unexpected("type `f64` or `i64`"))
    }
}

fn kernel(c: &mut Cursor) -> Result<SourceKernel, ParseError> {
    let mayalias = c.eat_kw("mayalias");
    c.expect_kw("kernel")?;
    let name = c.ident()?;
    c.expect_punct("(")?;
    let mut params = Vec::new();
    while !c.is_punct(")") {
        let p = pos(c);
        let pname = c.ident()?;
        c.expect_punct(":")?;
        let elem = elem_ty(c)?;
        let ty = if c.eat_punct("[") {
            let size = if c.is_punct("]") {
                None
            } else {
                Some(size_expr(c)?)
            };
            c.expect_punct("]")?;
            ParamTy::Buffer(elem, size)
        } else if c.eat_kw("in") {
            let lo = c.signed_int()?;
            c.expect_punct("..")?;
            let hi = c.signed_int()?;
            if lo > hi || elem != ElemTy::I64 {
                return Err(ParseError::at(p, format!("bad range for parameter {pname}")));
            }
            ParamTy::Scalar(elem, Some((lo, hi)))
        } else {
            ParamTy::Scalar(elem, None)
        };
        params.push(ParamDecl {
            name: pname,
            ty,
            pos: p,
        });
        if !c.eat_punct(",") {
            break;
        }
    }
    c.expect_punct(")")?;
    c.expect_kw("grid")?;
    let grid = extents(c, size_expr)?;
    for g in &grid {
        if let SizeExpr::Const(v) = g {
            if *v <= 0 {
                return Err(c.error("grid extent must be positive"));
            }
        }
    }
    c.expect_kw("block")?;
    let block = extents(c, |c| {
        let p = pos(c);
        match c.signed_int() {
            Ok(v) if v > 0 => Ok(SizeExpr::Const(v)),
            Ok(_) => Err(ParseError::at(p, "block extent must be positive")),
            Err(_) => Err(ParseError::at(p, "block extents must be integer constants")),
        }
    })?;
    let block = block.map(|b| match b {
        SizeExpr::Const(v) => v,
        _ => unreachable!(),
    });
    let body = block_stmts(c, 0)?;
    Ok(SourceKernel {
        name,
        mayalias,
        params,
        grid,
        block,
        body,
    })
}

fn extents(
    c: &mut Cursor,
    mut item: impl FnMut(&mut Cursor) -> Result<SizeExpr, ParseError>,
) -> Result<[SizeExpr; 3], ParseError> {
    c.expect_punct("(")?;
    let mut xs = vec![item(c)?];
    while c.eat_punct(",") {
        if xs.len() == 3 {
            return Err(c.error("at most three extents"));
        }
        xs.push(item(c)?);
    }
    c.expect_punct(")")?;
    while xs.len() < 3 {
        xs.push(SizeExpr::Const(1));
    }
    Ok([xs[0].clone(), xs[1].clone(), xs[2].clone()])
}

/// Host-side size arithmetic over integer literals and scalar parameters.
pub(crate) fn size_expr(c: &mut Cursor) -> Result<SizeExpr, ParseError> {
    let mut lhs = size_term(c)?;
    loop {
        let op = if c.eat_punct("+") {
            SizeOp::Add
        } else if c.eat_punct("-") {
            SizeOp::Sub
        } else {
            return Ok(lhs);
        };
        lhs = SizeExpr::Bin(op, Box::new(lhs), Box::new(size_term(c)?));
    }
}

fn size_term(c: &mut Cursor) -> Result<SizeExpr, ParseError> {
    let mut lhs = size_atom(c)?;
    loop {
        let op = if c.eat_punct("*") {
            SizeOp::Mul
        } else if c.eat_punct("/") {
            SizeOp::Div
        } else {
            return Ok(lhs);
        };
        lhs = SizeExpr::Bin(op, Box::new(lhs), Box::new(size_atom(c)?));
    }
}

fn size_atom(c: &mut Cursor) -> Result<SizeExpr, ParseError> {
    if c.eat_punct("(") {
        let e = size_expr(c)?;
        c.expect_punct(")")?;
        return Ok(e);
    }
    match c.peek().clone() {
        Tok::Ident(name) => {
            c.bump();
            Ok(SizeExpr::Param(name))
        }
        Tok::Int(_) | Tok::Punct("-") => Ok(SizeExpr::Const(c.signed_int()?)),
        _ => Err(c.unexpected("size expression")),
    }
}

fn block_stmts(c: &mut Cursor, depth: usize) -> Result<Vec<Stmt>, ParseError> {
    c.expect_punct("{")?;
    let mut out = Vec::new();
    while !c.eat_punct("}") {
        if c.at_eof() {
            return Err(c.unexpected("`}`"));
        }
        out.push(stmt(c, depth)?);
    }
    Ok(out)
}

fn stmt(c: &mut Cursor, depth: usize) -> Result<Stmt, ParseError> {
    let p = pos(c);
    let kind = if c.eat_kw("let") {
        let name = c.ident()?;
        let ann = if c.eat_punct(":") {
            Some(match elem_ty(c) {
                Ok(t) => t.scalar(),
                Err(_) if c.eat_kw("bool") => ScalarTy::Bool,
                Err(e) => return Err(e),
            })
        } else {
            None
        };
        c.expect_punct("=")?;
        let e = expr(c)?;
        c.expect_punct(";")?;
        StmtKind::Let(name, ann, e)
    } else if c.is_kw("shared") {
        if depth > 0 {
            return Err(ParseError::at(p, "shared declaration not at top level"));
        }
        c.bump();
        let name = c.ident()?;
        c.expect_punct(":")?;
        let elem = elem_ty(c)?;
        c.expect_punct("[")?;
        let n = match c.bump() {
            Tok::Int(n) if n > 0 => n as usize,
            _ => return Err(ParseError::at(p, "shared extent must be a positive constant")),
        };
        c.expect_punct("]")?;
        c.expect_punct(";")?;
        StmtKind::Shared(name, elem, n)
    } else if c.eat_kw("sync") {
        c.expect_punct(";")?;
        StmtKind::Sync
    } else if c.eat_kw("if") {
        return if_stmt(c, depth, p);
    } else if c.eat_kw("for") {
        let var = c.ident()?;
        c.expect_punct("=")?;
        let lo = expr(c)?;
        c.expect_punct("..")?;
        let hi = expr(c)?;
        let body = block_stmts(c, depth + 1)?;
        StmtKind::For(var, lo, hi, body)
    } else if c.eat_kw("while") {
        c.expect_punct("(")?;
        let cond = expr(c)?;
        c.expect_punct(")")?;
        StmtKind::While(cond, block_stmts(c, depth + 1)?)
    } else {
        let name = c.ident()?;
        if c.eat_punct("[") {
            let idx = expr(c)?;
            c.expect_punct("]")?;
            c.expect_punct("=")?;
            let v = expr(c)?;
            c.expect_punct(";")?;
            StmtKind::Store(name, idx, v)
        } else {
            c.expect_punct("=")?;
            let v = expr(c)?;
            c.expect_punct(";")?;
            StmtKind::Assign(name, v)
        }
    };
    Ok(Stmt { kind, pos: p })
}

fn if_stmt(c: &mut Cursor, depth: usize, p: Pos) -> Result<Stmt, ParseError> {
    c.expect_punct("(")?;
    let cond = expr(c)?;
    c.expect_punct(")")?;
    let then = block_stmts(c, depth + 1)?;
    let els = if c.eat_kw("else") {
        if c.is_kw("if") {
            let q = pos(c);
            c.bump();
            vec![if_stmt(c, depth + 1, q)?]
        } else {
            block_stmts(c, depth + 1)?
        }
    } else {
        Vec::new()
    };
    Ok(Stmt {
        kind: StmtKind::If(cond, then, els),
        pos: p,
    })
}

const LEVELS: &[&[(&str, BinOp)]] = &[
    &[("||", BinOp::Or)],
    &[("&&", BinOp::And)],
    &[("==", BinOp::Eq), ("!=", BinOp::Ne)],
    &[
        ("<=", BinOp::Le),
        (">=", BinOp::Ge),
        ("<", BinOp::Lt),
        (">", BinOp::Gt),
    ],
    &[("<<", BinOp::Shl), (">>", BinOp::Shr)],
    &[("+", BinOp::Add), ("-", BinOp::Sub)],
    &[("*", BinOp::Mul), ("/", BinOp::Div), ("%", BinOp::Rem)],
];

pub(crate) fn expr(c: &mut Cursor) -> Result<Expr, ParseError> {
    binary(c, 0)
}

fn binary(c: &mut Cursor, level: usize) -> Result<Expr, ParseError> {
    if level == LEVELS.len() {
        return unary(c);
    }
    let mut lhs = binary(c, level + 1)?;
    'outer: loop {
        for (tok, op) in LEVELS[level] {
            if c.is_punct(tok) {
                let p = pos(c);
                c.bump();
                let rhs = binary(c, level + 1)?;
                lhs = Expr::new(ExprKind::Binary(*op, Box::new(lhs), Box::new(rhs)), p);
                continue 'outer;
            }
        }
        return Ok(lhs);
    }
}

fn unary(c: &mut Cursor) -> Result<Expr, ParseError> {
    let p = pos(c);
    if c.eat_punct("-") {
        let e = unary(c)?;
        return Ok(match e.kind {
            ExprKind::Int(v) => Expr::new(ExprKind::Int(v.wrapping_neg()), p),
            ExprKind::Float(v) => Expr::new(ExprKind::Float(-v), p),
            _ => Expr::new(ExprKind::Unary(UnOp::Neg, Box::new(e)), p),
        });
    }
    if c.eat_punct("!") {
        let e = unary(c)?;
        return Ok(Expr::new(ExprKind::Unary(UnOp::Not, Box::new(e)), p));
    }
    primary(c)
}

fn builtin(name: &str) -> Option<Builtin> {
    Some(match name {
        "threadIdx" => Builtin::ThreadIdx,
        "blockIdx" => Builtin::BlockIdx,
        "blockDim" => Builtin::BlockDim,
        "gridDim" => Builtin::GridDim,
        _ => return None,
    })
}

fn primary(c: &mut Cursor) -> Result<Expr, ParseError> {
    let p = pos(c);
    let kind = match c.peek().clone() {
        Tok::Int(v) => {
            c.bump();
            if v > i64::MAX as u64 + 1 {
                return Err(ParseError::at(p, "integer literal out of range"));
            }
            ExprKind::Int(v as i64)
        }
        Tok::Float(v) => {
            c.bump();
            ExprKind::Float(v)
        }
        Tok::Punct("(") => {
            c.bump();
            let e = expr(c)?;
            c.expect_punct(")")?;
            return Ok(e);
        }
        Tok::Ident(name) => {
            c.bump();
            match name.as_str() {
                "true" => ExprKind::Bool(true),
                "false" => ExprKind::Bool(false),
                "f64" | "i64" if c.is_punct("(") => {
                    c.bump();
                    let e = expr(c)?;
                    c.expect_punct(")")?;
                    let t = if name == "f64" { ScalarTy::F64 } else { ScalarTy::I64 };
                    ExprKind::Cast(t, Box::new(e))
                }
                "select" if c.is_punct("(") => {
                    c.bump();
                    let cond = expr(c)?;
                    c.expect_punct(",")?;
                    let a = expr(c)?;
                    c.expect_punct(",")?;
                    let b = expr(c)?;
                    c.expect_punct(")")?;
                    ExprKind::Select(Box::new(cond), Box::new(a), Box::new(b))
                }
                _ => {
                    if let Some(b) = builtin(&name) {
                        c.expect_punct(".")?;
                        let dim = match c.ident()?.as_str() {
                            "x" => 0,
                            "y" => 1,
                            "z" => 2,
                            other => {
                                return Err(ParseError::at(p, format!("unknown dimension {other}")))
                            }
                        };
                        ExprKind::Builtin(b, dim)
                    } else if c.eat_punct("[") {
                        let idx = expr(c)?;
                        c.expect_punct("]")?;
                        ExprKind::Load(name, Box::new(idx))
                    } else {
                        ExprKind::Var(name)
                    }
                }
            }
        }
        _ => return Err(c.unexpected("expression")),
    };
    Ok(Expr::new(kind, p))
}

// ---------------------------------------------------------------------------
// Type checking

#[derive(Clone, Copy)]
struct Local {
    ty: ScalarTy,
    mutable: bool,
}

struct Checker {
    scopes: Vec<HashMap<String, Local>>,
    bufs: HashMap<String, ElemTy>,
}

impl ParseError {
    pub(crate) fn at(p: Pos, msg: impl Into<String>) -> Self {
        ParseError::new(p.line, p.col, msg)
    }
}

fn coerce(e: &mut Expr, want: ScalarTy) {
    if want == ScalarTy::F64 {
        if let ExprKind::Int(v) = e.kind {
            e.kind = ExprKind::Float(v as f64);
            e.ty = Some(ScalarTy::F64);
        }
    }
}

fn unify(a: &mut Expr, b: &mut Expr) -> Result<ScalarTy, ParseError> {
    let (ta, tb) = (a.ty(), b.ty());
    if ta == tb {
        return Ok(ta);
    }
    coerce(a, tb);
    coerce(b, ta);
    if a.ty() == b.ty() {
        Ok(a.ty())
    } else {
        Err(ParseError::at(
            b.pos,
            format!("type mismatch: {} vs {}", a.ty(), b.ty()),
        ))
    }
}

impl Checker {
    fn lookup(&self, name: &str) -> Option<Local> {
        self.scopes.iter().rev().find_map(|s| s.get(name).copied())
    }

    fn expr(&mut self, e: &mut Expr) -> Result<ScalarTy, ParseError> {
        let p = e.pos;
        let ty = match &mut e.kind {
            ExprKind::Int(_) => ScalarTy::I64,
            ExprKind::Float(_) => ScalarTy::F64,
            ExprKind::Bool(_) => ScalarTy::Bool,
            ExprKind::Builtin(..) => ScalarTy::I64,
            ExprKind::Var(name) => match self.lookup(name) {
                Some(l) => l.ty,
                None if self.bufs.contains_key(name.as_str()) => {
                    return Err(ParseError::at(p, format!("buffer {name} used as a value")))
                }
                None => return Err(ParseError::at(p, format!("unknown identifier {name}"))),
            },
            ExprKind::Load(name, idx) => {
                let Some(elem) = self.bufs.get(name.as_str()).copied() else {
                    return Err(ParseError::at(p, format!("unknown identifier {name}")));
                };
                if self.expr(idx)? != ScalarTy::I64 {
                    return Err(ParseError::at(idx.pos, "type mismatch: index must be i64"));
                }
                elem.scalar()
            }
            ExprKind::Unary(op, a) => {
                let t = self.expr(a)?;
                match (op, t) {
                    (UnOp::Neg, ScalarTy::I64 | ScalarTy::F64) | (UnOp::Not, ScalarTy::Bool) => t,
                    _ => return Err(ParseError::at(p, format!("type mismatch: unary on {t}"))),
                }
            }
            ExprKind::Binary(op, a, b) => {
                self.expr(a)?;
                self.expr(b)?;
                let t = unify(a, b)?;
                let op = *op;
                if op.is_logic() {
                    if t != ScalarTy::Bool {
                        return Err(ParseError::at(p, format!("type mismatch: {} on {t}", op.mnemonic())));
                    }
                    ScalarTy::Bool
                } else if op.is_cmp() {
                    if t == ScalarTy::Bool && !matches!(op, BinOp::Eq | BinOp::Ne) {
                        return Err(ParseError::at(p, "type mismatch: ordered comparison on bool"));
                    }
                    ScalarTy::Bool
                } else {
                    let bad = t == ScalarTy::Bool
                        || (t == ScalarTy::F64 && matches!(op, BinOp::Rem | BinOp::Shl | BinOp::Shr));
                    if bad {
                        return Err(ParseError::at(p, format!("type mismatch: {} on {t}", op.mnemonic())));
                    }
                    t
                }
            }
            ExprKind::Select(cond, a, b) => {
                if self.expr(cond)? != ScalarTy::Bool {
                    return Err(ParseError::at(cond.pos, "type mismatch: select condition must be bool"));
                }
                self.expr(a)?;
                self.expr(b)?;
                unify(a, b)?
            }
            ExprKind::Cast(t, a) => {
                self.expr(a)?;
                *t
            }
        };
        e.ty = Some(ty);
        Ok(ty)
    }

    fn expect(&mut self, e: &mut Expr, want: ScalarTy, what: &str) -> Result<(), ParseError> {
        self.expr(e)?;
        coerce(e, want);
        if e.ty() != want {
            return Err(ParseError::at(
                e.pos,
                format!("type mismatch: {what} must be {want}, found {}", e.ty()),
            ));
        }
        Ok(())
    }

    fn block(&mut self, ss: &mut [Stmt]) -> Result<(), ParseError> {
        self.scopes.push(HashMap::new());
        for s in ss.iter_mut() {
            self.stmt(s)?;
        }
        self.scopes.pop();
        Ok(())
    }

    fn stmt(&mut self, s: &mut Stmt) -> Result<(), ParseError> {
        let p = s.pos;
        match &mut s.kind {
            StmtKind::Let(name, ann, e) => {
                let ty = match ann {
                    Some(t) => {
                        self.expect(e, *t, "initializer")?;
                        *t
                    }
                    None => self.expr(e)?,
                };
                self.scopes
                    .last_mut()
                    .unwrap()
                    .insert(name.clone(), Local { ty, mutable: true });
            }
            StmtKind::Assign(name, e) => {
                let Some(l) = self.lookup(name) else {
                    return Err(ParseError::at(p, format!("unknown identifier {name}")));
                };
                if !l.mutable {
                    return Err(ParseError::at(p, format!("cannot assign to {name}")));
                }
                self.expect(e, l.ty, "assigned value")?;
            }
            StmtKind::Store(name, idx, v) => {
                let Some(elem) = self.bufs.get(name.as_str()).copied() else {
                    return Err(ParseError::at(p, format!("unknown identifier {name}")));
                };
                self.expect(idx, ScalarTy::I64, "index")?;
                self.expect(v, elem.scalar(), "stored value")?;
            }
            StmtKind::If(cond, then, els) => {
                self.expect(cond, ScalarTy::Bool, "condition")?;
                self.block(then)?;
                self.block(els)?;
            }
            StmtKind::For(var, lo, hi, body) => {
                self.expect(lo, ScalarTy::I64, "loop bound")?;
                self.expect(hi, ScalarTy::I64, "loop bound")?;
                let mut scope = HashMap::new();
                scope.insert(
                    var.clone(),
                    Local {
                        ty: ScalarTy::I64,
                        mutable: false,
                    },
                );
                self.scopes.push(scope);
                self.block(body)?;
                self.scopes.pop();
            }
            StmtKind::While(cond, body) => {
                self.expect(cond, ScalarTy::Bool, "condition")?;
                self.block(body)?;
            }
            StmtKind::Sync => {}
            StmtKind::Shared(name, elem, _) => {
                if self.bufs.insert(name.clone(), *elem).is_some() {
                    return Err(ParseError::at(p, format!("duplicate buffer {name}")));
                }
            }
        }
        Ok(())
    }
}

fn check(k: &mut SourceKernel) -> Result<(), ParseError> {
    let mut ck = Checker {
        scopes: vec![HashMap::new()],
        bufs: HashMap::new(),
    };
    let mut scalars: HashMap<String, ElemTy> = HashMap::new();
    for p in &k.params {
        let dup = match &p.ty {
            ParamTy::Buffer(e, _) => ck.bufs.insert(p.name.clone(), *e).is_some(),
            ParamTy::Scalar(e, _) => {
                ck.scopes[0].insert(
                    p.name.clone(),
                    Local {
                        ty: e.scalar(),
                        mutable: false,
                    },
                );
                scalars.insert(p.name.clone(), *e).is_some()
            }
        };
        if dup || (ck.bufs.contains_key(&p.name) && scalars.contains_key(&p.name)) {
            return Err(ParseError::at(p.pos, format!("duplicate parameter {}", p.name)));
        }
    }
    let check_size = |e: &SizeExpr| -> Result<(), ParseError> {
        fn walk(e: &SizeExpr, scalars: &HashMap<String, ElemTy>) -> Result<(), String> {
            match e {
                SizeExpr::Const(_) => Ok(()),
                SizeExpr::Param(n) => match scalars.get(n) {
                    Some(ElemTy::I64) => Ok(()),
                    Some(ElemTy::F64) => Err(format!("type mismatch: size {n} must be i64")),
                    None => Err(format!("unknown identifier {n}")),
                },
                SizeExpr::Bin(_, a, b) => {
                    walk(a, scalars)?;
                    walk(b, scalars)
                }
            }
        }
        walk(e, &scalars).map_err(|m| ParseError::new(1, 1, m))
    };
    for g in &k.grid {
        check_size(g)?;
    }
    for p in &k.params {
        if let ParamTy::Buffer(_, Some(s)) = &p.ty {
            check_size(s).map_err(|e| ParseError::at(p.pos, e.msg))?;
        }
    }
    for s in k.body.iter_mut() {
        ck.stmt(s)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_kernel() {
        let k = parse_kernel("kernel k() grid(1) block(1) {}").unwrap();
        assert!(k.body.is_empty());
        assert_eq!(k.block, [1, 1, 1]);
    }

    #[test]
    fn unknown_identifier() {
        let e = parse_kernel("kernel k(a: f64[]) grid(1) block(4) { a[0] = q; }").unwrap_err();
        assert_eq!(e.msg, "unknown identifier q");
        assert_eq!((e.line, e.col), (1, 46));
    }

    #[test]
    fn nested_shared_rejected() {
        let e = parse_kernel("kernel k() grid(1) block(4) { if (true) { shared s: f64[4]; } }")
            .unwrap_err();
        assert!(e.msg.contains("shared declaration not at top level"));
    }

    #[test]
    fn type_mismatch() {
        let e = parse_kernel("kernel k(a: f64[]) grid(1) block(4) { let x = a[0] + threadIdx.x; }")
            .unwrap_err();
        assert!(e.msg.starts_with("type mismatch"), "{}", e.msg);
    }

    #[test]
    fn literals_coerce_to_float() {
        parse_kernel("kernel k(a: f64[]) grid(1) block(4) { a[0] = a[1] * 2 + 1; }").unwrap();
    }

    #[test]
    fn precedence() {
        let k = parse_kernel("kernel k(a: i64[]) grid(1) block(1) { a[0] = 1 + 2 * 3 << 1; }").unwrap();
        let StmtKind::Store(_, _, v) = &k.body[0].kind else { panic!() };
        assert!(matches!(v.kind, ExprKind::Binary(BinOp::Shl, _, _)));
    }

    #[test]
    fn deterministic() {
        let src = "kernel k(a: f64[n], n: i64 in 1..8) grid((n+3)/4) block(4) { a[threadIdx.x] = 1.0; }";
        assert_eq!(parse_kernel(src).unwrap(), parse_kernel(src).unwrap());
    }
}
