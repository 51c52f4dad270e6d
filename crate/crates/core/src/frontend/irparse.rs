//! Parser for the textual IR produced by [`super::print_ir`].

use std::collections::HashMap;

use super::lexer::{tokenize, Cursor, Mode, Tok};
use super::parser::size_expr;
use super::ParseError;
use crate::ir::{
    BinOp, BufferId, BufferInfo, BufferKind, Carried, ElemTy, Expr, ForLoop, IfOp, Lit, Op,
    ParLoop, Param, ParamKind, Program, ScalarTy, TeamRegion, UnOp, ValueId, ValueInfo, WhileLoop,
};

struct IrParser {
    c: Cursor,
    p: Program,
    values: HashMap<(String, u32), ValueId>,
    bufs: HashMap<String, BufferId>,
    /// Use the printed suffixes as ids (they are unique in the input).
    keep_ids: bool,
}

fn scalar_ty(name: &str) -> Option<ScalarTy> {
    Some(match name {
        "i64" => ScalarTy::I64,
        "f64" => ScalarTy::F64,
        "bool" => ScalarTy::Bool,
        _ => return None,
    })
}

impl IrParser {
    fn ty(&mut self) -> Result<ScalarTy, ParseError> {
        let name = self.c.ident()?;
        scalar_ty(&name).ok_or_else(|| self.c.error(format!("unknown type {name}")))
    }

    fn elem(&mut self) -> Result<ElemTy, ParseError> {
        match self.ty()? {
            ScalarTy::I64 => Ok(ElemTy::I64),
            ScalarTy::F64 => Ok(ElemTy::F64),
            ScalarTy::Bool => Err(self.c.error("buffers hold i64 or f64")),
        }
    }

    fn value_tok(&mut self) -> Result<(String, u32), ParseError> {
        match self.c.peek().clone() {
            Tok::Value(n, i) => {
                self.c.bump();
                Ok((n, i))
            }
            _ => Err(self.c.unexpected("value")),
        }
    }

    fn define(&mut self, key: (String, u32), ty: ScalarTy) -> Result<ValueId, ParseError> {
        if self.values.contains_key(&key) {
            return Err(self.c.error(format!("value %{}.{} redefined", key.0, key.1)));
        }
        let v = if self.keep_ids {
            let id = key.1 as usize;
            while self.p.values.len() <= id {
                self.p.new_value("unused", ScalarTy::I64);
            }
            self.p.values[id] = ValueInfo { name: key.0.clone(), ty };
            ValueId(key.1)
        } else {
            self.p.new_value(key.0.clone(), ty)
        };
        self.values.insert(key, v);
        Ok(v)
    }

    fn use_(&mut self) -> Result<ValueId, ParseError> {
        let key = self.value_tok()?;
        self.values
            .get(&key)
            .copied()
            .ok_or_else(|| self.c.error(format!("use of undefined value %{}.{}", key.0, key.1)))
    }

    fn uses(&mut self) -> Result<Vec<ValueId>, ParseError> {
        let mut out = Vec::new();
        if !matches!(self.c.peek(), Tok::Value(..)) {
            return Ok(out);
        }
        out.push(self.use_()?);
        while self.c.eat_punct(",") {
            out.push(self.use_()?);
        }
        Ok(out)
    }

    fn buf(&mut self) -> Result<BufferId, ParseError> {
        match self.c.peek().clone() {
            Tok::Buffer(n) => {
                self.c.bump();
                self.bufs
                    .get(&n)
                    .copied()
                    .ok_or_else(|| self.c.error(format!("unknown buffer @{n}")))
            }
            _ => Err(self.c.unexpected("buffer")),
        }
    }

    fn header(&mut self) -> Result<(), ParseError> {
        self.p.mayalias = self.c.eat_kw("mayalias");
        self.c.expect_kw("kernel")?;
        self.p.name = self.c.ident()?;
        self.c.expect_punct("(")?;
        while !self.c.is_punct(")") {
            match self.c.peek().clone() {
                Tok::Buffer(name) => {
                    self.c.bump();
                    self.c.expect_punct(":")?;
                    let elem = self.elem()?;
                    self.c.expect_punct("[")?;
                    let size = if self.c.is_punct("]") {
                        None
                    } else {
                        Some(size_expr(&mut self.c)?)
                    };
                    self.c.expect_punct("]")?;
                    let buf = self.p.new_buffer(BufferInfo {
                        name: name.clone(),
                        elem,
                        kind: BufferKind::Param,
                        extent: None,
                    });
                    self.bufs.insert(name.clone(), buf);
                    self.p.params.push(Param {
                        name,
                        kind: ParamKind::Buffer { buf, size },
                    });
                }
                Tok::Value(name, id) => {
                    self.c.bump();
                    self.c.expect_punct(":")?;
                    let ty = self.ty()?;
                    let range = if self.c.eat_kw("in") {
                        let lo = self.c.signed_int()?;
                        self.c.expect_punct("..")?;
                        Some((lo, self.c.signed_int()?))
                    } else {
                        None
                    };
                    let value = self.define((name.clone(), id), ty)?;
                    self.p.params.push(Param {
                        name,
                        kind: ParamKind::Scalar { value, range },
                    });
                }
                _ => return Err(self.c.unexpected("parameter")),
            }
            if !self.c.eat_punct(",") {
                break;
            }
        }
        self.c.expect_punct(")")
    }

    fn region(&mut self) -> Result<Vec<Op>, ParseError> {
        self.c.expect_punct("{")?;
        let ops = self.ops_until(&["}"])?;
        self.c.expect_punct("}")?;
        Ok(ops)
    }

    /// Ops up to (not including) a closing brace or one of the stop keywords.
    fn ops_until(&mut self, stops: &[&str]) -> Result<Vec<Op>, ParseError> {
        let mut ops = Vec::new();
        loop {
            if self.c.is_punct("}") || stops.iter().any(|s| self.c.is_kw(s)) || self.c.at_eof() {
                return Ok(ops);
            }
            ops.push(self.op()?);
        }
    }

    fn par(&mut self) -> Result<ParLoop, ParseError> {
        self.c.expect_punct("(")?;
        let mut keys = Vec::new();
        while let Tok::Value(..) = self.c.peek() {
            keys.push(self.value_tok()?);
            if !self.c.eat_punct(",") {
                break;
            }
        }
        self.c.expect_punct(")")?;
        self.c.expect_kw("in")?;
        self.c.expect_punct("(")?;
        let extents = self.uses()?;
        self.c.expect_punct(")")?;
        let mut ivs = Vec::new();
        for k in keys {
            ivs.push(self.define(k, ScalarTy::I64)?);
        }
        let body = self.region()?;
        Ok(ParLoop { ivs, extents, body })
    }

    fn iter_args(&mut self) -> Result<Vec<(ValueId, ValueId)>, ParseError> {
        let mut out = Vec::new();
        if !self.c.eat_kw("iter") {
            return Ok(out);
        }
        self.c.expect_punct("(")?;
        loop {
            let key = self.value_tok()?;
            self.c.expect_punct("=")?;
            let init = self.use_()?;
            let ty = self.p.ty(init);
            out.push((self.define(key, ty)?, init));
            if !self.c.eat_punct(",") {
                break;
            }
        }
        self.c.expect_punct(")")?;
        Ok(out)
    }

    fn yields(&mut self) -> Result<Vec<ValueId>, ParseError> {
        if self.c.eat_kw("yield") {
            self.uses()
        } else {
            Ok(Vec::new())
        }
    }

    fn carried(args: Vec<(ValueId, ValueId)>, results: &[ValueId]) -> Vec<Carried> {
        args.into_iter()
            .zip(results)
            .map(|((arg, init), result)| Carried {
                arg,
                init,
                result: *result,
            })
            .collect()
    }

    fn op(&mut self) -> Result<Op, ParseError> {
        // Region results: `%r.1: f64, %r.2: i64 = for ...`
        if let (Tok::Value(..), Tok::Punct(":")) = (self.c.peek().clone(), self.c.peek_at(1).clone()) {
            let mut keys = Vec::new();
            loop {
                let key = self.value_tok()?;
                self.c.expect_punct(":")?;
                keys.push((key, self.ty()?));
                if !self.c.eat_punct(",") {
                    break;
                }
            }
            self.c.expect_punct("=")?;
            return self.region_op(keys);
        }
        if let Tok::Value(..) = self.c.peek() {
            let key = self.value_tok()?;
            self.c.expect_punct("=")?;
            return self.value_op(key);
        }
        let (line, col) = self.c.here();
        let kw = self.c.ident()?;
        Ok(match kw.as_str() {
            "store" => {
                let value = self.use_()?;
                self.c.expect_punct(",")?;
                let buf = self.buf()?;
                self.c.expect_punct("[")?;
                let index = self.use_()?;
                self.c.expect_punct("]")?;
                Op::Store { buf, index, value }
            }
            "barrier" => Op::Barrier,
            "team" => {
                if self.c.eat_punct(".") {
                    self.c.expect_kw("barrier")?;
                    Op::TeamBarrier
                } else {
                    let threads = if self.c.eat_kw("threads") {
                        self.c.expect_punct("(")?;
                        let n = self.c.signed_int()?;
                        self.c.expect_punct(")")?;
                        Some(n as u32)
                    } else {
                        None
                    };
                    Op::TeamRegion(TeamRegion {
                        threads,
                        body: self.region()?,
                    })
                }
            }
            "alloca" => {
                self.c.expect_kw("shared")?;
                let name = match self.c.bump() {
                    Tok::Buffer(n) => n,
                    _ => return Err(ParseError::new(line, col, "expected buffer name")),
                };
                self.c.expect_punct(":")?;
                let elem = self.elem()?;
                self.c.expect_punct("[")?;
                let n = self.c.signed_int()?;
                self.c.expect_punct("]")?;
                if self.bufs.contains_key(&name) {
                    return Err(ParseError::new(line, col, format!("buffer @{name} redefined")));
                }
                let buf = self.p.new_buffer(BufferInfo {
                    name: name.clone(),
                    elem,
                    kind: BufferKind::Shared,
                    extent: Some(n.max(0) as usize),
                });
                self.bufs.insert(name, buf);
                Op::SharedAlloc { buf }
            }
            "grid" | "thread" | "serial" => {
                self.c.expect_punct(".")?;
                let sub = self.c.ident()?;
                let l = self.par()?;
                match (kw.as_str(), sub.as_str()) {
                    ("grid", "par") => Op::GridPar(l),
                    ("thread", "par") => Op::ThreadPar(l),
                    ("serial", "nest") => Op::SerialNest(l),
                    _ => return Err(ParseError::new(line, col, format!("unknown op {kw}.{sub}"))),
                }
            }
            "workshare" => Op::WorkShare(self.par()?),
            "for" | "while" | "if" => {
                return self.region_op_kw(&kw, Vec::new());
            }
            _ => return Err(ParseError::new(line, col, format!("unknown op {kw}"))),
        })
    }

    fn region_op(&mut self, keys: Vec<((String, u32), ScalarTy)>) -> Result<Op, ParseError> {
        let kw = self.c.ident()?;
        self.region_op_kw(&kw, keys)
    }

    fn region_op_kw(
        &mut self,
        kw: &str,
        keys: Vec<((String, u32), ScalarTy)>,
    ) -> Result<Op, ParseError> {
        let define_results = |this: &mut Self| -> Result<Vec<ValueId>, ParseError> {
            keys.iter()
                .map(|(k, t)| this.define(k.clone(), *t))
                .collect()
        };
        match kw {
            "for" => {
                let iv_key = self.value_tok()?;
                self.c.expect_punct("=")?;
                let lower = self.use_()?;
                self.c.expect_kw("to")?;
                let upper = self.use_()?;
                let iv = self.define(iv_key, ScalarTy::I64)?;
                let args = self.iter_args()?;
                self.c.expect_punct("{")?;
                let body = self.ops_until(&["yield"])?;
                let yields = self.yields()?;
                self.c.expect_punct("}")?;
                let results = define_results(self)?;
                if results.len() != args.len() {
                    return Err(self.c.error("result count differs from iter args"));
                }
                Ok(Op::For(ForLoop {
                    iv,
                    lower,
                    upper,
                    carried: Self::carried(args, &results),
                    body,
                    yields,
                }))
            }
            "while" => {
                let args = self.iter_args()?;
                self.c.expect_punct("{")?;
                let cond_ops = self.ops_until(&["condition"])?;
                self.c.expect_kw("condition")?;
                let cond = self.use_()?;
                self.c.expect_punct("}")?;
                self.c.expect_kw("do")?;
                self.c.expect_punct("{")?;
                let body = self.ops_until(&["yield"])?;
                let yields = self.yields()?;
                self.c.expect_punct("}")?;
                let results = define_results(self)?;
                if results.len() != args.len() {
                    return Err(self.c.error("result count differs from iter args"));
                }
                Ok(Op::While(WhileLoop {
                    carried: Self::carried(args, &results),
                    cond_ops,
                    cond,
                    body,
                    yields,
                }))
            }
            "if" => {
                let cond = self.use_()?;
                self.c.expect_punct("{")?;
                let then_ops = self.ops_until(&["yield"])?;
                let then_yields = self.yields()?;
                self.c.expect_punct("}")?;
                let (else_ops, else_yields) = if self.c.eat_kw("else") {
                    self.c.expect_punct("{")?;
                    let ops = self.ops_until(&["yield"])?;
                    let ys = self.yields()?;
                    self.c.expect_punct("}")?;
                    (ops, ys)
                } else {
                    (Vec::new(), Vec::new())
                };
                let results = define_results(self)?;
                Ok(Op::If(IfOp {
                    cond,
                    results,
                    then_ops,
                    then_yields,
                    else_ops,
                    else_yields,
                }))
            }
            other => Err(self.c.error(format!("`{other}` does not produce results"))),
        }
    }

    fn value_op(&mut self, key: (String, u32)) -> Result<Op, ParseError> {
        let kw = self.c.ident()?;
        let bin = BinOp::ALL.iter().find(|b| b.mnemonic() == kw).copied();
        let (expr, ty) = if let Some(op) = bin {
            let a = self.use_()?;
            self.c.expect_punct(",")?;
            let b = self.use_()?;
            let ty = if op.is_cmp() || op.is_logic() {
                ScalarTy::Bool
            } else {
                self.p.ty(a)
            };
            (Expr::Binary(op, a, b), ty)
        } else {
            match kw.as_str() {
                "const" => {
                    let l = self.literal()?;
                    (Expr::Const(l), l.ty())
                }
                "neg" | "not" => {
                    let a = self.use_()?;
                    let op = if kw == "neg" { UnOp::Neg } else { UnOp::Not };
                    (Expr::Unary(op, a), self.p.ty(a))
                }
                "select" => {
                    let c = self.use_()?;
                    self.c.expect_punct(",")?;
                    let a = self.use_()?;
                    self.c.expect_punct(",")?;
                    let b = self.use_()?;
                    (Expr::Select(c, a, b), self.p.ty(a))
                }
                "cast" => {
                    let t = self.ty()?;
                    let a = self.use_()?;
                    (Expr::Cast(t, a), t)
                }
                "load" => {
                    let buf = self.buf()?;
                    self.c.expect_punct("[")?;
                    let index = self.use_()?;
                    self.c.expect_punct("]")?;
                    let ty = self.p.buffer(buf).elem.scalar();
                    let dst = self.define(key, ty)?;
                    return Ok(Op::Load { dst, buf, index });
                }
                "for" | "while" | "if" => {
                    return Err(self.c.error("region results need explicit types"));
                }
                other => return Err(self.c.error(format!("unknown op {other}"))),
            }
        };
        let dst = self.define(key, ty)?;
        Ok(Op::Pure { dst, expr })
    }

    fn literal(&mut self) -> Result<Lit, ParseError> {
        let neg = self.c.eat_punct("-");
        let sign = if neg { -1.0 } else { 1.0 };
        match self.c.peek().clone() {
            Tok::Int(v) => {
                self.c.bump();
                if neg {
                    if v > i64::MAX as u64 + 1 {
                        return Err(self.c.error("integer literal out of range"));
                    }
                    Ok(Lit::I64((v as i64).wrapping_neg()))
                } else if v > i64::MAX as u64 {
                    Err(self.c.error("integer literal out of range"))
                } else {
                    Ok(Lit::I64(v as i64))
                }
            }
            Tok::Float(x) => {
                self.c.bump();
                Ok(Lit::F64(sign * x))
            }
            Tok::Ident(s) => {
                self.c.bump();
                match s.as_str() {
                    "true" if !neg => Ok(Lit::Bool(true)),
                    "false" if !neg => Ok(Lit::Bool(false)),
                    "inf" => Ok(Lit::F64(sign * f64::INFINITY)),
                    "NaN" => Ok(Lit::F64(f64::NAN)),
                    _ => Err(self.c.error(format!("bad literal {s}"))),
                }
            }
            _ => Err(self.c.unexpected("literal")),
        }
    }
}

/// Parses IR text without running the verifier.
pub fn parse_ir_unverified(text: &str) -> Result<Program, ParseError> {
    let toks = tokenize(text, Mode::Ir)?;
    let keep_ids = {
        let mut seen: HashMap<u32, &str> = HashMap::new();
        toks.iter().all(|t| match &t.tok {
            Tok::Value(n, i) => *i < 1 << 20 && *seen.entry(*i).or_insert(n.as_str()) == n.as_str(),
            _ => true,
        })
    };
    let mut ps = IrParser {
        c: Cursor::new(toks),
        keep_ids,
        p: Program::new(""),
        values: HashMap::new(),
        bufs: HashMap::new(),
    };
    ps.header()?;
    ps.p.body = ps.region()?;
    if !ps.c.at_eof() {
        return Err(ps.c.unexpected("end of input"));
    }
    Ok(ps.p)
}
