use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use super::Access;
use crate::ir::{all_defs, DefIndex, DefSite};
use crate::ir::{BinOp, BufferKind, Expr, Lit, Op, ParLoop, Program, ScalarTy, UnOp, ValueId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sym {
    Thread(usize),
    Block(usize),
    /// A value that is uniform over the analysed loop.
    Value(ValueId),
}

/// `sum(coef * sym) + constant`, with no zero coefficients.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Affine {
    pub terms: BTreeMap<Sym, i64>,
    pub constant: i64,
}

impl Affine {
    pub fn constant(c: i64) -> Self {
        Affine {
            terms: BTreeMap::new(),
            constant: c,
        }
    }

    pub fn sym(s: Sym) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(s, 1);
        Affine { terms, constant: 0 }
    }

    pub fn coef(&self, s: Sym) -> i64 {
        self.terms.get(&s).copied().unwrap_or(0)
    }

    pub fn as_const(&self) -> Option<i64> {
        self.terms.is_empty().then_some(self.constant)
    }

    pub fn has_thread(&self) -> bool {
        self.terms.keys().any(|s| matches!(s, Sym::Thread(_)))
    }

    pub fn checked_add(&self, o: &Affine) -> Option<Affine> {
        let mut r = self.clone();
        for (s, c) in &o.terms {
            let e = r.terms.entry(*s).or_insert(0);
            *e = e.checked_add(*c)?;
            if *e == 0 {
                r.terms.remove(s);
            }
        }
        r.constant = r.constant.checked_add(o.constant)?;
        Some(r)
    }

    pub fn checked_scale(&self, k: i64) -> Option<Affine> {
        if k == 0 {
            return Some(Affine::constant(0));
        }
        let mut terms = BTreeMap::new();
        for (s, c) in &self.terms {
            terms.insert(*s, c.checked_mul(k)?);
        }
        Some(Affine {
            terms,
            constant: self.constant.checked_mul(k)?,
        })
    }

    pub fn checked_sub(&self, o: &Affine) -> Option<Affine> {
        self.checked_add(&o.checked_scale(-1)?)
    }

    /// Evaluates with concrete symbol values.
    pub fn eval(&self, f: &dyn Fn(Sym) -> Option<i64>) -> Option<i64> {
        let mut acc = self.constant;
        for (s, c) in &self.terms {
            acc = acc.checked_add(c.checked_mul(f(*s)?)?)?;
        }
        Some(acc)
    }

    pub fn display<'a>(&'a self, p: &'a Program) -> impl fmt::Display + 'a {
        DisplayAffine(self, p)
    }
}

struct DisplayAffine<'a>(&'a Affine, &'a Program);

impl fmt::Display for DisplayAffine<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (s, c) in &self.0.terms {
            let name = match s {
                Sym::Thread(d) => format!("t{}", ["x", "y", "z"][*d]),
                Sym::Block(d) => format!("b{}", ["x", "y", "z"][*d]),
                Sym::Value(v) => {
                    let n = self.1.value_name(*v);
                    format!("%{}.{}", if n.is_empty() { "v" } else { n }, v.0)
                }
            };
            let (neg, mag) = (*c < 0, c.unsigned_abs());
            match (first, neg) {
                (true, true) => f.write_str("-")?,
                (true, false) => {}
                (false, true) => f.write_str(" - ")?,
                (false, false) => f.write_str(" + ")?,
            }
            if mag != 1 {
                write!(f, "{mag}*")?;
            }
            f.write_str(&name)?;
            first = false;
        }
        let c = self.0.constant;
        if first {
            write!(f, "{c}")
        } else if c > 0 {
            write!(f, " + {c}")
        } else if c < 0 {
            write!(f, " - {}", c.unsigned_abs())
        } else {
            Ok(())
        }
    }
}

/// Analysis context for one parallel loop.
pub struct Ctx<'p> {
    pub p: &'p Program,
    pub defs: DefIndex,
    pub thread_ivs: Vec<ValueId>,
    pub block_ivs: Vec<ValueId>,
    pub thread_extents: [Option<i64>; 3],
    pub block_extents: [Option<i64>; 3],
    /// Values defined inside the analysed loop.
    inner: HashSet<ValueId>,
    /// The two sides of a query run in different blocks.
    pub cross_block: bool,
    cache: RefCell<HashMap<ValueId, Option<Affine>>>,
}

fn extents(p: &Program, defs: &DefIndex, l: &ParLoop) -> [Option<i64>; 3] {
    let mut e = [Some(1); 3];
    for (d, v) in l.extents.iter().enumerate().take(3) {
        e[d] = defs.const_i64(p, *v);
    }
    e
}

impl<'p> Ctx<'p> {
    /// Context for the thread loop `tp` inside `grid`.
    pub fn thread(p: &'p Program, grid: &ParLoop, tp: &ParLoop) -> Self {
        let defs = DefIndex::build(p);
        let mut inner: HashSet<ValueId> = all_defs(&tp.body).into_iter().collect();
        inner.extend(tp.ivs.iter().copied());
        Ctx {
            thread_extents: extents(p, &defs, tp),
            block_extents: extents(p, &defs, grid),
            thread_ivs: tp.ivs.clone(),
            block_ivs: grid.ivs.clone(),
            defs,
            p,
            inner,
            cross_block: false,
            cache: RefCell::new(HashMap::new()),
        }
    }

    /// Context for a whole grid loop, comparing accesses of distinct blocks.
    pub fn grid(p: &'p Program, grid: &ParLoop) -> Self {
        let defs = DefIndex::build(p);
        let mut inner: HashSet<ValueId> = all_defs(&grid.body).into_iter().collect();
        inner.extend(grid.ivs.iter().copied());
        let tp = grid.body.iter().find_map(|o| match o {
            Op::ThreadPar(t) => Some(t),
            _ => None,
        });
        let (thread_ivs, thread_extents) = match tp {
            Some(t) => (t.ivs.clone(), extents(p, &defs, t)),
            None => (Vec::new(), [Some(1); 3]),
        };
        Ctx {
            block_extents: extents(p, &defs, grid),
            thread_ivs,
            thread_extents,
            block_ivs: grid.ivs.clone(),
            defs,
            p,
            inner,
            cross_block: true,
            cache: RefCell::new(HashMap::new()),
        }
    }

    pub fn is_inner(&self, v: ValueId) -> bool {
        self.inner.contains(&v)
    }

    pub fn can_mark(&self, a: &Access) -> bool {
        if self.p.mayalias && self.p.buffer(a.base).kind == BufferKind::Param {
            return false;
        }
        match &a.index {
            Some(e) => super::is_thread_injective(e, &self.thread_extents),
            None => false,
        }
    }

    /// Affine form of an i64 value, or `None` if it is not affine.
    pub fn affine(&self, v: ValueId) -> Option<Affine> {
        if let Some(r) = self.cache.borrow().get(&v) {
            return r.clone();
        }
        let r = self.compute(v, 0);
        self.cache.borrow_mut().insert(v, r.clone());
        r
    }

    fn compute(&self, v: ValueId, depth: usize) -> Option<Affine> {
        if let Some(d) = self.thread_ivs.iter().position(|x| *x == v) {
            return Some(Affine::sym(Sym::Thread(d)));
        }
        if let Some(d) = self.block_ivs.iter().position(|x| *x == v) {
            return Some(Affine::sym(Sym::Block(d)));
        }
        let opaque = || {
            if self.inner.contains(&v) || self.p.ty(v) != ScalarTy::I64 {
                None
            } else {
                Some(Affine::sym(Sym::Value(v)))
            }
        };
        if depth > 64 {
            return opaque();
        }
        let Some(DefSite::Pure(expr)) = self.defs.get(v) else {
            return opaque();
        };
        let sub = |x: ValueId| -> Option<Affine> {
            if self.p.ty(x) != ScalarTy::I64 {
                return None;
            }
            self.compute(x, depth + 1)
        };
        let r = match expr {
            Expr::Const(Lit::I64(c)) => Some(Affine::constant(*c)),
            Expr::Binary(BinOp::Add, a, b) => sub(*a)?.checked_add(&sub(*b)?),
            Expr::Binary(BinOp::Sub, a, b) => sub(*a)?.checked_sub(&sub(*b)?),
            Expr::Binary(BinOp::Mul, a, b) => {
                let (x, y) = (sub(*a)?, sub(*b)?);
                match (x.as_const(), y.as_const()) {
                    (Some(k), _) => y.checked_scale(k),
                    (_, Some(k)) => x.checked_scale(k),
                    _ => None,
                }
            }
            Expr::Binary(BinOp::Shl, a, b) => {
                let k = sub(*b)?.as_const()?;
                if (0..63).contains(&k) {
                    sub(*a)?.checked_scale(1i64 << k)
                } else {
                    None
                }
            }
            Expr::Unary(UnOp::Neg, a) => sub(*a)?.checked_scale(-1),
            Expr::Cast(ScalarTy::I64, a) if self.p.ty(*a) == ScalarTy::I64 => sub(*a),
            _ => None,
        };
        r.or_else(opaque)
    }
}
