use super::{Access, Affine, Ctx, EffectSet, Kind, Sym};

/// Whether the two sides of an index comparison share thread ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThreadVars {
    /// Any pair of threads (possibly the same one).
    Independent,
    /// Both accesses come from the same thread.
    Shared,
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Can `sum(coef * var) + c == 0` hold with each var in its inclusive range?
fn solvable(terms: &[(i128, Option<(i128, i128)>)], c: i128) -> bool {
    let terms: Vec<_> = terms.iter().filter(|t| t.0 != 0).collect();
    if terms.is_empty() {
        return c == 0;
    }
    let g = terms.iter().fold(0, |g, t| gcd(g, t.0));
    if c % g != 0 {
        return false;
    }
    let (mut lo, mut hi) = (0i128, 0i128);
    for (k, r) in &terms {
        let Some((a, b)) = r else { return true };
        if a > b {
            return false;
        }
        lo += (k * a).min(k * b);
        hi += (k * a).max(k * b);
    }
    lo <= -c && -c <= hi
}

fn range(ext: Option<i64>) -> Option<(i128, i128)> {
    ext.map(|e| (0, e as i128 - 1))
}

/// Could `x` (one side) and `y` (other side) denote the same address?
pub fn indices_may_equal(x: &Affine, y: &Affine, tv: ThreadVars, ctx: &Ctx<'_>) -> bool {
    let mut terms = Vec::new();
    let syms: std::collections::BTreeSet<Sym> = x.terms.keys().chain(y.terms.keys()).copied().collect();
    for s in syms {
        let (cx, cy) = (x.coef(s) as i128, y.coef(s) as i128);
        let (independent, r) = match s {
            Sym::Thread(d) => (tv == ThreadVars::Independent, range(ctx.thread_extents.get(d).copied().flatten())),
            Sym::Block(d) => (ctx.cross_block, range(ctx.block_extents.get(d).copied().flatten())),
            Sym::Value(_) => (false, None),
        };
        if independent {
            terms.push((cx, r));
            terms.push((-cy, r));
        } else {
            terms.push((cx - cy, r));
        }
    }
    solvable(&terms, x.constant as i128 - y.constant as i128)
}

fn pair_conflicts(ctx: &Ctx<'_>, x: &Access, y: &Access, drop_rar: bool) -> bool {
    if drop_rar && x.kind == Kind::Read && y.kind == Kind::Read {
        return false;
    }
    if !ctx.p.may_alias(x.base, y.base) {
        return false;
    }
    let alloc = |a: &Access| matches!(a.kind, Kind::Alloc | Kind::Free);
    if alloc(x) || alloc(y) || x.base != y.base {
        return true;
    }
    let (Some(ex), Some(ey)) = (&x.index, &y.index) else {
        return true;
    };
    if x.marked != y.marked && ex == ey {
        return false;
    }
    indices_may_equal(ex, ey, ThreadVars::Independent, ctx)
}

/// Could an access of `a` and an access of `b`, issued by two threads of the
/// same loop, touch the same location with at least one write?
pub fn may_conflict(ctx: &Ctx<'_>, a: &EffectSet, b: &EffectSet, drop_rar: bool) -> bool {
    a.iter()
        .any(|x| b.iter().any(|y| pair_conflicts(ctx, x, y, drop_rar)))
}

/// Could two indices evaluated by the same thread coincide?
pub fn may_alias_same_thread(ctx: &Ctx<'_>, x: Option<&Affine>, y: Option<&Affine>) -> bool {
    match (x, y) {
        (Some(x), Some(y)) => indices_may_equal(x, y, ThreadVars::Shared, ctx),
        _ => true,
    }
}

/// Is `e` a one-to-one function of the thread id over the given extents?
pub fn is_thread_injective(e: &Affine, extents: &[Option<i64>; 3]) -> bool {
    let mut stride: i64 = 1;
    let mut k: Option<i64> = None;
    for (d, ext) in extents.iter().enumerate() {
        let Some(ext) = *ext else { return false };
        if ext > 1 {
            let c = e.coef(Sym::Thread(d));
            match k {
                None => {
                    if c == 0 || c % stride != 0 {
                        return false;
                    }
                    k = Some(c / stride);
                }
                Some(k) => match k.checked_mul(stride) {
                    Some(want) if want == c => {}
                    _ => return false,
                },
            }
        }
        stride = match stride.checked_mul(ext.max(1)) {
            Some(s) => s,
            None => return false,
        };
    }
    true
}
