use super::*;
use crate::frontend::compile;
use crate::ir::{Op, ParLoop, Program};

fn fixture(name: &str) -> Program {
    let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(path).unwrap();
    compile(&text).unwrap()
}

fn thread_loop(p: &Program) -> (&ParLoop, &ParLoop) {
    let g = p.grid().unwrap();
    let tp = g
        .body
        .iter()
        .find_map(|o| match o {
            Op::ThreadPar(t) => Some(t),
            _ => None,
        })
        .unwrap();
    (g, tp)
}

fn footprint_text(p: &Program, which: usize) -> String {
    let (g, tp) = thread_loop(p);
    let ctx = Ctx::thread(p, g, tp);
    let path = &barrier_paths(&tp.body)[which];
    barrier_footprint(&ctx, &tp.body, path).display(p).to_string()
}

#[test]
fn exclusion_footprint() {
    let p = fixture("exclusion0.gk");
    let t = footprint_text(&p, 0);
    assert!(t.contains("W @s[tx] excl"), "{t}");
    assert!(t.contains("R @s[tx] excl"), "{t}");
}

#[test]
fn offset_footprint_keeps_conflict() {
    let p = fixture("exclusion1.gk");
    let (g, tp) = thread_loop(&p);
    let ctx = Ctx::thread(&p, g, tp);
    let path = &barrier_paths(&tp.body)[0];
    let n = neighborhood(&ctx, &tp.body, path);
    assert!(may_conflict(&ctx, &n.before_b.mark(&ctx), &n.after, true));
    assert!(may_conflict(&ctx, &n.before, &n.after_b.mark(&ctx), true));
}

#[test]
fn backprop_first_barrier() {
    let p = fixture("backprop.gk");
    let t = footprint_text(&p, 0);
    for want in ["W @node[ty]", "R @input[", "W @weights[tx + 16*ty] excl", "R @hidden["] {
        assert!(t.contains(want), "{want} missing from {t}");
    }
    assert!(!t.contains("@output"), "{t}");
}

#[test]
fn empty_body_has_empty_footprint() {
    let p = compile("kernel k() grid(1) block(4) { sync; }").unwrap();
    assert_eq!(footprint_text(&p, 0), "{}");
}

#[test]
fn non_affine_index_is_unknown() {
    let p = compile(
        "kernel k(a: f64[16], o: f64[4]) grid(1) block(4) { o[threadIdx.x] = a[threadIdx.x * threadIdx.x]; }",
    )
    .unwrap();
    let (g, tp) = thread_loop(&p);
    let ctx = Ctx::thread(&p, g, tp);
    let s = effects_of(&ctx, &tp.body).display(&p).to_string();
    assert!(s.contains("R @a[?]"), "{s}");
    assert!(s.contains("W @o[tx]"), "{s}");
}

fn ctx_for(p: &Program) -> Ctx<'_> {
    let (g, tp) = thread_loop(p);
    Ctx::thread(p, g, tp)
}

fn set(entries: Vec<Access>) -> EffectSet {
    EffectSet {
        entries: entries.into_iter().collect(),
    }
}

#[test]
fn conflict_examples() {
    let p = compile("kernel k(a: f64[16], b: f64[16]) grid(1) block(8) {}").unwrap();
    let ctx = ctx_for(&p);
    let a = p.buffer_by_name("a").unwrap();
    let b = p.buffer_by_name("b").unwrap();
    let tx = Affine::sym(Sym::Thread(0));
    let tx1 = tx.checked_add(&Affine::constant(1)).unwrap();
    let acc = |base, index: &Affine, kind| Access {
        base,
        index: Some(index.clone()),
        kind,
        marked: false,
    };
    let r = set(vec![acc(a, &tx, Kind::Read)]);
    assert!(!may_conflict(&ctx, &r, &r, true));
    assert!(may_conflict(&ctx, &r, &r, false));
    let wa = set(vec![acc(a, &tx, Kind::Write)]);
    let wb = set(vec![acc(b, &tx, Kind::Write)]);
    assert!(!may_conflict(&ctx, &wa, &wb, true));
    let r1 = set(vec![acc(a, &tx1, Kind::Read)]);
    assert!(may_conflict(&ctx, &wa, &r1, true));
    assert!(may_conflict(&ctx, &wa.mark(&ctx), &r1, true));
    assert!(!may_conflict(&ctx, &wa.mark(&ctx), &r, true));
    assert!(!may_conflict(&ctx, &wa, &EffectSet::new(), false));
}

#[test]
fn mayalias_drops_holes() {
    let p = compile("mayalias kernel k(a: f64[16], b: f64[16]) grid(1) block(8) {}").unwrap();
    let ctx = ctx_for(&p);
    let a = p.buffer_by_name("a").unwrap();
    let b = p.buffer_by_name("b").unwrap();
    let tx = Affine::sym(Sym::Thread(0));
    let w = set(vec![Access {
        base: a,
        index: Some(tx.clone()),
        kind: Kind::Write,
        marked: false,
    }]);
    let r = set(vec![Access {
        base: b,
        index: Some(tx),
        kind: Kind::Read,
        marked: false,
    }]);
    assert!(w.mark(&ctx).iter().all(|e| !e.marked));
    assert!(may_conflict(&ctx, &w.mark(&ctx), &r, true));
}

#[test]
fn injectivity_examples() {
    let tx = Affine::sym(Sym::Thread(0));
    assert!(is_thread_injective(&tx, &[Some(8), Some(1), Some(1)]));
    let lin = tx
        .checked_add(&Affine::sym(Sym::Thread(1)).checked_scale(4).unwrap())
        .unwrap();
    assert!(is_thread_injective(&lin, &[Some(4), Some(3), Some(1)]));
    assert!(!is_thread_injective(&lin, &[Some(5), Some(3), Some(1)]));
    assert!(!is_thread_injective(&Affine::constant(3), &[Some(2), Some(1), Some(1)]));
    assert!(!is_thread_injective(&tx, &[None, Some(1), Some(1)]));
}

#[test]
fn tx_div_2_is_unknown() {
    let p = compile(
        "kernel k(a: f64[16]) grid(1) block(8) { a[threadIdx.x / 2] = 1.0; }",
    )
    .unwrap();
    let (g, tp) = thread_loop(&p);
    let ctx = Ctx::thread(&p, g, tp);
    let s = effects_of(&ctx, &tp.body);
    assert!(s.iter().all(|e| e.index.is_none() && !ctx.can_mark(e)));
}

#[test]
fn dump_contains_effect_comments() {
    let p = fixture("exclusion0.gk");
    let d = dump_effects(&p);
    assert!(d.contains("; effects: "), "{d}");
}

mod props {
    use super::super::*;
    use crate::frontend::compile;
    use proptest::prelude::*;

    fn arb_affine() -> impl Strategy<Value = Affine> {
        (-4i64..5, -4i64..5, -3i64..4, -6i64..7).prop_map(|(a, b, c, k)| {
            let mut e = Affine::constant(k);
            for (d, coef) in [a, b, c].into_iter().enumerate() {
                e = e
                    .checked_add(&Affine::sym(Sym::Thread(d)).checked_scale(coef).unwrap())
                    .unwrap();
            }
            e
        })
    }

    fn eval(e: &Affine, t: [i64; 3]) -> i64 {
        e.eval(&|s| match s {
            Sym::Thread(d) => Some(t[d]),
            _ => None,
        })
        .unwrap()
    }

    fn threads(ext: [i64; 3]) -> Vec<[i64; 3]> {
        let mut v = Vec::new();
        for z in 0..ext[2] {
            for y in 0..ext[1] {
                for x in 0..ext[0] {
                    v.push([x, y, z]);
                }
            }
        }
        v
    }

    proptest! {
        #[test]
        fn injective_means_distinct(e in arb_affine(), bx in 1i64..9, by in 1i64..9, bz in 1i64..4) {
            let ext = [bx, by, bz];
            if is_thread_injective(&e, &[Some(bx), Some(by), Some(bz)]) {
                let mut seen = std::collections::HashSet::new();
                for t in threads(ext) {
                    prop_assert!(seen.insert(eval(&e, t)));
                }
            }
        }

        #[test]
        fn linearized_is_injective(k in prop::sample::select(vec![-3i64, -1, 1, 2, 5]), c in -5i64..5, bx in 1i64..9, by in 1i64..9, bz in 1i64..4) {
            let lin = Affine::sym(Sym::Thread(0))
                .checked_add(&Affine::sym(Sym::Thread(1)).checked_scale(bx).unwrap()).unwrap()
                .checked_add(&Affine::sym(Sym::Thread(2)).checked_scale(bx * by).unwrap()).unwrap()
                .checked_scale(k).unwrap()
                .checked_add(&Affine::constant(c)).unwrap();
            prop_assert!(is_thread_injective(&lin, &[Some(bx), Some(by), Some(bz)]));
        }

        #[test]
        fn disjointness_is_sound(x in arb_affine(), y in arb_affine(), bx in 1i64..6, by in 1i64..4) {
            let p = compile(&format!("kernel k() grid(1) block({bx}, {by}) {{}}")).unwrap();
            let ctx = super::ctx_for(&p);
            let ts = threads([bx, by, 1]);
            if !indices_may_equal(&x, &y, ThreadVars::Independent, &ctx) {
                for t in &ts {
                    for u in &ts {
                        prop_assert_ne!(eval(&x, *t), eval(&y, *u));
                    }
                }
            }
            if !indices_may_equal(&x, &y, ThreadVars::Shared, &ctx) {
                for t in &ts {
                    prop_assert_ne!(eval(&x, *t), eval(&y, *t));
                }
            }
        }

        #[test]
        fn conflict_symmetric_and_monotone(x in arb_affine(), y in arb_affine(), wx in any::<bool>(), wy in any::<bool>(), mx in any::<bool>()) {
            let p = compile("kernel k(a: f64[64]) grid(1) block(4, 2) {}").unwrap();
            let ctx = super::ctx_for(&p);
            let a = p.buffer_by_name("a").unwrap();
            let kind = |w| if w { Kind::Write } else { Kind::Read };
            let ax = Access { base: a, index: Some(x), kind: kind(wx), marked: false };
            let ay = Access { base: a, index: Some(y), kind: kind(wy), marked: false };
            let mut sx = EffectSet::new();
            sx.insert(ax.clone());
            let sx = if mx { sx.mark(&ctx) } else { sx };
            let mut sy = EffectSet::new();
            sy.insert(ay);
            for rar in [false, true] {
                let c = may_conflict(&ctx, &sx, &sy, rar);
                prop_assert_eq!(c, may_conflict(&ctx, &sy, &sx, rar));
                let mut wide = EffectSet::new();
                wide.insert(Access { index: None, marked: false, ..ax.clone() });
                if c {
                    prop_assert!(may_conflict(&ctx, &wide, &sy, rar));
                }
            }
        }
    }
}
