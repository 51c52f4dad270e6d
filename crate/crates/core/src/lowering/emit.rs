use std::fmt::Write;

use crate::ir::{
    BinOp, BufferId, BufferKind, Carried, ElemTy, Expr, Lit, Op, ParLoop, ParamKind, Program, ScalarTy, UnOp,
    ValueId,
};

const PRELUDE: &str = r#"#include <inttypes.h>
#include <math.h>
#include <stdint.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#pragma STDC FP_CONTRACT OFF

static int64_t sdiv(int64_t a, int64_t b) {
  if (b == 0) return 0;
  if (a == INT64_MIN && b == -1) return a;
  return a / b;
}

static int64_t srem(int64_t a, int64_t b) {
  if (b == 0 || (a == INT64_MIN && b == -1)) return 0;
  return a % b;
}

static int64_t f2i(double x) {
  if (x != x) return 0;
  if (x >= 9223372036854775807.0) return INT64_MAX;
  if (x <= -9223372036854775808.0) return INT64_MIN;
  return (int64_t)x;
}

static int64_t space(int64_t a, int64_t b, int64_t c) {
  return (a > 0 && b > 0 && c > 0) ? a * b * c : 0;
}
"#;

const HARNESS: &str = r#"
static char *slurp(const char *path) {
  FILE *f = fopen(path, "rb");
  if (!f) { perror(path); exit(1); }
  fseek(f, 0, SEEK_END);
  long n = ftell(f);
  fseek(f, 0, SEEK_SET);
  char *s = malloc((size_t)n + 1);
  if (fread(s, 1, (size_t)n, f) != (size_t)n) { perror(path); exit(1); }
  s[n] = 0;
  fclose(f);
  return s;
}

static const char *skip(const char *p) {
  while (*p == ' ' || *p == '\n' || *p == '\t' || *p == '\r') p++;
  return p;
}

/* position after `"key":`, searching the whole document */
static const char *find_key(const char *s, const char *key) {
  size_t k = strlen(key);
  for (const char *p = strchr(s, '"'); p; p = strchr(p + 1, '"')) {
    if (strncmp(p + 1, key, k) == 0 && p[k + 1] == '"') {
      const char *q = skip(p + k + 2);
      if (*q == ':') return skip(q + 1);
    }
  }
  fprintf(stderr, "missing input %s\n", key);
  exit(1);
}

static double read_f64(const char **pp) {
  const char *p = skip(*pp);
  double x;
  if (*p == '"') {
    if (strncmp(p, "\"nan\"", 5) == 0) { x = NAN; p += 5; }
    else if (strncmp(p, "\"inf\"", 5) == 0) { x = INFINITY; p += 5; }
    else if (strncmp(p, "\"-inf\"", 6) == 0) { x = -INFINITY; p += 6; }
    else { fprintf(stderr, "bad number\n"); exit(1); }
  } else {
    char *end;
    x = strtod(p, &end);
    p = end;
  }
  *pp = p;
  return x;
}

static int64_t read_i64(const char **pp) {
  char *end;
  int64_t x = strtoll(skip(*pp), &end, 10);
  *pp = end;
  return x;
}

static int64_t array_len(const char *p) {
  if (*p != '[') { fprintf(stderr, "expected array\n"); exit(1); }
  p = skip(p + 1);
  if (*p == ']') return 0;
  int64_t n = 1;
  for (; *p && *p != ']'; p++) n += *p == ',';
  return n;
}

static double *read_f64s(const char *doc, const char *key) {
  const char *p = find_key(doc, key);
  int64_t n = array_len(p);
  double *a = malloc(sizeof(double) * (size_t)(n ? n : 1));
  p++;
  for (int64_t i = 0; i < n; i++) { a[i] = read_f64(&p); p = skip(p) + 1; }
  return a;
}

static int64_t *read_i64s(const char *doc, const char *key) {
  const char *p = find_key(doc, key);
  int64_t n = array_len(p);
  int64_t *a = malloc(sizeof(int64_t) * (size_t)(n ? n : 1));
  p++;
  for (int64_t i = 0; i < n; i++) { a[i] = read_i64(&p); p = skip(p) + 1; }
  return a;
}

static void print_f64(double x) {
  if (x != x) printf("\"nan\"");
  else if (isinf(x)) printf(x > 0 ? "\"inf\"" : "\"-inf\"");
  else printf("%.17g", x);
}
"#;

fn cty(t: ScalarTy) -> &'static str {
    match t {
        ScalarTy::I64 => "int64_t",
        ScalarTy::F64 => "double",
        ScalarTy::Bool => "int",
    }
}

fn ety(t: ElemTy) -> &'static str {
    cty(t.scalar())
}

fn v(x: ValueId) -> String {
    format!("v{}", x.0)
}

fn b(x: BufferId) -> String {
    format!("b{}", x.0)
}

fn lit(l: Lit) -> String {
    match l {
        Lit::I64(i64::MIN) => "INT64_MIN".into(),
        Lit::I64(x) => format!("INT64_C({x})"),
        Lit::F64(x) if x.is_nan() => "NAN".into(),
        Lit::F64(x) if x.is_infinite() => if x > 0.0 { "INFINITY" } else { "(-INFINITY)" }.into(),
        Lit::F64(x) => format!("{x:?}"),
        Lit::Bool(x) => (x as i32).to_string(),
    }
}

fn ident(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

struct Emitter<'p> {
    p: &'p Program,
    out: String,
    depth: usize,
}

impl Emitter<'_> {
    fn line(&mut self, s: &str) {
        for _ in 0..self.depth {
            self.out.push_str("  ");
        }
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn pragma(&mut self, s: &str) {
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn expr(&self, e: &Expr) -> String {
        let p = self.p;
        match e {
            Expr::Const(l) => lit(*l),
            Expr::Unary(UnOp::Neg, a) if p.ty(*a) == ScalarTy::I64 => format!("(int64_t)(0u - (uint64_t){})", v(*a)),
            Expr::Unary(UnOp::Neg, a) => format!("(-{})", v(*a)),
            Expr::Unary(UnOp::Not, a) => format!("(!{})", v(*a)),
            Expr::Select(c, a, x) => format!("({} ? {} : {})", v(*c), v(*a), v(*x)),
            Expr::Cast(t, a) => {
                let from = p.ty(*a);
                match (t, from) {
                    (ScalarTy::I64, ScalarTy::F64) => format!("f2i({})", v(*a)),
                    (ScalarTy::Bool, _) => format!("({} != 0)", v(*a)),
                    (t, _) => format!("({}){}", cty(*t), v(*a)),
                }
            }
            Expr::Binary(op, a, x) => {
                let (a, x, int) = (v(*a), v(*x), p.ty(*a) == ScalarTy::I64);
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Lt => "<",
                    BinOp::Le => "<=",
                    BinOp::Gt => ">",
                    BinOp::Ge => ">=",
                    BinOp::Eq => "==",
                    BinOp::Ne => "!=",
                    BinOp::And => "&&",
                    BinOp::Or => "||",
                    BinOp::Rem => return format!("srem({a}, {x})"),
                    BinOp::Shl => return format!("(int64_t)((uint64_t){a} << ({x} & 63))"),
                    BinOp::Shr => return format!("({a} >> ({x} & 63))"),
                };
                match op {
                    BinOp::Div if int => format!("sdiv({a}, {x})"),
                    BinOp::Add | BinOp::Sub | BinOp::Mul if int => {
                        format!("(int64_t)((uint64_t){a} {sym} (uint64_t){x})")
                    }
                    _ => format!("({a} {sym} {x})"),
                }
            }
        }
    }

    fn decl(&mut self, x: ValueId, init: &str) {
        let s = format!("{} {} = {};", cty(self.p.ty(x)), v(x), init);
        self.line(&s);
    }

    fn carried_in(&mut self, cs: &[Carried]) {
        for c in cs {
            self.decl(c.arg, &v(c.init));
        }
    }

    fn carried_next(&mut self, cs: &[Carried], yields: &[ValueId]) {
        if cs.is_empty() {
            return;
        }
        self.line("{");
        self.depth += 1;
        for (i, (c, y)) in cs.iter().zip(yields).enumerate() {
            let s = format!("{} next{i} = {};", cty(self.p.ty(c.arg)), v(*y));
            self.line(&s);
        }
        for (i, c) in cs.iter().enumerate() {
            let s = format!("{} = next{i};", v(c.arg));
            self.line(&s);
        }
        self.depth -= 1;
        self.line("}");
    }

    fn carried_out(&mut self, cs: &[Carried]) {
        for c in cs {
            self.decl(c.result, &v(c.arg));
        }
    }

    fn par(&mut self, l: &ParLoop, workshare: bool) {
        self.line("{");
        self.depth += 1;
        let e: Vec<String> = (0..3).map(|i| l.extents.get(i).map_or("1".into(), |x| v(*x))).collect();
        let n = l.ivs.len();
        let total = if n <= 3 {
            format!("space({}, {}, {})", e[0], e[1], e[2])
        } else {
            let e2: Vec<String> = (3..6).map(|i| v(l.extents[i])).collect();
            format!("space({}, {}, {}) * space({}, {}, {})", e[0], e[1], e[2], e2[0], e2[1], e2[2])
        };
        self.line(&format!("const int64_t total = {total};"));
        if workshare {
            self.pragma("#pragma omp for schedule(static)");
        }
        self.line("for (int64_t it = 0; it < total; it++) {");
        self.depth += 1;
        self.line("int64_t rest = it;");
        for (i, iv) in l.ivs.iter().enumerate() {
            let ext = v(l.extents[i]);
            self.line(&format!("const int64_t {} = rest % {ext};", v(*iv)));
            if i + 1 < n {
                self.line(&format!("rest /= {ext};"));
            }
        }
        self.line("(void)rest;");
        self.ops(&l.body);
        self.depth -= 1;
        self.line("}");
        self.depth -= 1;
        self.line("}");
    }

    fn ops(&mut self, ops: &[Op]) {
        for op in ops {
            self.op(op);
        }
    }

    fn op(&mut self, op: &Op) {
        let p = self.p;
        match op {
            Op::Pure { dst, expr } => {
                let e = self.expr(expr);
                self.decl(*dst, &e);
            }
            Op::Load { dst, buf, index } => self.decl(*dst, &format!("{}[{}]", b(*buf), v(*index))),
            Op::Store { buf, index, value } => self.line(&format!("{}[{}] = {};", b(*buf), v(*index), v(*value))),
            Op::SharedAlloc { buf } => {
                let info = p.buffer(*buf);
                let s = format!("{} {}[{}] = {{0}}; /* {} */", ety(info.elem), b(*buf), info.extent.unwrap_or(1).max(1), info.name);
                self.line(&s);
            }
            Op::For(f) => {
                self.carried_in(&f.carried);
                self.line(&format!("for (int64_t {iv} = {}; {iv} < {}; {iv}++) {{", v(f.lower), v(f.upper), iv = v(f.iv)));
                self.depth += 1;
                self.ops(&f.body);
                self.carried_next(&f.carried, &f.yields);
                self.depth -= 1;
                self.line("}");
                self.carried_out(&f.carried);
            }
            Op::While(w) => {
                self.carried_in(&w.carried);
                self.line("for (;;) {");
                self.depth += 1;
                self.ops(&w.cond_ops);
                self.line(&format!("if (!{}) break;", v(w.cond)));
                self.ops(&w.body);
                self.carried_next(&w.carried, &w.yields);
                self.depth -= 1;
                self.line("}");
                self.carried_out(&w.carried);
            }
            Op::If(i) => {
                for r in &i.results {
                    self.line(&format!("{} {};", cty(p.ty(*r)), v(*r)));
                }
                self.line(&format!("if ({}) {{", v(i.cond)));
                self.depth += 1;
                self.ops(&i.then_ops);
                for (r, y) in i.results.iter().zip(&i.then_yields) {
                    self.line(&format!("{} = {};", v(*r), v(*y)));
                }
                self.depth -= 1;
                self.line("} else {");
                self.depth += 1;
                self.ops(&i.else_ops);
                for (r, y) in i.results.iter().zip(&i.else_yields) {
                    self.line(&format!("{} = {};", v(*r), v(*y)));
                }
                self.depth -= 1;
                self.line("}");
            }
            Op::TeamRegion(t) => {
                match t.threads {
                    Some(n) => self.pragma(&format!("#pragma omp parallel num_threads({n})")),
                    None => self.pragma("#pragma omp parallel"),
                }
                self.line("{");
                self.depth += 1;
                self.ops(&t.body);
                self.depth -= 1;
                self.line("}");
            }
            Op::WorkShare(l) => self.par(l, true),
            Op::SerialNest(l) | Op::ThreadPar(l) | Op::GridPar(l) => self.par(l, false),
            Op::TeamBarrier => self.pragma("#pragma omp barrier"),
            Op::Barrier => self.line("/* unlowered barrier */"),
        }
    }
}

/// C99 translation unit with OpenMP pragmas for a lowered program, plus a
/// `main` that reads the JSON input format and prints the outputs.
pub fn emit_c(p: &Program) -> String {
    let mut e = Emitter { p, out: String::new(), depth: 0 };
    e.out.push_str(PRELUDE);
    let restrict = if p.mayalias { "" } else { "restrict " };
    let args: Vec<String> = p
        .params
        .iter()
        .map(|q| match &q.kind {
            ParamKind::Scalar { value, .. } => format!("{} {}", cty(p.ty(*value)), v(*value)),
            ParamKind::Buffer { buf, .. } => format!("{} *{restrict}{}", ety(p.buffer(*buf).elem), b(*buf)),
        })
        .collect();
    let fname = format!("kernel_{}", ident(&p.name));
    let _ = writeln!(e.out, "\nvoid {fname}({}) {{", if args.is_empty() { "void".into() } else { args.join(", ") });
    e.depth = 1;
    e.ops(&p.body);
    e.depth = 0;
    e.out.push_str("}\n");
    e.out.push_str(HARNESS);

    let mut m = String::new();
    let _ = writeln!(m, "\nint main(int argc, char **argv) {{");
    let _ = writeln!(m, "  if (argc < 2) {{ fprintf(stderr, \"usage: %s input.json\\n\", argv[0]); return 1; }}");
    let _ = writeln!(m, "  char *doc = slurp(argv[1]);");
    let mut call = Vec::new();
    for q in &p.params {
        match &q.kind {
            ParamKind::Scalar { value, .. } => {
                let _ = writeln!(m, "  const char *p_{0} = find_key(doc, \"{1}\");", v(*value), q.name);
                let read = if p.ty(*value) == ScalarTy::F64 { "read_f64" } else { "read_i64" };
                let _ = writeln!(m, "  {} {} = {read}(&p_{1});", cty(p.ty(*value)), v(*value));
                call.push(v(*value));
            }
            ParamKind::Buffer { buf, .. } => {
                let info = p.buffer(*buf);
                debug_assert_eq!(info.kind, BufferKind::Param);
                let read = if info.elem == ElemTy::F64 { "read_f64s" } else { "read_i64s" };
                let _ = writeln!(m, "  {} *{} = {read}(doc, \"{}\");", ety(info.elem), b(*buf), q.name);
                let _ = writeln!(m, "  int64_t n_{} = array_len(find_key(doc, \"{}\"));", b(*buf), q.name);
                call.push(b(*buf));
            }
        }
    }
    let _ = writeln!(m, "  {fname}({});", call.join(", "));
    let _ = writeln!(m, "  printf(\"{{\\\"scalars\\\": {{\");");
    let scalars: Vec<_> = p.scalar_params().collect();
    for (i, (name, val)) in scalars.iter().enumerate() {
        let sep = if i == 0 { "" } else { ", " };
        let _ = writeln!(m, "  printf(\"{sep}\\\"{name}\\\": \");");
        if p.ty(*val) == ScalarTy::F64 {
            let _ = writeln!(m, "  print_f64({});", v(*val));
        } else {
            let _ = writeln!(m, "  printf(\"%\" PRId64, {});", v(*val));
        }
    }
    let _ = writeln!(m, "  printf(\"}}, \\\"buffers\\\": {{\");");
    let bufs: Vec<_> = p.param_buffers().collect();
    for (i, (name, buf)) in bufs.iter().enumerate() {
        let sep = if i == 0 { "" } else { ", " };
        let bn = b(*buf);
        let _ = writeln!(m, "  printf(\"{sep}\\\"{name}\\\": [\");");
        let _ = writeln!(m, "  for (int64_t i = 0; i < n_{bn}; i++) {{");
        let _ = writeln!(m, "    if (i) printf(\", \");");
        if p.buffer(*buf).elem == ElemTy::F64 {
            let _ = writeln!(m, "    print_f64({bn}[i]);");
        } else {
            let _ = writeln!(m, "    printf(\"%\" PRId64, {bn}[i]);");
        }
        let _ = writeln!(m, "  }}");
        let _ = writeln!(m, "  printf(\"]\");");
    }
    let _ = writeln!(m, "  printf(\"}}}}\\n\");");
    let _ = writeln!(m, "  free(doc);");
    let _ = writeln!(m, "  return 0;");
    let _ = writeln!(m, "}}");
    e.out.push_str(&m);
    e.out
}
