//! SMT-LIB2 rendering of a min-ones problem.
//!
//! Layout: one `declare-const` per variable in id order, one per
//! parameter, the `b2i` helper, the assertions, a single `minimize` and the
//! `check-sat`/`get-objectives`/`get-model` footer. Rational constants in
//! an aggregate comparison are scaled by the common denominator so that
//! everything stays in `Int`; AVG is compared by cross-multiplying with
//! explicit non-empty guards.

use std::fmt::Write as _;

use num_integer::Integer;

use super::MinOnesProblem;
use crate::catalog::TupleId;
use crate::eval::{AggAtom, AggFormula, AggTerm};
use crate::provenance::{ExprId, ProvStore};
use crate::ra::{AggFunc, CmpOp};
use crate::value::Rational;

pub fn emit_smtlib(p: &MinOnesProblem<'_>, name: &dyn Fn(TupleId) -> String) -> String {
    let mut out = String::new();
    for v in &p.vars {
        let _ = writeln!(out, "(declare-const {} Bool)", name(*v));
    }
    for s in &p.params {
        let _ = writeln!(out, "(declare-const {} Int)", s.name);
    }
    out.push_str("(define-fun b2i ((x Bool)) Int (ite x 1 0))\n");
    let r = Renderer { store: p.store, name };
    for h in &p.hard {
        let _ = writeln!(out, "(assert {})", p.store.render_smt(*h, name));
    }
    if let Some(f) = &p.formula {
        let _ = writeln!(out, "(assert {})", r.formula(f));
    }
    for s in &p.params {
        let _ = writeln!(out, "(assert (and (<= {} {}) (<= {} {})))", int(s.lo), s.name, s.name, int(s.hi));
    }
    let terms: Vec<String> = p.vars.iter().map(|v| format!("(b2i {})", name(*v))).collect();
    let _ = writeln!(out, "(minimize {})", sum(terms));
    out.push_str("(check-sat)\n(get-objectives)\n(get-model)\n");
    out
}

fn int(v: i128) -> String {
    if v < 0 {
        format!("(- {})", -v)
    } else {
        v.to_string()
    }
}

fn sum(mut terms: Vec<String>) -> String {
    match terms.len() {
        0 => "0".into(),
        1 => terms.pop().unwrap(),
        _ => format!("(+ {})", terms.join(" ")),
    }
}

fn scale(r: &Rational, l: i128) -> i128 {
    (r * Rational::from_integer(l)).to_integer()
}

struct Renderer<'a> {
    store: &'a ProvStore,
    name: &'a dyn Fn(TupleId) -> String,
}

/// A rendered side of a comparison: `expr / denom`, meaningful when
/// `guard` holds.
struct Side {
    expr: String,
    denom: Option<String>,
    guard: Option<String>,
}

impl Renderer<'_> {
    fn prov(&self, e: ExprId) -> String {
        self.store.render_smt(e, self.name)
    }

    fn b2i(&self, e: ExprId) -> String {
        format!("(b2i {})", self.prov(e))
    }

    fn formula(&self, f: &AggFormula) -> String {
        match f {
            AggFormula::Const(b) => b.to_string(),
            AggFormula::Prov(e) => self.prov(*e),
            AggFormula::Atom(a) => self.atom(a),
            AggFormula::And(fs) => self.nary("and", fs),
            AggFormula::Or(fs) => self.nary("or", fs),
            AggFormula::Not(f) => format!("(not {})", self.formula(f)),
            AggFormula::Xor(a, b) => format!("(distinct {} {})", self.formula(a), self.formula(b)),
        }
    }

    fn nary(&self, op: &str, fs: &[AggFormula]) -> String {
        let parts: Vec<String> = fs.iter().map(|f| self.formula(f)).collect();
        format!("({op} {})", parts.join(" "))
    }

    fn atom(&self, a: &AggAtom) -> String {
        let mut l = 1i128;
        for t in [&a.lhs, &a.rhs] {
            match t {
                AggTerm::Agg(v) => v.terms.iter().for_each(|(_, r)| l = l.lcm(r.denom())),
                AggTerm::Const(c) => l = l.lcm(c.denom()),
                AggTerm::Param(_) => {}
            }
        }
        let (x, y) = (self.side(&a.lhs, l), self.side(&a.rhs, l));
        let mul = |e: &str, d: &Option<String>| match d {
            Some(d) => format!("(* {e} {d})"),
            None => e.to_string(),
        };
        let (lhs, rhs) = (mul(&x.expr, &y.denom), mul(&y.expr, &x.denom));
        let core = match a.op {
            CmpOp::Ne => format!("(not (= {lhs} {rhs}))"),
            op => format!("({} {lhs} {rhs})", op.smt()),
        };
        let guards: Vec<String> = [x.guard, y.guard].into_iter().flatten().collect();
        if guards.is_empty() {
            core
        } else {
            format!("(and {} {core})", guards.join(" "))
        }
    }

    fn side(&self, t: &AggTerm, l: i128) -> Side {
        let plain = |expr| Side {
            expr,
            denom: None,
            guard: None,
        };
        match t {
            AggTerm::Const(c) => plain(int(scale(c, l))),
            AggTerm::Param(p) if l == 1 => plain(p.clone()),
            AggTerm::Param(p) => plain(format!("(* {l} {p})")),
            AggTerm::Agg(v) => {
                let weighted = |r: &Rational, g: ExprId| {
                    let k = scale(r, l);
                    if k == 1 {
                        self.b2i(g)
                    } else {
                        format!("(* {} {})", self.b2i(g), int(k))
                    }
                };
                let count = || sum(v.terms.iter().map(|(g, _)| self.b2i(*g)).collect());
                match v.func {
                    AggFunc::Count => {
                        let one = Rational::from_integer(1);
                        plain(sum(v.terms.iter().map(|(g, _)| weighted(&one, *g)).collect()))
                    }
                    AggFunc::Sum => plain(sum(v.terms.iter().map(|(g, r)| weighted(r, *g)).collect())),
                    AggFunc::Avg => {
                        let c = count();
                        Side {
                            expr: sum(v.terms.iter().map(|(g, r)| weighted(r, *g)).collect()),
                            guard: Some(format!("(> {c} 0)")),
                            denom: Some(c),
                        }
                    }
                    AggFunc::Min | AggFunc::Max => {
                        let mut order: Vec<&(ExprId, Rational)> = v.terms.iter().collect();
                        order.sort_by(|a, b| if v.func == AggFunc::Min { a.1.cmp(&b.1) } else { b.1.cmp(&a.1) });
                        let mut expr = "0".to_string();
                        for (g, r) in order.iter().rev() {
                            expr = format!("(ite {} {} {expr})", self.prov(*g), int(scale(r, l)));
                        }
                        let defined: Vec<String> = v.terms.iter().map(|(g, _)| self.prov(*g)).collect();
                        Side {
                            expr,
                            denom: None,
                            guard: Some(if defined.len() == 1 {
                                defined[0].clone()
                            } else {
                                format!("(or {})", defined.join(" "))
                            }),
                        }
                    }
                }
            }
        }
    }
}
