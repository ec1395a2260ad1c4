//! A problem flattened into an array of gates for three-valued evaluation.

use std::collections::HashMap;

use num_traits::Zero;

use super::MinOnesProblem;
use crate::eval::{AggFormula, AggTerm};
use crate::provenance::{ExprId, Node};
use crate::ra::{AggFunc, CmpOp};
use crate::value::Rational;

#[derive(Debug, Clone)]
enum Gate {
    Const(bool),
    Var(usize),
    Not(usize),
    And(Vec<usize>),
    Or(Vec<usize>),
}

#[derive(Debug, Clone)]
pub(crate) enum CTerm {
    Agg { func: AggFunc, terms: Vec<(usize, Rational)> },
    Const(Rational),
    Param(usize),
}

#[derive(Debug, Clone)]
pub(crate) enum CFormula {
    Const(bool),
    Gate(usize),
    Atom(CTerm, CmpOp, CTerm),
    And(Vec<CFormula>),
    Or(Vec<CFormula>),
    Not(Box<CFormula>),
    Xor(Box<CFormula>, Box<CFormula>),
}

pub(crate) struct Circuit {
    gates: Vec<Gate>,
    hard: Vec<usize>,
    pub formula: Option<CFormula>,
    pub nvars: usize,
    pub nparams: usize,
}

/// Value of a numeric term under a partial assignment.
#[derive(Debug, Clone, Copy)]
enum Num {
    /// Fully known; `None` when undefined (empty AVG/MIN/MAX).
    Exact(Option<Rational>),
    /// Defined and within the bounds.
    Range(Rational, Rational),
    Unknown,
}

impl Circuit {
    pub fn compile(p: &MinOnesProblem<'_>) -> Circuit {
        let var_index: HashMap<_, usize> = p.vars.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        let mut roots = p.hard.clone();
        if let Some(f) = &p.formula {
            f.prov_roots(&mut roots);
        }
        let mut map: HashMap<ExprId, usize> = HashMap::new();
        let mut gates = Vec::new();
        for e in p.store.topo_order(&roots) {
            let g = match p.store.node(e) {
                Node::False => Gate::Const(false),
                Node::True => Gate::Const(true),
                Node::Var(id) => Gate::Var(var_index[id]),
                Node::Not(c) => Gate::Not(map[c]),
                Node::And(cs) => Gate::And(cs.iter().map(|c| map[c]).collect()),
                Node::Or(cs) => Gate::Or(cs.iter().map(|c| map[c]).collect()),
            };
            map.insert(e, gates.len());
            gates.push(g);
        }
        let param_index: HashMap<&str, usize> =
            p.params.iter().enumerate().map(|(i, s)| (s.name.as_str(), i)).collect();
        let formula = p.formula.as_ref().map(|f| compile_formula(f, &map, &param_index));
        Circuit {
            gates,
            hard: p.hard.iter().map(|e| map[e]).collect(),
            formula,
            nvars: p.vars.len(),
            nparams: p.params.len(),
        }
    }

    /// Gate values under a partial assignment of variables.
    pub fn gate_values(&self, assign: &[Option<bool>], out: &mut Vec<Option<bool>>) {
        out.clear();
        for g in &self.gates {
            let v = match g {
                Gate::Const(b) => Some(*b),
                Gate::Var(i) => assign[*i],
                Gate::Not(c) => out[*c].map(|b| !b),
                Gate::And(cs) => {
                    let mut acc = Some(true);
                    for c in cs {
                        match out[*c] {
                            Some(false) => {
                                acc = Some(false);
                                break;
                            }
                            None => acc = None,
                            Some(true) => {}
                        }
                    }
                    acc
                }
                Gate::Or(cs) => {
                    let mut acc = Some(false);
                    for c in cs {
                        match out[*c] {
                            Some(true) => {
                                acc = Some(true);
                                break;
                            }
                            None => acc = None,
                            Some(false) => {}
                        }
                    }
                    acc
                }
            };
            out.push(v);
        }
    }

    /// Truth of all constraints; `params` is `None` while parameters are open.
    pub fn status(&self, gates: &[Option<bool>], params: Option<&[Rational]>) -> Option<bool> {
        let mut acc = Some(true);
        for &h in &self.hard {
            match gates[h] {
                Some(false) => return Some(false),
                None => acc = None,
                Some(true) => {}
            }
        }
        if let Some(f) = &self.formula {
            match eval(f, gates, params) {
                Some(false) => return Some(false),
                None => acc = None,
                Some(true) => {}
            }
        }
        acc
    }

    /// Candidate values for each parameter at a complete assignment: the
    /// integers around every value a parameter is compared with.
    pub fn param_candidates(&self, gates: &[Option<bool>]) -> Vec<Vec<i128>> {
        let mut out = vec![Vec::new(); self.nparams];
        if let Some(f) = &self.formula {
            collect_candidates(f, gates, &mut out);
        }
        out
    }
}

fn compile_formula(f: &AggFormula, map: &HashMap<ExprId, usize>, params: &HashMap<&str, usize>) -> CFormula {
    let term = |t: &AggTerm| match t {
        AggTerm::Agg(a) => CTerm::Agg {
            func: a.func,
            terms: a.terms.iter().map(|(g, v)| (map[g], *v)).collect(),
        },
        AggTerm::Const(c) => CTerm::Const(*c),
        AggTerm::Param(p) => CTerm::Param(params[p.as_str()]),
    };
    let rec = |f: &AggFormula| compile_formula(f, map, params);
    match f {
        AggFormula::Const(b) => CFormula::Const(*b),
        AggFormula::Prov(e) => CFormula::Gate(map[e]),
        AggFormula::Atom(a) => CFormula::Atom(term(&a.lhs), a.op, term(&a.rhs)),
        AggFormula::And(fs) => CFormula::And(fs.iter().map(rec).collect()),
        AggFormula::Or(fs) => CFormula::Or(fs.iter().map(rec).collect()),
        AggFormula::Not(f) => CFormula::Not(Box::new(rec(f))),
        AggFormula::Xor(a, b) => CFormula::Xor(Box::new(rec(a)), Box::new(rec(b))),
    }
}

fn eval(f: &CFormula, gates: &[Option<bool>], params: Option<&[Rational]>) -> Option<bool> {
    match f {
        CFormula::Const(b) => Some(*b),
        CFormula::Gate(g) => gates[*g],
        CFormula::Atom(l, op, r) => atom(num(l, gates, params), *op, num(r, gates, params)),
        CFormula::And(fs) => {
            let mut acc = Some(true);
            for f in fs {
                match eval(f, gates, params) {
                    Some(false) => return Some(false),
                    None => acc = None,
                    Some(true) => {}
                }
            }
            acc
        }
        CFormula::Or(fs) => {
            let mut acc = Some(false);
            for f in fs {
                match eval(f, gates, params) {
                    Some(true) => return Some(true),
                    None => acc = None,
                    Some(false) => {}
                }
            }
            acc
        }
        CFormula::Not(f) => eval(f, gates, params).map(|b| !b),
        CFormula::Xor(a, b) => Some(eval(a, gates, params)? != eval(b, gates, params)?),
    }
}

fn num(t: &CTerm, gates: &[Option<bool>], params: Option<&[Rational]>) -> Num {
    match t {
        CTerm::Const(c) => Num::Exact(Some(*c)),
        CTerm::Param(i) => match params {
            Some(ps) => Num::Exact(Some(ps[*i])),
            None => Num::Unknown,
        },
        CTerm::Agg { func, terms } => {
            let open = terms.iter().any(|(g, _)| gates[*g].is_none());
            if !open {
                let present = terms.iter().filter(|(g, _)| gates[*g] == Some(true)).map(|(_, v)| *v);
                return Num::Exact(match func {
                    AggFunc::Count => Some(Rational::from_integer(present.count() as i128)),
                    AggFunc::Sum => Some(present.sum()),
                    AggFunc::Avg => {
                        let vals: Vec<Rational> = present.collect();
                        (!vals.is_empty())
                            .then(|| vals.iter().sum::<Rational>() / Rational::from_integer(vals.len() as i128))
                    }
                    AggFunc::Min => present.min(),
                    AggFunc::Max => present.max(),
                });
            }
            match func {
                AggFunc::Sum | AggFunc::Count => {
                    let (mut lo, mut hi) = (Rational::zero(), Rational::zero());
                    for (g, v) in terms {
                        let v = if *func == AggFunc::Count { Rational::from_integer(1) } else { *v };
                        match gates[*g] {
                            Some(true) => {
                                lo += v;
                                hi += v;
                            }
                            None if v < Rational::zero() => lo += v,
                            None => hi += v,
                            Some(false) => {}
                        }
                    }
                    Num::Range(lo, hi)
                }
                _ => Num::Unknown,
            }
        }
    }
}

fn atom(l: Num, op: CmpOp, r: Num) -> Option<bool> {
    let range = |n: Num| match n {
        Num::Exact(Some(v)) => Some((v, v)),
        Num::Range(a, b) => Some((a, b)),
        _ => None,
    };
    if matches!(l, Num::Exact(None)) || matches!(r, Num::Exact(None)) {
        return Some(false);
    }
    let ((a1, a2), (b1, b2)) = (range(l)?, range(r)?);
    if a1 == a2 && b1 == b2 {
        return Some(op.holds(a1.cmp(&b1)));
    }
    let disjoint = a2 < b1 || b2 < a1;
    match op {
        CmpOp::Eq => disjoint.then_some(false),
        CmpOp::Ne => disjoint.then_some(true),
        CmpOp::Lt => decide(a2 < b1, a1 >= b2),
        CmpOp::Le => decide(a2 <= b1, a1 > b2),
        CmpOp::Gt => decide(a1 > b2, a2 <= b1),
        CmpOp::Ge => decide(a1 >= b2, a2 < b1),
    }
}

fn decide(surely: bool, never: bool) -> Option<bool> {
    if surely {
        Some(true)
    } else if never {
        Some(false)
    } else {
        None
    }
}

fn collect_candidates(f: &CFormula, gates: &[Option<bool>], out: &mut [Vec<i128>]) {
    match f {
        CFormula::Atom(l, _, r) => {
            for (p, other) in [(l, r), (r, l)] {
                if let CTerm::Param(i) = p {
                    if let Num::Exact(Some(v)) = num(other, gates, None) {
                        let (fl, ce) = (v.floor().to_integer(), v.ceil().to_integer());
                        out[*i].extend([fl - 1, fl, ce, ce + 1]);
                    }
                }
            }
        }
        CFormula::And(fs) | CFormula::Or(fs) => fs.iter().for_each(|f| collect_candidates(f, gates, out)),
        CFormula::Not(f) => collect_candidates(f, gates, out),
        CFormula::Xor(a, b) => {
            collect_candidates(a, gates, out);
            collect_candidates(b, gates, out);
        }
        _ => {}
    }
}

