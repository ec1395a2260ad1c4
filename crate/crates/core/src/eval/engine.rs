//! One evaluator, two annotation semantics.
//!
//! [`Semantics`] decides what a row carries: nothing for plain evaluation,
//! a provenance expression for annotated evaluation. Difference is the only
//! operator where the two differ in more than the annotation: plain
//! evaluation drops a row found on the right, annotated evaluation keeps it
//! with `left ∧ ¬right` so that subinstances on which the right-hand row
//! vanishes are still described.

use std::cmp::Ordering;
use std::collections::HashMap;

use indexmap::IndexMap;

use super::EvalError;
use crate::catalog::{Database, TupleId};
use crate::provenance::{ExprId, ProvStore};
use crate::ra::{AggFunc, AggSpec, CmpOp, JoinKind, Operand, OutAttr, Predicate, Query};
use crate::value::{AttributeType, Rational, Value};

pub(crate) trait Semantics {
    type A: Clone;
    fn base(&mut self, id: TupleId) -> Self::A;
    fn and(&mut self, a: &Self::A, b: &Self::A) -> Self::A;
    fn or(&mut self, items: Vec<Self::A>) -> Self::A;
    /// Annotation of a left row that also occurs on the right; `None` drops it.
    fn minus(&mut self, a: &Self::A, b: &Self::A) -> Option<Self::A>;
    fn aggregate(
        &mut self,
        _input: Table<Self::A>,
        _group: &[String],
        _aggs: &[AggSpec],
    ) -> Result<Table<Self::A>, EvalError> {
        Err(EvalError::Unsupported(
            "aggregation under Boolean provenance; use aggregate provenance".into(),
        ))
    }
}

pub(crate) struct Plain;

impl Semantics for Plain {
    type A = ();
    fn base(&mut self, _: TupleId) {}
    fn and(&mut self, _: &(), _: &()) {}
    fn or(&mut self, _: Vec<()>) {}
    fn minus(&mut self, _: &(), _: &()) -> Option<()> {
        None
    }
    fn aggregate(&mut self, input: Table<()>, group: &[String], aggs: &[AggSpec]) -> Result<Table<()>, EvalError> {
        group_aggregate(input, group, aggs)
    }
}

pub(crate) struct Prov<'s> {
    pub store: &'s mut ProvStore,
}

impl Semantics for Prov<'_> {
    type A = ExprId;
    fn base(&mut self, id: TupleId) -> ExprId {
        self.store.var(id)
    }
    fn and(&mut self, a: &ExprId, b: &ExprId) -> ExprId {
        self.store.and2(*a, *b)
    }
    fn or(&mut self, items: Vec<ExprId>) -> ExprId {
        if items.len() == 1 {
            return items[0];
        }
        self.store.or(items)
    }
    fn minus(&mut self, a: &ExprId, b: &ExprId) -> Option<ExprId> {
        let nb = self.store.not(*b);
        let e = self.store.and2(*a, nb);
        (!self.store.is_false(e)).then_some(e)
    }
}

/// An intermediate result: distinct value rows, each with an annotation.
#[derive(Debug, Clone)]
pub(crate) struct Table<A> {
    pub cols: Vec<OutAttr>,
    pub rows: Vec<(Vec<Value>, A)>,
}

impl<A> Table<A> {
    pub fn position(&self, name: &str) -> Result<usize, EvalError> {
        self.cols
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| EvalError::Unsupported(format!("unknown attribute `{name}` during evaluation")))
    }
}

fn dedup<S: Semantics>(sem: &mut S, cols: Vec<OutAttr>, rows: impl IntoIterator<Item = (Vec<Value>, S::A)>) -> Table<S::A> {
    let mut grouped: IndexMap<Vec<Value>, Vec<S::A>> = IndexMap::new();
    for (v, a) in rows {
        grouped.entry(v).or_default().push(a);
    }
    let rows = grouped
        .into_iter()
        .map(|(v, anns)| {
            let a = if anns.len() == 1 {
                anns.into_iter().next().unwrap()
            } else {
                sem.or(anns)
            };
            (v, a)
        })
        .collect();
    Table { cols, rows }
}

pub(crate) fn eval<S: Semantics>(q: &Query, db: &Database, sem: &mut S) -> Result<Table<S::A>, EvalError> {
    match q {
        Query::Relation(name) => {
            let ri = db
                .relation_index(name)
                .ok_or_else(|| EvalError::Unsupported(format!("unknown relation `{name}`")))?;
            let cols = db.schemas()[ri]
                .attributes
                .iter()
                .map(|a| OutAttr {
                    name: a.name.clone(),
                    ty: a.ty,
                    aggregate: false,
                })
                .collect();
            let rows: Vec<_> = db.rows(ri).iter().map(|r| (r.values.clone(), sem.base(r.id))).collect();
            Ok(dedup(sem, cols, rows))
        }
        Query::Select { pred, input } => {
            let t = eval(input, db, sem)?;
            let p = CPred::compile(pred, &t.cols, None)?;
            Ok(Table {
                rows: t.rows.into_iter().filter(|(v, _)| p.holds(v, &[])).collect(),
                cols: t.cols,
            })
        }
        Query::Project { attrs, input } => {
            let t = eval(input, db, sem)?;
            let pos: Vec<usize> = attrs.iter().map(|a| t.position(a)).collect::<Result<_, _>>()?;
            let cols = pos.iter().map(|&p| t.cols[p].clone()).collect();
            let rows: Vec<_> = t
                .rows
                .into_iter()
                .map(|(v, a)| (pos.iter().map(|&p| v[p].clone()).collect(), a))
                .collect();
            Ok(dedup(sem, cols, rows))
        }
        Query::Rename { map, input } => {
            let mut t = eval(input, db, sem)?;
            for c in &mut t.cols {
                if let Some((_, new)) = map.iter().find(|(old, _)| *old == c.name) {
                    c.name = new.clone();
                }
            }
            Ok(t)
        }
        Query::Join { kind, left, right } => {
            let l = eval(left, db, sem)?;
            let r = eval(right, db, sem)?;
            join(sem, l, r, kind)
        }
        Query::Union(left, right) => {
            let l = eval(left, db, sem)?;
            let r = eval(right, db, sem)?;
            let cols = l.cols;
            Ok(dedup(sem, cols, l.rows.into_iter().chain(r.rows)))
        }
        Query::Difference(left, right) => {
            let l = eval(left, db, sem)?;
            let r = eval(right, db, sem)?;
            let right_rows: HashMap<&Vec<Value>, &S::A> = r.rows.iter().map(|(v, a)| (v, a)).collect();
            let mut rows = Vec::with_capacity(l.rows.len());
            for (v, a) in l.rows.iter() {
                match right_rows.get(v) {
                    None => rows.push((v.clone(), a.clone())),
                    Some(b) => {
                        if let Some(a) = sem.minus(a, b) {
                            rows.push((v.clone(), a));
                        }
                    }
                }
            }
            Ok(Table { cols: l.cols, rows })
        }
        Query::GroupAgg { group, aggs, input } => {
            let t = eval(input, db, sem)?;
            sem.aggregate(t, group, aggs)
        }
    }
}

fn join<S: Semantics>(sem: &mut S, l: Table<S::A>, r: Table<S::A>, kind: &JoinKind) -> Result<Table<S::A>, EvalError> {
    // equality pairs (left position, right position) usable as a hash key
    let mut keys: Vec<(usize, usize)> = Vec::new();
    let mut keep_right: Vec<usize> = Vec::new();
    let mut cols = l.cols.clone();
    let residual = match kind {
        JoinKind::Natural => {
            for (j, c) in r.cols.iter().enumerate() {
                match l.cols.iter().position(|lc| lc.name == c.name) {
                    Some(i) => keys.push((i, j)),
                    None => {
                        keep_right.push(j);
                        cols.push(c.clone());
                    }
                }
            }
            None
        }
        JoinKind::Theta(pred) => {
            keep_right = (0..r.cols.len()).collect();
            cols.extend(r.cols.iter().cloned());
            let conjuncts: Vec<&Predicate> = match pred {
                Predicate::And(ps) => ps.iter().collect(),
                p => vec![p],
            };
            for c in conjuncts {
                if let Predicate::Cmp(Operand::Attr(a), CmpOp::Eq, Operand::Attr(b)) = c {
                    let li = |n: &str| l.cols.iter().position(|x| x.name == n);
                    let ri = |n: &str| r.cols.iter().position(|x| x.name == n);
                    let pair = match (li(a), ri(b), li(b), ri(a)) {
                        (Some(i), Some(j), _, _) | (_, _, Some(i), Some(j)) => Some((i, j)),
                        _ => None,
                    };
                    if let Some((i, j)) = pair {
                        if l.cols[i].ty == r.cols[j].ty {
                            keys.push((i, j));
                        }
                    }
                }
            }
            // the whole predicate is re-checked; the hash key only narrows
            Some(CPred::compile(pred, &l.cols, Some(&r.cols))?)
        }
    };
    let mut index: HashMap<Vec<&Value>, Vec<usize>> = HashMap::new();
    for (j, (v, _)) in r.rows.iter().enumerate() {
        index.entry(keys.iter().map(|&(_, rj)| &v[rj]).collect()).or_default().push(j);
    }
    let mut rows = Vec::new();
    for (lv, la) in &l.rows {
        let key: Vec<&Value> = keys.iter().map(|&(li, _)| &lv[li]).collect();
        let Some(matches) = index.get(&key) else {
            continue;
        };
        for &j in matches {
            let (rv, ra) = &r.rows[j];
            if let Some(p) = &residual {
                if !p.holds(lv, rv) {
                    continue;
                }
            }
            let mut v = lv.clone();
            v.extend(keep_right.iter().map(|&k| rv[k].clone()));
            rows.push((v, sem.and(la, ra)));
        }
    }
    // distinct inputs give distinct outputs
    Ok(Table { cols, rows })
}

/// Concrete value of one aggregate over the listed member values.
pub(crate) fn aggregate_values(func: AggFunc, ty: AttributeType, values: &[&Value]) -> Option<Value> {
    let n = values.len();
    match func {
        AggFunc::Count => Some(Value::Int(n as i128)),
        AggFunc::Min => values.iter().min_by(|a, b| a.compare(b).unwrap_or(Ordering::Equal)).map(|v| (*v).clone()),
        AggFunc::Max => values.iter().max_by(|a, b| a.compare(b).unwrap_or(Ordering::Equal)).map(|v| (*v).clone()),
        AggFunc::Sum | AggFunc::Avg => {
            let sum: Rational = values.iter().filter_map(|v| v.as_rational()).sum();
            if func == AggFunc::Avg {
                if n == 0 {
                    return None;
                }
                return Some(Value::Rat(sum / Rational::from_integer(n as i128)));
            }
            Some(match ty {
                AttributeType::Integer => Value::Int(sum.to_integer()),
                _ => Value::Rat(sum),
            })
        }
    }
}

pub(crate) fn agg_output_type(func: AggFunc, input: Option<AttributeType>) -> AttributeType {
    match (func, input) {
        (AggFunc::Count, _) | (_, None) => AttributeType::Integer,
        (AggFunc::Avg, _) => AttributeType::Rational,
        (_, Some(t)) => t,
    }
}

fn group_aggregate(input: Table<()>, group: &[String], aggs: &[AggSpec]) -> Result<Table<()>, EvalError> {
    let gpos: Vec<usize> = group.iter().map(|g| input.position(g)).collect::<Result<_, _>>()?;
    let apos: Vec<Option<usize>> = aggs
        .iter()
        .map(|a| a.attr.as_ref().map(|n| input.position(n)).transpose())
        .collect::<Result<_, _>>()?;
    let mut groups: IndexMap<Vec<Value>, Vec<&Vec<Value>>> = IndexMap::new();
    for (v, _) in &input.rows {
        groups.entry(gpos.iter().map(|&p| v[p].clone()).collect()).or_default().push(v);
    }
    let mut cols: Vec<OutAttr> = gpos.iter().map(|&p| input.cols[p].clone()).collect();
    for (spec, pos) in aggs.iter().zip(&apos) {
        cols.push(OutAttr {
            name: spec.output.clone(),
            ty: agg_output_type(spec.func, pos.map(|p| input.cols[p].ty)),
            aggregate: true,
        });
    }
    let mut rows = Vec::with_capacity(groups.len());
    for (key, members) in groups {
        let mut v = key;
        for (spec, pos) in aggs.iter().zip(&apos) {
            let ty = pos.map(|p| input.cols[p].ty).unwrap_or(AttributeType::Integer);
            let vals: Vec<&Value> = match pos {
                Some(p) => members.iter().map(|m| &m[*p]).collect(),
                None => members.iter().map(|m| &m[0]).collect(),
            };
            v.push(aggregate_values(spec.func, ty, &vals).expect("groups are non-empty"));
        }
        rows.push((v, ()));
    }
    Ok(Table { cols, rows })
}

/// A predicate with attribute references resolved to positions. Positions
/// at or beyond the left width refer to the right row of a join.
#[derive(Debug, Clone)]
pub(crate) enum CPred {
    Const(bool),
    Cmp(COperand, CmpOp, COperand),
    And(Vec<CPred>),
    Or(Vec<CPred>),
    Not(Box<CPred>),
}

#[derive(Debug, Clone)]
pub(crate) enum COperand {
    Left(usize),
    Right(usize),
    Val(Value),
}

impl CPred {
    pub fn compile(p: &Predicate, left: &[OutAttr], right: Option<&[OutAttr]>) -> Result<CPred, EvalError> {
        let operand = |o: &Operand| -> Result<COperand, EvalError> {
            Ok(match o {
                Operand::Const(v) => COperand::Val(v.clone()),
                Operand::Param(name) => return Err(EvalError::UnboundParam(name.clone())),
                Operand::Attr(a) => {
                    if let Some(i) = left.iter().position(|c| c.name == *a) {
                        COperand::Left(i)
                    } else if let Some(j) = right.and_then(|r| r.iter().position(|c| c.name == *a)) {
                        COperand::Right(j)
                    } else {
                        return Err(EvalError::Unsupported(format!("unknown attribute `{a}` in predicate")));
                    }
                }
            })
        };
        Ok(match p {
            Predicate::Const(b) => CPred::Const(*b),
            Predicate::Cmp(l, op, r) => CPred::Cmp(operand(l)?, *op, operand(r)?),
            Predicate::And(ps) => CPred::And(ps.iter().map(|p| CPred::compile(p, left, right)).collect::<Result<_, _>>()?),
            Predicate::Or(ps) => CPred::Or(ps.iter().map(|p| CPred::compile(p, left, right)).collect::<Result<_, _>>()?),
            Predicate::Not(p) => CPred::Not(Box::new(CPred::compile(p, left, right)?)),
        })
    }

    pub fn holds(&self, l: &[Value], r: &[Value]) -> bool {
        match self {
            CPred::Const(b) => *b,
            CPred::Cmp(a, op, b) => {
                let (x, y) = (a.get(l, r), b.get(l, r));
                x.compare(y).is_some_and(|ord| op.holds(ord))
            }
            CPred::And(ps) => ps.iter().all(|p| p.holds(l, r)),
            CPred::Or(ps) => ps.iter().any(|p| p.holds(l, r)),
            CPred::Not(p) => !p.holds(l, r),
        }
    }
}

impl COperand {
    fn get<'a>(&'a self, l: &'a [Value], r: &'a [Value]) -> &'a Value {
        match self {
            COperand::Left(i) => &l[*i],
            COperand::Right(j) => &r[*j],
            COperand::Val(v) => v,
        }
    }
}
