//! Symbolic provenance for queries with one aggregation.
//!
//! The supported shape is a chain of selections, projections and renames on
//! top of a single group-by whose input is any aggregate-free query. Each
//! output group carries the Boolean provenance of its existence and, per
//! aggregate, the guarded contributions of its members. Selections that
//! mention aggregate values (HAVING) become [`AggFormula`]s.

use std::collections::{BTreeMap, HashMap};

use indexmap::IndexMap;
use num_traits::Zero;

use super::{engine, eval_prov_all, EvalError};
use crate::catalog::{Database, IdSet, TupleId};
use crate::provenance::{ExprId, ProvStore};
use crate::ra::{AggFunc, CmpOp, Operand, OutAttr, Predicate, Query};
use crate::value::{AttributeType, Rational, Value};

/// One aggregate of one group: member `i` contributes `value_i` whenever
/// `guard_i` holds.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AggValueExpr {
    pub func: AggFunc,
    /// Output type of the aggregate column.
    pub ty: AttributeType,
    pub terms: Vec<(ExprId, Rational)>,
}

impl AggValueExpr {
    /// `None` when no member is present and the function is undefined on
    /// the empty set (AVG, MIN, MAX).
    pub fn value(&self, truth: &dyn Fn(ExprId) -> bool) -> Option<Rational> {
        let present = self.terms.iter().filter(|(g, _)| truth(*g)).map(|(_, v)| *v);
        match self.func {
            AggFunc::Count => Some(Rational::from_integer(present.count() as i128)),
            AggFunc::Sum => Some(present.sum()),
            AggFunc::Avg => {
                let (mut s, mut n) = (Rational::zero(), 0i128);
                for v in present {
                    s += v;
                    n += 1;
                }
                (n > 0).then(|| s / Rational::from_integer(n))
            }
            AggFunc::Min => present.min(),
            AggFunc::Max => present.max(),
        }
    }

    pub fn to_value(&self, r: Rational) -> Value {
        match self.ty {
            AttributeType::Integer if r.is_integer() => Value::Int(r.to_integer()),
            _ => Value::Rat(r),
        }
    }

    pub fn render(&self, store: &ProvStore, name: &dyn Fn(TupleId) -> String) -> String {
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(g, v)| format!("{}:[{}]", crate::value::format_rational(v), store.render_infix(*g, name)))
            .collect();
        format!("{}({})", self.func.name(), parts.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AggTerm {
    Agg(AggValueExpr),
    Const(Rational),
    Param(String),
}

impl AggTerm {
    fn value(
        &self,
        truth: &dyn Fn(ExprId) -> bool,
        params: &BTreeMap<String, Rational>,
    ) -> Result<Option<Rational>, EvalError> {
        Ok(match self {
            AggTerm::Agg(a) => a.value(truth),
            AggTerm::Const(c) => Some(*c),
            AggTerm::Param(p) => Some(*params.get(p).ok_or_else(|| EvalError::UnboundParam(p.clone()))?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AggAtom {
    pub lhs: AggTerm,
    pub op: CmpOp,
    pub rhs: AggTerm,
}

/// A Boolean combination of provenance expressions and comparisons between
/// aggregate values. A comparison with an undefined side is false.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AggFormula {
    Const(bool),
    Prov(ExprId),
    Atom(AggAtom),
    And(Vec<AggFormula>),
    Or(Vec<AggFormula>),
    Not(Box<AggFormula>),
    Xor(Box<AggFormula>, Box<AggFormula>),
}

impl AggFormula {
    pub fn xor(a: AggFormula, b: AggFormula) -> AggFormula {
        match (a, b) {
            (AggFormula::Const(x), AggFormula::Const(y)) => AggFormula::Const(x != y),
            (AggFormula::Const(false), f) | (f, AggFormula::Const(false)) => f,
            (AggFormula::Const(true), f) | (f, AggFormula::Const(true)) => AggFormula::not(f),
            (a, b) => AggFormula::Xor(Box::new(a), Box::new(b)),
        }
    }

    pub fn and(items: Vec<AggFormula>) -> AggFormula {
        let mut out = Vec::new();
        for f in items {
            match f {
                AggFormula::Const(true) => {}
                AggFormula::Const(false) => return AggFormula::Const(false),
                AggFormula::And(inner) => out.extend(inner),
                f => out.push(f),
            }
        }
        match out.len() {
            0 => AggFormula::Const(true),
            1 => out.pop().unwrap(),
            _ => AggFormula::And(out),
        }
    }

    pub fn or(items: Vec<AggFormula>) -> AggFormula {
        let mut out = Vec::new();
        for f in items {
            match f {
                AggFormula::Const(false) => {}
                AggFormula::Const(true) => return AggFormula::Const(true),
                AggFormula::Or(inner) => out.extend(inner),
                f => out.push(f),
            }
        }
        match out.len() {
            0 => AggFormula::Const(false),
            1 => out.pop().unwrap(),
            _ => AggFormula::Or(out),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: AggFormula) -> AggFormula {
        match f {
            AggFormula::Const(b) => AggFormula::Const(!b),
            AggFormula::Not(inner) => *inner,
            f => AggFormula::Not(Box::new(f)),
        }
    }

    /// Every provenance expression mentioned, guards included.
    pub fn prov_roots(&self, out: &mut Vec<ExprId>) {
        let term = |t: &AggTerm, out: &mut Vec<ExprId>| {
            if let AggTerm::Agg(a) = t {
                out.extend(a.terms.iter().map(|(g, _)| *g));
            }
        };
        match self {
            AggFormula::Const(_) => {}
            AggFormula::Prov(e) => out.push(*e),
            AggFormula::Atom(a) => {
                term(&a.lhs, out);
                term(&a.rhs, out);
            }
            AggFormula::And(fs) | AggFormula::Or(fs) => fs.iter().for_each(|f| f.prov_roots(out)),
            AggFormula::Not(f) => f.prov_roots(out),
            AggFormula::Xor(a, b) => {
                a.prov_roots(out);
                b.prov_roots(out);
            }
        }
    }

    pub fn params(&self, out: &mut Vec<String>) {
        match self {
            AggFormula::Atom(a) => {
                for t in [&a.lhs, &a.rhs] {
                    if let AggTerm::Param(p) = t {
                        if !out.contains(p) {
                            out.push(p.clone());
                        }
                    }
                }
            }
            AggFormula::And(fs) | AggFormula::Or(fs) => fs.iter().for_each(|f| f.params(out)),
            AggFormula::Not(f) => f.params(out),
            AggFormula::Xor(a, b) => {
                a.params(out);
                b.params(out);
            }
            _ => {}
        }
    }

    pub fn eval_with(
        &self,
        truth: &dyn Fn(ExprId) -> bool,
        params: &BTreeMap<String, Rational>,
    ) -> Result<bool, EvalError> {
        Ok(match self {
            AggFormula::Const(b) => *b,
            AggFormula::Prov(e) => truth(*e),
            AggFormula::Atom(a) => match (a.lhs.value(truth, params)?, a.rhs.value(truth, params)?) {
                (Some(x), Some(y)) => a.op.holds(x.cmp(&y)),
                _ => false,
            },
            AggFormula::And(fs) => {
                for f in fs {
                    if !f.eval_with(truth, params)? {
                        return Ok(false);
                    }
                }
                true
            }
            AggFormula::Or(fs) => {
                for f in fs {
                    if f.eval_with(truth, params)? {
                        return Ok(true);
                    }
                }
                false
            }
            AggFormula::Not(f) => !f.eval_with(truth, params)?,
            AggFormula::Xor(a, b) => a.eval_with(truth, params)? != b.eval_with(truth, params)?,
        })
    }

    /// Truth on the subinstance made of `present`.
    pub fn holds_on(
        &self,
        store: &ProvStore,
        present: &IdSet,
        params: &BTreeMap<String, Rational>,
    ) -> Result<bool, EvalError> {
        let truth = truth_table(store, std::slice::from_ref(self), present);
        self.eval_with(&|e| truth[&e], params)
    }
}

/// Values of every provenance expression in `fs` on `present`.
pub fn truth_table(store: &ProvStore, fs: &[AggFormula], present: &IdSet) -> HashMap<ExprId, bool> {
    let mut roots = Vec::new();
    for f in fs {
        f.prov_roots(&mut roots);
    }
    roots.sort();
    roots.dedup();
    let vals = store.evaluate_roots(&roots, |id| present.contains(&id));
    roots.into_iter().zip(vals).collect()
}

/// Where an output column of an aggregate query comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggColumn {
    Group(usize),
    Agg(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggRow {
    /// Grouping values, in group-by order.
    pub key: Vec<Value>,
    pub exists: ExprId,
    pub aggs: Vec<AggValueExpr>,
    /// Conditions from selections above the group-by.
    pub having: AggFormula,
}

impl AggRow {
    /// When the row is in the output.
    pub fn presence(&self) -> AggFormula {
        AggFormula::and(vec![AggFormula::Prov(self.exists), self.having.clone()])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggRelation {
    pub columns: Vec<OutAttr>,
    pub sources: Vec<AggColumn>,
    /// Sorted by key.
    pub rows: Vec<AggRow>,
}

impl AggRelation {
    /// The output on a subinstance, evaluated from the symbolic form.
    pub fn concrete(
        &self,
        store: &ProvStore,
        present: &IdSet,
        params: &BTreeMap<String, Rational>,
    ) -> Result<Vec<Vec<Value>>, EvalError> {
        let presences: Vec<AggFormula> = self.rows.iter().map(AggRow::presence).collect();
        let mut roots = Vec::new();
        for (row, p) in self.rows.iter().zip(&presences) {
            p.prov_roots(&mut roots);
            roots.extend(row.aggs.iter().flat_map(|a| a.terms.iter().map(|(g, _)| *g)));
        }
        roots.sort();
        roots.dedup();
        let vals = store.evaluate_roots(&roots, |id| present.contains(&id));
        let truth: HashMap<ExprId, bool> = roots.into_iter().zip(vals).collect();
        let truth = |e: ExprId| truth[&e];
        let mut out = Vec::new();
        for (row, p) in self.rows.iter().zip(&presences) {
            if !p.eval_with(&truth, params)? {
                continue;
            }
            let mut vals = Vec::with_capacity(self.sources.len());
            for src in &self.sources {
                vals.push(match *src {
                    AggColumn::Group(i) => row.key[i].clone(),
                    AggColumn::Agg(j) => {
                        let a = &row.aggs[j];
                        a.to_value(a.value(&truth).expect("present groups have members"))
                    }
                });
            }
            out.push(vals);
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

enum Side {
    Val(Value),
    Term(AggTerm),
}

fn translate(
    p: &Predicate,
    cols: &[(OutAttr, AggColumn)],
    row: &AggRow,
) -> Result<AggFormula, EvalError> {
    Ok(match p {
        Predicate::Const(b) => AggFormula::Const(*b),
        Predicate::And(ps) => AggFormula::and(ps.iter().map(|p| translate(p, cols, row)).collect::<Result<_, _>>()?),
        Predicate::Or(ps) => AggFormula::or(ps.iter().map(|p| translate(p, cols, row)).collect::<Result<_, _>>()?),
        Predicate::Not(p) => AggFormula::not(translate(p, cols, row)?),
        Predicate::Cmp(l, op, r) => {
            let side = |o: &Operand| -> Result<Side, EvalError> {
                Ok(match o {
                    Operand::Const(v) => Side::Val(v.clone()),
                    Operand::Param(p) => Side::Term(AggTerm::Param(p.clone())),
                    Operand::Attr(a) => match cols.iter().find(|(c, _)| c.name == *a) {
                        Some((_, AggColumn::Group(i))) => Side::Val(row.key[*i].clone()),
                        Some((_, AggColumn::Agg(j))) => Side::Term(AggTerm::Agg(row.aggs[*j].clone())),
                        None => return Err(EvalError::Unsupported(format!("unknown attribute `{a}`"))),
                    },
                })
            };
            let as_term = |s: Side| -> Result<AggTerm, EvalError> {
                match s {
                    Side::Term(t) => Ok(t),
                    Side::Val(v) => v.as_rational().map(AggTerm::Const).ok_or_else(|| {
                        EvalError::Unsupported(format!("non-numeric value {v} compared with an aggregate"))
                    }),
                }
            };
            match (side(l)?, side(r)?) {
                (Side::Val(a), Side::Val(b)) => AggFormula::Const(a.compare(&b).is_some_and(|o| op.holds(o))),
                (a, b) => AggFormula::Atom(AggAtom {
                    lhs: as_term(a)?,
                    op: *op,
                    rhs: as_term(b)?,
                }),
            }
        }
    })
}

/// Symbolic evaluation of an aggregate query. Parameters left in HAVING
/// conditions stay symbolic.
pub fn eval_agg_prov(db: &Database, q: &Query, store: &mut ProvStore) -> Result<AggRelation, EvalError> {
    let mut chain = Vec::new();
    let mut cur = q;
    let (group, aggs, input) = loop {
        match cur {
            Query::Select { input, .. } | Query::Project { input, .. } | Query::Rename { input, .. } => {
                chain.push(cur);
                cur = input;
            }
            Query::GroupAgg { group, aggs, input } => break (group, aggs, input),
            _ if q.has_aggregate() => {
                return Err(EvalError::AggRestrictionViolated(
                    "only selection, projection and renaming may appear above the aggregation".into(),
                ))
            }
            _ => return Err(EvalError::Unsupported("query has no aggregation".into())),
        }
    };
    if input.has_aggregate() {
        return Err(EvalError::AggRestrictionViolated("nested aggregation".into()));
    }
    let child = eval_prov_all(db, input, store)?;
    let pos = |n: &str| {
        child
            .columns
            .iter()
            .position(|c| c.name == n)
            .ok_or_else(|| EvalError::Unsupported(format!("unknown attribute `{n}`")))
    };
    let gpos: Vec<usize> = group.iter().map(|g| pos(g)).collect::<Result<_, _>>()?;
    let mut specs = Vec::with_capacity(aggs.len());
    for a in aggs {
        let p = a.attr.as_deref().map(pos).transpose()?;
        let in_ty = p.map(|p| child.columns[p].ty);
        if a.func != AggFunc::Count && !in_ty.is_some_and(AttributeType::is_numeric) {
            return Err(EvalError::Unsupported(format!(
                "{}({}) over a non-numeric attribute",
                a.func.name(),
                a.attr.as_deref().unwrap_or("*")
            )));
        }
        specs.push((a, p, engine::agg_output_type(a.func, in_ty)));
    }

    let mut groups: IndexMap<Vec<Value>, Vec<usize>> = IndexMap::new();
    for (i, (v, _)) in child.rows.iter().enumerate() {
        groups.entry(gpos.iter().map(|&p| v[p].clone()).collect()).or_default().push(i);
    }
    let mut rows: Vec<AggRow> = Vec::with_capacity(groups.len());
    for (key, members) in groups {
        let exists = store.or(members.iter().map(|&i| child.rows[i].1));
        let aggs = specs
            .iter()
            .map(|(spec, p, ty)| AggValueExpr {
                func: spec.func,
                ty: *ty,
                terms: members
                    .iter()
                    .map(|&i| {
                        let (v, g) = &child.rows[i];
                        let val = match (spec.func, p) {
                            (AggFunc::Count, _) | (_, None) => Rational::from_integer(1),
                            (_, Some(p)) => v[*p].as_rational().expect("numeric attribute"),
                        };
                        (*g, val)
                    })
                    .collect(),
            })
            .collect();
        rows.push(AggRow {
            key,
            exists,
            aggs,
            having: AggFormula::Const(true),
        });
    }

    let mut cols: Vec<(OutAttr, AggColumn)> = gpos
        .iter()
        .enumerate()
        .map(|(i, &p)| (child.columns[p].clone(), AggColumn::Group(i)))
        .chain(specs.iter().enumerate().map(|(j, (spec, _, ty))| {
            (
                OutAttr {
                    name: spec.output.clone(),
                    ty: *ty,
                    aggregate: true,
                },
                AggColumn::Agg(j),
            )
        }))
        .collect();

    for node in chain.into_iter().rev() {
        match node {
            Query::Rename { map, .. } => {
                for (c, _) in &mut cols {
                    if let Some((_, new)) = map.iter().find(|(old, _)| *old == c.name) {
                        c.name = new.clone();
                    }
                }
            }
            Query::Project { attrs, .. } => {
                let mut next = Vec::with_capacity(attrs.len());
                for a in attrs {
                    let c = cols
                        .iter()
                        .find(|(c, _)| c.name == *a)
                        .ok_or_else(|| EvalError::Unsupported(format!("unknown attribute `{a}`")))?;
                    next.push(c.clone());
                }
                for (i, g) in group.iter().enumerate() {
                    if !next.iter().any(|(_, s)| *s == AggColumn::Group(i)) {
                        return Err(EvalError::AggRestrictionViolated(format!(
                            "projection above the aggregation drops grouping attribute `{g}`"
                        )));
                    }
                }
                cols = next;
            }
            Query::Select { pred, .. } => {
                let mut kept = Vec::with_capacity(rows.len());
                for mut row in rows {
                    let f = translate(pred, &cols, &row)?;
                    row.having = AggFormula::and(vec![row.having, f]);
                    if row.having != AggFormula::Const(false) {
                        kept.push(row);
                    }
                }
                rows = kept;
            }
            _ => unreachable!(),
        }
    }
    rows.sort_by(|a, b| a.key.cmp(&b.key));
    let (columns, sources) = cols.into_iter().unzip();
    Ok(AggRelation { columns, sources, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::eval_query;
    use crate::ra::{bind_params, parse, TypedQuery};
    use crate::testing::*;

    fn num_cs() -> BTreeMap<String, Rational> {
        BTreeMap::from([("num_CS".to_string(), Rational::from_integer(3))])
    }

    #[test]
    fn running_groups() {
        let db = running_example();
        let mut store = ProvStore::new();
        let rel = eval_agg_prov(&db, &parse(AVG_CS).unwrap(), &mut store).unwrap();
        let keys: Vec<String> = rel.rows.iter().map(|r| r.key[0].to_string()).collect();
        assert_eq!(keys, ["Jesse", "John", "Mary"]);
        let mary = &rel.rows[2];
        assert_eq!(
            mary.aggs[0].render(&store, &|id| db.alias(id)),
            "AVG(100:[t1 t4], 75:[t1 t5])"
        );
        assert_eq!(rel.sources, vec![AggColumn::Group(0), AggColumn::Agg(0)]);
    }

    #[test]
    fn symbolic_matches_plain_on_full_instance() {
        let db = running_example();
        let all = db.all_ids();
        for text in [AVG_CS, AVG_ALL, AVG_CS_HAVING, AVG_ALL_HAVING] {
            let q = parse(text).unwrap();
            let mut store = ProvStore::new();
            let rel = eval_agg_prov(&db, &q, &mut store).unwrap();
            let typed = TypedQuery::new(q.clone(), &db).unwrap();
            let values: BTreeMap<String, Value> = typed
                .params
                .iter()
                .map(|p| (p.clone(), Value::Int(3)))
                .collect();
            let bound = bind_params(&typed, &values, db.schemas()).unwrap();
            let plain = eval_query(&db, &bound.ast).unwrap();
            assert_eq!(rel.concrete(&store, &all, &num_cs()).unwrap(), plain.rows, "{text}");
        }
    }

    #[test]
    fn having_becomes_a_formula() {
        let db = running_example();
        let mut store = ProvStore::new();
        let rel = eval_agg_prov(&db, &parse(AVG_CS_HAVING).unwrap(), &mut store).unwrap();
        let mut params = Vec::new();
        rel.rows[0].having.params(&mut params);
        assert_eq!(params, ["num_CS"]);
        let rows = rel.concrete(&store, &db.all_ids(), &num_cs()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0][0], Value::text("Jesse"));
        let err = rel.concrete(&store, &db.all_ids(), &BTreeMap::new()).unwrap_err();
        assert_eq!(err, EvalError::UnboundParam("num_CS".into()));
    }

    #[test]
    fn shape_restrictions() {
        let db = running_example();
        let mut store = ProvStore::new();
        let bad = parse("project[avg_grade](groupby[name; AVG(grade) as avg_grade](Registration))").unwrap();
        assert!(matches!(
            eval_agg_prov(&db, &bad, &mut store),
            Err(EvalError::AggRestrictionViolated(_))
        ));
        let bad = parse("(groupby[name; COUNT(*) as n](Registration)) join (Student)").unwrap();
        assert!(matches!(
            eval_agg_prov(&db, &bad, &mut store),
            Err(EvalError::AggRestrictionViolated(_))
        ));
        let bad = parse("groupby[name; MIN(course) as c](Registration)").unwrap();
        assert!(matches!(eval_agg_prov(&db, &bad, &mut store), Err(EvalError::Unsupported(_))));
    }
}
