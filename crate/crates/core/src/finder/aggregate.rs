//! Strategies for queries with a single group-by aggregation.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;

use super::boolean::{bind_except, free_params, int_of};
use super::{fk_constraints, solve_on, verify, Counterexample, Ctx, FindError, FindOptions, Guarantee, Timings};
use crate::catalog::{Database, IdSet};
use crate::eval::{
    eval_agg_prov, eval_prov_all, eval_query, prov_of_tuple, AggAtom, AggColumn, AggFormula, AggRelation, AggRow,
    AggTerm, EvalError,
};
use crate::provenance::ProvStore;
use crate::ra::{AggSpec, CmpOp, Query, TypedQuery};
use crate::solver::{MinOnesProblem, Model, ParamSpec, SolveError};
use crate::value::{AttributeType, Rational, Value};

/// The condition under which the two results differ on one group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupConstraint {
    /// Values of the output columns that are grouping columns in both
    /// queries.
    pub key: Vec<Value>,
    pub formula: AggFormula,
}

/// Aggregate-free results become relations whose columns are all keys.
fn symbolic(db: &Database, q: &Query, store: &mut ProvStore) -> Result<AggRelation, EvalError> {
    if q.has_aggregate() {
        return eval_agg_prov(db, q, store);
    }
    let rel = eval_prov_all(db, q, store)?;
    Ok(AggRelation {
        sources: (0..rel.columns.len()).map(AggColumn::Group).collect(),
        columns: rel.columns,
        rows: rel
            .rows
            .into_iter()
            .filter(|(_, e)| !store.is_false(*e))
            .map(|(key, exists)| AggRow {
                key,
                exists,
                aggs: Vec::new(),
                having: AggFormula::Const(true),
            })
            .collect(),
    })
}

enum Cell<'a> {
    Val(&'a Value),
    Agg(&'a crate::eval::AggValueExpr),
}

fn cell<'a>(rel: &AggRelation, row: &'a AggRow, j: usize) -> Cell<'a> {
    match rel.sources[j] {
        AggColumn::Group(i) => Cell::Val(&row.key[i]),
        AggColumn::Agg(k) => Cell::Agg(&row.aggs[k]),
    }
}

fn term(c: Cell<'_>) -> Result<AggTerm, FindError> {
    Ok(match c {
        Cell::Agg(a) => AggTerm::Agg(a.clone()),
        Cell::Val(v) => AggTerm::Const(v.as_rational().ok_or_else(|| {
            EvalError::Unsupported(format!("non-numeric value {v} compared with an aggregate"))
        })?),
    })
}

/// Atoms comparing the non-key columns of `r1` and `r2` with `op`.
fn column_atoms(
    (rel1, r1): (&AggRelation, &AggRow),
    (rel2, r2): (&AggRelation, &AggRow),
    keys: &[usize],
    op: CmpOp,
) -> Result<Vec<AggFormula>, FindError> {
    let mut out = Vec::new();
    for j in (0..rel1.sources.len()).filter(|j| !keys.contains(j)) {
        out.push(AggFormula::Atom(AggAtom {
            lhs: term(cell(rel1, r1, j))?,
            op,
            rhs: term(cell(rel2, r2, j))?,
        }));
    }
    Ok(out)
}

/// Per group, when the two results differ on it: the group is present in
/// exactly one result, or in both with some aggregate value different.
pub fn group_constraints(
    db: &Database,
    q1: &Query,
    q2: &Query,
    store: &mut ProvStore,
) -> Result<Vec<GroupConstraint>, FindError> {
    let rel1 = symbolic(db, q1, store)?;
    let rel2 = symbolic(db, q2, store)?;
    let keys: Vec<usize> = (0..rel1.sources.len())
        .filter(|&j| {
            matches!(rel1.sources[j], AggColumn::Group(_)) && matches!(rel2.sources.get(j), Some(AggColumn::Group(_)))
        })
        .collect();
    let key_of = |rel: &AggRelation, row: &AggRow| -> Vec<Value> {
        keys.iter()
            .map(|&j| match cell(rel, row, j) {
                Cell::Val(v) => v.clone(),
                Cell::Agg(_) => unreachable!("key columns are grouping columns"),
            })
            .collect()
    };
    let mut groups: BTreeMap<Vec<Value>, (Vec<&AggRow>, Vec<&AggRow>)> = BTreeMap::new();
    for r in &rel1.rows {
        groups.entry(key_of(&rel1, r)).or_default().0.push(r);
    }
    for r in &rel2.rows {
        groups.entry(key_of(&rel2, r)).or_default().1.push(r);
    }
    let mut out = Vec::new();
    for (key, (left, right)) in groups {
        let formula = match (left.as_slice(), right.as_slice()) {
            ([a], [b]) => {
                let ne = column_atoms((&rel1, a), (&rel2, b), &keys, CmpOp::Ne)?;
                AggFormula::or(vec![
                    AggFormula::xor(a.presence(), b.presence()),
                    AggFormula::and(vec![a.presence(), b.presence(), AggFormula::or(ne)]),
                ])
            }
            _ => {
                // a row of one side that no row of the other side matches
                let mut alts = Vec::new();
                for a in &left {
                    let mut conj = vec![a.presence()];
                    for b in &right {
                        let eq = column_atoms((&rel1, a), (&rel2, b), &keys, CmpOp::Eq)?;
                        conj.push(AggFormula::not(AggFormula::and(
                            std::iter::once(b.presence()).chain(eq).collect(),
                        )));
                    }
                    alts.push(AggFormula::and(conj));
                }
                for b in &right {
                    let mut conj = vec![b.presence()];
                    for a in &left {
                        let eq = column_atoms((&rel1, a), (&rel2, b), &keys, CmpOp::Eq)?;
                        conj.push(AggFormula::not(AggFormula::and(
                            std::iter::once(a.presence()).chain(eq).collect(),
                        )));
                    }
                    alts.push(AggFormula::and(conj));
                }
                AggFormula::or(alts)
            }
        };
        if formula != AggFormula::Const(false) {
            out.push(GroupConstraint { key, formula });
        }
    }
    Ok(out)
}

fn param_value(q1: &TypedQuery, q2: &TypedQuery, name: &str, v: i128) -> Value {
    let ty = q1.param_types.get(name).or_else(|| q2.param_types.get(name));
    match ty {
        Some(AttributeType::Rational) => Value::Rat(Rational::from_integer(v)),
        _ => Value::Int(v),
    }
}

/// Global optimum over all groups; with `parameterize` the HAVING
/// parameters are solved for as well.
pub(crate) fn agg_basic_in(ctx: &mut Ctx<'_>, parameterize: bool) -> Result<Counterexample, FindError> {
    let free = free_params(ctx.q1, ctx.q2, parameterize);
    let b1 = bind_except(ctx.db, ctx.q1, ctx.params, &free)?;
    let b2 = bind_except(ctx.db, ctx.q2, ctx.params, &free)?;
    let mut store = ProvStore::new();
    let t = Instant::now();
    let cons = group_constraints(ctx.db, &b1.ast, &b2.ast, &mut store)?;
    let mut hards = Vec::with_capacity(cons.len());
    for c in &cons {
        let mut roots = Vec::new();
        c.formula.prov_roots(&mut roots);
        hards.push(fk_constraints(ctx.db, &mut store, &roots)?);
    }
    Timings::add(&mut ctx.timings.prov_eval, t);
    if cons.is_empty() {
        return Err(FindError::QueriesAgree);
    }
    let specs: Vec<ParamSpec> =
        free.iter().map(|n| ParamSpec::new(n, ctx.params.get(n).and_then(int_of))).collect();
    let problem = |hard: Vec<_>, c: &GroupConstraint, store| {
        MinOnesProblem::new(store, hard).with_formula(c.formula.clone()).with_params(specs.clone())
    };
    let t = Instant::now();
    let (db, solver, budget, store_ref) = (ctx.db, &ctx.opts.solver, ctx.budget, &store);
    let results: Vec<Result<Option<(usize, Model)>, FindError>> = hards
        .clone()
        .into_par_iter()
        .enumerate()
        .map(|(i, hard)| match solve_on(db, solver, &problem(hard, &cons[i], store_ref), &budget) {
            Ok(m) => Ok(Some((i, m))),
            Err(FindError::Solve(SolveError::Unsat)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();
    Timings::add(&mut ctx.timings.solve, t);
    let mut best: Option<(usize, Model)> = None;
    for r in results {
        if let Some((i, m)) = r? {
            let better = best
                .as_ref()
                .is_none_or(|(j, b)| (m.cost, &m.true_ids, i) < (b.cost, &b.true_ids, *j));
            if better {
                best = Some((i, m));
            }
        }
    }
    let (i, model) = best.ok_or(FindError::QueriesAgree)?;
    let smt = ctx.smt(&problem(hards[i].clone(), &cons[i], &store));
    let mut params = ctx.params.clone();
    for (k, v) in &model.params {
        params.insert(k.clone(), param_value(ctx.q1, ctx.q2, k, *v));
    }
    let name = if parameterize { "agg_param" } else { "agg_basic" };
    let key = cons[i].key.clone();
    ctx.finish(model.id_set(), params, Some(key), name.into(), Guarantee::Global, smt)
}

/// The group-by under a chain of selections, projections and renames.
fn split_agg(q: &Query) -> Option<(&Query, &[String], &[AggSpec])> {
    match q {
        Query::Select { input, .. } | Query::Project { input, .. } | Query::Rename { input, .. } => split_agg(input),
        Query::GroupAgg { group, aggs, input } => Some((input, group, aggs)),
        _ => None,
    }
}

/// The query with aggregation stripped: grouping attributes plus every
/// aggregated attribute of the group-by input.
/// Aggregate functions and their input attributes, in output order.
type AggShape = Vec<(crate::ra::AggFunc, Option<String>)>;

fn strip_aggregation(q: &Query) -> Result<(Query, AggShape), FindError> {
    let (input, group, aggs) = split_agg(q)
        .ok_or_else(|| FindError::NotHeuristicEligible("expected one aggregation at the top".into()))?;
    let mut attrs: Vec<String> = group.to_vec();
    for a in aggs {
        if let Some(attr) = &a.attr {
            if !attrs.contains(attr) {
                attrs.push(attr.clone());
            }
        }
    }
    if input.has_aggregate() {
        return Err(FindError::NotHeuristicEligible("nested aggregation".into()));
    }
    let shape = aggs.iter().map(|a| (a.func, a.attr.clone())).collect();
    Ok((
        Query::Project {
            attrs,
            input: Box::new(input.clone()),
        },
        shape,
    ))
}

/// Parameter value making `agg op p` true when the aggregate is `v`.
fn satisfying_param(op: CmpOp, v: Rational) -> Option<i128> {
    let (fl, ce) = (v.floor().to_integer(), v.ceil().to_integer());
    match op {
        CmpOp::Gt => Some(ce - 1),
        CmpOp::Ge => Some(fl),
        CmpOp::Eq => v.is_integer().then_some(fl),
        CmpOp::Lt | CmpOp::Ne => Some(fl + 1),
        CmpOp::Le => Some(ce),
    }
}

fn collect_suggestions(
    f: &AggFormula,
    positive: bool,
    out: &mut BTreeMap<String, i128>,
) {
    match f {
        AggFormula::Atom(a) => {
            let (agg, op, p) = match (&a.lhs, &a.rhs) {
                (AggTerm::Agg(x), AggTerm::Param(p)) => (x, a.op, p),
                (AggTerm::Param(p), AggTerm::Agg(x)) => (x, a.op.flip(), p),
                _ => return,
            };
            let op = if positive { op } else { op.negate() };
            if let Some(v) = agg.value(&|_| true) {
                if let Some(s) = satisfying_param(op, v) {
                    out.entry(p.clone()).or_insert(s);
                }
            }
        }
        AggFormula::And(fs) | AggFormula::Or(fs) => fs.iter().for_each(|g| collect_suggestions(g, positive, out)),
        AggFormula::Not(g) => collect_suggestions(g, !positive, out),
        AggFormula::Xor(a, b) => {
            collect_suggestions(a, positive, out);
            collect_suggestions(b, positive, out);
        }
        AggFormula::Const(_) | AggFormula::Prov(_) => {}
    }
}

/// Parameter values read off the groups of the candidate subinstance: each
/// HAVING comparison is made true for the first group that mentions it.
fn heuristic_params(
    ctx: &Ctx<'_>,
    b1: &TypedQuery,
    b2: &TypedQuery,
    ids: &IdSet,
) -> Result<BTreeMap<String, Value>, FindError> {
    let sub = ctx.db.restrict(ids)?;
    let mut store = ProvStore::new();
    let mut sugg = BTreeMap::new();
    for b in [b1, b2] {
        let rel = eval_agg_prov(&sub, &b.ast, &mut store)?;
        for row in &rel.rows {
            if store.evaluate_roots(&[row.exists], |_| true)[0] {
                collect_suggestions(&row.having, true, &mut sugg);
            }
        }
    }
    let mut params = ctx.params.clone();
    for name in b1.params.iter().chain(&b2.params) {
        let v = sugg
            .get(name)
            .copied()
            .or_else(|| ctx.params.get(name).and_then(int_of))
            .unwrap_or(0);
        params.insert(name.clone(), param_value(ctx.q1, ctx.q2, name, v));
    }
    Ok(params)
}

/// Smallest witness of one row of the aggregation-free queries, re-solved
/// with blocking clauses until the aggregated results differ.
pub(crate) fn agg_heuristic_in(ctx: &mut Ctx<'_>) -> Result<Counterexample, FindError> {
    let free = free_params(ctx.q1, ctx.q2, ctx.opts.parameterize);
    let b1 = bind_except(ctx.db, ctx.q1, ctx.params, &free)?;
    let b2 = bind_except(ctx.db, ctx.q2, ctx.params, &free)?;
    let (s1, shape1) = strip_aggregation(&b1.ast)?;
    let (s2, shape2) = strip_aggregation(&b2.ast)?;
    if shape1 != shape2 {
        return Err(FindError::NotHeuristicEligible("aggregate lists differ".into()));
    }
    if !s1.params().is_empty() || !s2.params().is_empty() {
        return Err(FindError::NotHeuristicEligible("parameters below the aggregation".into()));
    }
    let t = Instant::now();
    let r1 = eval_query(ctx.db, &s1)?;
    let r2 = eval_query(ctx.db, &s2)?;
    Timings::add(&mut ctx.timings.raw_eval, t);
    if r1.columns.len() != r2.columns.len() {
        return Err(FindError::NotHeuristicEligible("grouping attributes differ".into()));
    }
    let pick = r1
        .rows
        .iter()
        .find(|r| !r2.contains(r))
        .map(|r| (true, r.clone()))
        .or_else(|| r2.rows.iter().find(|r| !r1.contains(r)).map(|r| (false, r.clone())));
    let Some((left, row)) = pick else {
        return Err(FindError::NotHeuristicEligible(
            "the queries agree once aggregation is removed".into(),
        ));
    };
    let (a, b) = if left { (&s1, &s2) } else { (&s2, &s1) };
    let mut store = ProvStore::new();
    let t = Instant::now();
    let e = prov_of_tuple(ctx.db, a, b, &row, &mut store)?;
    let mut hard = vec![e];
    hard.extend(fk_constraints(ctx.db, &mut store, &[e])?);
    Timings::add(&mut ctx.timings.prov_eval, t);
    for _ in 0..ctx.opts.heuristic_retries {
        let model = {
            let p = MinOnesProblem::new(&store, hard.clone());
            match ctx.solve(&p) {
                Ok(m) => m,
                Err(FindError::Solve(SolveError::Unsat)) => break,
                Err(e) => return Err(e),
            }
        };
        let ids = model.id_set();
        let params = if free.is_empty() {
            ctx.params.clone()
        } else {
            heuristic_params(ctx, &b1, &b2, &ids)?
        };
        if verify(ctx.db, ctx.q1, ctx.q2, &ids, &params)? {
            let smt = ctx.smt(&MinOnesProblem::new(&store, hard.clone()));
            return ctx.finish(ids, params, Some(row), "agg_heuristic".into(), Guarantee::None, smt);
        }
        let vars = MinOnesProblem::new(&store, hard.clone()).vars;
        let lits: Vec<_> = vars
            .iter()
            .map(|&v| {
                let x = store.var(v);
                if ids.contains(&v) {
                    x
                } else {
                    store.not(x)
                }
            })
            .collect();
        let same = store.and(lits);
        hard.push(store.not(same));
    }
    Err(FindError::RetriesExhausted(ctx.opts.heuristic_retries))
}

pub fn agg_basic(
    db: &Database,
    q1: &TypedQuery,
    q2: &TypedQuery,
    params: &BTreeMap<String, Value>,
    opts: &FindOptions,
    parameterize: bool,
) -> Result<Counterexample, FindError> {
    let mut ctx = Ctx::new(db, q1, q2, params, opts);
    agg_basic_in(&mut ctx, parameterize)
}

pub fn agg_heuristic(
    db: &Database,
    q1: &TypedQuery,
    q2: &TypedQuery,
    params: &BTreeMap<String, Value>,
    opts: &FindOptions,
) -> Result<Counterexample, FindError> {
    let mut ctx = Ctx::new(db, q1, q2, params, opts);
    agg_heuristic_in(&mut ctx)
}
