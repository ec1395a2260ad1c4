//! Strategies for difference-capable queries without aggregation.

use std::collections::BTreeMap;
use std::time::Instant;

use itertools::Itertools;
use rayon::prelude::*;

use super::{
    bind_all, fk_constraints, fastpath_eligible, solve_on, Counterexample, Ctx, FindError, FindOptions, Guarantee,
    Timings,
};
use crate::catalog::{Database, IdSet, TupleId};
use crate::eval::{eval_prov_all, eval_query, prov_of_tuple, Relation};
use crate::provenance::{to_dnf, ExprId, ProvError, ProvStore};
use crate::ra::{bind_some, classify, Query, TypedQuery};
use crate::solver::{enumerate_models, MinOnesProblem, Model};
use crate::value::{Rational, Value};

/// A row that is in exactly one result on some subinstance, with the
/// provenance of that event (`P1 xor P2`).
struct Candidate {
    row: Vec<Value>,
    prov: ExprId,
}

fn candidates(ctx: &mut Ctx<'_>, store: &mut ProvStore) -> Result<Vec<Candidate>, FindError> {
    let (b1, b2) = ctx.bound()?;
    let t = Instant::now();
    let r1 = eval_prov_all(ctx.db, &b1, store)?;
    let r2 = eval_prov_all(ctx.db, &b2, store)?;
    let f = store.constant(false);
    let rows: Vec<&Vec<Value>> = r1
        .rows
        .iter()
        .map(|(r, _)| r)
        .merge(r2.rows.iter().map(|(r, _)| r))
        .dedup()
        .collect();
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let p1 = r1.get(row).unwrap_or(f);
        let p2 = r2.get(row).unwrap_or(f);
        let prov = store.xor(p1, p2);
        if !store.is_false(prov) {
            out.push(Candidate { row: row.clone(), prov });
        }
    }
    Timings::add(&mut ctx.timings.prov_eval, t);
    Ok(out)
}

fn by_cost(a: &(usize, Model), b: &(usize, Model)) -> std::cmp::Ordering {
    (a.1.cost, &a.1.true_ids, a.0).cmp(&(b.1.cost, &b.1.true_ids, b.0))
}

/// Exact optimum over every candidate row, one min-ones problem per row.
pub(crate) fn basic_in(ctx: &mut Ctx<'_>) -> Result<Counterexample, FindError> {
    if ctx.opts.legacy_enumerate {
        return legacy_basic(ctx);
    }
    let mut store = ProvStore::new();
    let cands = candidates(ctx, &mut store)?;
    if cands.is_empty() {
        return Err(FindError::QueriesAgree);
    }
    let mut hards = Vec::with_capacity(cands.len());
    for c in &cands {
        let mut hard = vec![c.prov];
        hard.extend(fk_constraints(ctx.db, &mut store, &[c.prov])?);
        hards.push(hard);
    }
    let t = Instant::now();
    let (db, solver, budget) = (ctx.db, &ctx.opts.solver, ctx.budget);
    let store_ref = &store;
    let results: Vec<Result<Option<(usize, Model)>, FindError>> = hards
        .into_par_iter()
        .enumerate()
        .map(|(i, hard)| {
            let p = MinOnesProblem::new(store_ref, hard);
            match solve_on(db, solver, &p, &budget) {
                Ok(m) => Ok(Some((i, m))),
                Err(FindError::Solve(crate::solver::SolveError::Unsat)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    Timings::add(&mut ctx.timings.solve, t);
    let mut best: Option<(usize, Model)> = None;
    for r in results {
        if let Some(cand) = r? {
            if best.as_ref().is_none_or(|b| by_cost(&cand, b).is_lt()) {
                best = Some(cand);
            }
        }
    }
    let (i, model) = best.ok_or(FindError::QueriesAgree)?;
    let smt = if ctx.opts.emit_smt {
        let mut hard = vec![cands[i].prov];
        hard.extend(fk_constraints(ctx.db, &mut store, &[cands[i].prov])?);
        ctx.smt(&MinOnesProblem::new(&store, hard))
    } else {
        None
    };
    let params = ctx.params.clone();
    ctx.finish(model.id_set(), params, Some(cands[i].row.clone()), "basic".into(), Guarantee::Global, smt)
}

/// Rows tagged `true` when they come from Q1 \ Q2.
type TaggedRows = Vec<(bool, Vec<Value>)>;

/// Rows of `Q1(D) \ Q2(D)` then `Q2(D) \ Q1(D)`, each with the query
/// order that puts it in the difference.
fn difference_rows(ctx: &mut Ctx<'_>) -> Result<(Query, Query, TaggedRows), FindError> {
    let (b1, b2) = ctx.bound()?;
    let t = Instant::now();
    let r1 = eval_query(ctx.db, &b1)?;
    let r2 = eval_query(ctx.db, &b2)?;
    Timings::add(&mut ctx.timings.raw_eval, t);
    let only = |a: &Relation, b: &Relation| a.rows.iter().filter(|r| !b.contains(r)).cloned().collect::<Vec<_>>();
    let mut rows: TaggedRows = only(&r1, &r2).into_iter().map(|r| (true, r)).collect();
    rows.extend(only(&r2, &r1).into_iter().map(|r| (false, r)));
    if rows.is_empty() {
        return Err(FindError::QueriesAgree);
    }
    Ok((b1, b2, rows))
}

/// Enumerates up to `max_trials` models per tuple of the symmetric
/// difference and keeps the smallest one seen.
fn legacy_basic(ctx: &mut Ctx<'_>) -> Result<Counterexample, FindError> {
    let (b1, b2, rows) = difference_rows(ctx)?;
    let mut store = ProvStore::new();
    let mut best: Option<(Model, Vec<Value>)> = None;
    for (left, row) in rows {
        ctx.check_time()?;
        let t = Instant::now();
        let (a, b) = if left { (&b1, &b2) } else { (&b2, &b1) };
        let e = prov_of_tuple(ctx.db, a, b, &row, &mut store)?;
        let mut hard = vec![e];
        hard.extend(fk_constraints(ctx.db, &mut store, &[e])?);
        Timings::add(&mut ctx.timings.prov_eval, t);
        let t = Instant::now();
        let p = MinOnesProblem::new(&store, hard);
        let models = enumerate_models(&p, ctx.opts.max_trials, &ctx.budget)?;
        Timings::add(&mut ctx.timings.solve, t);
        for m in models {
            if best.as_ref().is_none_or(|(b, _)| (m.cost, &m.true_ids) < (b.cost, &b.true_ids)) {
                best = Some((m, row.clone()));
            }
        }
    }
    let (model, row) = best.ok_or(FindError::NoModelFound(ctx.opts.max_trials))?;
    let params = ctx.params.clone();
    ctx.finish(model.id_set(), params, Some(row), "basic(enumerate)".into(), Guarantee::None, None)
}

/// Smallest witness for the first row of the symmetric difference.
pub(crate) fn opt_sigma_in(ctx: &mut Ctx<'_>) -> Result<Counterexample, FindError> {
    let (b1, b2, rows) = difference_rows(ctx)?;
    let (left, row) = rows.into_iter().next().expect("non-empty");
    let (a, b) = if left { (&b1, &b2) } else { (&b2, &b1) };
    let mut store = ProvStore::new();
    let t = Instant::now();
    let e = prov_of_tuple(ctx.db, a, b, &row, &mut store)?;
    let mut hard = vec![e];
    hard.extend(fk_constraints(ctx.db, &mut store, &[e])?);
    Timings::add(&mut ctx.timings.prov_eval, t);
    let p = MinOnesProblem::new(&store, hard);
    let model = ctx.solve(&p)?;
    let smt = ctx.smt(&p);
    let params = ctx.params.clone();
    ctx.finish(model.id_set(), params, Some(row), "opt_sigma".into(), Guarantee::PerTuple, smt)
}

/// Minimal witnesses read off the DNF of every candidate row. Falls back
/// to `opt_sigma` when the expansion exceeds the configured cap.
pub(crate) fn fastpath_in(ctx: &mut Ctx<'_>) -> Result<Counterexample, FindError> {
    let (c1, c2) = (classify(&ctx.q1.ast), classify(&ctx.q2.ast));
    if !fastpath_eligible(c1) || !fastpath_eligible(c2) {
        return Err(FindError::NotEligible(c1.max(c2).to_string()));
    }
    let label = format!("fastpath({})", c1.max(c2));
    let mut store = ProvStore::new();
    let cands = candidates(ctx, &mut store)?;
    if cands.is_empty() {
        return Err(FindError::QueriesAgree);
    }
    let graph = ctx.db.fk_graph();
    let t = Instant::now();
    let mut budget_left = ctx.opts.dnf_cap;
    let mut best: Option<(IdSet, usize)> = None;
    for (i, c) in cands.iter().enumerate() {
        ctx.check_time()?;
        let dnf = match to_dnf(&store, c.prov, budget_left) {
            Ok(d) => d,
            Err(ProvError::DnfOverflow(_)) => {
                Timings::add(&mut ctx.timings.solve, t);
                return opt_sigma_in(ctx);
            }
            Err(e) => return Err(FindError::Catalog(e.to_string())),
        };
        budget_left = budget_left.saturating_sub(dnf.minterms.len());
        for m in &dnf.minterms {
            let closed = graph.closure(&m.positive_set());
            if m.neg.iter().any(|n| closed.contains(n)) {
                continue;
            }
            let better = best.as_ref().is_none_or(|(b, _)| {
                (closed.len(), closed.to_vec()) < (b.len(), b.to_vec())
            });
            if better {
                best = Some((closed, i));
            }
        }
    }
    Timings::add(&mut ctx.timings.solve, t);
    let (ids, i) = best.ok_or(FindError::QueriesAgree)?;
    let params = ctx.params.clone();
    ctx.finish(ids, params, Some(cands[i].row.clone()), label, Guarantee::Global, None)
}

/// Every FK-closed subinstance in order of size, then id order.
pub(crate) fn brute_force_in(ctx: &mut Ctx<'_>) -> Result<Counterexample, FindError> {
    let n = ctx.db.len();
    if n > ctx.opts.brute_cap {
        return Err(FindError::CapExceeded {
            size: n,
            cap: ctx.opts.brute_cap,
        });
    }
    let grid = param_grid(ctx)?;
    let bound: Vec<(BTreeMap<String, Value>, Query, Query)> = grid
        .into_iter()
        .map(|ps| {
            let a = bind_all(ctx.db, ctx.q1, &ps)?;
            let b = bind_all(ctx.db, ctx.q2, &ps)?;
            Ok((ps, a, b))
        })
        .collect::<Result<_, FindError>>()?;
    let graph = ctx.db.fk_graph();
    let all: Vec<TupleId> = ctx.db.ids().collect();
    let t = Instant::now();
    for k in 0..=n {
        for combo in all.iter().copied().combinations(k) {
            ctx.check_time()?;
            let ids: IdSet = combo.into_iter().collect();
            if !graph.is_closed(&ids) {
                continue;
            }
            let sub = ctx.db.restrict(&ids)?;
            for (ps, a, b) in &bound {
                if eval_query(&sub, a)?.rows != eval_query(&sub, b)?.rows {
                    Timings::add(&mut ctx.timings.solve, t);
                    let ps = ps.clone();
                    return ctx.finish(ids, ps, None, "brute_force".into(), Guarantee::Global, None);
                }
            }
        }
    }
    Err(FindError::QueriesAgree)
}

/// Parameter settings tried by brute force. Without `parameterize` this is
/// just the given values; otherwise every HAVING parameter ranges over
/// small counts and the numeric cells of the database, nearest first.
fn param_grid(ctx: &Ctx<'_>) -> Result<Vec<BTreeMap<String, Value>>, FindError> {
    let free = free_params(ctx.q1, ctx.q2, ctx.opts.parameterize);
    if free.is_empty() {
        return Ok(vec![ctx.params.clone()]);
    }
    let mut pool: Vec<i128> = (0..=ctx.db.len() as i128 + 1).collect();
    for rel in 0..ctx.db.schemas().len() {
        for row in ctx.db.rows(rel) {
            for v in row.values.iter().filter_map(Value::as_rational) {
                pool.extend([v.floor().to_integer() - 1, v.floor().to_integer(), v.ceil().to_integer(), v.ceil().to_integer() + 1]);
            }
        }
    }
    pool.sort_unstable();
    pool.dedup();
    let axes: Vec<Vec<(String, Value)>> = free
        .iter()
        .map(|name| {
            let pref = ctx.params.get(name).and_then(Value::as_rational).map(|r| r.round().to_integer());
            let mut vals = pool.clone();
            if let Some(p) = pref {
                vals.push(p);
                vals.sort_unstable();
                vals.dedup();
                vals.sort_by_key(|v| ((v - p).abs(), *v));
            }
            vals.into_iter().map(|v| (name.clone(), Value::Int(v))).collect()
        })
        .collect();
    let mut out = Vec::new();
    for combo in axes.into_iter().multi_cartesian_product() {
        let mut ps = ctx.params.clone();
        ps.extend(combo);
        out.push(ps);
    }
    Ok(out)
}

/// HAVING parameters that may change value, in name order.
pub(crate) fn free_params(q1: &TypedQuery, q2: &TypedQuery, parameterize: bool) -> Vec<String> {
    if !parameterize {
        return Vec::new();
    }
    let mut out: Vec<String> = q1.having_params.iter().chain(&q2.having_params).cloned().collect();
    out.sort();
    out.dedup();
    out
}

/// `q` with every parameter outside `free` bound to its given value.
pub(crate) fn bind_except(
    db: &Database,
    q: &TypedQuery,
    params: &BTreeMap<String, Value>,
    free: &[String],
) -> Result<TypedQuery, FindError> {
    let given: BTreeMap<String, Value> =
        params.iter().filter(|(k, _)| !free.contains(k)).map(|(k, v)| (k.clone(), v.clone())).collect();
    let b = bind_some(q, &given, db.schemas())?;
    if let Some(p) = b.params.iter().find(|p| !free.contains(p)) {
        return Err(crate::ra::QueryError::MissingParam(p.clone()).into());
    }
    Ok(b)
}

pub(crate) fn int_of(v: &Value) -> Option<i128> {
    v.as_rational().map(|r: Rational| r.floor().to_integer())
}

pub fn basic(
    db: &Database,
    q1: &TypedQuery,
    q2: &TypedQuery,
    params: &BTreeMap<String, Value>,
    opts: &FindOptions,
) -> Result<Counterexample, FindError> {
    let mut ctx = Ctx::new(db, q1, q2, params, opts);
    basic_in(&mut ctx)
}

pub fn opt_sigma(
    db: &Database,
    q1: &TypedQuery,
    q2: &TypedQuery,
    params: &BTreeMap<String, Value>,
    opts: &FindOptions,
) -> Result<Counterexample, FindError> {
    let mut ctx = Ctx::new(db, q1, q2, params, opts);
    opt_sigma_in(&mut ctx)
}

pub fn fastpath(
    db: &Database,
    q1: &TypedQuery,
    q2: &TypedQuery,
    params: &BTreeMap<String, Value>,
    opts: &FindOptions,
) -> Result<Counterexample, FindError> {
    let mut ctx = Ctx::new(db, q1, q2, params, opts);
    fastpath_in(&mut ctx)
}

pub fn brute_force(
    db: &Database,
    q1: &TypedQuery,
    q2: &TypedQuery,
    params: &BTreeMap<String, Value>,
    opts: &FindOptions,
) -> Result<Counterexample, FindError> {
    let mut ctx = Ctx::new(db, q1, q2, params, opts);
    brute_force_in(&mut ctx)
}
