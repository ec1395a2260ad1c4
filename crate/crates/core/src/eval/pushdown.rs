//! Selection pushdown for single-tuple provenance.
//!
//! Computing `Prv(t)` over the whole instance annotates every output row.
//! Pushing `attr = value` for each column of `t` towards the leaves keeps
//! the intermediate results small. Difference commutes with selection, and
//! a group-by only lets equalities on grouping attributes through.

use super::{eval_prov_all, EvalError};
use crate::catalog::Database;
use crate::provenance::{ExprId, ProvStore};
use crate::ra::{CmpOp, JoinKind, Operand, Predicate, Query};
use crate::value::Value;

fn output_names(q: &Query, db: &Database) -> Result<Vec<String>, EvalError> {
    Ok(match q {
        Query::Relation(name) => db
            .schema(name)
            .ok_or_else(|| EvalError::Unsupported(format!("unknown relation `{name}`")))?
            .attributes
            .iter()
            .map(|a| a.name.clone())
            .collect(),
        Query::Select { input, .. } => output_names(input, db)?,
        Query::Project { attrs, .. } => attrs.clone(),
        Query::Rename { map, input } => output_names(input, db)?
            .into_iter()
            .map(|n| match map.iter().find(|(old, _)| *old == n) {
                Some((_, new)) => new.clone(),
                None => n,
            })
            .collect(),
        Query::Join { kind, left, right } => {
            let mut l = output_names(left, db)?;
            let r = output_names(right, db)?;
            match kind {
                JoinKind::Natural => {
                    let extra: Vec<String> = r.into_iter().filter(|n| !l.contains(n)).collect();
                    l.extend(extra);
                }
                JoinKind::Theta(_) => l.extend(r),
            }
            l
        }
        Query::Union(l, _) | Query::Difference(l, _) => output_names(l, db)?,
        Query::GroupAgg { group, aggs, .. } => group
            .iter()
            .cloned()
            .chain(aggs.iter().map(|a| a.output.clone()))
            .collect(),
    })
}

fn select_eqs(q: Query, names: &[String], eqs: &[(usize, Value)]) -> Query {
    if eqs.is_empty() {
        return q;
    }
    let conj = eqs
        .iter()
        .map(|(p, v)| Predicate::Cmp(Operand::Attr(names[*p].clone()), CmpOp::Eq, Operand::Const(v.clone())))
        .collect();
    Query::Select {
        pred: Predicate::and(conj),
        input: Box::new(q),
    }
}

/// Rewrites `q` into an equivalent of `σ[col_p = v for (p, v) in eqs](q)`
/// with the equalities placed as low as possible.
pub fn push_selection(q: &Query, db: &Database, eqs: &[(usize, Value)]) -> Result<Query, EvalError> {
    if eqs.is_empty() {
        return Ok(q.clone());
    }
    let bx = Box::new;
    Ok(match q {
        Query::Relation(_) => select_eqs(q.clone(), &output_names(q, db)?, eqs),
        Query::Select { pred, input } => Query::Select {
            pred: pred.clone(),
            input: bx(push_selection(input, db, eqs)?),
        },
        Query::Rename { map, input } => Query::Rename {
            map: map.clone(),
            input: bx(push_selection(input, db, eqs)?),
        },
        Query::Project { attrs, input } => {
            let inner = output_names(input, db)?;
            let mapped: Vec<(usize, Value)> = eqs
                .iter()
                .map(|(p, v)| (inner.iter().position(|n| *n == attrs[*p]).unwrap_or(usize::MAX), v.clone()))
                .collect();
            if mapped.iter().any(|(p, _)| *p == usize::MAX) {
                return Err(EvalError::Unsupported(format!("projection on unknown attribute in {q}")));
            }
            Query::Project {
                attrs: attrs.clone(),
                input: bx(push_selection(input, db, &mapped)?),
            }
        }
        Query::Join { kind, left, right } => {
            let ln = output_names(left, db)?;
            let rn = output_names(right, db)?;
            let (mut le, mut re) = (Vec::new(), Vec::new());
            let out = output_names(q, db)?;
            for (p, v) in eqs {
                let name = &out[*p];
                match kind {
                    JoinKind::Natural => {
                        if let Some(i) = ln.iter().position(|n| n == name) {
                            le.push((i, v.clone()));
                        }
                        if let Some(i) = rn.iter().position(|n| n == name) {
                            re.push((i, v.clone()));
                        }
                    }
                    JoinKind::Theta(_) if *p < ln.len() => le.push((*p, v.clone())),
                    JoinKind::Theta(_) => re.push((*p - ln.len(), v.clone())),
                }
            }
            Query::Join {
                kind: kind.clone(),
                left: bx(push_selection(left, db, &le)?),
                right: bx(push_selection(right, db, &re)?),
            }
        }
        Query::Union(l, r) => Query::Union(bx(push_selection(l, db, eqs)?), bx(push_selection(r, db, eqs)?)),
        Query::Difference(l, r) => {
            Query::Difference(bx(push_selection(l, db, eqs)?), bx(push_selection(r, db, eqs)?))
        }
        Query::GroupAgg { group, aggs, input } => {
            let inner = output_names(input, db)?;
            let mut below = Vec::new();
            let mut above = Vec::new();
            for (p, v) in eqs {
                match group.get(*p).and_then(|g| inner.iter().position(|n| n == g)) {
                    Some(i) => below.push((i, v.clone())),
                    None => above.push((*p, v.clone())),
                }
            }
            let pushed = Query::GroupAgg {
                group: group.clone(),
                aggs: aggs.clone(),
                input: bx(push_selection(input, db, &below)?),
            };
            select_eqs(pushed, &output_names(q, db)?, &above)
        }
    })
}

/// Provenance of row `t` in `q` over all subinstances; `False` if `t` can
/// never be produced.
pub fn tuple_prov(db: &Database, q: &Query, t: &[Value], store: &mut ProvStore) -> Result<ExprId, EvalError> {
    let eqs: Vec<(usize, Value)> = t.iter().cloned().enumerate().collect();
    let pushed = push_selection(q, db, &eqs)?;
    let rel = eval_prov_all(db, &pushed, store)?;
    Ok(rel.get(t).unwrap_or_else(|| store.constant(false)))
}

/// `Prv(t)` for `t ∈ Q1(D) − Q2(D)`.
pub fn prov_of_tuple(
    db: &Database,
    q1: &Query,
    q2: &Query,
    t: &[Value],
    store: &mut ProvStore,
) -> Result<ExprId, EvalError> {
    let diff = q1.clone().minus(q2.clone());
    let e = tuple_prov(db, &diff, t, store)?;
    if !store.evaluate_roots(&[e], |_| true)[0] {
        let shown: Vec<String> = t.iter().map(Value::to_string).collect();
        return Err(EvalError::TupleNotInDifference(format!("({})", shown.join(", "))));
    }
    Ok(e)
}
