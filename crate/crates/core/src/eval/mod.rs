//! Query evaluation over an in-memory [`Database`].
//!
//! Three flavours share one evaluator: plain set semantics, Boolean
//! provenance annotations, and symbolic aggregate annotations (see
//! [`agg`]). Plain results are sorted by value so output order is stable.

mod agg;
mod engine;
mod pushdown;

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

pub use agg::{
    eval_agg_prov, truth_table, AggAtom, AggColumn, AggFormula, AggRelation, AggRow, AggTerm, AggValueExpr,
};
pub use pushdown::{prov_of_tuple, push_selection, tuple_prov};

use crate::catalog::Database;
use crate::provenance::{ExprId, ProvStore};
use crate::ra::{OutAttr, Query, TypedQuery};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("parameter @{0} has no value")]
    UnboundParam(String),
    #[error("tuple {0} is not in the difference of the two queries")]
    TupleNotInDifference(String),
    #[error("queries agree on the test database")]
    QueriesAgree,
    #[error("aggregate restriction violated: {0}")]
    AggRestrictionViolated(String),
}

/// A plain query result with distinct rows in sorted order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Relation {
    pub columns: Vec<OutAttr>,
    pub rows: Vec<Vec<Value>>,
}

impl Relation {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains(&self, row: &[Value]) -> bool {
        self.rows.binary_search_by(|r| r.as_slice().cmp(row)).is_ok()
    }

    /// Rows as text, tab separated, header first.
    pub fn to_tsv(&self) -> String {
        let mut out = self.columns.iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join("\t");
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(Value::to_string).collect();
            out.push_str(&cells.join("\t"));
            out.push('\n');
        }
        out
    }
}

/// Rows paired with their provenance, sorted by value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedRelation {
    pub columns: Vec<OutAttr>,
    pub rows: Vec<(Vec<Value>, ExprId)>,
}

impl AnnotatedRelation {
    pub fn get(&self, row: &[Value]) -> Option<ExprId> {
        self.rows
            .binary_search_by(|(r, _)| r.as_slice().cmp(row))
            .ok()
            .map(|i| self.rows[i].1)
    }

    /// Debug dump: the value columns plus a rendered `prov` column.
    pub fn to_tsv(&self, store: &ProvStore, db: &Database) -> String {
        let mut out = String::new();
        for c in &self.columns {
            let _ = write!(out, "{}\t", c.name);
        }
        out.push_str("prov\n");
        for (v, e) in &self.rows {
            for cell in v {
                let _ = write!(out, "{cell}\t");
            }
            out.push_str(&store.render_infix(*e, &|id| db.alias(id)));
            out.push('\n');
        }
        out
    }
}

fn sorted<T>(mut rows: Vec<(Vec<Value>, T)>) -> Vec<(Vec<Value>, T)> {
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    rows
}

/// Set-semantics evaluation of an untyped tree (parameters must be bound).
pub fn eval_query(db: &Database, q: &Query) -> Result<Relation, EvalError> {
    let t = engine::eval(q, db, &mut engine::Plain)?;
    Ok(Relation {
        columns: t.cols,
        rows: sorted(t.rows).into_iter().map(|(v, _)| v).collect(),
    })
}

pub fn eval_plain(db: &Database, q: &TypedQuery) -> Result<Relation, EvalError> {
    eval_query(db, &q.ast)
}

/// Every row that can appear in the result on some subinstance, with its
/// provenance. Rows removed by a difference on the full instance are kept
/// with a negated annotation, so this is a superset of `Q(D)`.
pub fn eval_prov_all(db: &Database, q: &Query, store: &mut ProvStore) -> Result<AnnotatedRelation, EvalError> {
    let t = engine::eval(q, db, &mut engine::Prov { store })?;
    Ok(AnnotatedRelation {
        columns: t.cols,
        rows: sorted(t.rows),
    })
}

/// Rows of `Q(D)` with their provenance.
pub fn eval_prov(db: &Database, q: &TypedQuery, store: &mut ProvStore) -> Result<AnnotatedRelation, EvalError> {
    let mut rel = eval_prov_all(db, &q.ast, store)?;
    let roots: Vec<ExprId> = rel.rows.iter().map(|(_, e)| *e).collect();
    let present = store.evaluate_roots(&roots, |_| true);
    let mut keep = present.into_iter();
    rel.rows.retain(|_| keep.next().unwrap());
    Ok(rel)
}

/// `(Q1(D) \ Q2(D), Q2(D) \ Q1(D))`, or `QueriesAgree` if both are empty.
pub fn symmetric_diff(db: &Database, q1: &TypedQuery, q2: &TypedQuery) -> Result<(Relation, Relation), EvalError> {
    let r1 = eval_plain(db, q1)?;
    let r2 = eval_plain(db, q2)?;
    let only = |a: &Relation, b: &Relation| Relation {
        columns: a.columns.clone(),
        rows: a.rows.iter().filter(|r| !b.contains(r)).cloned().collect(),
    };
    let (l, r) = (only(&r1, &r2), only(&r2, &r1));
    if l.is_empty() && r.is_empty() {
        return Err(EvalError::QueriesAgree);
    }
    Ok((l, r))
}
