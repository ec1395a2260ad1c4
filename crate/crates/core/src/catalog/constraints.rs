use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;

use super::{CatalogError, Database, IdSet, TupleId};
use crate::provenance::{ExprId, ProvStore};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Key,
    ForeignKey,
    NotNull,
    FunctionalDependency,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub relation: String,
    pub constraint: String,
    pub tuples: Vec<TupleId>,
}

/// Every violated constraint of an instance. Empty iff the instance
/// satisfies all declared constraints.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ConstraintReport {
    pub violations: Vec<Violation>,
}

impl ConstraintReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn of_kind(&self, kind: ViolationKind) -> impl Iterator<Item = &Violation> + '_ {
        self.violations.iter().filter(move |v| v.kind == kind)
    }
}

impl fmt::Display for ConstraintReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{:?} {} on {} (tuples", v.kind, v.constraint, v.relation)?;
            for t in &v.tuples {
                write!(f, " {t}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// Numeric values are keyed by their rational value so that an integer
/// column can reference a rational one.
fn key_value(v: &Value) -> Value {
    match v {
        Value::Int(_) => Value::Rat(v.as_rational().unwrap()),
        other => other.clone(),
    }
}

fn project_key(values: &[Value], positions: &[usize]) -> Vec<Value> {
    positions.iter().map(|&p| key_value(&values[p])).collect()
}

pub fn check_constraints(db: &Database) -> ConstraintReport {
    let mut violations = Vec::new();
    for (ri, schema) in db.schemas().iter().enumerate() {
        let rows = db.rows(ri);
        if !schema.key.is_empty() {
            let pos = schema.positions(&schema.key);
            let mut groups: BTreeMap<Vec<Value>, Vec<TupleId>> = BTreeMap::new();
            for r in rows {
                groups.entry(project_key(&r.values, &pos)).or_default().push(r.id);
            }
            for ids in groups.into_values().filter(|g| g.len() > 1) {
                violations.push(Violation {
                    kind: ViolationKind::Key,
                    relation: schema.name.clone(),
                    constraint: format!("key ({})", schema.key.join(", ")),
                    tuples: ids,
                });
            }
        }
        // NULLs are rejected at load, so a not-null column can only be
        // violated by an empty text cell smuggled in through `from_rows`.
        for attr in &schema.not_null {
            let p = schema.position(attr).unwrap();
            let bad: Vec<TupleId> = rows
                .iter()
                .filter(|r| matches!(&r.values[p], Value::Text(s) if s.is_empty()))
                .map(|r| r.id)
                .collect();
            if !bad.is_empty() {
                violations.push(Violation {
                    kind: ViolationKind::NotNull,
                    relation: schema.name.clone(),
                    constraint: format!("not null ({attr})"),
                    tuples: bad,
                });
            }
        }
        for fd in &schema.fds {
            let lhs = schema.positions(&fd.lhs);
            let rhs = schema.positions(&fd.rhs);
            let mut groups: BTreeMap<Vec<Value>, Vec<(Vec<Value>, TupleId)>> = BTreeMap::new();
            for r in rows {
                groups
                    .entry(project_key(&r.values, &lhs))
                    .or_default()
                    .push((project_key(&r.values, &rhs), r.id));
            }
            for members in groups.into_values() {
                if members.iter().any(|(v, _)| *v != members[0].0) {
                    violations.push(Violation {
                        kind: ViolationKind::FunctionalDependency,
                        relation: schema.name.clone(),
                        constraint: format!("fd ({}) -> ({})", fd.lhs.join(", "), fd.rhs.join(", ")),
                        tuples: members.into_iter().map(|(_, id)| id).collect(),
                    });
                }
            }
        }
    }
    let graph = FkGraph::build(db);
    for (&child, links) in &graph.links {
        for link in links.iter().filter(|l| l.parents.is_empty()) {
            let schema = &db.schemas()[child.relation as usize];
            let fk = &schema.foreign_keys[link.fk];
            violations.push(Violation {
                kind: ViolationKind::ForeignKey,
                relation: schema.name.clone(),
                constraint: format!(
                    "foreign key ({}) -> {}({})",
                    fk.columns.join(", "),
                    fk.references.relation,
                    fk.references.columns.join(", ")
                ),
                tuples: vec![child],
            });
        }
    }
    ConstraintReport { violations }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FkLink {
    /// Index into the child relation's `foreign_keys`.
    pub fk: usize,
    /// Tuples the child refers to, in id order. Empty when dangling.
    pub parents: Vec<TupleId>,
}

/// Parent links of every tuple that participates in a foreign key.
#[derive(Debug, Clone, Default)]
pub struct FkGraph {
    links: BTreeMap<TupleId, Vec<FkLink>>,
}

/// Referenced columns of one relation, value to tuples.
type KeyIndex = HashMap<(usize, Vec<usize>), HashMap<Vec<Value>, Vec<TupleId>>>;

impl FkGraph {
    pub fn build(db: &Database) -> FkGraph {
        let mut indexes: KeyIndex = HashMap::new();
        let mut links: BTreeMap<TupleId, Vec<FkLink>> = BTreeMap::new();
        for (ri, schema) in db.schemas().iter().enumerate() {
            for (fi, fk) in schema.foreign_keys.iter().enumerate() {
                let target = db.relation_index(&fk.references.relation).unwrap();
                let tpos = db.schemas()[target].positions(&fk.references.columns);
                let index = indexes.entry((target, tpos.clone())).or_insert_with(|| {
                    let mut idx: HashMap<Vec<Value>, Vec<TupleId>> = HashMap::new();
                    for r in db.rows(target) {
                        idx.entry(project_key(&r.values, &tpos)).or_default().push(r.id);
                    }
                    idx
                });
                let cpos = schema.positions(&fk.columns);
                for r in db.rows(ri) {
                    let parents = index.get(&project_key(&r.values, &cpos)).cloned().unwrap_or_default();
                    links.entry(r.id).or_default().push(FkLink { fk: fi, parents });
                }
            }
        }
        FkGraph { links }
    }

    pub fn links(&self, id: TupleId) -> &[FkLink] {
        self.links.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    /// `child ⇒ (parent₁ ∨ …)` for each foreign key of each id in `ids`,
    /// encoded as `parent ∨ ¬child`. Ordered by child id, then by foreign
    /// key declaration order.
    pub fn implications<'a>(
        &self,
        store: &mut ProvStore,
        ids: impl IntoIterator<Item = &'a TupleId>,
    ) -> Result<Vec<ExprId>, CatalogError> {
        let mut out = Vec::new();
        for &child in ids {
            for link in self.links(child) {
                if link.parents.is_empty() {
                    return Err(CatalogError::DanglingReference { child, fk: link.fk });
                }
                let not_child = {
                    let v = store.var(child);
                    store.not(v)
                };
                let mut terms: Vec<ExprId> = link.parents.iter().map(|&p| store.var(p)).collect();
                terms.push(not_child);
                out.push(store.or(terms));
            }
        }
        Ok(out)
    }

    /// `ids` plus every tuple reachable through parent links (all candidate
    /// parents, transitively). This is the variable set a solver needs.
    pub fn upward(&self, ids: &IdSet) -> IdSet {
        let mut out = ids.clone();
        let mut stack: Vec<TupleId> = ids.to_vec();
        while let Some(id) = stack.pop() {
            for link in self.links(id) {
                for &p in &link.parents {
                    if out.insert(p) {
                        stack.push(p);
                    }
                }
            }
        }
        out
    }

    /// Smallest-id completion of `ids` to a referentially closed set.
    pub fn closure(&self, ids: &IdSet) -> IdSet {
        let mut out = ids.clone();
        let mut stack: Vec<TupleId> = ids.to_vec();
        while let Some(id) = stack.pop() {
            for link in self.links(id) {
                if link.parents.iter().any(|p| out.contains(p)) {
                    continue;
                }
                if let Some(&p) = link.parents.first() {
                    out.insert(p);
                    stack.push(p);
                }
            }
        }
        out
    }

    pub fn is_closed(&self, ids: &IdSet) -> bool {
        ids.iter().all(|&id| {
            self.links(id)
                .iter()
                .all(|l| l.parents.iter().any(|p| ids.contains(p)))
        })
    }
}

/// All foreign-key implications of `db`, one per (referencing tuple, key).
pub fn fk_implications(db: &Database, store: &mut ProvStore) -> Result<Vec<ExprId>, CatalogError> {
    let graph = db.fk_graph();
    let ids: Vec<TupleId> = db.ids().collect();
    graph.implications(store, &ids)
}
