use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::Serialize;

use super::ast::{AggFunc, JoinKind, Operand, Predicate, Query};
use super::QueryError;
use crate::catalog::{Database, RelationSchema};
use crate::value::{AttributeType, Value};

/// One output column of a typed query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutAttr {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: AttributeType,
    /// Produced by an aggregate function somewhere below.
    #[serde(skip)]
    pub aggregate: bool,
}

/// Renders `(name:text, major:text)`.
pub struct SchemaDisplay<'a>(pub &'a [OutAttr]);

impl fmt::Display for SchemaDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}:{}", a.name, a.ty)?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypedQuery {
    pub ast: Query,
    pub schema: Vec<OutAttr>,
    /// Parameter names in order of first appearance.
    pub params: Vec<String>,
    pub param_types: BTreeMap<String, AttributeType>,
    /// Parameters compared against aggregate values (HAVING positions).
    pub having_params: BTreeSet<String>,
}

impl TypedQuery {
    pub fn new(ast: Query, db: &Database) -> Result<TypedQuery, QueryError> {
        type_query(ast, db.schemas())
    }

    pub fn parse(text: &str, db: &Database) -> Result<TypedQuery, QueryError> {
        TypedQuery::new(super::parse(text)?, db)
    }

    pub fn column_names(&self) -> Vec<String> {
        self.schema.iter().map(|a| a.name.clone()).collect()
    }

    pub fn is_parameter_free(&self) -> bool {
        self.params.is_empty()
    }
}

/// Type-checks `ast` against relation schemas.
pub fn type_query(ast: Query, schemas: &[RelationSchema]) -> Result<TypedQuery, QueryError> {
    let mut cx = Cx {
        schemas,
        param_types: BTreeMap::new(),
        having_params: BTreeSet::new(),
    };
    let schema = cx.schema_of(&ast)?;
    let params = ast.params();
    Ok(TypedQuery {
        ast,
        schema,
        params,
        param_types: cx.param_types,
        having_params: cx.having_params,
    })
}

/// Types both queries and checks that their outputs are union-compatible:
/// same arity and the same type in every position. Column names may differ.
pub fn validate_pair(q1: Query, q2: Query, db: &Database) -> Result<(TypedQuery, TypedQuery), QueryError> {
    let t1 = TypedQuery::new(q1, db)?;
    let t2 = TypedQuery::new(q2, db)?;
    let compatible =
        t1.schema.len() == t2.schema.len() && t1.schema.iter().zip(&t2.schema).all(|(a, b)| a.ty == b.ty);
    if !compatible {
        return Err(QueryError::UnionIncompatible {
            left: SchemaDisplay(&t1.schema).to_string(),
            right: SchemaDisplay(&t2.schema).to_string(),
        });
    }
    Ok((t1, t2))
}

/// Substitutes constants for parameters. `values` must name exactly the
/// query's parameters.
pub fn bind_params(
    q: &TypedQuery,
    values: &BTreeMap<String, Value>,
    schemas: &[RelationSchema],
) -> Result<TypedQuery, QueryError> {
    if let Some(unknown) = values.keys().find(|k| !q.params.contains(k)) {
        return Err(QueryError::UnknownParam(unknown.clone()));
    }
    if let Some(missing) = q.params.iter().find(|p| !values.contains_key(*p)) {
        return Err(QueryError::MissingParam(missing.clone()));
    }
    bind_some(q, values, schemas)
}

/// Like [`bind_params`] but leaves parameters absent from `values` in place.
pub fn bind_some(
    q: &TypedQuery,
    values: &BTreeMap<String, Value>,
    schemas: &[RelationSchema],
) -> Result<TypedQuery, QueryError> {
    let mut coerced = BTreeMap::new();
    for (name, v) in values {
        let Some(&ty) = q.param_types.get(name) else {
            continue;
        };
        let c = v.coerce(ty).ok_or_else(|| {
            QueryError::Type(format!("parameter @{name} expects a {ty} value, got `{v}`"))
        })?;
        coerced.insert(name.clone(), c);
    }
    type_query(substitute(&q.ast, &coerced), schemas)
}

fn substitute(q: &Query, values: &BTreeMap<String, Value>) -> Query {
    let sub = |c: &Query| Box::new(substitute(c, values));
    match q {
        Query::Relation(_) => q.clone(),
        Query::Select { pred, input } => Query::Select {
            pred: substitute_pred(pred, values),
            input: sub(input),
        },
        Query::Project { attrs, input } => Query::Project {
            attrs: attrs.clone(),
            input: sub(input),
        },
        Query::Rename { map, input } => Query::Rename {
            map: map.clone(),
            input: sub(input),
        },
        Query::Join { kind, left, right } => Query::Join {
            kind: match kind {
                JoinKind::Natural => JoinKind::Natural,
                JoinKind::Theta(p) => JoinKind::Theta(substitute_pred(p, values)),
            },
            left: sub(left),
            right: sub(right),
        },
        Query::Union(l, r) => Query::Union(sub(l), sub(r)),
        Query::Difference(l, r) => Query::Difference(sub(l), sub(r)),
        Query::GroupAgg { group, aggs, input } => Query::GroupAgg {
            group: group.clone(),
            aggs: aggs.clone(),
            input: sub(input),
        },
    }
}

fn substitute_pred(p: &Predicate, values: &BTreeMap<String, Value>) -> Predicate {
    let op = |o: &Operand| match o {
        Operand::Param(name) => match values.get(name) {
            Some(v) => Operand::Const(v.clone()),
            None => o.clone(),
        },
        _ => o.clone(),
    };
    match p {
        Predicate::Const(_) => p.clone(),
        Predicate::Cmp(l, c, r) => Predicate::Cmp(op(l), *c, op(r)),
        Predicate::And(ps) => Predicate::And(ps.iter().map(|p| substitute_pred(p, values)).collect()),
        Predicate::Or(ps) => Predicate::Or(ps.iter().map(|p| substitute_pred(p, values)).collect()),
        Predicate::Not(p) => Predicate::Not(Box::new(substitute_pred(p, values))),
    }
}

struct Cx<'a> {
    schemas: &'a [RelationSchema],
    param_types: BTreeMap<String, AttributeType>,
    having_params: BTreeSet<String>,
}

fn type_err<T>(msg: String) -> Result<T, QueryError> {
    Err(QueryError::Type(msg))
}

fn find<'s>(schema: &'s [OutAttr], name: &str) -> Result<&'s OutAttr, QueryError> {
    schema
        .iter()
        .find(|a| a.name == name)
        .ok_or_else(|| QueryError::Type(format!("unknown attribute `{name}` in {}", SchemaDisplay(schema))))
}

fn check_unique(schema: &[OutAttr], context: &str) -> Result<(), QueryError> {
    let mut seen = HashSet::new();
    for a in schema {
        if !seen.insert(a.name.as_str()) {
            return type_err(format!("{context} produces attribute `{}` twice", a.name));
        }
    }
    Ok(())
}

impl Cx<'_> {
    fn schema_of(&mut self, q: &Query) -> Result<Vec<OutAttr>, QueryError> {
        match q {
            Query::Relation(name) => {
                let rel = self
                    .schemas
                    .iter()
                    .find(|r| r.name == *name)
                    .ok_or_else(|| QueryError::Type(format!("unknown relation `{name}`")))?;
                Ok(rel
                    .attributes
                    .iter()
                    .map(|a| OutAttr {
                        name: a.name.clone(),
                        ty: a.ty,
                        aggregate: false,
                    })
                    .collect())
            }
            Query::Select { pred, input } => {
                let schema = self.schema_of(input)?;
                self.check_pred(pred, &schema)?;
                Ok(schema)
            }
            Query::Project { attrs, input } => {
                let schema = self.schema_of(input)?;
                if attrs.is_empty() {
                    return type_err("projection onto no attributes".into());
                }
                let out: Vec<OutAttr> = attrs.iter().map(|a| find(&schema, a).cloned()).collect::<Result<_, _>>()?;
                check_unique(&out, "projection")?;
                Ok(out)
            }
            Query::Rename { map, input } => {
                let mut schema = self.schema_of(input)?;
                let mut renamed = HashSet::new();
                for (old, _) in map {
                    if !renamed.insert(old.as_str()) {
                        return type_err(format!("attribute `{old}` renamed twice"));
                    }
                    find(&schema, old)?;
                }
                for a in &mut schema {
                    if let Some((_, new)) = map.iter().find(|(old, _)| *old == a.name) {
                        a.name = new.clone();
                    }
                }
                check_unique(&schema, "rename")?;
                Ok(schema)
            }
            Query::Join { kind, left, right } => {
                let l = self.schema_of(left)?;
                let r = self.schema_of(right)?;
                match kind {
                    JoinKind::Natural => {
                        let mut out = l.clone();
                        for a in &r {
                            match l.iter().find(|b| b.name == a.name) {
                                Some(b) if b.ty != a.ty => {
                                    return type_err(format!(
                                        "natural join on `{}` compares {} with {}",
                                        a.name, b.ty, a.ty
                                    ))
                                }
                                Some(_) => {}
                                None => out.push(a.clone()),
                            }
                        }
                        Ok(out)
                    }
                    JoinKind::Theta(pred) => {
                        let mut out = l;
                        out.extend(r);
                        if let Err(QueryError::Type(m)) = check_unique(&out, "theta join") {
                            return type_err(format!("{m}; rename one side first"));
                        }
                        self.check_pred(pred, &out)?;
                        Ok(out)
                    }
                }
            }
            Query::Union(left, right) | Query::Difference(left, right) => {
                let is_diff = matches!(q, Query::Difference(..));
                if is_diff && (left.has_aggregate() || right.has_aggregate()) {
                    return Err(QueryError::AggRestrictionViolated(
                        "no difference operation above an aggregate".into(),
                    ));
                }
                let l = self.schema_of(left)?;
                let r = self.schema_of(right)?;
                let compatible = l.len() == r.len() && l.iter().zip(&r).all(|(a, b)| a.ty == b.ty);
                if !compatible {
                    return Err(QueryError::UnionIncompatible {
                        left: SchemaDisplay(&l).to_string(),
                        right: SchemaDisplay(&r).to_string(),
                    });
                }
                Ok(l)
            }
            Query::GroupAgg { group, aggs, input } => {
                let schema = self.schema_of(input)?;
                let mut out = Vec::new();
                for g in group {
                    let a = find(&schema, g)?;
                    if a.aggregate {
                        return Err(QueryError::AggRestrictionViolated(format!(
                            "aggregate value `{g}` used as a grouping attribute"
                        )));
                    }
                    out.push(a.clone());
                }
                if aggs.is_empty() {
                    return type_err("groupby needs at least one aggregate".into());
                }
                for spec in aggs {
                    let ty = match &spec.attr {
                        None => AttributeType::Integer,
                        Some(attr) => {
                            let a = find(&schema, attr)?;
                            match spec.func {
                                AggFunc::Count => AttributeType::Integer,
                                AggFunc::Sum | AggFunc::Avg if !a.ty.is_numeric() => {
                                    return type_err(format!(
                                        "{} over non-numeric attribute `{attr}`",
                                        spec.func.name()
                                    ))
                                }
                                AggFunc::Avg => AttributeType::Rational,
                                AggFunc::Sum | AggFunc::Min | AggFunc::Max => a.ty,
                            }
                        }
                    };
                    out.push(OutAttr {
                        name: spec.output.clone(),
                        ty,
                        aggregate: true,
                    });
                }
                check_unique(&out, "groupby")?;
                Ok(out)
            }
        }
    }

    fn check_pred(&mut self, pred: &Predicate, schema: &[OutAttr]) -> Result<(), QueryError> {
        match pred {
            Predicate::Const(_) => Ok(()),
            Predicate::And(ps) | Predicate::Or(ps) => ps.iter().try_for_each(|p| self.check_pred(p, schema)),
            Predicate::Not(p) => self.check_pred(p, schema),
            Predicate::Cmp(l, op, r) => {
                let side = |o: &Operand| -> Result<Option<(AttributeType, bool)>, QueryError> {
                    Ok(match o {
                        Operand::Attr(a) => {
                            let attr = find(schema, a)?;
                            Some((attr.ty, attr.aggregate))
                        }
                        Operand::Const(v) => Some((v.ty(), false)),
                        Operand::Param(_) => None,
                    })
                };
                let (lt, rt) = (side(l)?, side(r)?);
                match (lt, rt) {
                    (None, None) => type_err(format!("comparison `{pred}` has parameters on both sides")),
                    (Some((a, _)), Some((b, _))) => {
                        if a.comparable_with(b) {
                            Ok(())
                        } else {
                            type_err(format!("cannot compare {a} with {b} in `{l} {} {r}`", op.symbol()))
                        }
                    }
                    (Some((ty, agg)), None) | (None, Some((ty, agg))) => {
                        let Operand::Param(name) = (if lt.is_none() { l } else { r }) else {
                            unreachable!()
                        };
                        match self.param_types.get(name) {
                            Some(prev) if !prev.comparable_with(ty) => {
                                return type_err(format!("parameter @{name} used as both {prev} and {ty}"))
                            }
                            Some(_) => {}
                            None => {
                                self.param_types.insert(name.clone(), ty);
                            }
                        }
                        if agg {
                            self.having_params.insert(name.clone());
                        }
                        Ok(())
                    }
                }
            }
        }
    }
}
