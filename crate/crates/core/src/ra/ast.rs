use std::fmt;

use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Query {
    Relation(String),
    Select {
        pred: Predicate,
        input: Box<Query>,
    },
    Project {
        attrs: Vec<String>,
        input: Box<Query>,
    },
    Rename {
        /// `(old, new)` pairs.
        map: Vec<(String, String)>,
        input: Box<Query>,
    },
    Join {
        kind: JoinKind,
        left: Box<Query>,
        right: Box<Query>,
    },
    Union(Box<Query>, Box<Query>),
    Difference(Box<Query>, Box<Query>),
    GroupAgg {
        group: Vec<String>,
        aggs: Vec<AggSpec>,
        input: Box<Query>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum JoinKind {
    Natural,
    Theta(Predicate),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AggFunc {
    Sum,
    Count,
    Avg,
    Min,
    Max,
}

impl AggFunc {
    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Sum => "SUM",
            AggFunc::Count => "COUNT",
            AggFunc::Avg => "AVG",
            AggFunc::Min => "MIN",
            AggFunc::Max => "MAX",
        }
    }

    pub fn from_name(s: &str) -> Option<AggFunc> {
        Some(match s.to_ascii_uppercase().as_str() {
            "SUM" => AggFunc::Sum,
            "COUNT" => AggFunc::Count,
            "AVG" => AggFunc::Avg,
            "MIN" => AggFunc::Min,
            "MAX" => AggFunc::Max,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AggSpec {
    pub func: AggFunc,
    /// `None` for `COUNT(*)`.
    pub attr: Option<String>,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Predicate {
    Const(bool),
    Cmp(Operand, CmpOp, Operand),
    And(Vec<Predicate>),
    Or(Vec<Predicate>),
    Not(Box<Predicate>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operand {
    Attr(String),
    Const(Value),
    Param(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "<>",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    /// SMT-LIB operator; `<>` has no direct counterpart and is rendered by
    /// callers as `(not (= ...))`.
    pub fn smt(self) -> &'static str {
        match self {
            CmpOp::Eq | CmpOp::Ne => "=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
        }
    }

    /// The operator with its operands swapped: `a op b` iff `b op.flip() a`.
    pub fn flip(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
            other => other,
        }
    }

    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
        }
    }
}

impl Query {
    pub fn children(&self) -> Vec<&Query> {
        match self {
            Query::Relation(_) => vec![],
            Query::Select { input, .. }
            | Query::Project { input, .. }
            | Query::Rename { input, .. }
            | Query::GroupAgg { input, .. } => vec![input],
            Query::Join { left, right, .. } | Query::Union(left, right) | Query::Difference(left, right) => {
                vec![left, right]
            }
        }
    }

    pub fn any_node(&self, f: &dyn Fn(&Query) -> bool) -> bool {
        f(self) || self.children().into_iter().any(|c| c.any_node(f))
    }

    pub fn has_difference(&self) -> bool {
        self.any_node(&|q| matches!(q, Query::Difference(..)))
    }

    pub fn has_aggregate(&self) -> bool {
        self.any_node(&|q| matches!(q, Query::GroupAgg { .. }))
    }

    pub fn minus(self, other: Query) -> Query {
        Query::Difference(Box::new(self), Box::new(other))
    }

    /// Parameter names in order of first appearance.
    pub fn params(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_params(&mut out);
        out
    }

    fn collect_params(&self, out: &mut Vec<String>) {
        let mut push_pred = |p: &Predicate| p.collect_params(out);
        match self {
            Query::Select { pred, .. } => push_pred(pred),
            Query::Join { kind: JoinKind::Theta(pred), .. } => push_pred(pred),
            _ => {}
        }
        for c in self.children() {
            c.collect_params(out);
        }
    }
}

impl Predicate {
    pub fn and(preds: Vec<Predicate>) -> Predicate {
        match preds.len() {
            0 => Predicate::Const(true),
            1 => preds.into_iter().next().unwrap(),
            _ => Predicate::And(preds),
        }
    }

    fn collect_params(&self, out: &mut Vec<String>) {
        match self {
            Predicate::Const(_) => {}
            Predicate::Cmp(l, _, r) => {
                for o in [l, r] {
                    if let Operand::Param(p) = o {
                        if !out.contains(p) {
                            out.push(p.clone());
                        }
                    }
                }
            }
            Predicate::And(ps) | Predicate::Or(ps) => ps.iter().for_each(|p| p.collect_params(out)),
            Predicate::Not(p) => p.collect_params(out),
        }
    }

    pub fn attrs(&self, out: &mut Vec<String>) {
        match self {
            Predicate::Const(_) => {}
            Predicate::Cmp(l, _, r) => {
                for o in [l, r] {
                    if let Operand::Attr(a) = o {
                        out.push(a.clone());
                    }
                }
            }
            Predicate::And(ps) | Predicate::Or(ps) => ps.iter().for_each(|p| p.attrs(out)),
            Predicate::Not(p) => p.attrs(out),
        }
    }
}

fn write_list(f: &mut fmt::Formatter<'_>, items: &[String]) -> fmt::Result {
    f.write_str(&items.join(", "))
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Query::Relation(name) => f.write_str(name),
            Query::Select { pred, input } => write!(f, "select[{pred}]({input})"),
            Query::Project { attrs, input } => {
                f.write_str("project[")?;
                write_list(f, attrs)?;
                write!(f, "]({input})")
            }
            Query::Rename { map, input } => {
                f.write_str("rename[")?;
                for (i, (old, new)) in map.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{old}->{new}")?;
                }
                write!(f, "]({input})")
            }
            Query::Join { kind, left, right } => {
                write!(f, "({left}) join")?;
                if let JoinKind::Theta(p) = kind {
                    write!(f, "[{p}]")?;
                }
                write!(f, " ({right})")
            }
            Query::Union(l, r) => write!(f, "({l}) union ({r})"),
            Query::Difference(l, r) => write!(f, "({l}) minus ({r})"),
            Query::GroupAgg { group, aggs, input } => {
                f.write_str("groupby[")?;
                write_list(f, group)?;
                f.write_str("; ")?;
                for (i, a) in aggs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{}({}) as {}", a.func.name(), a.attr.as_deref().unwrap_or("*"), a.output)?;
                }
                write!(f, "]({input})")
            }
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Const(b) => write!(f, "{b}"),
            Predicate::Cmp(l, op, r) => write!(f, "{l} {} {r}", op.symbol()),
            Predicate::And(ps) | Predicate::Or(ps) => {
                let sep = if matches!(self, Predicate::And(_)) { " and " } else { " or " };
                for (i, p) in ps.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    write!(f, "({p})")?;
                }
                Ok(())
            }
            Predicate::Not(p) => write!(f, "not ({p})"),
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Attr(a) => f.write_str(a),
            Operand::Param(p) => write!(f, "@{p}"),
            Operand::Const(Value::Text(s)) => write!(f, "'{}'", s.replace('\'', "''")),
            // keep a decimal point so the literal reads back as a rational
            Operand::Const(Value::Rat(r)) if r.is_integer() => write!(f, "{}.0", r.to_integer()),
            Operand::Const(Value::Rat(r)) => f.write_str(&crate::value::format_rational(r)),
            Operand::Const(v) => write!(f, "{v}"),
        }
    }
}
