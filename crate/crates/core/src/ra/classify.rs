use std::fmt;

use serde::Serialize;

use super::ast::Query;

/// Query classes ordered from most to least specific.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum QueryClass {
    SJ,
    SPU,
    PJ,
    JUstar,
    JU,
    SPJU,
    SPJUDstar,
    SPJUD,
    AGG,
}

impl QueryClass {
    /// True for the difference- and aggregate-free classes.
    pub fn is_monotone(self) -> bool {
        self <= QueryClass::SPJU
    }

    pub fn name(self) -> &'static str {
        match self {
            QueryClass::SJ => "SJ",
            QueryClass::SPU => "SPU",
            QueryClass::PJ => "PJ",
            QueryClass::JUstar => "JU*",
            QueryClass::JU => "JU",
            QueryClass::SPJU => "SPJU",
            QueryClass::SPJUDstar => "SPJUD*",
            QueryClass::SPJUD => "SPJUD",
            QueryClass::AGG => "AGG",
        }
    }
}

impl fmt::Display for QueryClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Default)]
struct Ops {
    select: bool,
    project: bool,
    join: bool,
    union: bool,
    union_below_join: bool,
}

fn collect(q: &Query, under_join: bool, ops: &mut Ops) {
    match q {
        Query::Select { .. } => ops.select = true,
        Query::Project { .. } => ops.project = true,
        Query::Join { .. } => ops.join = true,
        Query::Union(..) => {
            ops.union = true;
            ops.union_below_join |= under_join;
        }
        _ => {}
    }
    let under = under_join || matches!(q, Query::Join { .. });
    for c in q.children() {
        collect(c, under, ops);
    }
}

/// `Q -> q+ | Q - Q` where `q+` is difference-free.
fn is_difference_of_monotone(q: &Query) -> bool {
    match q {
        Query::Difference(l, r) => is_difference_of_monotone(l) && is_difference_of_monotone(r),
        _ => !q.has_difference(),
    }
}

/// The most specific class whose operator set and shape contain `q`.
/// Renaming never affects the class.
pub fn classify(q: &Query) -> QueryClass {
    if q.has_aggregate() {
        return QueryClass::AGG;
    }
    if q.has_difference() {
        return if is_difference_of_monotone(q) {
            QueryClass::SPJUDstar
        } else {
            QueryClass::SPJUD
        };
    }
    let mut ops = Ops::default();
    collect(q, false, &mut ops);
    let Ops {
        select,
        project,
        join,
        union,
        union_below_join,
    } = ops;
    if !project && !union {
        QueryClass::SJ
    } else if !join {
        QueryClass::SPU
    } else if !select && !project {
        if union_below_join {
            QueryClass::JU
        } else {
            QueryClass::JUstar
        }
    } else if !select && !union {
        QueryClass::PJ
    } else {
        QueryClass::SPJU
    }
}

/// `q` with every difference `A - B` replaced by `A`.
pub fn strip_differences(q: &Query) -> Query {
    let s = |c: &Query| Box::new(strip_differences(c));
    match q {
        Query::Difference(l, _) => strip_differences(l),
        Query::Relation(_) => q.clone(),
        Query::Select { pred, input } => Query::Select {
            pred: pred.clone(),
            input: s(input),
        },
        Query::Project { attrs, input } => Query::Project {
            attrs: attrs.clone(),
            input: s(input),
        },
        Query::Rename { map, input } => Query::Rename {
            map: map.clone(),
            input: s(input),
        },
        Query::Join { kind, left, right } => Query::Join {
            kind: kind.clone(),
            left: s(left),
            right: s(right),
        },
        Query::Union(l, r) => Query::Union(s(l), s(r)),
        Query::GroupAgg { group, aggs, input } => Query::GroupAgg {
            group: group.clone(),
            aggs: aggs.clone(),
            input: s(input),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ra::parse;
    use crate::testing::{AVG_CS, ONE_CS, SOME_CS};

    fn class(s: &str) -> QueryClass {
        classify(&parse(s).unwrap())
    }

    #[test]
    fn running_queries() {
        assert_eq!(class(SOME_CS), QueryClass::SPJU);
        assert_eq!(class(ONE_CS), QueryClass::SPJUDstar);
        assert_eq!(class(AVG_CS), QueryClass::AGG);
        assert_eq!(class("Student"), QueryClass::SJ);
    }

    #[test]
    fn operator_sets() {
        assert_eq!(class("select[a = 1](R join S)"), QueryClass::SJ);
        assert_eq!(class("rename[a -> b](R) join S"), QueryClass::SJ);
        assert_eq!(class("project[a](select[a = 1](R) union S)"), QueryClass::SPU);
        assert_eq!(class("(R join S) union (T join U)"), QueryClass::JUstar);
        assert_eq!(class("(R union S) join T"), QueryClass::JU);
        assert_eq!(class("project[a](R join S)"), QueryClass::PJ);
        assert_eq!(class("project[a](select[b = 1](R join S))"), QueryClass::SPJU);
        assert_eq!(class("(A minus B) minus (C minus D)"), QueryClass::SPJUDstar);
        assert_eq!(class("project[a](A minus B)"), QueryClass::SPJUD);
        assert_eq!(class("(A minus B) join C"), QueryClass::SPJUD);
    }

    #[test]
    fn stripping_differences_gives_monotone() {
        let q = parse("project[a](A minus (B minus C)) join D").unwrap();
        assert_eq!(classify(&q), QueryClass::SPJUD);
        assert!(classify(&strip_differences(&q)).is_monotone());
    }
}
