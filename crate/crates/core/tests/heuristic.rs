use std::collections::{BTreeMap, HashMap};

use cexplain_core::catalog::{check_constraints, load_database};
use cexplain_core::finder::{agg_basic, agg_heuristic, verify, FindError, FindOptions};
use cexplain_core::ra::TypedQuery;
use cexplain_core::{Database, IdSet};

// A(aid, name, grade, r1, r2) points twice into B; B points into C.
const SCHEMA: &str = r#"{"relations": [
  {"name": "C", "attributes": [{"name": "cid", "type": "integer"}], "key": ["cid"]},
  {"name": "B", "attributes": [{"name": "bid", "type": "integer"}, {"name": "name", "type": "text"},
                               {"name": "grade", "type": "integer"}, {"name": "cid", "type": "integer"}],
   "key": ["bid"],
   "foreign_keys": [{"columns": ["cid"], "references": {"relation": "C", "columns": ["cid"]}}]},
  {"name": "A", "attributes": [{"name": "aid", "type": "integer"}, {"name": "name", "type": "text"},
                               {"name": "grade", "type": "integer"}, {"name": "r1", "type": "integer"},
                               {"name": "r2", "type": "integer"}],
   "key": ["aid"],
   "foreign_keys": [{"columns": ["r1"], "references": {"relation": "B", "columns": ["bid"]}},
                    {"columns": ["r2"], "references": {"relation": "B", "columns": ["bid"]}}]}
]}"#;

/// Ann's grade 80 in A is derivable twice. The cheaper derivation drags in
/// B grades 70 and 90, whose average is also 80, so the first model the
/// solver offers does not separate the queries.
fn instance() -> Database {
    let tables = HashMap::from([
        ("C".to_string(), "cid\n1\n2\n3\n".to_string()),
        (
            "B".to_string(),
            "bid,name,grade,cid\n1,Ann,70,1\n2,Ann,90,1\n3,Ann,50,2\n4,Ann,60,3\n".to_string(),
        ),
        ("A".to_string(), "aid,name,grade,r1,r2\n1,Ann,80,1,2\n2,Ann,80,3,4\n".to_string()),
    ]);
    load_database(SCHEMA, &tables).unwrap()
}

fn ids(db: &Database, names: &[&str]) -> IdSet {
    names.iter().map(|n| db.parse_id(n).unwrap()).collect()
}

fn queries(db: &Database) -> (TypedQuery, TypedQuery) {
    (
        TypedQuery::parse("groupby[name; AVG(grade) as x](A)", db).unwrap(),
        TypedQuery::parse("groupby[name; AVG(grade) as x](B)", db).unwrap(),
    )
}

#[test]
fn heuristic_succeeds_only_after_blocking_a_tied_model() {
    let db = instance();
    let (q1, q2) = queries(&db);
    let none = BTreeMap::new();
    let cheap = ids(&db, &["C:1", "B:1", "B:2", "A:1"]);
    assert!(check_constraints(&db.restrict(&cheap).unwrap()).is_empty());
    assert!(!verify(&db, &q1, &q2, &cheap, &none).unwrap(), "cheapest lineage must tie");

    let c = agg_heuristic(&db, &q1, &q2, &none, &FindOptions::default()).unwrap();
    assert!(c.verified);
    assert_eq!(c.ids, ids(&db, &["C:2", "C:3", "B:3", "B:4", "A:2"]));
    assert!(check_constraints(&db.restrict(&c.ids).unwrap()).is_empty());

    // the exact strategy is not misled and finds a two-tuple witness
    let exact = agg_basic(&db, &q1, &q2, &none, &FindOptions::default(), false).unwrap();
    assert_eq!(exact.size(), 2);
}

#[test]
fn heuristic_gives_up_when_retries_run_out() {
    let db = instance();
    let (q1, q2) = queries(&db);
    let o = FindOptions {
        heuristic_retries: 1,
        ..FindOptions::default()
    };
    assert!(matches!(
        agg_heuristic(&db, &q1, &q2, &BTreeMap::new(), &o),
        Err(FindError::RetriesExhausted(1))
    ));
}
