//! Random small databases and mutated SPJUD query pairs.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cexplain_core::catalog::{Attribute, FkTarget, ForeignKey, RelationSchema, SchemaDoc};
use cexplain_core::ra::{parse, validate_pair, TypedQuery};
use cexplain_core::{AttributeType, Database, Value};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn relation(name: &str, attrs: &[&str], key: &str, fk: Option<(&str, &str)>) -> RelationSchema {
    RelationSchema {
        name: name.into(),
        attributes: attrs
            .iter()
            .map(|a| Attribute {
                name: (*a).into(),
                ty: AttributeType::Integer,
            })
            .collect(),
        key: vec![key.into()],
        foreign_keys: fk
            .map(|(col, target)| ForeignKey {
                columns: vec![col.into()],
                references: FkTarget {
                    relation: target.into(),
                    columns: vec![col.into()],
                },
            })
            .into_iter()
            .collect(),
        not_null: Vec::new(),
        fds: Vec::new(),
    }
}

/// Shape of a generated instance.
#[derive(Debug, Clone, Copy)]
pub struct Shape {
    /// Adds T(t, s, d) referencing S.
    pub three: bool,
    /// Declares the foreign keys S.a -> R.a and T.s -> S.s.
    pub fk: bool,
}

/// R(a, b) key a; S(s, a, c) key s; optionally T(t, s, d) key t.
/// With `fk`, T -> S -> R is a two-level chain. At most 10 tuples.
pub fn random_db(rng: &mut ChaCha8Rng, shape: Shape) -> Database {
    let fk = |col, target| shape.fk.then_some((col, target));
    let mut rels = vec![
        relation("R", &["a", "b"], "a", None),
        relation("S", &["s", "a", "c"], "s", fk("a", "R")),
    ];
    if shape.three {
        rels.push(relation("T", &["t", "s", "d"], "t", fk("s", "S")));
    }
    let int = |v: i64| Value::Int(v as i128);
    let mut r_keys: Vec<i64> = (0..4).collect();
    r_keys.retain(|_| rng.random_bool(0.7));
    if r_keys.is_empty() {
        r_keys.push(0);
    }
    let r: Vec<Vec<Value>> = r_keys.iter().map(|&a| vec![int(a), int(rng.random_range(0..3))]).collect();
    let n_s = rng.random_range(1..=4);
    let s: Vec<Vec<Value>> = (0..n_s)
        .map(|i| {
            let a = if shape.fk {
                *r_keys.choose(rng).unwrap()
            } else {
                rng.random_range(0..4)
            };
            vec![int(i), int(a), int(rng.random_range(0..3))]
        })
        .collect();
    let mut tables = HashMap::from([("R".to_string(), r), ("S".to_string(), s)]);
    if shape.three {
        let n_t = rng.random_range(0..=(10 - r_keys.len() - n_s as usize).min(3));
        let t: Vec<Vec<Value>> = (0..n_t)
            .map(|i| {
                let s = if shape.fk {
                    rng.random_range(0..n_s)
                } else {
                    rng.random_range(0..5)
                };
                vec![int(i as i64), int(s), int(rng.random_range(0..3))]
            })
            .collect();
        tables.insert("T".into(), t);
    }
    Database::from_rows(SchemaDoc { relations: rels }, tables).expect("generated instance is consistent")
}

#[derive(Debug, Clone)]
pub struct Leaf {
    pub source: &'static str,
    pub attrs: &'static [&'static str],
    pub preds: Vec<String>,
    /// Projected attribute, renamed to `a` when it is not `a`.
    pub proj: &'static str,
}

#[derive(Debug, Clone)]
pub enum Q {
    Leaf(Leaf),
    Union(Box<Q>, Box<Q>),
    Minus(Box<Q>, Box<Q>),
}

const SOURCES: [(&str, &[&str], bool); 5] = [
    ("R", &["a", "b"], false),
    ("S", &["s", "a", "c"], false),
    ("R join S", &["a", "b", "s", "c"], false),
    ("S join T", &["s", "a", "c", "t", "d"], true),
    ("R join S join T", &["a", "b", "s", "c", "t", "d"], true),
];

fn random_pred(rng: &mut ChaCha8Rng, attrs: &[&str]) -> String {
    let a = attrs.choose(rng).unwrap();
    let op = ["=", "<>", "<", ">="].choose(rng).unwrap();
    format!("{a} {op} {}", rng.random_range(0..3))
}

fn random_leaf(rng: &mut ChaCha8Rng, three: bool) -> Leaf {
    let choices: Vec<_> = SOURCES.iter().filter(|s| three || !s.2).collect();
    let &&(source, attrs, _) = choices.choose(rng).unwrap();
    let n = rng.random_range(0..=2);
    Leaf {
        source,
        attrs,
        preds: (0..n).map(|_| random_pred(rng, attrs)).collect(),
        proj: "a",
    }
}

pub fn random_query(rng: &mut ChaCha8Rng, three: bool, depth: u32) -> Q {
    if depth == 0 || rng.random_bool(0.3) {
        return Q::Leaf(random_leaf(rng, three));
    }
    let l = Box::new(random_query(rng, three, depth - 1));
    let r = Box::new(random_query(rng, three, depth - 1));
    if rng.random_bool(0.7) {
        Q::Minus(l, r)
    } else {
        Q::Union(l, r)
    }
}

impl Q {
    pub fn render(&self) -> String {
        match self {
            Q::Leaf(l) => {
                let mut s = l.source.to_string();
                if !l.preds.is_empty() {
                    s = format!("select[{}]({s})", l.preds.join(" and "));
                }
                s = format!("project[{}]({s})", l.proj);
                if l.proj != "a" {
                    s = format!("rename[{} -> a]({s})", l.proj);
                }
                s
            }
            Q::Union(a, b) => format!("({}) union ({})", a.render(), b.render()),
            Q::Minus(a, b) => format!("({}) minus ({})", a.render(), b.render()),
        }
    }

    fn leaves_mut(&mut self) -> Vec<&mut Leaf> {
        match self {
            Q::Leaf(l) => vec![l],
            Q::Union(a, b) | Q::Minus(a, b) => {
                let mut v = a.leaves_mut();
                v.extend(b.leaves_mut());
                v
            }
        }
    }

    fn count_minus(&self) -> usize {
        match self {
            Q::Leaf(_) => 0,
            Q::Union(a, b) => a.count_minus() + b.count_minus(),
            Q::Minus(a, b) => 1 + a.count_minus() + b.count_minus(),
        }
    }

    /// Swaps the operands of the `i`-th difference in preorder.
    fn flip_minus(&mut self, i: &mut usize) -> bool {
        match self {
            Q::Leaf(_) => false,
            Q::Union(a, b) => a.flip_minus(i) || b.flip_minus(i),
            Q::Minus(a, b) => {
                if *i == 0 {
                    std::mem::swap(a, b);
                    return true;
                }
                *i -= 1;
                a.flip_minus(i) || b.flip_minus(i)
            }
        }
    }
}

/// The error kinds students make: a dropped predicate, swapped difference
/// operands, or a wrong projected attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    DropPredicate,
    FlipDifference,
    WrongProjection,
}

pub fn mutate(rng: &mut ChaCha8Rng, q: &Q) -> (Q, Mutation) {
    let mut out = q.clone();
    for _ in 0..8 {
        let m = *[Mutation::DropPredicate, Mutation::FlipDifference, Mutation::WrongProjection]
            .choose(rng)
            .unwrap();
        match m {
            Mutation::DropPredicate => {
                let mut leaves: Vec<&mut Leaf> = out.leaves_mut().into_iter().filter(|l| !l.preds.is_empty()).collect();
                if let Some(i) = (!leaves.is_empty()).then(|| rng.random_range(0..leaves.len())) {
                    let l = &mut leaves[i];
                    let j = rng.random_range(0..l.preds.len());
                    l.preds.remove(j);
                    return (out, m);
                }
            }
            Mutation::FlipDifference => {
                let n = out.count_minus();
                if n > 0 {
                    out.flip_minus(&mut rng.random_range(0..n));
                    return (out, m);
                }
            }
            Mutation::WrongProjection => {
                let mut leaves = out.leaves_mut();
                let i = rng.random_range(0..leaves.len());
                let l = &mut leaves[i];
                let others: Vec<&'static str> = l.attrs.iter().copied().filter(|a| *a != l.proj).collect();
                l.proj = others.choose(rng).unwrap();
                return (out, m);
            }
        }
    }
    // single-leaf query without predicates or differences
    let mut leaves = out.leaves_mut();
    let l = &mut leaves[0];
    l.proj = if l.proj == "a" { l.attrs.iter().find(|a| **a != "a").unwrap() } else { "a" };
    (out, Mutation::WrongProjection)
}

pub struct Case {
    pub seed: u64,
    pub db: Database,
    pub q1: TypedQuery,
    pub q2: TypedQuery,
    pub text: (String, String),
    pub mutation: Mutation,
}

pub fn case(seed: u64) -> Case {
    let mut rng = rng(seed);
    let shape = Shape {
        three: rng.random_bool(0.5),
        fk: rng.random_bool(0.6),
    };
    let db = random_db(&mut rng, shape);
    let q = random_query(&mut rng, shape.three, 2);
    let (m, mutation) = mutate(&mut rng, &q);
    let text = (q.render(), m.render());
    let (q1, q2) = validate_pair(parse(&text.0).unwrap(), parse(&text.1).unwrap(), &db)
        .unwrap_or_else(|e| panic!("seed {seed}: {e}\n{}\n{}", text.0, text.1));
    Case {
        seed,
        db,
        q1,
        q2,
        text,
        mutation,
    }
}

pub fn no_params() -> BTreeMap<String, Value> {
    BTreeMap::new()
}

/// Size of the smallest FK-closed subinstance where the plain results differ,
/// by exhaustive enumeration. Independent of the finder.
pub fn exhaustive_min(c: &Case) -> Option<usize> {
    use cexplain_core::catalog::check_constraints;
    use cexplain_core::eval::eval_plain;
    let ids: Vec<_> = c.db.ids().collect();
    let mut best: Option<usize> = None;
    for mask in 0u32..(1 << ids.len()) {
        let k = mask.count_ones() as usize;
        if best.is_some_and(|b| k >= b) {
            continue;
        }
        let set: cexplain_core::IdSet = ids
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, &id)| id)
            .collect();
        let Ok(sub) = c.db.restrict(&set) else { continue };
        if !check_constraints(&sub).is_empty() {
            continue;
        }
        if eval_plain(&sub, &c.q1).unwrap().rows != eval_plain(&sub, &c.q2).unwrap().rows {
            best = Some(k);
        }
    }
    best
}

/// Names of tuples present in a set, for messages.
pub fn names(db: &Database, ids: &cexplain_core::IdSet) -> BTreeSet<String> {
    ids.iter().map(|&id| db.alias(id)).collect()
}
