//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails outside the recorded known gap.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use cexplain_core::catalog::{check_constraints, load_database, SchemaDoc};
use cexplain_core::eval::{eval_plain, symmetric_diff, tuple_prov, prov_of_tuple, AggFormula};
use cexplain_core::finder::{
    agg_basic, agg_heuristic, basic, brute_force, find, find_counterexample, group_constraints, opt_sigma,
    Counterexample, FindOptions, Strategy,
};
use cexplain_core::provenance::{to_dnf, ExprId, ProvStore, DEFAULT_DNF_CAP};
use cexplain_core::ra::{CmpOp, TypedQuery};
use cexplain_core::solver::{solve_min_ones, Budget, MinOnesProblem};
use cexplain_core::testing::*;
use cexplain_core::{Database, IdSet, Value};

use common::{case, exhaustive_min, no_params};

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
    /// Failure is the documented, unattainable golden and nothing else.
    known_gap: bool,
}

/// Counterexamples returned anywhere in the suite, for the constraint check.
#[derive(Default)]
struct Returned {
    total: usize,
    violating: Vec<String>,
    chain: usize,
}

impl Returned {
    fn record(&mut self, db: &Database, ids: &IdSet, label: &str) {
        self.total += 1;
        let ok = db.restrict(ids).map(|s| check_constraints(&s).is_empty()).unwrap_or(false);
        if !ok {
            self.violating.push(label.to_string());
        }
    }
}

fn set(db: &Database, names: &[&str]) -> IdSet {
    names.iter().map(|n| db.parse_id(n).unwrap()).collect()
}

fn pair(db: &Database, a: &str, b: &str) -> (TypedQuery, TypedQuery) {
    (TypedQuery::parse(a, db).unwrap(), TypedQuery::parse(b, db).unwrap())
}

fn opts(strategy: Strategy) -> FindOptions {
    FindOptions {
        strategy,
        ..FindOptions::default()
    }
}

fn aliases(db: &Database, ids: &IdSet) -> String {
    let v: Vec<String> = ids.iter().map(|&id| db.alias(id)).collect();
    format!("{{{}}}", v.join(","))
}

fn running_example_exactness(seen: &mut Returned) -> Outcome {
    let start = Instant::now();
    let db = running_example();
    let (q1, q2) = pair(&db, ONE_CS, SOME_CS);
    let allowed: Vec<IdSet> = [["t1", "t4", "t5"], ["t3", "t9", "t10"], ["t3", "t9", "t11"], ["t3", "t10", "t11"]]
        .iter()
        .map(|s| set(&db, s))
        .collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for s in [Strategy::Basic, Strategy::Fastpath, Strategy::BruteForce] {
        match find_counterexample(&db, &q1, &q2, &no_params(), &opts(s)) {
            Ok(c) => {
                seen.record(&db, &c.ids, s.name());
                pass &= c.verified && c.size() == 3 && allowed.contains(&c.ids);
                parts.push(format!("{s}={}", aliases(&db, &c.ids)));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{s}: {e}"));
            }
        }
    }
    let el = start.elapsed();
    pass &= el < Duration::from_secs(1);
    Outcome {
        name: "running example exactness",
        pass,
        detail: format!("{} in {el:.2?}", parts.join(" ")),
        known_gap: false,
    }
}

/// Truth-table equivalence of `e` with a positive DNF over tuple aliases.
fn equivalent(db: &Database, store: &ProvStore, e: ExprId, dnf: &[&[&str]]) -> bool {
    let ids: Vec<_> = db.ids().collect();
    let terms: Vec<IdSet> = dnf.iter().map(|t| set(db, t)).collect();
    (0u32..1 << ids.len()).all(|mask| {
        let present: IdSet = ids
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, &id)| id)
            .collect();
        let want = terms.iter().any(|t| t.is_subset(&present));
        store.holds_on(e, &present) == want
    })
}

fn provenance_goldens() -> Outcome {
    let start = Instant::now();
    let db = running_example();
    let (q1, q2) = pair(&db, ONE_CS, SOME_CS);
    let mut store = ProvStore::new();
    let row = |n: &str| vec![Value::text(n), Value::text("CS")];
    let mary = tuple_prov(&db, &q2.ast, &row("Mary"), &mut store).unwrap();
    let mary_diff = prov_of_tuple(&db, &q2.ast, &q1.ast, &row("Mary"), &mut store).unwrap();
    let jesse_diff = prov_of_tuple(&db, &q2.ast, &q1.ast, &row("Jesse"), &mut store).unwrap();
    let checks = [
        ("Q2 Mary", mary, vec![&["t1", "t4"][..], &["t1", "t5"]]),
        ("Q2-Q1 Mary", mary_diff, vec![&["t1", "t4", "t5"][..]]),
        (
            "Q2-Q1 Jesse",
            jesse_diff,
            vec![&["t3", "t9", "t10"][..], &["t3", "t9", "t11"], &["t3", "t10", "t11"]],
        ),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, e, want) in &checks {
        let ok = equivalent(&db, &store, *e, want) && to_dnf(&store, *e, DEFAULT_DNF_CAP).is_ok();
        pass &= ok;
        parts.push(format!("{label} {}", if ok { "ok" } else { "differs" }));
    }
    let el = start.elapsed();
    pass &= el < Duration::from_secs(1);
    Outcome {
        name: "provenance goldens",
        pass,
        detail: format!("{} in {el:.2?}", parts.join(", ")),
        known_gap: false,
    }
}

/// Smallest subinstance where the plain results differ, by enumeration.
fn exhaustive_running(db: &Database, q1: &TypedQuery, q2: &TypedQuery, params: &BTreeMap<String, Value>) -> usize {
    use cexplain_core::ra::bind_params;
    let b1 = bind_params(q1, params, db.schemas()).unwrap();
    let b2 = bind_params(q2, params, db.schemas()).unwrap();
    let ids: Vec<_> = db.ids().collect();
    (0u32..1 << ids.len())
        .filter_map(|mask| {
            let s: IdSet = ids
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &id)| id)
                .collect();
            let sub = db.restrict(&s).ok()?;
            if !check_constraints(&sub).is_empty() {
                return None;
            }
            (eval_plain(&sub, &b1).unwrap().rows != eval_plain(&sub, &b2).unwrap().rows).then_some(s.len())
        })
        .min()
        .unwrap()
}

fn aggregate_goldens(seen: &mut Returned) -> Outcome {
    let start = Instant::now();
    let db = running_example();
    let none = no_params();
    let num_cs = |v: i128| BTreeMap::from([("num_CS".to_string(), Value::Int(v))]);
    let mut parts = Vec::new();
    let mut ok_rest = true;

    let (avg_cs, avg_all) = pair(&db, AVG_CS, AVG_ALL);
    let c = agg_basic(&db, &avg_cs, &avg_all, &none, &FindOptions::default(), false).unwrap();
    seen.record(&db, &c.ids, "agg_basic");
    let floor = exhaustive_running(&db, &avg_cs, &avg_all, &none);
    let avg_ok = c.size() == 1 && c.ids == set(&db, &["t6"]);
    parts.push(format!(
        "AVG CS vs all: {} (expected {{t6}}; exhaustive minimum {floor})",
        aliases(&db, &c.ids)
    ));
    // the returned size must still be the true optimum
    ok_rest &= c.verified && c.size() == floor;

    let mut store = ProvStore::new();
    let cons = group_constraints(&db, &avg_cs.ast, &avg_all.ast, &mut store).unwrap();
    let skeleton = cons
        .iter()
        .find(|g| g.key == vec![Value::text("Mary")])
        .is_some_and(|g| match &g.formula {
            AggFormula::Or(parts) if parts.len() == 2 => {
                matches!(parts[0], AggFormula::Xor(..))
                    && matches!(&parts[1], AggFormula::And(b) if matches!(b.last(), Some(AggFormula::Atom(a)) if a.op == CmpOp::Ne))
            }
            _ => false,
        });
    ok_rest &= skeleton;
    parts.push(format!("Mary skeleton {}", if skeleton { "ok" } else { "differs" }));

    let (h1, h2) = pair(&db, AVG_CS_HAVING, AVG_ALL_HAVING);
    let plain = agg_basic(&db, &h1, &h2, &num_cs(3), &FindOptions::default(), false).unwrap();
    let param = agg_basic(&db, &h1, &h2, &num_cs(3), &FindOptions::default(), true).unwrap();
    seen.record(&db, &plain.ids, "agg_basic");
    seen.record(&db, &param.ids, "agg_param");
    let having_ok = plain.verified
        && plain.ids == set(&db, &["t1", "t4", "t5", "t6"])
        && param.verified
        && param.ids == set(&db, &["t1", "t6"])
        && param.params == num_cs(1);
    ok_rest &= having_ok;
    parts.push(format!(
        "HAVING {} / parameterized {} num_CS={}",
        aliases(&db, &plain.ids),
        aliases(&db, &param.ids),
        param.params.get("num_CS").map_or("?".into(), |v| v.to_string())
    ));

    let h = agg_heuristic(&db, &avg_cs, &avg_all, &none, &FindOptions::default()).unwrap();
    seen.record(&db, &h.ids, "agg_heuristic");
    let heur_ok = h.verified && (h.ids == set(&db, &["t1", "t6"]) || h.ids == set(&db, &["t2", "t8"]));
    ok_rest &= heur_ok;
    parts.push(format!("heuristic {}", aliases(&db, &h.ids)));

    let el = start.elapsed();
    ok_rest &= el < Duration::from_secs(2);
    Outcome {
        name: "aggregate goldens",
        pass: avg_ok && ok_rest,
        detail: format!("{} in {el:.2?}", parts.join("; ")),
        known_gap: !avg_ok && ok_rest && floor > 1,
    }
}

struct Corpus {
    cases: Vec<common::Case>,
    seeds_tried: u64,
}

fn differing_corpus(n: usize) -> Corpus {
    let mut cases = Vec::new();
    let mut seed = 0;
    while cases.len() < n && seed < 50 * n as u64 {
        let c = case(seed);
        seed += 1;
        if symmetric_diff(&c.db, &c.q1, &c.q2).is_ok() {
            cases.push(c);
        }
    }
    Corpus { cases, seeds_tried: seed }
}

fn oracle_equivalence(corpus: &Corpus, seen: &mut Returned) -> Outcome {
    let start = Instant::now();
    let o = FindOptions::default();
    let mut mismatches = Vec::new();
    let mut opt_equal = 0;
    let mut opt_smaller = 0;
    for c in &corpus.cases {
        let chain = c.db.schemas().len() == 3 && c.db.schemas()[2].foreign_keys.len() == 1;
        let b = basic(&c.db, &c.q1, &c.q2, &no_params(), &o);
        let bf = brute_force(&c.db, &c.q1, &c.q2, &no_params(), &o);
        let os = opt_sigma(&c.db, &c.q1, &c.q2, &no_params(), &o);
        let (Ok(b), Ok(bf), Ok(os)) = (b, bf, os) else {
            mismatches.push(format!("seed {} errored", c.seed));
            continue;
        };
        for (x, label) in [(&b, "basic"), (&bf, "brute_force"), (&os, "opt_sigma")] {
            seen.record(&c.db, &x.ids, &format!("{label} seed {}", c.seed));
            if chain {
                seen.chain += 1;
            }
        }
        let floor = exhaustive_min(c);
        if b.size() != bf.size() || Some(bf.size()) != floor || !b.verified || !bf.verified || !os.verified {
            mismatches.push(format!("seed {}: basic {} brute {} exhaustive {floor:?}", c.seed, b.size(), bf.size()));
        }
        match os.size().cmp(&bf.size()) {
            std::cmp::Ordering::Equal => opt_equal += 1,
            std::cmp::Ordering::Less => opt_smaller += 1,
            std::cmp::Ordering::Greater => {}
        }
    }
    let n = corpus.cases.len();
    let mut kinds: BTreeMap<String, usize> = BTreeMap::new();
    for c in &corpus.cases {
        *kinds.entry(format!("{:?}", c.mutation)).or_default() += 1;
    }
    let ratio = opt_equal as f64 / n.max(1) as f64;
    let el = start.elapsed();
    let pass = n >= 200 && mismatches.is_empty() && opt_smaller == 0 && ratio >= 0.9 && el < Duration::from_secs(300);
    let mut detail = format!(
        "{n} differing cases from {} seeds {kinds:?}, basic = brute force = exhaustive in all, opt_sigma equal in {opt_equal} ({:.1}%), smaller in {opt_smaller}, {el:.2?}",
        corpus.seeds_tried,
        100.0 * ratio
    );
    if !mismatches.is_empty() {
        detail = format!("{detail}; mismatches: {}", mismatches.join(", "));
    }
    Outcome {
        name: "oracle equivalence",
        pass,
        detail,
        known_gap: false,
    }
}

fn solver_optimality(corpus: &Corpus) -> Outcome {
    let start = Instant::now();
    let mut problems = 0;
    let mut wrong = Vec::new();
    let mut legacy_smaller = Vec::new();
    for c in &corpus.cases {
        let (l, r) = symmetric_diff(&c.db, &c.q1, &c.q2).unwrap();
        let mut store = ProvStore::new();
        let mut roots = Vec::new();
        for row in &l.rows {
            roots.push(prov_of_tuple(&c.db, &c.q1.ast, &c.q2.ast, row, &mut store).unwrap());
        }
        for row in &r.rows {
            roots.push(prov_of_tuple(&c.db, &c.q2.ast, &c.q1.ast, row, &mut store).unwrap());
        }
        let graph = c.db.fk_graph();
        for &root in &roots {
            let vars: IdSet = store.vars(root).into_iter().collect();
            let up = graph.upward(&vars);
            let mut hard = graph.implications(&mut store, &up).unwrap();
            hard.insert(0, root);
            let p = MinOnesProblem::new(&store, hard.clone());
            if p.vars.len() > 15 {
                continue;
            }
            problems += 1;
            let got = solve_min_ones(&p, &Budget::unlimited()).map(|m| m.cost).ok();
            let n = p.vars.len();
            let exhaustive = (0u32..1 << n)
                .filter(|mask| {
                    let present: IdSet = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| p.vars[i]).collect();
                    hard.iter().all(|&h| store.holds_on(h, &present))
                })
                .map(|m| m.count_ones() as usize)
                .min();
            if got != exhaustive {
                wrong.push(format!("seed {}: solver {got:?} exhaustive {exhaustive:?}", c.seed));
            }
        }
        let legacy = FindOptions {
            strategy: Strategy::Basic,
            legacy_enumerate: true,
            max_trials: 128,
            ..FindOptions::default()
        };
        let opt = basic(&c.db, &c.q1, &c.q2, &no_params(), &FindOptions::default()).unwrap();
        if let Ok(lc) = find_counterexample(&c.db, &c.q1, &c.q2, &no_params(), &legacy) {
            if lc.size() < opt.size() {
                legacy_smaller.push(format!("seed {}", c.seed));
            }
        }
    }
    let el = start.elapsed();
    let pass = wrong.is_empty() && legacy_smaller.is_empty() && problems > 0 && el < Duration::from_secs(120);
    let mut detail = format!("{problems} problems with at most 15 variables match exhaustive minimum, legacy never smaller, {el:.2?}");
    if !pass {
        detail = format!("{problems} problems; wrong: {wrong:?}; legacy smaller: {legacy_smaller:?}; {el:.2?}");
    }
    Outcome {
        name: "solver optimality",
        pass,
        detail,
        known_gap: false,
    }
}

fn smt_text() -> Outcome {
    let db = running_example();
    let (q1, q2) = pair(&db, ONE_CS, SOME_CS);
    let o = FindOptions {
        strategy: Strategy::OptSigma,
        emit_smt: true,
        ..FindOptions::default()
    };
    let r = find(&db, &q1, &q2, &no_params(), &o).unwrap();
    let text = r.smt.unwrap_or_default();
    let b2i = text.lines().any(|l| l == "(define-fun b2i ((x Bool)) Int (ite x 1 0))");
    let minimize = text.matches("(minimize").count();

    let (h1, h2) = pair(&db, AVG_CS_HAVING, AVG_ALL_HAVING);
    let o = FindOptions {
        strategy: Strategy::AggParam,
        emit_smt: true,
        ..FindOptions::default()
    };
    let params = BTreeMap::from([("num_CS".to_string(), Value::Int(3))]);
    let r = find(&db, &h1, &h2, &params, &o).unwrap();
    let agg_text = r.smt.unwrap_or_default();
    let param_decl = agg_text.lines().any(|l| l == "(declare-const num_CS Int)");
    Outcome {
        name: "SMT-LIB text",
        pass: b2i && minimize == 1 && param_decl,
        detail: format!("b2i line {b2i}, minimize clauses {minimize}, num_CS declaration {param_decl}"),
        known_gap: false,
    }
}

/// `students` students; all but `special` take at most one CS course.
fn synthetic(students: usize, registrations: usize, special: usize) -> Database {
    let mut rng = common::rng(7);
    use rand::Rng;
    let majors = ["CS", "ECON", "MATH", "PHYS"];
    let mut s_rows = Vec::with_capacity(students);
    let mut r_rows = Vec::with_capacity(registrations);
    let per = registrations / students;
    for i in 0..students {
        let name = format!("s{i:06}");
        s_rows.push(vec![Value::text(&name), Value::text(majors[rng.random_range(0..majors.len())])]);
        let cs_courses = if i < special { 2 } else { rng.random_range(0..=1) };
        for k in 0..per {
            let (course, dept) = if k < cs_courses {
                (format!("CS{k}"), "CS")
            } else {
                (format!("EC{k}"), "ECON")
            };
            r_rows.push(vec![
                Value::text(&name),
                Value::text(&course),
                Value::text(dept),
                Value::Int(rng.random_range(50..=100)),
            ]);
        }
    }
    let tables = HashMap::from([("Student".to_string(), s_rows), ("Registration".to_string(), r_rows)]);
    Database::from_rows(SchemaDoc::parse(RUNNING_SCHEMA).unwrap(), tables).unwrap()
}

fn scaling(seen: &mut Returned) -> Outcome {
    let db = synthetic(20_000, 80_000, 3);
    let (q1, q2) = pair(&db, ONE_CS, SOME_CS);
    let start = Instant::now();
    let r = find(&db, &q1, &q2, &no_params(), &opts(Strategy::OptSigma));
    let el = start.elapsed();
    match r {
        Ok(r) => {
            let c = r.counterexample.as_ref().unwrap();
            let ids: IdSet = c.ids.iter().map(|s| db.parse_id(s).unwrap()).collect();
            seen.record(&db, &ids, "opt_sigma 100k");
            let t = &r.timings_ms;
            let timed = t.raw_eval > 0.0 && t.prov_eval > 0.0 && t.solve > 0.0;
            Outcome {
                name: "scaling",
                pass: el < Duration::from_secs(120) && c.verified && c.size <= 5 && timed,
                detail: format!(
                    "{} tuples, size {} in {el:.2?} (raw {:.0} ms, provenance {:.0} ms, solve {:.2} ms)",
                    db.len(),
                    c.size,
                    t.raw_eval,
                    t.prov_eval,
                    t.solve
                ),
                known_gap: false,
            }
        }
        Err(e) => Outcome {
            name: "scaling",
            pass: false,
            detail: format!("{e} after {el:.2?}"),
            known_gap: false,
        },
    }
}

fn chain_instance(seen: &mut Returned) -> Outcome {
    // Dept <- Course <- Enroll: an enrollment needs its course and the course its department
    let schema = r#"{"relations": [
        {"name": "Dept", "attributes": [{"name": "dept", "type": "text"}], "key": ["dept"]},
        {"name": "Course", "attributes": [{"name": "course", "type": "text"}, {"name": "dept", "type": "text"}],
         "key": ["course"],
         "foreign_keys": [{"columns": ["dept"], "references": {"relation": "Dept", "columns": ["dept"]}}]},
        {"name": "Enroll", "attributes": [{"name": "name", "type": "text"}, {"name": "course", "type": "text"}],
         "key": ["name", "course"],
         "foreign_keys": [{"columns": ["course"], "references": {"relation": "Course", "columns": ["course"]}}]}
    ]}"#;
    let tables = HashMap::from([
        ("Dept".to_string(), "dept\nCS\nECON\n".to_string()),
        ("Course".to_string(), "course,dept\n216,CS\n230,CS\n208D,ECON\n".to_string()),
        ("Enroll".to_string(), "name,course\nMary,216\nMary,208D\nJohn,230\nAnn,208D\n".to_string()),
    ]);
    let db = load_database(schema, &tables).unwrap();
    let q1 = "project[name](Enroll join select[dept = 'CS'](Course))";
    let q2 = "project[name](Enroll)";
    let (q1, q2) = pair(&db, q1, q2);
    let mut ok = true;
    let mut sizes = Vec::new();
    for s in [Strategy::Basic, Strategy::Fastpath, Strategy::OptSigma, Strategy::BruteForce] {
        let c: Counterexample = find_counterexample(&db, &q1, &q2, &no_params(), &opts(s)).unwrap();
        seen.record(&db, &c.ids, s.name());
        seen.chain += 1;
        // Ann's ECON enrollment drags in its course and department
        ok &= c.size() == 3 && c.verified;
        sizes.push(c.size());
    }
    Outcome {
        name: "two-level foreign keys",
        pass: ok,
        detail: format!("sizes {sizes:?}"),
        known_gap: false,
    }
}

fn main() {
    let mut seen = Returned::default();
    let corpus = differing_corpus(240);
    let mut out = vec![
        running_example_exactness(&mut seen),
        provenance_goldens(),
        aggregate_goldens(&mut seen),
        oracle_equivalence(&corpus, &mut seen),
        solver_optimality(&corpus),
        smt_text(),
        scaling(&mut seen),
    ];
    let chain = chain_instance(&mut seen);
    out.push(Outcome {
        name: "constraint safety",
        pass: seen.violating.is_empty() && seen.chain > 0 && chain.pass,
        detail: format!(
            "{} of {} counterexamples satisfy all constraints ({} on two-level chains; {}: {})",
            seen.total - seen.violating.len(),
            seen.total,
            seen.chain,
            chain.name,
            chain.detail
        ),
        known_gap: false,
    });
    let mut unexpected = 0;
    for o in &out {
        let tag = match (o.pass, o.known_gap) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known gap)",
            (false, false) => {
                unexpected += 1;
                "FAIL"
            }
        };
        println!("{tag:<16} {}: {}", o.name, o.detail);
    }
    if unexpected > 0 {
        eprintln!("{unexpected} acceptance criteria failed");
        std::process::exit(1);
    }
}
