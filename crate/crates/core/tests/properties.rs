mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use proptest::prelude::*;

use cexplain_core::catalog::{check_constraints, fk_implications, ViolationKind};
use cexplain_core::eval::{
    eval_agg_prov, eval_plain, eval_prov, eval_prov_all, symmetric_diff, AggAtom, AggFormula, AggTerm,
};
use cexplain_core::finder::{
    agg_basic, basic, brute_force, fastpath, fastpath_eligible, find_counterexample, opt_sigma, verify, FindOptions,
    Strategy,
};
use cexplain_core::provenance::{to_dnf, Dnf, ExprId, ProvStore};
use cexplain_core::ra::{classify, parse, strip_differences, validate_pair, CmpOp, QueryClass, TypedQuery};
use cexplain_core::solver::{
    emit_smtlib, enumerate_models, solve_min_ones, solve_with_params, Budget, MinOnesProblem, ParamSpec,
};
use cexplain_core::{Database, IdSet, TupleId, Value};

use common::{case, no_params, random_db, random_query, rng, Case, Shape, Q};

fn subset(db: &Database, mask: u32) -> IdSet {
    db.ids().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, id)| id).collect()
}

fn all_subsets(db: &Database) -> impl Iterator<Item = IdSet> + '_ {
    (0u32..1 << db.len()).map(move |m| subset(db, m))
}

fn shape(seed: u64) -> Shape {
    Shape {
        three: seed.is_multiple_of(2),
        fk: !seed.is_multiple_of(3),
    }
}

fn without_minus(q: Q) -> Q {
    match q {
        Q::Leaf(l) => Q::Leaf(l),
        Q::Union(a, b) | Q::Minus(a, b) => Q::Union(Box::new(without_minus(*a)), Box::new(without_minus(*b))),
    }
}

fn typed(db: &Database, text: &str) -> TypedQuery {
    TypedQuery::parse(text, db).unwrap_or_else(|e| panic!("{e}: {text}"))
}

/// A random circuit over `n` variables of relation 0.
fn random_expr(store: &mut ProvStore, r: &mut rand_chacha::ChaCha8Rng, n: u32, depth: u32) -> ExprId {
    use rand::Rng;
    if depth == 0 || r.random_bool(0.25) {
        let v = store.var(TupleId::new(0, r.random_range(1..=n)));
        return if r.random_bool(0.2) { store.not(v) } else { v };
    }
    let k = r.random_range(2..=3);
    let kids: Vec<ExprId> = (0..k).map(|_| random_expr(store, r, n, depth - 1)).collect();
    match r.random_range(0..4) {
        0 => store.and(kids),
        1 => store.or(kids),
        2 => store.xor(kids[0], kids[1]),
        _ => {
            let a = store.and(kids);
            store.not(a)
        }
    }
}

fn exhaustive_holds(store: &ProvStore, roots: &[ExprId], vars: &[TupleId]) -> Option<usize> {
    (0u32..1 << vars.len())
        .filter(|mask| {
            let s: IdSet = (0..vars.len()).filter(|i| mask >> i & 1 == 1).map(|i| vars[i]).collect();
            roots.iter().all(|&r| store.holds_on(r, &s))
        })
        .map(|m| m.count_ones() as usize)
        .min()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn restriction_keeps_keys_and_matches_fk_implications(seed in any::<u64>(), mask in any::<u32>()) {
        let db = random_db(&mut rng(seed), shape(seed));
        let s = subset(&db, mask);
        let sub = db.restrict(&s).unwrap();
        let report = check_constraints(&sub);
        for kind in [ViolationKind::Key, ViolationKind::NotNull, ViolationKind::FunctionalDependency] {
            prop_assert_eq!(report.of_kind(kind).count(), 0);
        }
        let fk_ok = report.of_kind(ViolationKind::ForeignKey).count() == 0;
        let mut store = ProvStore::new();
        let imps = fk_implications(&db, &mut store).unwrap();
        let holds = imps.iter().all(|&e| store.holds_on(e, &s));
        prop_assert_eq!(fk_ok, holds);
        prop_assert_eq!(sub.restrict(&s).unwrap(), sub);
    }

    #[test]
    fn rendered_queries_parse_back(seed in any::<u64>()) {
        let c = case(seed);
        for q in [&c.q1, &c.q2] {
            let again = parse(&q.ast.to_string()).unwrap();
            prop_assert_eq!(&again, &q.ast);
        }
    }

    #[test]
    fn dropping_differences_stays_within_spju(seed in any::<u64>()) {
        let c = case(seed);
        for q in [&c.q1, &c.q2] {
            prop_assert!(classify(&strip_differences(&q.ast)) <= QueryClass::SPJU);
        }
    }

    #[test]
    fn validated_pairs_evaluate_to_the_same_schema(seed in any::<u64>()) {
        let c = case(seed);
        let r1 = eval_plain(&c.db, &c.q1).unwrap();
        let r2 = eval_plain(&c.db, &c.q2).unwrap();
        prop_assert_eq!(r1.columns, r2.columns);
    }

    #[test]
    fn dnf_is_equivalent_and_absorption_is_sound(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut store = ProvStore::new();
        let e = random_expr(&mut store, &mut r, 10, 4);
        let dnf = to_dnf(&store, e, usize::MAX).unwrap();
        let vars: Vec<TupleId> = (1..=10).map(|i| TupleId::new(0, i)).collect();
        for mask in 0u32..1 << 10 {
            let s: IdSet = (0..10).filter(|i| mask >> i & 1 == 1).map(|i| vars[i]).collect();
            let a = cexplain_core::provenance::Assignment::from_set(&s, vars.iter().copied());
            prop_assert_eq!(dnf.evaluate(&a).unwrap(), store.holds_on(e, &s));
        }

        use rand::Rng;
        let sets: Vec<Vec<TupleId>> = (0..r.random_range(1..6))
            .map(|_| {
                let mut v: Vec<TupleId> = vars.iter().copied().filter(|_| r.random_bool(0.3)).collect();
                v.sort();
                v
            })
            .collect();
        let refs: Vec<&[TupleId]> = sets.iter().map(Vec::as_slice).collect();
        let absorbed = Dnf::from_positive_sets(&refs);
        let raw = Dnf::from_minterms_unabsorbed(
            sets.iter().map(|p| cexplain_core::provenance::Minterm { pos: p.clone(), neg: vec![] }).collect(),
        );
        prop_assert!(absorbed.minterms.len() <= raw.minterms.len());
        for mask in 0u32..1 << 10 {
            let s: IdSet = (0..10).filter(|i| mask >> i & 1 == 1).map(|i| vars[i]).collect();
            let a = cexplain_core::provenance::Assignment::from_set(&s, vars.iter().copied());
            prop_assert_eq!(absorbed.evaluate(&a).unwrap(), raw.evaluate(&a).unwrap());
        }
    }

    #[test]
    fn hash_consing_reuses_nodes(seed in any::<u64>()) {
        let mut store = ProvStore::new();
        let a = random_expr(&mut store, &mut rng(seed), 8, 4);
        let before = store.node_count();
        let b = random_expr(&mut store, &mut rng(seed), 8, 4);
        prop_assert_eq!(a, b);
        prop_assert_eq!(store.node_count(), before);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Membership on every subinstance is decided by the annotation.
    #[test]
    fn provenance_is_sound(seed in any::<u64>()) {
        let c = case(seed);
        let mut store = ProvStore::new();
        let monotone = classify(&c.q1.ast) <= QueryClass::SPJU;
        let full = eval_plain(&c.db, &c.q1).unwrap();
        let annotated = eval_prov(&c.db, &c.q1, &mut store).unwrap();
        let plain_rows: Vec<_> = full.rows.clone();
        let prov_rows: Vec<_> = annotated.rows.iter().map(|(r, _)| r.clone()).collect();
        prop_assert_eq!(&plain_rows, &prov_rows);
        if monotone {
            for (_, e) in &annotated.rows {
                prop_assert!(store.is_negation_free(*e));
            }
        }
        for s in all_subsets(&c.db) {
            let sub = eval_plain(&c.db.restrict(&s).unwrap(), &c.q1).unwrap();
            for (row, e) in &annotated.rows {
                prop_assert_eq!(sub.contains(row), store.holds_on(*e, &s), "seed {} row {:?}", seed, row);
            }
            if monotone {
                prop_assert!(sub.rows.iter().all(|r| full.contains(r)));
            }
        }
    }

    /// The symbolic aggregate evaluated on a subinstance matches plain evaluation.
    #[test]
    fn aggregates_are_sound(seed in any::<u64>(), which in 0usize..6) {
        let db = random_db(&mut rng(seed), shape(seed));
        let text = [
            "groupby[a; SUM(c) as x, COUNT(s) as n](R join S)",
            "groupby[a; AVG(c) as x](select[c <> 1](S))",
            "groupby[b; MAX(a) as x, MIN(a) as y](R)",
            "select[n >= 2](groupby[a; COUNT(s) as n](S))",
            "project[a](select[x > 1](groupby[a; AVG(c) as x](S)))",
            "groupby[; COUNT(*) as n, SUM(c) as x](S)",
        ][which];
        let q = typed(&db, text);
        let mut store = ProvStore::new();
        let sym = eval_agg_prov(&db, &q.ast, &mut store).unwrap();
        for s in all_subsets(&db) {
            let mut want = eval_plain(&db.restrict(&s).unwrap(), &q).unwrap().rows;
            let mut got = sym.concrete(&store, &s, &BTreeMap::new()).unwrap();
            want.sort();
            got.sort();
            prop_assert_eq!(got, want, "{} on {:?}", text, common::names(&db, &s));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn min_ones_is_optimal_and_sound(seed in any::<u64>(), n in 2u32..=12) {
        let mut store = ProvStore::new();
        let mut r = rng(seed);
        let hard: Vec<ExprId> = (0..2).map(|_| random_expr(&mut store, &mut r, n, 3)).collect();
        let p = MinOnesProblem::new(&store, hard.clone());
        let want = exhaustive_holds(&store, &hard, &p.vars);
        match solve_min_ones(&p, &Budget::unlimited()) {
            Ok(m) => {
                prop_assert_eq!(Some(m.cost), want);
                let s = m.id_set();
                prop_assert!(hard.iter().all(|&h| store.holds_on(h, &s)));
            }
            Err(_) => prop_assert_eq!(want, None),
        }
        let models = enumerate_models(&p, 64, &Budget::unlimited()).unwrap_or_default();
        let distinct: BTreeSet<Vec<TupleId>> = models.iter().map(|m| m.id_set().to_vec()).collect();
        prop_assert_eq!(distinct.len(), models.len());
        for m in &models {
            let s = m.id_set();
            prop_assert!(hard.iter().all(|&h| store.holds_on(h, &s)));
        }
        let names = |id: TupleId| format!("v{}", id.ordinal);
        prop_assert_eq!(emit_smtlib(&p, &names), emit_smtlib(&p.clone(), &names));
    }

    /// `count(present vars) op @k` is satisfiable for some small k whenever a
    /// grid search finds a witness.
    #[test]
    fn parameters_are_found_when_they_exist(seed in any::<u64>(), n in 1u32..=6, op in 0usize..6) {
        use cexplain_core::eval::AggValueExpr;
        use cexplain_core::ra::AggFunc;
        use cexplain_core::{AttributeType, Rational};
        let mut store = ProvStore::new();
        let mut r = rng(seed);
        let guard = random_expr(&mut store, &mut r, n, 2);
        let terms: Vec<(ExprId, Rational)> =
            (1..=n).map(|i| (store.var(TupleId::new(0, i)), Rational::from_integer(1))).collect();
        let op = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge][op];
        let count = AggTerm::Agg(AggValueExpr { func: AggFunc::Count, ty: AttributeType::Integer, terms });
        let f = AggFormula::and(vec![
            AggFormula::Prov(guard),
            AggFormula::Atom(AggAtom { lhs: count, op, rhs: AggTerm::Param("k".into()) }),
        ]);
        let p = MinOnesProblem::new(&store, vec![])
            .with_formula(f)
            .with_params(vec![ParamSpec { name: "k".into(), lo: -2, hi: 8, preferred: None }]);
        let vars = p.vars.clone();
        let mut exists = false;
        for mask in 0u32..1 << vars.len() {
            let s: IdSet = (0..vars.len()).filter(|i| mask >> i & 1 == 1).map(|i| vars[i]).collect();
            for k in -2..=8 {
                exists |= p.check(&s, &BTreeMap::from([("k".to_string(), k)]));
            }
        }
        let got = solve_with_params(&p, &Budget::unlimited());
        prop_assert_eq!(got.is_ok(), exists);
        if let Ok(m) = got {
            prop_assert!(p.check(&m.id_set(), &m.params));
        }
    }
}

/// Sizes from basic, brute force, fastpath (when eligible) and opt_sigma.
fn sizes(c: &Case) -> Option<(usize, usize, Option<usize>, usize)> {
    let o = FindOptions::default();
    let p = no_params();
    // only pairs that differ on the given database are in scope
    symmetric_diff(&c.db, &c.q1, &c.q2).ok()?;
    let b = basic(&c.db, &c.q1, &c.q2, &p, &o).unwrap();
    let bf = brute_force(&c.db, &c.q1, &c.q2, &p, &o).unwrap();
    let eligible = fastpath_eligible(classify(&c.q1.ast)) && fastpath_eligible(classify(&c.q2.ast));
    let fp = eligible.then(|| fastpath(&c.db, &c.q1, &c.q2, &p, &o).unwrap());
    let os = opt_sigma(&c.db, &c.q1, &c.q2, &p, &o).unwrap();
    for x in [Some(&b), Some(&bf), fp.as_ref(), Some(&os)].into_iter().flatten() {
        assert!(x.verified, "seed {}", c.seed);
        assert!(verify(&c.db, &c.q1, &c.q2, &x.ids, &x.params).unwrap());
    }
    Some((b.size(), bf.size(), fp.map(|f| f.size()), os.size()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_strategies_meet_the_oracle(seed in any::<u64>()) {
        let c = case(seed);
        if let Some((b, bf, fp, os)) = sizes(&c) {
            prop_assert_eq!(b, bf, "{:?}", c.text);
            if let Some(fp) = fp {
                prop_assert_eq!(fp, bf, "{:?}", c.text);
            }
            prop_assert!(os >= bf);
        }
    }

    #[test]
    fn fastpath_matches_opt_sigma_without_differences(seed in any::<u64>()) {
        let mut r = rng(seed);
        let three = seed.is_multiple_of(2);
        let db = random_db(&mut r, shape(seed));
        let q = without_minus(random_query(&mut r, three, 2));
        let (m, _) = common::mutate(&mut r, &q);
        let (q1, q2) = validate_pair(parse(&q.render()).unwrap(), parse(&m.render()).unwrap(), &db).unwrap();
        prop_assume!(fastpath_eligible(classify(&q1.ast)) && fastpath_eligible(classify(&q2.ast)));
        let c = Case { seed, db, q1, q2, text: (q.render(), m.render()), mutation: common::Mutation::WrongProjection };
        if let Some((_, bf, fp, os)) = sizes(&c) {
            prop_assert_eq!(fp, Some(os), "{:?}", c.text);
            prop_assert_eq!(fp, Some(bf));
        }
    }

    #[test]
    fn identical_inputs_give_identical_counterexamples(seed in any::<u64>(), s in 0usize..4) {
        let c = case(seed);
        let strategy = [Strategy::Basic, Strategy::Fastpath, Strategy::OptSigma, Strategy::Auto][s];
        let o = FindOptions { strategy, ..FindOptions::default() };
        let a = find_counterexample(&c.db, &c.q1, &c.q2, &no_params(), &o);
        let b = find_counterexample(&c.db, &c.q1, &c.q2, &no_params(), &o);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.ids, b.ids);
                prop_assert_eq!(a.params, b.params);
                prop_assert_eq!(a.strategy, b.strategy);
            }
            (a, b) => prop_assert_eq!(a.is_ok(), b.is_ok()),
        }
    }

    /// Letting the parameter move never makes the counterexample larger.
    #[test]
    fn parameterizing_never_grows_the_counterexample(seed in any::<u64>(), k in 0i128..4, variant in 0usize..3) {
        let db = random_db(&mut rng(seed), shape(seed));
        let q1 = "project[a, x](select[n >= @k](groupby[a; SUM(c) as x, COUNT(s) as n](R join S)))";
        let q2 = [
            "project[a, x](select[n >= @k](groupby[a; SUM(c) as x, COUNT(s) as n](select[c <> 1](R join S))))",
            "project[a, x](select[n > @k](groupby[a; SUM(c) as x, COUNT(s) as n](R join S)))",
            "project[a, x](select[n >= @k](groupby[a; SUM(c) as x, COUNT(s) as n](S)))",
        ][variant];
        let (q1, q2) = (typed(&db, q1), typed(&db, q2));
        let params = HashMap::from([("k".to_string(), Value::Int(k))]).into_iter().collect();
        let o = FindOptions::default();
        let fixed = agg_basic(&db, &q1, &q2, &params, &o, false);
        let free = agg_basic(&db, &q1, &q2, &params, &o, true);
        if let Ok(fixed) = fixed {
            let free = free.unwrap();
            prop_assert!(free.size() <= fixed.size());
            prop_assert!(fixed.verified && free.verified);
            prop_assert!(check_constraints(&db.restrict(&free.ids).unwrap()).is_empty());
        }
    }
}

#[test]
fn monotone_annotations_over_all_rows_are_negation_free() {
    for seed in 0..64 {
        let mut r = rng(seed);
        let db = random_db(&mut r, shape(seed));
        let q = without_minus(random_query(&mut r, seed.is_multiple_of(2), 2));
        let q = parse(&q.render()).unwrap();
        let mut store = ProvStore::new();
        for (_, e) in eval_prov_all(&db, &q, &mut store).unwrap().rows {
            assert!(store.is_negation_free(e));
        }
    }
}
