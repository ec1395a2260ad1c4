//! Counterexample search strategies and the dispatcher.
//!
//! Every strategy ends in the same verification step: the returned
//! subinstance (with its parameter setting) must make the two queries
//! disagree and must satisfy every integrity constraint.

mod aggregate;
mod boolean;
mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use aggregate::{agg_basic, agg_heuristic, group_constraints, GroupConstraint};
pub use boolean::{basic, brute_force, fastpath, opt_sigma};
pub use report::{CounterexampleView, Report, TableView, Verdict};

use crate::catalog::{check_constraints, CatalogError, Database, IdSet};
use crate::eval::{eval_query, EvalError, Relation};
use crate::provenance::{ExprId, ProvStore, DEFAULT_DNF_CAP};
use crate::ra::{bind_some, classify, Query, QueryClass, QueryError, TypedQuery};
use crate::solver::{
    emit_smtlib, solve_with_params, Budget, ExternalSolver, MinOnesProblem, Model, SolveError,
};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Auto,
    Basic,
    OptSigma,
    AggBasic,
    AggParam,
    AggHeuristic,
    Fastpath,
    BruteForce,
}

impl Strategy {
    pub const ALL: [Strategy; 8] = [
        Strategy::Auto,
        Strategy::Basic,
        Strategy::OptSigma,
        Strategy::AggBasic,
        Strategy::AggParam,
        Strategy::AggHeuristic,
        Strategy::Fastpath,
        Strategy::BruteForce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Auto => "auto",
            Strategy::Basic => "basic",
            Strategy::OptSigma => "opt_sigma",
            Strategy::AggBasic => "agg_basic",
            Strategy::AggParam => "agg_param",
            Strategy::AggHeuristic => "agg_heuristic",
            Strategy::Fastpath => "fastpath",
            Strategy::BruteForce => "brute_force",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum SolverChoice {
    #[default]
    Native,
    External(ExternalSolver),
}

#[derive(Debug, Clone)]
pub struct FindOptions {
    pub strategy: Strategy,
    /// Models tried per tuple by the enumerating variant of `basic`.
    pub max_trials: usize,
    /// `basic` enumerates up to `max_trials` models per tuple in the
    /// symmetric difference instead of optimizing.
    pub legacy_enumerate: bool,
    /// Lets HAVING parameters take other values (`agg_basic`, heuristic).
    pub parameterize: bool,
    pub brute_cap: usize,
    pub timeout: Option<Duration>,
    pub solver: SolverChoice,
    pub dnf_cap: usize,
    pub heuristic_retries: usize,
    /// Render the winning problem as SMT-LIB text.
    pub emit_smt: bool,
}

impl Default for FindOptions {
    fn default() -> Self {
        FindOptions {
            strategy: Strategy::Auto,
            max_trials: 128,
            legacy_enumerate: false,
            parameterize: false,
            brute_cap: 16,
            timeout: Some(crate::solver::DEFAULT_TIMEOUT),
            solver: SolverChoice::Native,
            dnf_cap: DEFAULT_DNF_CAP,
            heuristic_retries: 32,
            emit_smt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FindError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("{0}")]
    Catalog(String),
    #[error("queries agree on the test database")]
    QueriesAgree,
    #[error("strategy does not apply to class {0}")]
    NotEligible(String),
    #[error("heuristic does not apply: {0}")]
    NotHeuristicEligible(String),
    #[error("no distinguishing model after {0} attempts")]
    RetriesExhausted(usize),
    #[error("database has {size} tuples, brute force is capped at {cap}")]
    CapExceeded { size: usize, cap: usize },
    #[error("no counterexample among the first {0} models")]
    NoModelFound(usize),
}

impl FindError {
    pub fn is_timeout(&self) -> bool {
        matches!(self, FindError::Solve(SolveError::Timeout(_)))
    }
}

impl From<CatalogError> for FindError {
    fn from(e: CatalogError) -> Self {
        FindError::Catalog(e.to_string())
    }
}

/// How far the returned size is known to be from the optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guarantee {
    /// Smallest over all subinstances (and parameter settings, if freed).
    Global,
    /// Smallest witness for the chosen output tuple.
    PerTuple,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub raw_eval: f64,
    pub prov_eval: f64,
    pub solve: f64,
}

impl Timings {
    fn add(slot: &mut f64, since: Instant) {
        *slot += since.elapsed().as_secs_f64() * 1000.0;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub ids: IdSet,
    /// Parameter values the queries are compared under.
    pub params: BTreeMap<String, Value>,
    /// The output tuple whose provenance produced the result, if any.
    pub witness: Option<Vec<Value>>,
    pub strategy: String,
    pub verified: bool,
    pub guarantee: Guarantee,
    pub timings: Timings,
    pub smt: Option<String>,
}

impl Counterexample {
    pub fn size(&self) -> usize {
        self.ids.len()
    }
}

/// Per-call state shared by the strategies.
pub(crate) struct Ctx<'a> {
    pub db: &'a Database,
    pub q1: &'a TypedQuery,
    pub q2: &'a TypedQuery,
    pub params: &'a BTreeMap<String, Value>,
    pub opts: &'a FindOptions,
    pub budget: Budget,
    pub timings: Timings,
}

impl<'a> Ctx<'a> {
    fn new(
        db: &'a Database,
        q1: &'a TypedQuery,
        q2: &'a TypedQuery,
        params: &'a BTreeMap<String, Value>,
        opts: &'a FindOptions,
    ) -> Self {
        Ctx {
            db,
            q1,
            q2,
            params,
            opts,
            budget: Budget::new(opts.timeout),
            timings: Timings::default(),
        }
    }

    /// Both queries with every parameter bound to its given value.
    fn bound(&self) -> Result<(Query, Query), FindError> {
        Ok((bind_all(self.db, self.q1, self.params)?, bind_all(self.db, self.q2, self.params)?))
    }

    fn solve(&mut self, p: &MinOnesProblem<'_>) -> Result<Model, FindError> {
        let t = Instant::now();
        let r = solve_on(self.db, &self.opts.solver, p, &self.budget);
        Timings::add(&mut self.timings.solve, t);
        r
    }

    fn smt(&self, p: &MinOnesProblem<'_>) -> Option<String> {
        self.opts.emit_smt.then(|| emit_smtlib(p, &|id| self.db.alias(id)))
    }

    fn check_time(&self) -> Result<(), FindError> {
        if self.budget.expired() {
            return Err(self.budget.timeout().into());
        }
        Ok(())
    }

    fn finish(
        &mut self,
        ids: IdSet,
        params: BTreeMap<String, Value>,
        witness: Option<Vec<Value>>,
        strategy: String,
        guarantee: Guarantee,
        smt: Option<String>,
    ) -> Result<Counterexample, FindError> {
        let verified = verify(self.db, self.q1, self.q2, &ids, &params)?;
        Ok(Counterexample {
            ids,
            params,
            witness,
            strategy,
            verified,
            guarantee,
            timings: self.timings,
            smt,
        })
    }
}

pub(crate) fn solve_on(
    db: &Database,
    solver: &SolverChoice,
    p: &MinOnesProblem<'_>,
    budget: &Budget,
) -> Result<Model, FindError> {
    Ok(match solver {
        SolverChoice::Native => solve_with_params(p, budget)?,
        SolverChoice::External(s) => s.solve(p, &|id| db.alias(id), budget)?,
    })
}

/// Binds the given values; every parameter of `q` must have one.
pub(crate) fn bind_all(db: &Database, q: &TypedQuery, params: &BTreeMap<String, Value>) -> Result<Query, FindError> {
    let b = bind_some(q, params, db.schemas())?;
    if let Some(p) = b.params.first() {
        return Err(QueryError::MissingParam(p.clone()).into());
    }
    Ok(b.ast)
}

/// Foreign-key implications for the variables of `roots` and everything
/// they may need transitively.
pub(crate) fn fk_constraints(db: &Database, store: &mut ProvStore, roots: &[ExprId]) -> Result<Vec<ExprId>, FindError> {
    let vars: IdSet = store.vars_of(roots).into_iter().collect();
    let graph = db.fk_graph();
    let up = graph.upward(&vars);
    Ok(graph.implications(store, &up)?)
}

/// Plain results of both queries on the subinstance `ids`.
pub fn results_on(
    db: &Database,
    q1: &TypedQuery,
    q2: &TypedQuery,
    ids: &IdSet,
    params: &BTreeMap<String, Value>,
) -> Result<(Relation, Relation), FindError> {
    let sub = db.restrict(ids)?;
    let r1 = eval_query(&sub, &bind_all(db, q1, params)?)?;
    let r2 = eval_query(&sub, &bind_all(db, q2, params)?)?;
    Ok((r1, r2))
}

/// Whether `ids` under `params` is a valid counterexample.
pub fn verify(
    db: &Database,
    q1: &TypedQuery,
    q2: &TypedQuery,
    ids: &IdSet,
    params: &BTreeMap<String, Value>,
) -> Result<bool, FindError> {
    let (r1, r2) = results_on(db, q1, q2, ids, params)?;
    Ok(r1.rows != r2.rows && check_constraints(&db.restrict(ids)?).is_empty())
}

/// Classes the DNF fast path is exact for.
pub fn fastpath_eligible(c: QueryClass) -> bool {
    matches!(
        c,
        QueryClass::SJ | QueryClass::SPU | QueryClass::JUstar | QueryClass::SPJU | QueryClass::SPJUDstar
    )
}

fn run_strategy(ctx: &mut Ctx<'_>, strategy: Strategy) -> Result<Counterexample, FindError> {
    match strategy {
        Strategy::Basic => boolean::basic_in(ctx),
        Strategy::OptSigma => boolean::opt_sigma_in(ctx),
        Strategy::Fastpath => boolean::fastpath_in(ctx),
        Strategy::BruteForce => boolean::brute_force_in(ctx),
        Strategy::AggBasic => aggregate::agg_basic_in(ctx, ctx.opts.parameterize),
        Strategy::AggParam => aggregate::agg_basic_in(ctx, true),
        Strategy::AggHeuristic => aggregate::agg_heuristic_in(ctx),
        Strategy::Auto => {
            let (c1, c2) = (classify(&ctx.q1.ast), classify(&ctx.q2.ast));
            if c1 == QueryClass::AGG || c2 == QueryClass::AGG {
                match aggregate::agg_heuristic_in(ctx) {
                    Err(FindError::NotHeuristicEligible(_) | FindError::RetriesExhausted(_)) => {
                        aggregate::agg_basic_in(ctx, ctx.opts.parameterize)
                    }
                    r => r,
                }
            } else if fastpath_eligible(c1) && fastpath_eligible(c2) {
                boolean::fastpath_in(ctx)
            } else {
                boolean::opt_sigma_in(ctx)
            }
        }
    }
}

/// Runs `opts.strategy` and assembles a [`Report`]. Agreeing queries are a
/// verdict, not an error.
pub fn find(
    db: &Database,
    q1: &TypedQuery,
    q2: &TypedQuery,
    params: &BTreeMap<String, Value>,
    opts: &FindOptions,
) -> Result<Report, FindError> {
    let mut ctx = Ctx::new(db, q1, q2, params, opts);
    let t = Instant::now();
    let (b1, b2) = ctx.bound()?;
    let agree = eval_query(db, &b1)?.rows == eval_query(db, &b2)?.rows;
    Timings::add(&mut ctx.timings.raw_eval, t);
    if agree {
        return Ok(Report::agree(opts.strategy, ctx.timings));
    }
    match run_strategy(&mut ctx, opts.strategy) {
        Ok(mut cex) => {
            if opts.emit_smt && cex.smt.is_none() {
                cex.smt = smt_fallback(db, q1, q2, params, opts);
            }
            Report::from_counterexample(db, q1, q2, cex)
        }
        Err(FindError::QueriesAgree) => Ok(Report::agree(opts.strategy, ctx.timings)),
        Err(e) => Err(e),
    }
}

/// Strategies without a solver problem of their own (fast path, brute
/// force) report the problem `opt_sigma` or `agg_basic` would solve.
fn smt_fallback(
    db: &Database,
    q1: &TypedQuery,
    q2: &TypedQuery,
    params: &BTreeMap<String, Value>,
    opts: &FindOptions,
) -> Option<String> {
    let agg = q1.ast.has_aggregate() || q2.ast.has_aggregate();
    let o = FindOptions {
        strategy: if agg { Strategy::AggBasic } else { Strategy::OptSigma },
        emit_smt: true,
        ..opts.clone()
    };
    find_counterexample(db, q1, q2, params, &o).ok().and_then(|c| c.smt)
}

/// Runs one strategy directly and returns its counterexample.
pub fn find_counterexample(
    db: &Database,
    q1: &TypedQuery,
    q2: &TypedQuery,
    params: &BTreeMap<String, Value>,
    opts: &FindOptions,
) -> Result<Counterexample, FindError> {
    let mut ctx = Ctx::new(db, q1, q2, params, opts);
    run_strategy(&mut ctx, opts.strategy)
}
