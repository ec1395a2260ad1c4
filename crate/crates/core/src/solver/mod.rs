//! Min-ones satisfiability over provenance constraints.
//!
//! The native backend is a branch-and-bound search over the tuple variables
//! in id order, trying `false` before `true` and pruning on cost. Problems
//! with aggregate comparisons and integer parameters go through the same
//! search; parameter values are fixed once every variable has a value.
//! [`emit_smtlib`] renders any problem for an external optimizing solver.

mod circuit;
mod external;
mod search;
mod smt;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use thiserror::Error;

pub use external::{parse_solver_output, ExternalSolver, SolverOutput};
pub use smt::emit_smtlib;

use crate::catalog::{IdSet, TupleId};
use crate::eval::AggFormula;
use crate::provenance::{Assignment, ExprId, ProvStore};

pub const DEFAULT_PARAM_BOUND: i128 = 1_000_000;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("constraints are unsatisfiable")]
    Unsat,
    #[error("solver gave up after {0:?}")]
    Timeout(Duration),
    #[error("problem has aggregate constraints or parameters")]
    NotBoolean,
    #[error("external solver: {0}")]
    External(String),
}

/// An integer parameter of the problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub lo: i128,
    pub hi: i128,
    /// Value to stay close to, usually the one the queries were given.
    pub preferred: Option<i128>,
}

impl ParamSpec {
    pub fn new(name: &str, preferred: Option<i128>) -> ParamSpec {
        ParamSpec {
            name: name.to_string(),
            lo: -DEFAULT_PARAM_BOUND,
            hi: DEFAULT_PARAM_BOUND,
            preferred,
        }
    }
}

pub type ParamAssignment = BTreeMap<String, i128>;

#[derive(Debug, Clone)]
pub struct MinOnesProblem<'s> {
    pub store: &'s ProvStore,
    /// Sorted, distinct.
    pub vars: Vec<TupleId>,
    pub hard: Vec<ExprId>,
    pub formula: Option<AggFormula>,
    pub params: Vec<ParamSpec>,
}

impl<'s> MinOnesProblem<'s> {
    pub fn new(store: &'s ProvStore, hard: Vec<ExprId>) -> Self {
        let mut p = MinOnesProblem {
            store,
            vars: Vec::new(),
            hard,
            formula: None,
            params: Vec::new(),
        };
        p.refresh_vars();
        p
    }

    pub fn with_formula(mut self, f: AggFormula) -> Self {
        self.formula = Some(f);
        self.refresh_vars();
        self
    }

    pub fn with_params(mut self, params: Vec<ParamSpec>) -> Self {
        self.params = params;
        self
    }

    /// Adds variables that appear in no constraint (they stay false in
    /// every optimal model but are declared in the SMT-LIB output).
    pub fn declare_vars(&mut self, ids: impl IntoIterator<Item = TupleId>) {
        self.vars.extend(ids);
        self.vars.sort_unstable();
        self.vars.dedup();
    }

    fn refresh_vars(&mut self) {
        let mut roots = self.hard.clone();
        if let Some(f) = &self.formula {
            f.prov_roots(&mut roots);
        }
        let vars = self.store.vars_of(&roots);
        self.declare_vars(vars);
    }

    pub fn is_boolean(&self) -> bool {
        self.formula.is_none() && self.params.is_empty()
    }

    /// Whether `ids` (with `params`) satisfies every constraint.
    pub fn check(&self, ids: &IdSet, params: &ParamAssignment) -> bool {
        let mut roots = self.hard.clone();
        if let Some(f) = &self.formula {
            f.prov_roots(&mut roots);
        }
        let vals = self.store.evaluate_roots(&roots, |id| ids.contains(&id));
        if !vals[..self.hard.len()].iter().all(|&b| b) {
            return false;
        }
        let Some(f) = &self.formula else {
            return true;
        };
        let truth: std::collections::HashMap<ExprId, bool> = roots.into_iter().zip(vals).collect();
        let rat: BTreeMap<String, crate::Rational> = params
            .iter()
            .map(|(k, v)| (k.clone(), crate::Rational::from_integer(*v)))
            .collect();
        f.eval_with(&|e| truth[&e], &rat).unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Model {
    /// True variables in id order.
    pub true_ids: Vec<TupleId>,
    pub cost: usize,
    pub params: ParamAssignment,
}

impl Model {
    pub fn id_set(&self) -> IdSet {
        self.true_ids.iter().copied().collect()
    }

    pub fn assignment(&self, vars: &[TupleId]) -> Assignment {
        Assignment::from_set(&self.id_set(), vars.iter().copied())
    }
}

/// Wall-clock budget shared by the phases of one solve.
#[derive(Debug, Clone, Copy)]
pub struct Budget {
    pub start: Instant,
    pub limit: Option<Duration>,
}

impl Budget {
    pub fn new(limit: Option<Duration>) -> Budget {
        Budget {
            start: Instant::now(),
            limit,
        }
    }

    pub fn unlimited() -> Budget {
        Budget::new(None)
    }

    pub fn expired(&self) -> bool {
        self.limit.is_some_and(|l| self.start.elapsed() >= l)
    }

    pub fn timeout(&self) -> SolveError {
        SolveError::Timeout(self.limit.unwrap_or_default())
    }
}

impl Default for Budget {
    fn default() -> Self {
        Budget::new(Some(DEFAULT_TIMEOUT))
    }
}

/// Minimum-cost model of a pure Boolean problem; ties go to the
/// lexicographically smallest set of true ids.
pub fn solve_min_ones(p: &MinOnesProblem<'_>, budget: &Budget) -> Result<Model, SolveError> {
    if !p.is_boolean() {
        return Err(SolveError::NotBoolean);
    }
    search::optimize(p, budget)
}

/// Minimum-cost model for which some parameter setting satisfies the
/// formula. Among the settings for that model the one closest to the
/// preferred values is returned.
pub fn solve_with_params(p: &MinOnesProblem<'_>, budget: &Budget) -> Result<Model, SolveError> {
    search::optimize(p, budget)
}

/// Up to `limit` distinct models in search order (`false` before `true`
/// in id order), as a solver would produce them under blocking clauses.
pub fn enumerate_models(p: &MinOnesProblem<'_>, limit: usize, budget: &Budget) -> Result<Vec<Model>, SolveError> {
    if !p.is_boolean() {
        return Err(SolveError::NotBoolean);
    }
    search::enumerate(p, limit, budget)
}
