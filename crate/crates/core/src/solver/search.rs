//! Depth-first branch and bound over the compiled circuit.

use super::circuit::Circuit;
use super::{Budget, MinOnesProblem, Model, SolveError};
use crate::value::Rational;

/// Parameter combinations tried at one complete assignment.
const PARAM_COMBINATION_CAP: usize = 100_000;

struct State<'a, 'p> {
    c: Circuit,
    p: &'a MinOnesProblem<'p>,
    assign: Vec<Option<bool>>,
    gates: Vec<Option<bool>>,
    nodes: u64,
    budget: &'a Budget,
}

impl State<'_, '_> {
    fn tick(&mut self) -> Result<(), SolveError> {
        self.nodes += 1;
        if self.nodes % 256 == 1 && self.budget.expired() {
            return Err(self.budget.timeout());
        }
        Ok(())
    }

    fn status(&mut self) -> Option<bool> {
        self.c.gate_values(&self.assign, &mut self.gates);
        self.c.status(&self.gates, None)
    }

    /// Parameter values making the current complete assignment a model.
    fn resolve(&mut self) -> Option<Vec<i128>> {
        self.c.gate_values(&self.assign, &mut self.gates);
        if self.c.nparams == 0 {
            return (self.c.status(&self.gates, Some(&[])) == Some(true)).then(Vec::new);
        }
        let found = self.c.param_candidates(&self.gates);
        let mut lists = Vec::with_capacity(self.c.nparams);
        let mut prefs = Vec::with_capacity(self.c.nparams);
        for (spec, mut cands) in self.p.params.iter().zip(found) {
            let pref = spec.preferred.unwrap_or(0).clamp(spec.lo, spec.hi);
            cands.extend([pref, spec.lo, spec.hi]);
            cands.retain(|v| (spec.lo..=spec.hi).contains(v));
            cands.sort_by_key(|v| ((v - pref).abs(), *v));
            cands.dedup();
            lists.push(cands);
            prefs.push(pref);
        }
        let mut best: Option<(i128, Vec<i128>)> = None;
        let mut idx = vec![0usize; lists.len()];
        for _ in 0..PARAM_COMBINATION_CAP {
            let vals: Vec<i128> = idx.iter().zip(&lists).map(|(i, l)| l[*i]).collect();
            let dist: i128 = vals.iter().zip(&prefs).map(|(v, p)| (v - p).abs()).sum();
            let better = best.as_ref().is_none_or(|(d, b)| (dist, &vals) < (*d, b));
            if better {
                let rats: Vec<Rational> = vals.iter().map(|v| Rational::from_integer(*v)).collect();
                if self.c.status(&self.gates, Some(&rats)) == Some(true) {
                    best = Some((dist, vals));
                }
            }
            // odometer step
            let mut k = 0;
            loop {
                if k == idx.len() {
                    return best.map(|(_, v)| v);
                }
                idx[k] += 1;
                if idx[k] < lists[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
        best.map(|(_, v)| v)
    }

    /// Sets every open variable from `i` on to false and resolves.
    fn complete_false(&mut self, i: usize) -> Option<Vec<i128>> {
        for a in &mut self.assign[i..] {
            *a = Some(false);
        }
        let r = self.resolve();
        for a in &mut self.assign[i..] {
            *a = None;
        }
        r
    }

    fn min_cost(&mut self, i: usize, cost: usize, best: &mut Option<usize>) -> Result<(), SolveError> {
        self.tick()?;
        if best.is_some_and(|b| cost >= b) {
            return Ok(());
        }
        let status = self.status();
        if status == Some(false) {
            return Ok(());
        }
        if status == Some(true) || i == self.assign.len() {
            if self.complete_false(i).is_some() {
                *best = Some(cost);
            }
            return Ok(());
        }
        for (value, c) in [(false, cost), (true, cost + 1)] {
            self.assign[i] = Some(value);
            let r = self.min_cost(i + 1, c, best);
            self.assign[i] = None;
            r?;
        }
        Ok(())
    }

    /// First model of cost `k` with variables tried true first, which is
    /// the one with the lexicographically smallest true set.
    fn lex_first(&mut self, i: usize, cost: usize, k: usize) -> Result<Option<Vec<i128>>, SolveError> {
        self.tick()?;
        if cost > k {
            return Ok(None);
        }
        let status = self.status();
        if status == Some(false) {
            return Ok(None);
        }
        if status == Some(true) || i == self.assign.len() || cost == k {
            if let Some(params) = self.complete_false(i) {
                for a in &mut self.assign[i..] {
                    *a = Some(false);
                }
                return Ok(Some(params));
            }
            return Ok(None);
        }
        for (value, c) in [(true, cost + 1), (false, cost)] {
            self.assign[i] = Some(value);
            if let Some(r) = self.lex_first(i + 1, c, k)? {
                return Ok(Some(r));
            }
            self.assign[i] = None;
        }
        Ok(None)
    }

    fn model(&self, params: Vec<i128>) -> Model {
        let true_ids: Vec<_> = self
            .p
            .vars
            .iter()
            .zip(&self.assign)
            .filter(|(_, a)| **a == Some(true))
            .map(|(v, _)| *v)
            .collect();
        Model {
            cost: true_ids.len(),
            true_ids,
            params: self.p.params.iter().map(|s| s.name.clone()).zip(params).collect(),
        }
    }

    fn enumerate(&mut self, i: usize, limit: usize, out: &mut Vec<Model>) -> Result<(), SolveError> {
        if out.len() >= limit {
            return Ok(());
        }
        self.tick()?;
        if self.status() == Some(false) {
            return Ok(());
        }
        if i == self.assign.len() {
            out.push(self.model(Vec::new()));
            return Ok(());
        }
        for value in [false, true] {
            self.assign[i] = Some(value);
            let r = self.enumerate(i + 1, limit, out);
            self.assign[i] = None;
            r?;
        }
        Ok(())
    }
}

fn state<'a, 'p>(p: &'a MinOnesProblem<'p>, budget: &'a Budget) -> State<'a, 'p> {
    let c = Circuit::compile(p);
    State {
        assign: vec![None; c.nvars],
        gates: Vec::new(),
        c,
        p,
        nodes: 0,
        budget,
    }
}

pub(super) fn optimize(p: &MinOnesProblem<'_>, budget: &Budget) -> Result<Model, SolveError> {
    let mut s = state(p, budget);
    let mut best = None;
    s.min_cost(0, 0, &mut best)?;
    let k = best.ok_or(SolveError::Unsat)?;
    let params = s.lex_first(0, 0, k)?.expect("a model of the optimal cost exists");
    Ok(s.model(params))
}

pub(super) fn enumerate(p: &MinOnesProblem<'_>, limit: usize, budget: &Budget) -> Result<Vec<Model>, SolveError> {
    let mut s = state(p, budget);
    let mut out = Vec::new();
    s.enumerate(0, limit, &mut out)?;
    Ok(out)
}
