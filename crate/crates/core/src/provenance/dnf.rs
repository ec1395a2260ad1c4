use std::collections::HashMap;

use super::{Assignment, ExprId, Node, ProvError, ProvStore};
use crate::catalog::{IdSet, TupleId};

/// Default bound on intermediate minterm counts.
pub const DEFAULT_DNF_CAP: usize = 100_000;

/// A conjunction of literals. Both lists are sorted and disjoint.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Minterm {
    pub pos: Vec<TupleId>,
    pub neg: Vec<TupleId>,
}

impl Minterm {
    fn single(id: TupleId, positive: bool) -> Minterm {
        if positive {
            Minterm { pos: vec![id], neg: vec![] }
        } else {
            Minterm { pos: vec![], neg: vec![id] }
        }
    }

    fn empty() -> Minterm {
        Minterm { pos: vec![], neg: vec![] }
    }

    fn len(&self) -> usize {
        self.pos.len() + self.neg.len()
    }

    /// Conjunction of two minterms, `None` if contradictory.
    fn conjoin(&self, other: &Minterm) -> Option<Minterm> {
        let pos = merge(&self.pos, &other.pos);
        let neg = merge(&self.neg, &other.neg);
        if intersects(&pos, &neg) {
            return None;
        }
        Some(Minterm { pos, neg })
    }

    fn subsumes(&self, other: &Minterm) -> bool {
        is_subset(&self.pos, &other.pos) && is_subset(&self.neg, &other.neg)
    }

    pub fn holds(&self, a: &Assignment) -> Result<bool, ProvError> {
        for &id in &self.pos {
            if !a.get(id).ok_or(ProvError::UnboundVariable(id))? {
                return Ok(false);
            }
        }
        for &id in &self.neg {
            if a.get(id).ok_or(ProvError::UnboundVariable(id))? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn positive_set(&self) -> IdSet {
        self.pos.iter().copied().collect()
    }
}

fn merge(a: &[TupleId], b: &[TupleId]) -> Vec<TupleId> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

fn intersects(a: &[TupleId], b: &[TupleId]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

fn is_subset(small: &[TupleId], big: &[TupleId]) -> bool {
    let mut j = 0;
    for x in small {
        while j < big.len() && big[j] < *x {
            j += 1;
        }
        if j == big.len() || big[j] != *x {
            return false;
        }
        j += 1;
    }
    true
}

/// Disjunction of minterms, absorbed and sorted.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dnf {
    pub minterms: Vec<Minterm>,
}

impl Dnf {
    pub fn evaluate(&self, a: &Assignment) -> Result<bool, ProvError> {
        for m in &self.minterms {
            if m.holds(a)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    pub fn is_false(&self) -> bool {
        self.minterms.is_empty()
    }

    pub fn is_true(&self) -> bool {
        self.minterms.iter().any(|m| m.len() == 0)
    }

    /// Builds a DNF from raw minterms without absorbing, for comparisons.
    pub fn from_minterms_unabsorbed(minterms: Vec<Minterm>) -> Dnf {
        Dnf { minterms }
    }

    pub fn from_positive_sets(sets: &[&[TupleId]]) -> Dnf {
        let mut minterms: Vec<Minterm> = sets
            .iter()
            .map(|s| {
                let mut pos = s.to_vec();
                pos.sort();
                pos.dedup();
                Minterm { pos, neg: vec![] }
            })
            .collect();
        absorb(&mut minterms);
        Dnf { minterms }
    }
}

/// Removes duplicates and minterms subsumed by smaller ones, then sorts.
fn absorb(terms: &mut Vec<Minterm>) {
    terms.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    terms.dedup();
    let mut kept: Vec<Minterm> = Vec::with_capacity(terms.len());
    for m in terms.drain(..) {
        if !kept.iter().any(|k| k.subsumes(&m)) {
            kept.push(m);
        }
    }
    kept.sort();
    *terms = kept;
}

/// Expands `e` into an equivalent DNF with negations on literals only.
/// Fails once any intermediate result exceeds `cap` minterms.
pub fn to_dnf(store: &ProvStore, e: ExprId, cap: usize) -> Result<Dnf, ProvError> {
    let order = store.topo_order(&[e]);
    // only the polarities actually reached from the root
    let mut needed: std::collections::HashSet<(ExprId, bool)> = std::collections::HashSet::new();
    needed.insert((e, true));
    for &n in order.iter().rev() {
        for positive in [true, false] {
            if !needed.contains(&(n, positive)) {
                continue;
            }
            match store.node(n) {
                Node::Not(c) => {
                    needed.insert((*c, !positive));
                }
                Node::And(cs) | Node::Or(cs) => {
                    for c in cs.iter() {
                        needed.insert((*c, positive));
                    }
                }
                _ => {}
            }
        }
    }
    let mut memo: HashMap<(ExprId, bool), Vec<Minterm>> = HashMap::new();
    for n in order {
        for positive in [true, false] {
            if needed.contains(&(n, positive)) {
                let terms = expand(store, n, positive, &memo, cap)?;
                memo.insert((n, positive), terms);
            }
        }
    }
    Ok(Dnf {
        minterms: memo.remove(&(e, true)).unwrap(),
    })
}

fn expand(
    store: &ProvStore,
    n: ExprId,
    positive: bool,
    memo: &HashMap<(ExprId, bool), Vec<Minterm>>,
    cap: usize,
) -> Result<Vec<Minterm>, ProvError> {
    let get = |c: &ExprId, p: bool| &memo[&(*c, p)];
    Ok(match (store.node(n), positive) {
        (Node::True, true) | (Node::False, false) => vec![Minterm::empty()],
        (Node::True, false) | (Node::False, true) => vec![],
        (Node::Var(id), p) => vec![Minterm::single(*id, p)],
        (Node::Not(c), p) => get(c, !p).clone(),
        (Node::Or(cs), true) | (Node::And(cs), false) => {
            let mut out = Vec::new();
            for c in cs.iter() {
                out.extend(get(c, positive).iter().cloned());
                if out.len() > cap {
                    absorb(&mut out);
                    if out.len() > cap {
                        return Err(ProvError::DnfOverflow(cap));
                    }
                }
            }
            absorb(&mut out);
            out
        }
        (Node::And(cs), true) | (Node::Or(cs), false) => {
            let mut acc = vec![Minterm::empty()];
            for c in cs.iter() {
                let rhs = get(c, positive);
                if acc.len().saturating_mul(rhs.len()) > cap.saturating_mul(16) {
                    return Err(ProvError::DnfOverflow(cap));
                }
                let mut next = Vec::with_capacity(acc.len() * rhs.len());
                for a in &acc {
                    for b in rhs {
                        if let Some(m) = a.conjoin(b) {
                            next.push(m);
                        }
                    }
                }
                absorb(&mut next);
                if next.len() > cap {
                    return Err(ProvError::DnfOverflow(cap));
                }
                acc = next;
                if acc.is_empty() {
                    break;
                }
            }
            acc
        }
    })
}

/// Positive literals of the minterm with fewest positive literals; ties go
/// to the lexicographically smallest sorted id sequence.
pub fn min_minterm(d: &Dnf) -> Result<IdSet, ProvError> {
    d.minterms
        .iter()
        .min_by(|a, b| a.pos.len().cmp(&b.pos.len()).then_with(|| a.pos.cmp(&b.pos)))
        .map(Minterm::positive_set)
        .ok_or(ProvError::EmptyDnf)
}
