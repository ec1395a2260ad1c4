//! Boolean how-provenance.
//!
//! Expressions live in a [`ProvStore`], a hash-consing arena: structurally
//! identical nodes are interned once and referred to by [`ExprId`]. The
//! smart constructors fold constants, flatten nested `And`/`Or`, sort and
//! deduplicate operands and cancel double negation, so two constructions of
//! the same expression return the same id. Anything more expensive
//! (absorption, distribution) happens in [`to_dnf`].
//!
//! A store belongs to one analysis run. Building needs `&mut`; once built,
//! expressions can be read from many threads through `&ProvStore`.

mod dnf;
mod render;

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

pub use dnf::{min_minterm, to_dnf, Dnf, Minterm, DEFAULT_DNF_CAP};

use crate::catalog::{IdSet, TupleId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProvError {
    #[error("operator {op} does not take {got} operand(s)")]
    Arity { op: &'static str, got: usize },
    #[error("variable {0} has no value in the assignment")]
    UnboundVariable(TupleId),
    #[error("DNF expansion exceeded {0} minterms")]
    DnfOverflow(usize),
    #[error("DNF has no minterms")]
    EmptyDnf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExprId(u32);

impl ExprId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Node {
    False,
    True,
    Var(TupleId),
    Not(ExprId),
    And(Box<[ExprId]>),
    Or(Box<[ExprId]>),
}

/// Operator tags for the generic [`ProvStore::build`] entry point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuildOp {
    And,
    Or,
    Not,
    Var(TupleId),
    Const(bool),
}

#[derive(Debug, Clone)]
pub struct ProvStore {
    nodes: Vec<Node>,
    index: HashMap<Node, ExprId>,
}

impl Default for ProvStore {
    fn default() -> Self {
        Self::new()
    }
}

const FALSE: ExprId = ExprId(0);
const TRUE: ExprId = ExprId(1);

impl ProvStore {
    pub fn new() -> Self {
        let mut store = ProvStore {
            nodes: Vec::new(),
            index: HashMap::new(),
        };
        store.intern(Node::False);
        store.intern(Node::True);
        store
    }

    fn intern(&mut self, node: Node) -> ExprId {
        if let Some(&id) = self.index.get(&node) {
            return id;
        }
        let id = ExprId(u32::try_from(self.nodes.len()).expect("provenance store overflow"));
        self.nodes.push(node.clone());
        self.index.insert(node, id);
        id
    }

    /// Number of interned nodes, including the two constants.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, e: ExprId) -> &Node {
        &self.nodes[e.index()]
    }

    pub fn constant(&self, value: bool) -> ExprId {
        if value {
            TRUE
        } else {
            FALSE
        }
    }

    pub fn is_false(&self, e: ExprId) -> bool {
        e == FALSE
    }

    pub fn is_true(&self, e: ExprId) -> bool {
        e == TRUE
    }

    pub fn var(&mut self, id: TupleId) -> ExprId {
        self.intern(Node::Var(id))
    }

    pub fn not(&mut self, e: ExprId) -> ExprId {
        match self.node(e) {
            Node::False => TRUE,
            Node::True => FALSE,
            Node::Not(inner) => *inner,
            _ => self.intern(Node::Not(e)),
        }
    }

    pub fn and(&mut self, children: impl IntoIterator<Item = ExprId>) -> ExprId {
        self.nary(children, true)
    }

    pub fn or(&mut self, children: impl IntoIterator<Item = ExprId>) -> ExprId {
        self.nary(children, false)
    }

    pub fn and2(&mut self, a: ExprId, b: ExprId) -> ExprId {
        self.nary([a, b], true)
    }

    pub fn or2(&mut self, a: ExprId, b: ExprId) -> ExprId {
        self.nary([a, b], false)
    }

    /// `(a ∧ ¬b) ∨ (¬a ∧ b)`
    pub fn xor(&mut self, a: ExprId, b: ExprId) -> ExprId {
        let na = self.not(a);
        let nb = self.not(b);
        let l = self.and2(a, nb);
        let r = self.and2(na, b);
        self.or2(l, r)
    }

    fn nary(&mut self, children: impl IntoIterator<Item = ExprId>, conj: bool) -> ExprId {
        let (absorbing, identity) = if conj { (FALSE, TRUE) } else { (TRUE, FALSE) };
        let mut flat: Vec<ExprId> = Vec::new();
        for c in children {
            if c == absorbing {
                return absorbing;
            }
            if c == identity {
                continue;
            }
            match (&self.nodes[c.index()], conj) {
                (Node::And(cs), true) | (Node::Or(cs), false) => flat.extend_from_slice(cs),
                _ => flat.push(c),
            }
        }
        flat.sort_unstable();
        flat.dedup();
        // x ∧ ¬x = false, x ∨ ¬x = true
        for &c in &flat {
            if let Node::Not(inner) = self.nodes[c.index()] {
                if flat.binary_search(&inner).is_ok() {
                    return absorbing;
                }
            }
        }
        match flat.len() {
            0 => identity,
            1 => flat[0],
            _ => {
                let children = flat.into_boxed_slice();
                self.intern(if conj { Node::And(children) } else { Node::Or(children) })
            }
        }
    }

    /// Generic constructor with arity checking. `And`/`Or` take at least two
    /// operands, `Not` exactly one, variables and constants none.
    pub fn build(&mut self, op: BuildOp, children: &[ExprId]) -> Result<ExprId, ProvError> {
        let arity = |op: &'static str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(ProvError::Arity { op, got: children.len() })
            }
        };
        match op {
            BuildOp::And => arity("and", children.len() >= 2).map(|_| self.and(children.iter().copied())),
            BuildOp::Or => arity("or", children.len() >= 2).map(|_| self.or(children.iter().copied())),
            BuildOp::Not => arity("not", children.len() == 1).map(|_| self.not(children[0])),
            BuildOp::Var(id) => arity("var", children.is_empty()).map(|_| self.var(id)),
            BuildOp::Const(b) => arity("const", children.is_empty()).map(|_| self.constant(b)),
        }
    }

    fn children(&self, e: ExprId) -> &[ExprId] {
        match &self.nodes[e.index()] {
            Node::Not(c) => std::slice::from_ref(c),
            Node::And(cs) | Node::Or(cs) => cs,
            _ => &[],
        }
    }

    /// Nodes reachable from `roots`, children before parents.
    pub fn topo_order(&self, roots: &[ExprId]) -> Vec<ExprId> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        let mut stack: Vec<(ExprId, bool)> = roots.iter().rev().map(|&r| (r, false)).collect();
        while let Some((e, expanded)) = stack.pop() {
            if expanded {
                out.push(e);
                continue;
            }
            if !seen.insert(e) {
                continue;
            }
            stack.push((e, true));
            for &c in self.children(e).iter().rev() {
                if !seen.contains(&c) {
                    stack.push((c, false));
                }
            }
        }
        out
    }

    pub fn vars(&self, e: ExprId) -> BTreeSet<TupleId> {
        self.vars_of(&[e])
    }

    pub fn vars_of(&self, roots: &[ExprId]) -> BTreeSet<TupleId> {
        self.topo_order(roots)
            .into_iter()
            .filter_map(|n| match self.node(n) {
                Node::Var(id) => Some(*id),
                _ => None,
            })
            .collect()
    }

    pub fn is_negation_free(&self, e: ExprId) -> bool {
        self.topo_order(&[e])
            .into_iter()
            .all(|n| !matches!(self.node(n), Node::Not(_)))
    }

    pub fn evaluate(&self, e: ExprId, a: &Assignment) -> Result<bool, ProvError> {
        self.evaluate_with(e, |id| a.get(id))
    }

    /// Evaluates with values supplied by `lookup`; `None` is an unbound
    /// variable.
    pub fn evaluate_with(
        &self,
        e: ExprId,
        lookup: impl Fn(TupleId) -> Option<bool>,
    ) -> Result<bool, ProvError> {
        let mut memo: HashMap<ExprId, bool> = HashMap::new();
        for n in self.topo_order(&[e]) {
            let v = match self.node(n) {
                Node::False => false,
                Node::True => true,
                Node::Var(id) => lookup(*id).ok_or(ProvError::UnboundVariable(*id))?,
                Node::Not(c) => !memo[c],
                Node::And(cs) => cs.iter().all(|c| memo[c]),
                Node::Or(cs) => cs.iter().any(|c| memo[c]),
            };
            memo.insert(n, v);
        }
        Ok(memo[&e])
    }

    /// Evaluates several roots at once, sharing work between them.
    pub fn evaluate_roots(&self, roots: &[ExprId], lookup: impl Fn(TupleId) -> bool) -> Vec<bool> {
        let mut memo: Vec<Option<bool>> = vec![None; self.nodes.len()];
        for n in self.topo_order(roots) {
            let get = |c: &ExprId| memo[c.index()].expect("children first");
            let v = match self.node(n) {
                Node::False => false,
                Node::True => true,
                Node::Var(id) => lookup(*id),
                Node::Not(c) => !get(c),
                Node::And(cs) => cs.iter().all(get),
                Node::Or(cs) => cs.iter().any(get),
            };
            memo[n.index()] = Some(v);
        }
        roots.iter().map(|r| memo[r.index()].unwrap()).collect()
    }

    /// Truth value when exactly the tuples in `present` exist.
    pub fn holds_on(&self, e: ExprId, present: &IdSet) -> bool {
        self.evaluate_with(e, |id| Some(present.contains(&id)))
            .expect("total assignment")
    }

    /// Copies `e` from `other` into this store.
    pub fn import(&mut self, other: &ProvStore, e: ExprId) -> ExprId {
        let mut map: HashMap<ExprId, ExprId> = HashMap::new();
        for n in other.topo_order(&[e]) {
            let mapped = match other.node(n) {
                Node::False => FALSE,
                Node::True => TRUE,
                Node::Var(id) => self.var(*id),
                Node::Not(c) => self.not(map[c]),
                Node::And(cs) => {
                    let cs: Vec<ExprId> = cs.iter().map(|c| map[c]).collect();
                    self.and(cs)
                }
                Node::Or(cs) => {
                    let cs: Vec<ExprId> = cs.iter().map(|c| map[c]).collect();
                    self.or(cs)
                }
            };
            map.insert(n, mapped);
        }
        map[&e]
    }
}

/// A truth assignment to tuple variables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assignment(HashMap<TupleId, bool>);

impl Assignment {
    pub fn new() -> Self {
        Assignment::default()
    }

    pub fn set(&mut self, id: TupleId, value: bool) {
        self.0.insert(id, value);
    }

    pub fn get(&self, id: TupleId) -> Option<bool> {
        self.0.get(&id).copied()
    }

    /// Indicator of `present` over `universe`.
    pub fn from_set(present: &IdSet, universe: impl IntoIterator<Item = TupleId>) -> Self {
        Assignment(universe.into_iter().map(|id| (id, present.contains(&id))).collect())
    }

    pub fn true_set(&self) -> IdSet {
        self.0.iter().filter(|(_, &v)| v).map(|(&k, _)| k).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(TupleId, bool)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (TupleId, bool)>>(iter: I) -> Self {
        Assignment(iter.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(n: u32) -> TupleId {
        TupleId::new(0, n)
    }

    #[test]
    fn hash_consing_shares_nodes() {
        let mut s = ProvStore::new();
        let a = s.var(t(1));
        let b = s.var(t(2));
        let x = s.and2(a, b);
        let y = s.and2(b, a);
        assert_eq!(x, y);
        let len = s.node_count();
        let z = s.and([a, b]);
        assert_eq!(z, x);
        assert_eq!(s.node_count(), len);
    }

    #[test]
    fn constant_folding_and_flattening() {
        let mut s = ProvStore::new();
        let x = s.var(t(1));
        let tru = s.constant(true);
        let fal = s.constant(false);
        assert_eq!(s.and2(x, tru), x);
        assert_eq!(s.and2(x, fal), fal);
        assert_eq!(s.or2(x, tru), tru);
        assert_eq!(s.or2(x, fal), x);
        let nn = {
            let n = s.not(x);
            s.not(n)
        };
        assert_eq!(nn, x);
        let y = s.var(t(2));
        let z = s.var(t(3));
        let inner = s.and2(y, z);
        let outer = s.and2(x, inner);
        match s.node(outer) {
            Node::And(cs) => assert_eq!(cs.len(), 3),
            other => panic!("expected flat And, got {other:?}"),
        }
    }

    #[test]
    fn build_checks_arity() {
        let mut s = ProvStore::new();
        let x = s.var(t(1));
        assert!(matches!(s.build(BuildOp::Not, &[x, x]), Err(ProvError::Arity { .. })));
        assert!(matches!(s.build(BuildOp::And, &[x]), Err(ProvError::Arity { .. })));
        assert!(matches!(s.build(BuildOp::Var(t(1)), &[x]), Err(ProvError::Arity { .. })));
        let tr = s.build(BuildOp::Const(true), &[]).unwrap();
        assert_eq!(s.build(BuildOp::And, &[x, tr]).unwrap(), x);
    }

    #[test]
    fn factoring_is_function_equal() {
        // t1 t4 + t1 t5 versus t1 (t4 + t5)
        let mut s = ProvStore::new();
        let (t1, t4, t5) = (s.var(t(1)), s.var(t(4)), s.var(t(5)));
        let a = s.and2(t1, t4);
        let b = s.and2(t1, t5);
        let lhs = s.or2(a, b);
        let sum = s.or2(t4, t5);
        let rhs = s.and2(t1, sum);
        for mask in 0u32..8 {
            let asg: Assignment = [(t(1), mask & 1 != 0), (t(4), mask & 2 != 0), (t(5), mask & 4 != 0)]
                .into_iter()
                .collect();
            assert_eq!(s.evaluate(lhs, &asg).unwrap(), s.evaluate(rhs, &asg).unwrap());
        }
    }

    #[test]
    fn unbound_variable() {
        let mut s = ProvStore::new();
        let x = s.var(t(1));
        assert_eq!(s.evaluate(x, &Assignment::new()), Err(ProvError::UnboundVariable(t(1))));
    }

    #[test]
    fn import_preserves_structure() {
        let mut a = ProvStore::new();
        let x = a.var(t(1));
        let y = a.var(t(2));
        let ny = a.not(y);
        let e = a.and2(x, ny);
        let mut b = ProvStore::new();
        let e2 = b.import(&a, e);
        assert_eq!(b.render_infix(e2, &|id| format!("t{}", id.ordinal)), "t1 ¬t2");
    }
}
