use std::collections::HashMap;

use super::{ExprId, Node, ProvStore};
use crate::catalog::TupleId;

impl ProvStore {
    /// Infix rendering: juxtaposition for `∧`, ` + ` for `∨`, `¬` for
    /// negation, e.g. `t1 (t4 + t5)`. Operands are ordered by their
    /// smallest variable so the text does not depend on interning order.
    pub fn render_infix(&self, e: ExprId, name: &dyn Fn(TupleId) -> String) -> String {
        let keys = self.order_keys(e);
        let mut out = String::new();
        self.infix(e, name, &keys, &mut out, Prec::Top);
        out
    }

    /// SMT-LIB prefix rendering, e.g. `(and t1 (or t4 t5))`.
    pub fn render_smt(&self, e: ExprId, name: &dyn Fn(TupleId) -> String) -> String {
        let keys = self.order_keys(e);
        let mut out = String::new();
        self.prefix(e, name, &keys, &mut out);
        out
    }

    fn order_keys(&self, e: ExprId) -> HashMap<ExprId, (Option<TupleId>, ExprId)> {
        let mut keys: HashMap<ExprId, (Option<TupleId>, ExprId)> = HashMap::new();
        for n in self.topo_order(&[e]) {
            let min = match self.node(n) {
                Node::Var(id) => Some(*id),
                Node::Not(c) => keys[c].0,
                Node::And(cs) | Node::Or(cs) => cs.iter().filter_map(|c| keys[c].0).min(),
                _ => None,
            };
            keys.insert(n, (min, n));
        }
        keys
    }

    fn sorted(&self, cs: &[ExprId], keys: &HashMap<ExprId, (Option<TupleId>, ExprId)>) -> Vec<ExprId> {
        let mut v = cs.to_vec();
        v.sort_by_key(|c| keys[c]);
        v
    }

    fn infix(
        &self,
        e: ExprId,
        name: &dyn Fn(TupleId) -> String,
        keys: &HashMap<ExprId, (Option<TupleId>, ExprId)>,
        out: &mut String,
        ctx: Prec,
    ) {
        match self.node(e) {
            Node::False => out.push('0'),
            Node::True => out.push('1'),
            Node::Var(id) => out.push_str(&name(*id)),
            Node::Not(c) => {
                out.push('¬');
                self.infix(*c, name, keys, out, Prec::Atom);
            }
            Node::And(cs) => {
                let paren = ctx == Prec::Atom;
                if paren {
                    out.push('(');
                }
                for (i, c) in self.sorted(cs, keys).into_iter().enumerate() {
                    if i > 0 {
                        out.push(' ');
                    }
                    self.infix(c, name, keys, out, Prec::Product);
                }
                if paren {
                    out.push(')');
                }
            }
            Node::Or(cs) => {
                let paren = ctx != Prec::Top;
                if paren {
                    out.push('(');
                }
                for (i, c) in self.sorted(cs, keys).into_iter().enumerate() {
                    if i > 0 {
                        out.push_str(" + ");
                    }
                    self.infix(c, name, keys, out, Prec::Top);
                }
                if paren {
                    out.push(')');
                }
            }
        }
    }

    fn prefix(
        &self,
        e: ExprId,
        name: &dyn Fn(TupleId) -> String,
        keys: &HashMap<ExprId, (Option<TupleId>, ExprId)>,
        out: &mut String,
    ) {
        match self.node(e) {
            Node::False => out.push_str("false"),
            Node::True => out.push_str("true"),
            Node::Var(id) => out.push_str(&name(*id)),
            Node::Not(c) => {
                out.push_str("(not ");
                self.prefix(*c, name, keys, out);
                out.push(')');
            }
            Node::And(cs) | Node::Or(cs) => {
                out.push_str(if matches!(self.node(e), Node::And(_)) { "(and" } else { "(or" });
                for c in self.sorted(cs, keys) {
                    out.push(' ');
                    self.prefix(c, name, keys, out);
                }
                out.push(')');
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Prec {
    Top,
    Product,
    Atom,
}
