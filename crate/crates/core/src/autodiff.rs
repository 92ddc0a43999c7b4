//! Reverse accumulation on the scalar expression DAG.
//!
//! One backward pass over a topological order produces adjoint expressions
//! for every node; each adjoint is the sum over consumers of the consumer's
//! adjoint times the local partial. Adjoints reuse primal subgraphs, so no
//! expression duplication occurs.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::expr::{BinOp, Expr, ExprGraph, ExprId, UnOp};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AdError {
    NonDifferentiableOp { what: String },
}

impl core::fmt::Display for AdError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            AdError::NonDifferentiableOp { what } => {
                write!(f, "cannot differentiate {what}")
            }
        }
    }
}

impl core::error::Error for AdError {}

/// Adjoint expression per reachable node; nodes without a path from the
/// root map to the constant 0.
#[derive(Clone, Debug)]
pub struct AdjointMap {
    adjoints: BTreeMap<ExprId, ExprId>,
    zero: ExprId,
}

impl AdjointMap {
    /// Adjoint of a node; constant 0 for nodes the root does not consume.
    pub fn adjoint_of(&self, id: ExprId) -> ExprId {
        self.adjoints.get(&id).copied().unwrap_or(self.zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ExprId, &ExprId)> {
        self.adjoints.iter()
    }
}

/// Differentiate `body` with respect to every node it contains, seeding the
/// root with `seed`. Sum nodes are transparent (their local partial is 1);
/// delta conditionals propagate into both branches under their condition.
pub fn reverse_ad(graph: &mut ExprGraph, body: ExprId, seed: ExprId) -> Result<AdjointMap, AdError> {
    // Node ids are topologically ordered by construction; walking reachable
    // ids in descending order visits every consumer before its arguments.
    let mut reachable = alloc::collections::BTreeSet::new();
    let mut stack = alloc::vec![body];
    while let Some(id) = stack.pop() {
        if !reachable.insert(id) {
            continue;
        }
        match graph.node(id) {
            Expr::Const(_) | Expr::Arg { .. } | Expr::Adjoint { .. } => {}
            Expr::Unary(_, x) => stack.push(*x),
            Expr::Binary(op, a, b) => {
                stack.push(*a);
                // The exponent of a power is constant and receives no
                // adjoint.
                if *op != BinOp::Pow {
                    stack.push(*b);
                }
            }
            Expr::Sum { body, .. } => stack.push(*body),
            Expr::Delta { then_branch, else_branch, .. } => {
                stack.push(*then_branch);
                stack.push(*else_branch);
            }
        }
    }

    let mut pending: BTreeMap<ExprId, Vec<ExprId>> = BTreeMap::new();
    pending.insert(body, alloc::vec![seed]);
    let mut adjoints = BTreeMap::new();
    let zero = graph.zero();

    for &id in reachable.iter().rev() {
        let Some(terms) = pending.remove(&id) else {
            continue;
        };
        let mut acc = terms[0];
        for t in &terms[1..] {
            acc = graph.add(acc, *t);
        }
        adjoints.insert(id, acc);

        let push = |pending: &mut BTreeMap<ExprId, Vec<ExprId>>, child: ExprId, term: ExprId| {
            pending.entry(child).or_default().push(term);
        };

        match graph.node(id).clone() {
            Expr::Const(_) | Expr::Arg { .. } | Expr::Adjoint { .. } => {}
            Expr::Unary(op, x) => {
                let term = match op {
                    UnOp::Neg => graph.neg(acc),
                    UnOp::Exp => graph.mul(acc, id),
                    UnOp::Log => graph.div(acc, x),
                    UnOp::Sin => {
                        let c = graph.unary(UnOp::Cos, x);
                        graph.mul(acc, c)
                    }
                    UnOp::Cos => {
                        let s = graph.unary(UnOp::Sin, x);
                        let p = graph.mul(acc, s);
                        graph.neg(p)
                    }
                    UnOp::Sinh => {
                        // cosh expressed with exp, which stays inside the
                        // expression language.
                        let ex = graph.unary(UnOp::Exp, x);
                        let nx = graph.neg(x);
                        let enx = graph.unary(UnOp::Exp, nx);
                        let s = graph.add(ex, enx);
                        let half = graph.constant(crate::ratio(1, 2));
                        let cosh = graph.mul(half, s);
                        graph.mul(acc, cosh)
                    }
                    UnOp::Sqrt => {
                        let two = graph.constant_int(2);
                        let d = graph.mul(two, id);
                        graph.div(acc, d)
                    }
                };
                push(&mut pending, x, term);
            }
            Expr::Binary(op, a, b) => match op {
                BinOp::Add => {
                    push(&mut pending, a, acc);
                    push(&mut pending, b, acc);
                }
                BinOp::Sub => {
                    push(&mut pending, a, acc);
                    let n = graph.neg(acc);
                    push(&mut pending, b, n);
                }
                BinOp::Mul => {
                    let ta = graph.mul(acc, b);
                    push(&mut pending, a, ta);
                    let tb = graph.mul(acc, a);
                    push(&mut pending, b, tb);
                }
                BinOp::Div => {
                    let ta = graph.div(acc, b);
                    push(&mut pending, a, ta);
                    let bb = graph.mul(b, b);
                    let q = graph.div(a, bb);
                    let nq = graph.neg(q);
                    let tb = graph.mul(acc, nq);
                    push(&mut pending, b, tb);
                }
                BinOp::Pow => {
                    if !graph.is_constant_expr(b) {
                        return Err(AdError::NonDifferentiableOp {
                            what: String::from("a power with a non-constant exponent"),
                        });
                    }
                    let one = graph.one();
                    let em1 = graph.sub(b, one);
                    let p = graph.pow(a, em1);
                    let ae = graph.mul(acc, b);
                    let term = graph.mul(ae, p);
                    push(&mut pending, a, term);
                }
            },
            Expr::Sum { body: sb, .. } => {
                push(&mut pending, sb, acc);
            }
            Expr::Delta { cond, then_branch, else_branch } => {
                let t = graph.delta(cond.clone(), acc, zero);
                push(&mut pending, then_branch, t);
                let e = graph.delta(cond, zero, acc);
                push(&mut pending, else_branch, e);
            }
        }
    }

    Ok(AdjointMap { adjoints, zero })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::AffineForm;
    use crate::symbol::IndexSymbol;

    fn sym(n: &str) -> IndexSymbol {
        IndexSymbol::output(n)
    }

    #[test]
    fn identity_body_gets_seed() {
        let mut g = ExprGraph::new();
        let x = g.arg(0, alloc::vec![AffineForm::symbol(sym("i"))]);
        let seed = g.adjoint(alloc::vec![AffineForm::symbol(sym("i"))]);
        let res = reverse_ad(&mut g, x, seed).unwrap();
        assert_eq!(res.adjoint_of(x), seed);
    }

    #[test]
    fn sin_rule() {
        let mut g = ExprGraph::new();
        let x = g.arg(0, alloc::vec![AffineForm::symbol(sym("i"))]);
        let body = g.unary(UnOp::Sin, x);
        let seed = g.adjoint(alloc::vec![AffineForm::symbol(sym("i"))]);
        let res = reverse_ad(&mut g, body, seed).unwrap();
        // seed * cos(x)
        let cos = g.unary(UnOp::Cos, x);
        let expected = g.mul(seed, cos);
        assert_eq!(res.adjoint_of(x), expected);
    }

    #[test]
    fn shared_node_accumulates_consumers() {
        // sin(x^2) * cos(x^2): the adjoint of the shared x^2 node is a sum
        // of two consumer contributions.
        let mut g = ExprGraph::new();
        let x = g.arg(0, alloc::vec![AffineForm::symbol(sym("i"))]);
        let two = g.constant_int(2);
        let sq = g.pow(x, two);
        let s = g.unary(UnOp::Sin, sq);
        let c = g.unary(UnOp::Cos, sq);
        let body = g.mul(s, c);
        let one = g.one();
        let primal = g.reachable_count(body);
        let res = reverse_ad(&mut g, body, one).unwrap();
        let adj = res.adjoint_of(sq);
        assert!(matches!(g.node(adj), Expr::Binary(BinOp::Add, _, _)));
        // The adjoint graph stays within a small factor of the primal.
        assert!(g.reachable_count(res.adjoint_of(x)) <= 4 * primal + 4);
    }

    #[test]
    fn unreachable_target_is_zero() {
        let mut g = ExprGraph::new();
        let x = g.arg(0, alloc::vec![AffineForm::symbol(sym("i"))]);
        let y = g.arg(1, alloc::vec![AffineForm::symbol(sym("i"))]);
        let one = g.one();
        let res = reverse_ad(&mut g, x, one).unwrap();
        let z = res.adjoint_of(y);
        assert_eq!(z, g.zero());
    }

    #[test]
    fn non_constant_exponent_is_rejected() {
        let mut g = ExprGraph::new();
        let x = g.arg(0, alloc::vec![AffineForm::symbol(sym("i"))]);
        let body = g.pow(x, x);
        let one = g.one();
        assert!(reverse_ad(&mut g, body, one).is_err());
    }
}
