//! Hash-consed immutable expression DAG.
//!
//! Nodes live in an append-only arena; structurally identical expressions
//! are represented by a single node, so node identity doubles as structural
//! equality and no exponential blowup occurs when derivatives reuse primal
//! subgraphs. Children always have smaller ids than their parents, which
//! makes a node id order a topological order.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::affine::AffineForm;
use crate::symbol::IndexSymbol;
use crate::{Int, Rat};

/// Handle to a node inside an [`ExprGraph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExprId(u32);

impl ExprId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UnOp {
    Neg,
    Exp,
    Log,
    Sin,
    Cos,
    Sinh,
    Sqrt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Condition of a delta conditional. All three variants are decided in
/// exact integer arithmetic at evaluation time.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DeltaCond {
    /// `form = 0`
    Zero(AffineForm),
    /// `form = 0 (mod modulus)`; the form is integral.
    Divisible(AffineForm, Int),
    /// `form >= 0`
    Nonneg(AffineForm),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BoundDir {
    Lower,
    Upper,
}

/// One side of a summation range: `ceil(max(forms))` for a lower bound,
/// `floor(min(forms))` for an upper bound.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RangeBound {
    pub dir: BoundDir,
    pub forms: Vec<AffineForm>,
}

impl RangeBound {
    /// Bounds keep their forms deduplicated and canonically ordered
    /// (constant forms first) so printed output is deterministic.
    pub fn new(dir: BoundDir, mut forms: Vec<AffineForm>) -> Self {
        assert!(!forms.is_empty(), "a range bound needs at least one form");
        forms.sort_by(|a, b| {
            (a.num_terms(), a).cmp(&(b.num_terms(), b))
        });
        forms.dedup();
        RangeBound { dir, forms }
    }

    pub fn lower(forms: Vec<AffineForm>) -> Self {
        Self::new(BoundDir::Lower, forms)
    }

    pub fn upper(forms: Vec<AffineForm>) -> Self {
        Self::new(BoundDir::Upper, forms)
    }

    pub fn constant_int(dir: BoundDir, v: i64) -> Self {
        Self::new(dir, alloc::vec![AffineForm::constant_int(v)])
    }

    /// Exact integer value under an assignment of all referenced symbols.
    pub fn eval(&self, bindings: &BTreeMap<IndexSymbol, Int>) -> Int {
        let vals = self.forms.iter().map(|f| f.eval(bindings));
        match self.dir {
            BoundDir::Lower => vals.max().expect("nonempty").ceil().to_integer(),
            BoundDir::Upper => vals.min().expect("nonempty").floor().to_integer(),
        }
    }

    /// Constant value if every form is constant and a single extremum.
    pub fn as_constant(&self) -> Option<Rat> {
        if self.forms.iter().all(|f| f.is_constant()) {
            let vals = self.forms.iter().map(|f| f.constant_part().clone());
            Some(match self.dir {
                BoundDir::Lower => vals.max().expect("nonempty"),
                BoundDir::Upper => vals.min().expect("nonempty"),
            })
        } else {
            None
        }
    }

    pub fn substitute(&self, mapping: &BTreeMap<IndexSymbol, AffineForm>) -> RangeBound {
        RangeBound::new(self.dir, self.forms.iter().map(|f| f.substitute(mapping)).collect())
    }

    pub fn symbols(&self) -> BTreeSet<IndexSymbol> {
        self.forms.iter().flat_map(|f| f.symbols()).collect()
    }
}

/// Expression node. Children are [`ExprId`]s into the owning graph.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    /// Exact rational constant.
    Const(Rat),
    /// Element of argument tensor `arg` at the given affine indices. The
    /// `tag` distinguishes occurrences of one argument while derivatives
    /// are taken; it is zero elsewhere and invisible to printing and
    /// evaluation.
    Arg { arg: usize, indices: Vec<AffineForm>, tag: u32 },
    /// Element of the incoming adjoint tensor (`df`).
    Adjoint { indices: Vec<AffineForm> },
    Unary(UnOp, ExprId),
    Binary(BinOp, ExprId, ExprId),
    /// `sum over index in [lo, hi] of body`; an empty range contributes 0.
    Sum { index: IndexSymbol, lo: RangeBound, hi: RangeBound, body: ExprId },
    /// `if cond then a else b`.
    Delta { cond: DeltaCond, then_branch: ExprId, else_branch: ExprId },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SubstError {
    /// Substitution produced a non-integer coefficient in an index position.
    NonIntegerComposition { arg: Option<usize> },
}

impl core::fmt::Display for SubstError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SubstError::NonIntegerComposition { arg: Some(a) } => {
                write!(f, "substitution made an index of argument {a} non-integer")
            }
            SubstError::NonIntegerComposition { arg: None } => {
                write!(f, "substitution made an adjoint index non-integer")
            }
        }
    }
}

impl core::error::Error for SubstError {}

/// Arena of hash-consed expression nodes.
#[derive(Clone, Debug, Default)]
pub struct ExprGraph {
    nodes: Vec<Expr>,
    interner: BTreeMap<Expr, ExprId>,
}

impl ExprGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: ExprId) -> &Expr {
        &self.nodes[id.index()]
    }

    /// Intern a node, reusing an existing structurally equal one.
    pub fn intern(&mut self, expr: Expr) -> ExprId {
        if let Some(&id) = self.interner.get(&expr) {
            return id;
        }
        let id = ExprId(self.nodes.len() as u32);
        self.nodes.push(expr.clone());
        self.interner.insert(expr, id);
        id
    }

    pub fn constant(&mut self, v: Rat) -> ExprId {
        self.intern(Expr::Const(v))
    }

    pub fn constant_int(&mut self, v: i64) -> ExprId {
        self.constant(Rat::from_integer(Int::from(v)))
    }

    pub fn zero(&mut self) -> ExprId {
        self.constant_int(0)
    }

    pub fn one(&mut self) -> ExprId {
        self.constant_int(1)
    }

    pub fn arg(&mut self, arg: usize, indices: Vec<AffineForm>) -> ExprId {
        self.intern(Expr::Arg { arg, indices, tag: 0 })
    }

    pub fn arg_tagged(&mut self, arg: usize, indices: Vec<AffineForm>, tag: u32) -> ExprId {
        self.intern(Expr::Arg { arg, indices, tag })
    }

    pub fn adjoint(&mut self, indices: Vec<AffineForm>) -> ExprId {
        self.intern(Expr::Adjoint { indices })
    }

    fn const_value(&self, id: ExprId) -> Option<&Rat> {
        match self.node(id) {
            Expr::Const(v) => Some(v),
            _ => None,
        }
    }

    /// Unary node; folds negation of constants and double negation.
    pub fn unary(&mut self, op: UnOp, x: ExprId) -> ExprId {
        if op == UnOp::Neg {
            if let Some(v) = self.const_value(x) {
                let v = -v.clone();
                return self.constant(v);
            }
            if let Expr::Unary(UnOp::Neg, inner) = *self.node(x) {
                return inner;
            }
        }
        self.intern(Expr::Unary(op, x))
    }

    pub fn neg(&mut self, x: ExprId) -> ExprId {
        self.unary(UnOp::Neg, x)
    }

    /// Binary node with trivial identity collapse (`x*1`, `x+0`, `x**1`,
    /// ...); deliberate non-identities like `2 - 1` are preserved.
    pub fn binary(&mut self, op: BinOp, a: ExprId, b: ExprId) -> ExprId {
        let a_const = self.const_value(a).cloned();
        let b_const = self.const_value(b).cloned();
        match op {
            BinOp::Add => {
                if a_const.as_ref().is_some_and(Rat::is_zero) {
                    return b;
                }
                if b_const.as_ref().is_some_and(Rat::is_zero) {
                    return a;
                }
            }
            BinOp::Sub => {
                if b_const.as_ref().is_some_and(Rat::is_zero) {
                    return a;
                }
            }
            BinOp::Mul => {
                if let Some(v) = &a_const {
                    if v.is_zero() {
                        return a;
                    }
                    if v.is_one() {
                        return b;
                    }
                }
                if let Some(v) = &b_const {
                    if v.is_zero() {
                        return b;
                    }
                    if v.is_one() {
                        return a;
                    }
                }
            }
            BinOp::Div => {
                if b_const.as_ref().is_some_and(Rat::is_one) {
                    return a;
                }
                // Fold constant fractions so `1 / 2` round-trips as a value.
                if let (Some(x), Some(y)) = (&a_const, &b_const) {
                    if !y.is_zero() {
                        return self.constant(x.clone() / y.clone());
                    }
                }
            }
            BinOp::Pow => {
                if let Some(v) = &b_const {
                    if v.is_one() {
                        return a;
                    }
                    if v.is_zero() {
                        return self.one();
                    }
                }
            }
        }
        self.intern(Expr::Binary(op, a, b))
    }

    pub fn add(&mut self, a: ExprId, b: ExprId) -> ExprId {
        self.binary(BinOp::Add, a, b)
    }

    pub fn sub(&mut self, a: ExprId, b: ExprId) -> ExprId {
        self.binary(BinOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: ExprId, b: ExprId) -> ExprId {
        self.binary(BinOp::Mul, a, b)
    }

    pub fn div(&mut self, a: ExprId, b: ExprId) -> ExprId {
        self.binary(BinOp::Div, a, b)
    }

    pub fn pow(&mut self, a: ExprId, b: ExprId) -> ExprId {
        self.binary(BinOp::Pow, a, b)
    }

    pub fn sum(&mut self, index: IndexSymbol, lo: RangeBound, hi: RangeBound, body: ExprId) -> ExprId {
        debug_assert_eq!(lo.dir, BoundDir::Lower);
        debug_assert_eq!(hi.dir, BoundDir::Upper);
        self.intern(Expr::Sum { index, lo, hi, body })
    }

    /// Delta conditional. Conditions are canonicalized; conditions that are
    /// decidable without index values collapse to the taken branch.
    pub fn delta(&mut self, cond: DeltaCond, then_branch: ExprId, else_branch: ExprId) -> ExprId {
        let cond = match cond {
            DeltaCond::Zero(f) => {
                let c = f.canonical_eq_zero();
                if c.is_constant() {
                    return if c.constant_part().is_zero() { then_branch } else { else_branch };
                }
                DeltaCond::Zero(c)
            }
            DeltaCond::Divisible(f, m) => {
                assert!(f.is_integral(), "divisibility condition on a non-integral form");
                assert!(m.is_positive(), "modulus must be positive");
                if f.is_constant() {
                    let c = f.constant_part().to_integer();
                    return if c.is_multiple_of(&m) { then_branch } else { else_branch };
                }
                let mut content = f.constant_part().numer().abs().gcd(&m);
                for (_, c) in f.terms() {
                    content = content.gcd(&c.numer().abs());
                }
                if content.is_zero() {
                    content = Int::one();
                }
                let m = m / content.clone();
                if m.is_one() {
                    return then_branch;
                }
                DeltaCond::Divisible(f.scale(&Rat::new(Int::one(), content)), m)
            }
            DeltaCond::Nonneg(f) => {
                if f.is_constant() {
                    return if f.constant_part().is_negative() { else_branch } else { then_branch };
                }
                // Positive scaling preserves the inequality; clear denominators
                // and content.
                let scaled = f.scale(&Rat::from_integer(f.denom_lcm()));
                let mut content: Int = Int::zero();
                for (_, c) in scaled.terms() {
                    content = content.gcd(&c.numer().abs());
                }
                content = content.gcd(&scaled.constant_part().numer().abs());
                if content.is_zero() || content.is_one() {
                    DeltaCond::Nonneg(scaled)
                } else {
                    DeltaCond::Nonneg(scaled.scale(&Rat::new(Int::one(), content)))
                }
            }
        };
        self.intern(Expr::Delta { cond, then_branch, else_branch })
    }

    /// Symbols not bound by any enclosing sum.
    pub fn free_symbols(&self, root: ExprId) -> BTreeSet<IndexSymbol> {
        let mut memo: BTreeMap<ExprId, BTreeSet<IndexSymbol>> = BTreeMap::new();
        self.free_symbols_memo(root, &mut memo);
        memo.remove(&root).unwrap_or_default()
    }

    fn free_symbols_memo(
        &self,
        id: ExprId,
        memo: &mut BTreeMap<ExprId, BTreeSet<IndexSymbol>>,
    ) {
        if memo.contains_key(&id) {
            return;
        }
        let set = match self.node(id) {
            Expr::Const(_) => BTreeSet::new(),
            Expr::Arg { indices, .. } | Expr::Adjoint { indices } => {
                indices.iter().flat_map(|f| f.symbols()).collect()
            }
            Expr::Unary(_, x) => {
                self.free_symbols_memo(*x, memo);
                memo[x].clone()
            }
            Expr::Binary(_, a, b) => {
                self.free_symbols_memo(*a, memo);
                self.free_symbols_memo(*b, memo);
                let mut s = memo[a].clone();
                s.extend(memo[b].iter().cloned());
                s
            }
            Expr::Sum { index, lo, hi, body } => {
                self.free_symbols_memo(*body, memo);
                let mut s = memo[body].clone();
                s.remove(index);
                s.extend(lo.symbols());
                s.extend(hi.symbols());
                s
            }
            Expr::Delta { cond, then_branch, else_branch } => {
                self.free_symbols_memo(*then_branch, memo);
                self.free_symbols_memo(*else_branch, memo);
                let mut s = memo[then_branch].clone();
                s.extend(memo[else_branch].iter().cloned());
                let form = match cond {
                    DeltaCond::Zero(f) | DeltaCond::Divisible(f, _) | DeltaCond::Nonneg(f) => f,
                };
                s.extend(form.symbols());
                s
            }
        };
        memo.insert(id, set);
    }

    /// Number of nodes reachable from `root`.
    pub fn reachable_count(&self, root: ExprId) -> usize {
        let mut seen = BTreeSet::new();
        let mut stack = alloc::vec![root];
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                continue;
            }
            match self.node(id) {
                Expr::Const(_) | Expr::Arg { .. } | Expr::Adjoint { .. } => {}
                Expr::Unary(_, x) => stack.push(*x),
                Expr::Binary(_, a, b) => {
                    stack.push(*a);
                    stack.push(*b);
                }
                Expr::Sum { body, .. } => stack.push(*body),
                Expr::Delta { then_branch, else_branch, .. } => {
                    stack.push(*then_branch);
                    stack.push(*else_branch);
                }
            }
        }
        seen.len()
    }

    /// Substitute free occurrences of symbols by affine forms. Symbols bound
    /// by a sum shadow the mapping inside that sum's body; sum bounds are
    /// rewritten in the enclosing scope. Sharing is preserved.
    pub fn substitute(
        &mut self,
        root: ExprId,
        mapping: &BTreeMap<IndexSymbol, AffineForm>,
    ) -> ExprId {
        let mut memo = BTreeMap::new();
        self.substitute_rec(root, mapping, &mut Vec::new(), &mut memo)
    }

    fn substitute_rec(
        &mut self,
        id: ExprId,
        mapping: &BTreeMap<IndexSymbol, AffineForm>,
        shadowed: &mut Vec<IndexSymbol>,
        memo: &mut BTreeMap<(ExprId, Vec<IndexSymbol>), ExprId>,
    ) -> ExprId {
        // Only the shadowed symbols that the mapping mentions matter for
        // memoization.
        let mut key_shadow: Vec<IndexSymbol> =
            shadowed.iter().filter(|s| mapping.contains_key(*s)).cloned().collect();
        key_shadow.sort();
        key_shadow.dedup();
        let key = (id, key_shadow);
        if let Some(&done) = memo.get(&key) {
            return done;
        }

        let effective = |shadowed: &[IndexSymbol]| -> BTreeMap<IndexSymbol, AffineForm> {
            mapping
                .iter()
                .filter(|(s, _)| !shadowed.contains(s))
                .map(|(s, f)| (s.clone(), f.clone()))
                .collect()
        };

        let node = self.node(id).clone();
        let out = match node {
            Expr::Const(_) => id,
            Expr::Arg { arg, indices, tag } => {
                let eff = effective(shadowed);
                let indices = indices.iter().map(|f| f.substitute(&eff)).collect();
                self.intern(Expr::Arg { arg, indices, tag })
            }
            Expr::Adjoint { indices } => {
                let eff = effective(shadowed);
                let indices = indices.iter().map(|f| f.substitute(&eff)).collect();
                self.intern(Expr::Adjoint { indices })
            }
            Expr::Unary(op, x) => {
                let x = self.substitute_rec(x, mapping, shadowed, memo);
                self.unary(op, x)
            }
            Expr::Binary(op, a, b) => {
                let a = self.substitute_rec(a, mapping, shadowed, memo);
                let b = self.substitute_rec(b, mapping, shadowed, memo);
                self.binary(op, a, b)
            }
            Expr::Sum { index, lo, hi, body } => {
                let eff = effective(shadowed);
                let lo = lo.substitute(&eff);
                let hi = hi.substitute(&eff);
                shadowed.push(index.clone());
                let body = self.substitute_rec(body, mapping, shadowed, memo);
                shadowed.pop();
                self.sum(index, lo, hi, body)
            }
            Expr::Delta { cond, then_branch, else_branch } => {
                let eff = effective(shadowed);
                let cond = match cond {
                    DeltaCond::Zero(f) => DeltaCond::Zero(f.substitute(&eff)),
                    DeltaCond::Divisible(f, m) => DeltaCond::Divisible(f.substitute(&eff), m),
                    DeltaCond::Nonneg(f) => DeltaCond::Nonneg(f.substitute(&eff)),
                };
                let t = self.substitute_rec(then_branch, mapping, shadowed, memo);
                let e = self.substitute_rec(else_branch, mapping, shadowed, memo);
                self.delta(cond, t, e)
            }
        };
        memo.insert(key, out);
        out
    }

    /// Checked substitution: like [`ExprGraph::substitute`] but rejects
    /// results whose tensor index expressions pick up non-integer
    /// coefficients.
    pub fn substitute_indices(
        &mut self,
        root: ExprId,
        mapping: &BTreeMap<IndexSymbol, AffineForm>,
    ) -> Result<ExprId, SubstError> {
        let out = self.substitute(root, mapping);
        let mut seen = BTreeSet::new();
        let mut stack = alloc::vec![out];
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                continue;
            }
            match self.node(id) {
                Expr::Arg { arg, indices, .. } => {
                    if indices.iter().any(|f| !f.is_integral()) {
                        return Err(SubstError::NonIntegerComposition { arg: Some(*arg) });
                    }
                }
                Expr::Adjoint { indices } => {
                    if indices.iter().any(|f| !f.is_integral()) {
                        return Err(SubstError::NonIntegerComposition { arg: None });
                    }
                }
                Expr::Unary(_, x) => stack.push(*x),
                Expr::Binary(_, a, b) => {
                    stack.push(*a);
                    stack.push(*b);
                }
                Expr::Sum { body, .. } => stack.push(*body),
                Expr::Delta { then_branch, else_branch, .. } => {
                    stack.push(*then_branch);
                    stack.push(*else_branch);
                }
                Expr::Const(_) => {}
            }
        }
        Ok(out)
    }

    /// True if the subtree has no tensor references, no adjoint references,
    /// no sums, no deltas and no index symbols.
    pub fn is_constant_expr(&self, id: ExprId) -> bool {
        match self.node(id) {
            Expr::Const(_) => true,
            Expr::Unary(_, x) => self.is_constant_expr(*x),
            Expr::Binary(_, a, b) => self.is_constant_expr(*a) && self.is_constant_expr(*b),
            _ => false,
        }
    }

    /// Exact rational value of a constant subtree built from rational
    /// operations; `None` if the subtree involves a transcendental function.
    pub fn rational_value(&self, id: ExprId) -> Option<Rat> {
        match self.node(id) {
            Expr::Const(v) => Some(v.clone()),
            Expr::Unary(UnOp::Neg, x) => self.rational_value(*x).map(|v| -v),
            Expr::Binary(op, a, b) => {
                let a = self.rational_value(*a)?;
                let b = self.rational_value(*b)?;
                match op {
                    BinOp::Add => Some(a + b),
                    BinOp::Sub => Some(a - b),
                    BinOp::Mul => Some(a * b),
                    BinOp::Div => (!b.is_zero()).then(|| a / b),
                    BinOp::Pow => {
                        // Integer exponents only.
                        if b.denom().is_one() {
                            let e = b.numer();
                            i32::try_from(e).ok().map(|e| pow_rat(&a, e))
                        } else {
                            None
                        }
                    }
                }
            }
            _ => None,
        }
    }
}

fn pow_rat(base: &Rat, e: i32) -> Rat {
    if e >= 0 {
        num_traits::pow::Pow::pow(base.clone(), e as u32)
    } else {
        num_traits::pow::Pow::pow(base.clone().recip(), (-e) as u32)
    }
}
