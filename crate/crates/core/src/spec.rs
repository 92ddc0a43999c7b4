//! Element-wise function specifications.
//!
//! An [`ElemFuncSpec`] pairs an output shape and index list with a scalar
//! body expression over argument elements. Construction validates scoping,
//! integrality of index maps and that every reachable tensor access stays
//! inside the declared shapes over the whole output index box.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use num_traits::{One, Signed, Zero};

use crate::affine::{AffineForm, IndexAffineMap};
use crate::expr::{BinOp, DeltaCond, Expr, ExprGraph, ExprId, RangeBound};
use crate::symbol::IndexSymbol;
use crate::Int;

/// A declared tensor argument.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArgDecl {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ArgDecl {
    pub fn new(name: impl Into<String>, shape: Vec<usize>) -> Self {
        ArgDecl { name: name.into(), shape }
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }
}

/// A summation scope enclosing an argument occurrence.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct SumScope {
    pub symbol: IndexSymbol,
    pub lo: RangeBound,
    pub hi: RangeBound,
}

/// One occurrence of an argument: its index expressions plus the chain of
/// summations enclosing it (outermost first). Occurrences with identical
/// index expressions in the same scope are merged; the same expressions in
/// different scopes count separately.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Occurrence {
    pub arg: usize,
    pub indices: Vec<AffineForm>,
    pub sums: Vec<SumScope>,
}

impl Occurrence {
    /// Index symbols this occurrence's derivation ranges over: the output
    /// indices extended by the enclosing summation indices.
    pub fn extended_indices(&self, output: &[IndexSymbol]) -> Vec<IndexSymbol> {
        let mut out = output.to_vec();
        out.extend(self.sums.iter().map(|s| s.symbol.clone()));
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SpecError {
    UnknownSymbol { name: String },
    UnknownArgument { arg: usize },
    ShapeMismatch { arg: String, expected: usize, got: usize },
    OutOfRangeIndexMap { arg: String, row: usize, value: Int, size: usize, point: Vec<Int> },
    NonIntegerIndex { arg: String },
    NonConstantExponent,
    AdjointInBody,
    ShadowedIndex { name: String },
    DuplicateIndexName { name: String },
    DuplicateTensorName { name: String },
    WrongIndexCount { expected: usize, got: usize },
    InvalidShape { name: String },
}

impl core::fmt::Display for SpecError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SpecError::UnknownSymbol { name } => write!(f, "unknown index symbol `{name}`"),
            SpecError::UnknownArgument { arg } => write!(f, "argument #{arg} is not declared"),
            SpecError::ShapeMismatch { arg, expected, got } => {
                write!(f, "`{arg}` has rank {expected} but is indexed with {got} expressions")
            }
            SpecError::OutOfRangeIndexMap { arg, row, value, size, point } => write!(
                f,
                "index {row} of `{arg}` evaluates to {value} (valid: 0..{size}) at point {point:?}"
            ),
            SpecError::NonIntegerIndex { arg } => {
                write!(f, "an index of `{arg}` is not integral")
            }
            SpecError::NonConstantExponent => write!(f, "exponent must be a constant"),
            SpecError::AdjointInBody => write!(f, "adjoint references are not allowed here"),
            SpecError::ShadowedIndex { name } => {
                write!(f, "summation index `{name}` shadows an enclosing index")
            }
            SpecError::DuplicateIndexName { name } => {
                write!(f, "duplicate index name `{name}`")
            }
            SpecError::DuplicateTensorName { name } => {
                write!(f, "duplicate tensor name `{name}`")
            }
            SpecError::WrongIndexCount { expected, got } => {
                write!(f, "output has {expected} dimensions but {got} indices")
            }
            SpecError::InvalidShape { name } => {
                write!(f, "`{name}` must have positive dimensions")
            }
        }
    }
}

impl core::error::Error for SpecError {}

/// A validated element-wise function specification.
#[derive(Clone, Debug)]
pub struct ElemFuncSpec {
    name: String,
    output_indices: Vec<IndexSymbol>,
    output_shape: Vec<usize>,
    args: Vec<ArgDecl>,
    graph: ExprGraph,
    body: ExprId,
    occurrences: Vec<Occurrence>,
    warnings: Vec<String>,
}

/// Validate and assemble a specification. The body must reference only
/// declared arguments and in-scope index symbols, and every index map's
/// image over the reachable index ranges must stay inside the argument
/// shapes.
pub fn build_spec(
    name: impl Into<String>,
    output_indices: Vec<IndexSymbol>,
    output_shape: Vec<usize>,
    args: Vec<ArgDecl>,
    graph: ExprGraph,
    body: ExprId,
) -> Result<ElemFuncSpec, SpecError> {
    let name = name.into();
    if output_indices.len() != output_shape.len() {
        return Err(SpecError::WrongIndexCount {
            expected: output_shape.len(),
            got: output_indices.len(),
        });
    }
    if output_shape.contains(&0) {
        return Err(SpecError::InvalidShape { name: name.clone() });
    }
    for arg in &args {
        if arg.shape.contains(&0) {
            return Err(SpecError::InvalidShape { name: arg.name.clone() });
        }
    }
    let mut seen_names = BTreeSet::new();
    for sym in &output_indices {
        if !seen_names.insert(sym.name.clone()) {
            return Err(SpecError::DuplicateIndexName { name: sym.name.clone() });
        }
    }
    let mut tensor_names = BTreeSet::new();
    for n in args.iter().map(|a| a.name.as_str()).chain([name.as_str()]) {
        if !tensor_names.insert(n.to_string()) {
            return Err(SpecError::DuplicateTensorName { name: n.to_string() });
        }
    }

    let mut spec = ElemFuncSpec {
        name,
        output_indices,
        output_shape,
        args,
        graph,
        body,
        occurrences: Vec::new(),
        warnings: Vec::new(),
    };
    spec.check_structure()?;
    spec.collect_occurrences();
    spec.check_ranges()?;
    Ok(spec)
}

impl ElemFuncSpec {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn output_indices(&self) -> &[IndexSymbol] {
        &self.output_indices
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn args(&self) -> &[ArgDecl] {
        &self.args
    }

    pub fn arg_index(&self, name: &str) -> Option<usize> {
        self.args.iter().position(|a| a.name == name)
    }

    pub fn graph(&self) -> &ExprGraph {
        &self.graph
    }

    pub fn body(&self) -> ExprId {
        self.body
    }

    /// Distinct argument occurrences in scope order.
    pub fn occurrences(&self) -> &[Occurrence] {
        &self.occurrences
    }

    pub fn occurrences_of(&self, arg: usize) -> impl Iterator<Item = &Occurrence> {
        self.occurrences.iter().filter(move |o| o.arg == arg)
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Matrix form of an occurrence's index expressions over its extended
    /// index list.
    pub fn occurrence_map(&self, occ: &Occurrence) -> IndexAffineMap {
        let order = occ.extended_indices(&self.output_indices);
        IndexAffineMap::from_forms(&occ.indices, &order)
            .expect("occurrence maps are validated integral")
    }

    /// Structural pass: scoping, arities, integrality, exponent constancy.
    fn check_structure(&mut self) -> Result<(), SpecError> {
        let mut scope: Vec<IndexSymbol> = self.output_indices.clone();
        let mut warnings = Vec::new();
        let out = self.check_node(self.body, &mut scope, &mut warnings);
        self.warnings = warnings;
        out
    }

    fn check_node(
        &self,
        id: ExprId,
        scope: &mut Vec<IndexSymbol>,
        warnings: &mut Vec<String>,
    ) -> Result<(), SpecError> {
        let check_forms = |forms: &[AffineForm], scope: &[IndexSymbol]| {
            for form in forms {
                for sym in form.symbols() {
                    if !scope.contains(&sym) {
                        return Err(SpecError::UnknownSymbol { name: sym.name });
                    }
                }
            }
            Ok(())
        };
        match self.graph.node(id).clone() {
            Expr::Const(_) => Ok(()),
            Expr::Adjoint { .. } => Err(SpecError::AdjointInBody),
            Expr::Arg { arg, indices, .. } => {
                let decl =
                    self.args.get(arg).ok_or(SpecError::UnknownArgument { arg })?;
                if indices.len() != decl.rank() {
                    return Err(SpecError::ShapeMismatch {
                        arg: decl.name.clone(),
                        expected: decl.rank(),
                        got: indices.len(),
                    });
                }
                check_forms(&indices, scope)
            }
            Expr::Unary(_, x) => self.check_node(x, scope, warnings),
            Expr::Binary(op, a, b) => {
                if op == BinOp::Pow && !self.graph.is_constant_expr(b) {
                    return Err(SpecError::NonConstantExponent);
                }
                self.check_node(a, scope, warnings)?;
                self.check_node(b, scope, warnings)
            }
            Expr::Sum { index, lo, hi, body } => {
                if scope.iter().any(|s| s.name == index.name) {
                    return Err(SpecError::ShadowedIndex { name: index.name });
                }
                for form in lo.forms.iter().chain(hi.forms.iter()) {
                    for sym in form.symbols() {
                        if !scope.contains(&sym) {
                            return Err(SpecError::UnknownSymbol { name: sym.name });
                        }
                    }
                }
                if let (Some(l), Some(h)) = (lo.as_constant(), hi.as_constant()) {
                    if l > h {
                        warnings.push(format!(
                            "summation over `{}` has a constant empty range; it evaluates to 0",
                            index.name
                        ));
                    }
                }
                scope.push(index.clone());
                let out = self.check_node(body, scope, warnings);
                scope.pop();
                out
            }
            Expr::Delta { cond, then_branch, else_branch } => {
                let form = match &cond {
                    DeltaCond::Zero(f) | DeltaCond::Divisible(f, _) | DeltaCond::Nonneg(f) => f,
                };
                for sym in form.symbols() {
                    if !scope.contains(&sym) {
                        return Err(SpecError::UnknownSymbol { name: sym.name });
                    }
                }
                self.check_node(then_branch, scope, warnings)?;
                self.check_node(else_branch, scope, warnings)
            }
        }
    }

    fn collect_occurrences(&mut self) {
        let mut occs: Vec<Occurrence> = Vec::new();
        let mut chain: Vec<SumScope> = Vec::new();
        let mut visited: BTreeSet<(ExprId, Vec<SumScope>)> = BTreeSet::new();
        collect_rec(&self.graph, self.body, &mut chain, &mut occs, &mut visited);
        occs.sort_by_key(|a| a.arg);
        self.occurrences = occs;
    }

    /// Exhaustive guarded walk over the output index box: checks that every
    /// reachable argument access is integral and in range, with summation
    /// ranges instantiated exactly and delta conditions respected.
    fn check_ranges(&self) -> Result<(), SpecError> {
        let mut bindings: BTreeMap<IndexSymbol, Int> = BTreeMap::new();
        let mut point = Vec::with_capacity(self.output_shape.len());
        self.walk_box(0, &mut point, &mut bindings)
    }

    fn walk_box(
        &self,
        dim: usize,
        point: &mut Vec<Int>,
        bindings: &mut BTreeMap<IndexSymbol, Int>,
    ) -> Result<(), SpecError> {
        if dim == self.output_shape.len() {
            return self.walk_expr(self.body, point, bindings);
        }
        for v in 0..self.output_shape[dim] {
            let v = Int::from(v);
            bindings.insert(self.output_indices[dim].clone(), v.clone());
            point.push(v);
            self.walk_box(dim + 1, point, bindings)?;
            point.pop();
        }
        bindings.remove(&self.output_indices[dim]);
        Ok(())
    }

    fn walk_expr(
        &self,
        id: ExprId,
        point: &[Int],
        bindings: &mut BTreeMap<IndexSymbol, Int>,
    ) -> Result<(), SpecError> {
        match self.graph.node(id).clone() {
            Expr::Const(_) | Expr::Adjoint { .. } => Ok(()),
            Expr::Arg { arg, indices, .. } => {
                let decl = &self.args[arg];
                for (row, form) in indices.iter().enumerate() {
                    let v = form.eval(bindings);
                    if !v.denom().is_one() {
                        return Err(SpecError::NonIntegerIndex { arg: decl.name.clone() });
                    }
                    let v = v.to_integer();
                    if v.is_negative() || v >= Int::from(decl.shape[row]) {
                        return Err(SpecError::OutOfRangeIndexMap {
                            arg: decl.name.clone(),
                            row,
                            value: v,
                            size: decl.shape[row],
                            point: point.to_vec(),
                        });
                    }
                }
                Ok(())
            }
            Expr::Unary(_, x) => self.walk_expr(x, point, bindings),
            Expr::Binary(_, a, b) => {
                self.walk_expr(a, point, bindings)?;
                self.walk_expr(b, point, bindings)
            }
            Expr::Sum { index, lo, hi, body } => {
                let mut v = lo.eval(bindings);
                let hi = hi.eval(bindings);
                let shadowed = bindings.get(&index).cloned();
                while v <= hi {
                    bindings.insert(index.clone(), v.clone());
                    self.walk_expr(body, point, bindings)?;
                    v += 1;
                }
                match shadowed {
                    Some(old) => bindings.insert(index, old),
                    None => bindings.remove(&index),
                };
                Ok(())
            }
            Expr::Delta { cond, then_branch, else_branch } => {
                let taken = if eval_cond(&cond, bindings) { then_branch } else { else_branch };
                self.walk_expr(taken, point, bindings)
            }
        }
    }
}

/// Decide a delta condition under an exact integer assignment.
pub fn eval_cond(cond: &DeltaCond, bindings: &BTreeMap<IndexSymbol, Int>) -> bool {
    use num_integer::Integer;
    match cond {
        DeltaCond::Zero(f) => f.eval(bindings).is_zero(),
        DeltaCond::Divisible(f, m) => {
            let v = f.eval(bindings);
            debug_assert!(v.denom().is_one());
            v.to_integer().is_multiple_of(m)
        }
        DeltaCond::Nonneg(f) => !f.eval(bindings).is_negative(),
    }
}

fn collect_rec(
    graph: &ExprGraph,
    id: ExprId,
    chain: &mut Vec<SumScope>,
    occs: &mut Vec<Occurrence>,
    visited: &mut BTreeSet<(ExprId, Vec<SumScope>)>,
) {
    if !visited.insert((id, chain.clone())) {
        return;
    }
    match graph.node(id) {
        Expr::Const(_) | Expr::Adjoint { .. } => {}
        Expr::Arg { arg, indices, .. } => {
            let occ = Occurrence { arg: *arg, indices: indices.clone(), sums: chain.clone() };
            if !occs.contains(&occ) {
                occs.push(occ);
            }
        }
        Expr::Unary(_, x) => collect_rec(graph, *x, chain, occs, visited),
        Expr::Binary(_, a, b) => {
            collect_rec(graph, *a, chain, occs, visited);
            collect_rec(graph, *b, chain, occs, visited);
        }
        Expr::Sum { index, lo, hi, body } => {
            chain.push(SumScope { symbol: index.clone(), lo: lo.clone(), hi: hi.clone() });
            collect_rec(graph, *body, chain, occs, visited);
            chain.pop();
        }
        Expr::Delta { then_branch, else_branch, .. } => {
            collect_rec(graph, *then_branch, chain, occs, visited);
            collect_rec(graph, *else_branch, chain, occs, visited);
        }
    }
}
