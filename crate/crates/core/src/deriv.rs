//! Derivation of element-wise adjoint expressions.
//!
//! For every argument occurrence with index map `A` (and offset `c`), the
//! adjoint at argument index `beta` sums the local derivative over all
//! function indices `alpha` with `A·alpha + c = beta` inside the index box.
//! The integer solutions are parameterized as `alpha = I·(beta - c) + K·z`
//! via the Smith decomposition; the admissible `z` form a convex set whose
//! triangular bounds come from Fourier-Motzkin elimination. Summations in
//! the body are handled by extending the function multi-index with the
//! summation indices of the scopes enclosing each occurrence.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::{One, Signed, Zero};

use crate::affine::{AffineForm, IndexAffineMap};
use crate::autodiff::{reverse_ad, AdError};
use crate::expr::{DeltaCond, Expr, ExprGraph, ExprId, RangeBound};
use crate::fm::{fm_eliminate, FmSystem};
use crate::matrix::RatMat;
use crate::smith::{solve_structure, LinearSolveResult};
use crate::spec::{build_spec, ArgDecl, ElemFuncSpec, Occurrence, SpecError, SumScope};
use crate::symbol::IndexSymbol;
use crate::{Int, Rat};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DerivError {
    Spec(SpecError),
    Ad(AdError),
    /// A kernel direction escaped every range constraint; cannot happen for
    /// validated specs and indicates a malformed constraint set.
    UnboundedKernel { arg: String },
}

impl From<SpecError> for DerivError {
    fn from(e: SpecError) -> Self {
        DerivError::Spec(e)
    }
}

impl From<AdError> for DerivError {
    fn from(e: AdError) -> Self {
        DerivError::Ad(e)
    }
}

impl core::fmt::Display for DerivError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DerivError::Spec(e) => write!(f, "{e}"),
            DerivError::Ad(e) => write!(f, "{e}"),
            DerivError::UnboundedKernel { arg } => {
                write!(f, "kernel summation for `{arg}` is unbounded")
            }
        }
    }
}

impl core::error::Error for DerivError {}

/// Result of removing all summations from a body: the stripped body, the
/// extended multi-index and the summation ranges as extra constraints.
#[derive(Clone, Debug)]
pub struct SumLiberation {
    pub graph: ExprGraph,
    pub body: ExprId,
    pub extended_indices: Vec<IndexSymbol>,
    pub constraints: Vec<SumScope>,
}

/// Strip every summation from the body, appending each summation index to
/// the function multi-index and its range to the constraint list. Nested
/// sums iterate the process; sibling sums reusing an index name are renamed.
pub fn sum_liberate(spec: &ElemFuncSpec) -> SumLiberation {
    let mut graph = spec.graph().clone();
    let mut used: BTreeSet<String> =
        spec.output_indices().iter().map(|s| s.name.clone()).collect();
    let mut constraints = Vec::new();
    let mut memo = BTreeMap::new();
    let body = strip_sums(
        &mut graph,
        spec.body(),
        &BTreeMap::new(),
        &mut used,
        &mut constraints,
        &mut memo,
    );
    let mut extended_indices = spec.output_indices().to_vec();
    extended_indices.extend(constraints.iter().map(|c: &SumScope| c.symbol.clone()));
    SumLiberation { graph, body, extended_indices, constraints }
}

fn strip_sums(
    g: &mut ExprGraph,
    id: ExprId,
    renames: &BTreeMap<IndexSymbol, AffineForm>,
    used: &mut BTreeSet<String>,
    constraints: &mut Vec<SumScope>,
    memo: &mut BTreeMap<(ExprId, Vec<IndexSymbol>), ExprId>,
) -> ExprId {
    let key = (id, renames.keys().cloned().collect::<Vec<_>>());
    // A node may be reached along paths with identical rename context.
    if let Some(&done) = memo.get(&key) {
        return done;
    }
    let out = match g.node(id).clone() {
        Expr::Const(_) => id,
        Expr::Arg { arg, indices, tag } => {
            let indices = indices.iter().map(|f| f.substitute(renames)).collect();
            g.intern(Expr::Arg { arg, indices, tag })
        }
        Expr::Adjoint { indices } => {
            let indices = indices.iter().map(|f| f.substitute(renames)).collect();
            g.intern(Expr::Adjoint { indices })
        }
        Expr::Unary(op, x) => {
            let x = strip_sums(g, x, renames, used, constraints, memo);
            g.unary(op, x)
        }
        Expr::Binary(op, a, b) => {
            let a = strip_sums(g, a, renames, used, constraints, memo);
            let b = strip_sums(g, b, renames, used, constraints, memo);
            g.binary(op, a, b)
        }
        Expr::Delta { cond, then_branch, else_branch } => {
            let cond = match cond {
                DeltaCond::Zero(f) => DeltaCond::Zero(f.substitute(renames)),
                DeltaCond::Divisible(f, m) => DeltaCond::Divisible(f.substitute(renames), m),
                DeltaCond::Nonneg(f) => DeltaCond::Nonneg(f.substitute(renames)),
            };
            let t = strip_sums(g, then_branch, renames, used, constraints, memo);
            let e = strip_sums(g, else_branch, renames, used, constraints, memo);
            g.delta(cond, t, e)
        }
        Expr::Sum { index, lo, hi, body } => {
            let lo = lo.substitute(renames);
            let hi = hi.substitute(renames);
            let mut renames = renames.clone();
            let symbol = if used.contains(&index.name) {
                let mut n = 1;
                let fresh = loop {
                    let cand = format!("{}_{}", index.name, n);
                    if !used.contains(&cand) {
                        break IndexSymbol::new(cand, index.kind);
                    }
                    n += 1;
                };
                renames.insert(index.clone(), AffineForm::symbol(fresh.clone()));
                fresh
            } else {
                index.clone()
            };
            used.insert(symbol.name.clone());
            constraints.push(SumScope { symbol, lo, hi });
            strip_sums(g, body, &renames, used, constraints, memo)
        }
    };
    memo.insert(key, out);
    out
}

/// Everything derived for one argument occurrence.
#[derive(Clone, Debug)]
pub struct OccurrenceDerivation {
    pub occurrence: Occurrence,
    /// Function multi-index extended by this occurrence's summation indices.
    pub alpha_hat: Vec<IndexSymbol>,
    /// Index map `A`, offset `c`, over `alpha_hat`.
    pub index_map: IndexAffineMap,
    pub solve: LinearSolveResult,
    pub fm: FmSystem,
    /// Right-hand-side forms (over the derivative indices) feeding the
    /// Fourier-Motzkin bounds.
    pub b_forms: Vec<AffineForm>,
    /// Local derivative times the incoming adjoint, over `alpha_hat`.
    pub delta_expr: ExprId,
    /// Kernel summation symbols, innermost first.
    pub kernel_syms: Vec<IndexSymbol>,
    /// This occurrence's additive contribution, over the derivative indices.
    pub term: ExprId,
}

/// Adjoint expression of one argument.
#[derive(Clone, Debug)]
pub struct ArgDerivation {
    pub arg: usize,
    /// Derivative index symbols, one per argument dimension.
    pub beta: Vec<IndexSymbol>,
    pub occurrences: Vec<OccurrenceDerivation>,
    pub adjoint: ExprId,
}

/// Derived adjoints for every argument of a specification, sharing one
/// expression graph with the source body.
#[derive(Clone, Debug)]
pub struct DerivSpec {
    source: ElemFuncSpec,
    graph: ExprGraph,
    per_arg: Vec<ArgDerivation>,
}

impl DerivSpec {
    pub fn source(&self) -> &ElemFuncSpec {
        &self.source
    }

    pub fn graph(&self) -> &ExprGraph {
        &self.graph
    }

    pub fn per_arg(&self) -> &[ArgDerivation] {
        &self.per_arg
    }

    pub fn for_arg(&self, arg: usize) -> &ArgDerivation {
        &self.per_arg[arg]
    }

    /// Repackage one argument's adjoint as an element-wise spec of its own,
    /// with the incoming adjoint as an explicit argument named `df`. This is
    /// what makes derivation closed under iteration.
    pub fn adjoint_as_spec(&self, arg: usize) -> Result<ElemFuncSpec, SpecError> {
        let d = self.for_arg(arg);
        let mut graph = self.graph.clone();
        let df_arg = self.source.args().len();
        let body = reify_adjoint(&mut graph, d.adjoint, df_arg);
        let mut args = self.source.args().to_vec();
        let mut df_name = String::from("df");
        while args.iter().any(|a| a.name == df_name) {
            df_name.insert(0, 'd');
        }
        args.push(ArgDecl::new(df_name, self.source.output_shape().to_vec()));
        build_spec(
            format!("d{}", self.source.args()[arg].name),
            d.beta.clone(),
            self.source.args()[arg].shape.to_vec(),
            args,
            graph,
            body,
        )
    }
}

/// Rewrite adjoint references into references to a declared argument and
/// drop occurrence tags.
fn reify_adjoint(g: &mut ExprGraph, root: ExprId, df_arg: usize) -> ExprId {
    let mut memo: BTreeMap<ExprId, ExprId> = BTreeMap::new();
    fn rec(
        g: &mut ExprGraph,
        id: ExprId,
        df_arg: usize,
        memo: &mut BTreeMap<ExprId, ExprId>,
    ) -> ExprId {
        if let Some(&done) = memo.get(&id) {
            return done;
        }
        let out = match g.node(id).clone() {
            Expr::Const(_) => id,
            Expr::Adjoint { indices } => g.arg(df_arg, indices),
            Expr::Arg { arg, indices, .. } => g.arg(arg, indices),
            Expr::Unary(op, x) => {
                let x = rec(g, x, df_arg, memo);
                g.unary(op, x)
            }
            Expr::Binary(op, a, b) => {
                let a = rec(g, a, df_arg, memo);
                let b = rec(g, b, df_arg, memo);
                g.binary(op, a, b)
            }
            Expr::Sum { index, lo, hi, body } => {
                let body = rec(g, body, df_arg, memo);
                g.sum(index, lo, hi, body)
            }
            Expr::Delta { cond, then_branch, else_branch } => {
                let t = rec(g, then_branch, df_arg, memo);
                let e = rec(g, else_branch, df_arg, memo);
                g.delta(cond, t, e)
            }
        };
        memo.insert(id, out);
        out
    }
    rec(g, root, df_arg, &mut memo)
}

/// Derive the adjoint expression of every argument, seeding with the
/// incoming adjoint tensor `df`.
pub fn derive(spec: &ElemFuncSpec) -> Result<DerivSpec, DerivError> {
    derive_core(spec, None)
}

/// Derive the Jacobian of the function with respect to one argument as an
/// element-wise spec over the concatenated output and argument indices. It
/// is obtained by seeding the adjoint with a product of delta conditions.
pub fn derive_jacobian(spec: &ElemFuncSpec, arg: usize) -> Result<ElemFuncSpec, DerivError> {
    let mut used = taken_names(spec);
    for decl in spec.args() {
        for d in 0..decl.rank() {
            used.insert(format!("d{}_{}", decl.name, d));
        }
    }
    let arg_name = &spec.args()[arg].name;
    let prime_syms: Vec<IndexSymbol> = (0..spec.output_shape().len())
        .map(|d| IndexSymbol::output(fresh_name(format!("{}p_{}", spec.name(), d), &mut used)))
        .collect();

    let derived = derive_core(spec, Some(&prime_syms))?;
    let d = derived.for_arg(arg);
    let mut graph = derived.graph.clone();
    let body = reify_adjoint(&mut graph, d.adjoint, usize::MAX);
    let mut output_indices = prime_syms;
    output_indices.extend(d.beta.iter().cloned());
    let mut output_shape = spec.output_shape().to_vec();
    output_shape.extend_from_slice(&spec.args()[arg].shape);
    Ok(build_spec(
        format!("j{arg_name}"),
        output_indices,
        output_shape,
        spec.args().to_vec(),
        graph,
        body,
    )?)
}

/// Occurrence index maps must be integral for the solution structure of
/// `A alpha = beta - c` to make sense.
fn check_occurrence_maps(spec: &ElemFuncSpec) -> Result<(), DerivError> {
    for occ in spec.occurrences() {
        if occ.indices.iter().any(|f| !f.is_integral()) {
            return Err(DerivError::Spec(SpecError::NonIntegerIndex {
                arg: spec.args()[occ.arg].name.clone(),
            }));
        }
    }
    Ok(())
}

/// Names the derivation must not reuse for fresh symbols: every index and
/// summation binder of the source plus its tensor names.
fn taken_names(spec: &ElemFuncSpec) -> BTreeSet<String> {
    let mut used: BTreeSet<String> =
        spec.output_indices().iter().map(|s| s.name.clone()).collect();
    used.extend(spec.args().iter().map(|a| a.name.clone()));
    used.insert(spec.name().into());
    for occ in spec.occurrences() {
        used.extend(occ.sums.iter().map(|s| s.symbol.name.clone()));
    }
    used
}

fn fresh_name(base: String, used: &mut BTreeSet<String>) -> String {
    let mut name = base;
    while used.contains(&name) {
        name.push('_');
    }
    used.insert(name.clone());
    name
}

/// Per-occurrence local derivative expressions over the extended
/// multi-index, seeded with the incoming adjoint. This is the building
/// block of the reference (scatter) evaluation of adjoints, which iterates
/// the full index box instead of the derived closed-form bounds.
pub fn occurrence_deltas(
    spec: &ElemFuncSpec,
) -> Result<(ExprGraph, Vec<(Occurrence, ExprId)>), DerivError> {
    check_occurrence_maps(spec)?;
    let mut g = spec.graph().clone();
    let occs = spec.occurrences().to_vec();
    let mut chain: Vec<SumScope> = Vec::new();
    let mut memo = BTreeMap::new();
    let split_body = split_occurrences(&mut g, spec.body(), &occs, &mut chain, &mut memo);
    let forms = spec.output_indices().iter().map(|s| AffineForm::symbol(s.clone())).collect();
    let seed = g.adjoint(forms);
    let adjoints = reverse_ad(&mut g, split_body, seed)?;
    let mut out = Vec::with_capacity(occs.len());
    for (qi, occ) in occs.iter().enumerate() {
        let target =
            g.intern(Expr::Arg { arg: occ.arg, indices: occ.indices.clone(), tag: qi as u32 });
        out.push((occ.clone(), adjoints.adjoint_of(target)));
    }
    Ok((g, out))
}

fn derive_core(
    spec: &ElemFuncSpec,
    jacobian_syms: Option<&[IndexSymbol]>,
) -> Result<DerivSpec, DerivError> {
    check_occurrence_maps(spec)?;
    let mut g = spec.graph().clone();

    // Pin each occurrence to its own node so that reverse accumulation can
    // tell apart equal index expressions under different summation scopes.
    let occs = spec.occurrences().to_vec();
    let mut chain: Vec<SumScope> = Vec::new();
    let mut memo = BTreeMap::new();
    let split_body = split_occurrences(&mut g, spec.body(), &occs, &mut chain, &mut memo);

    // The seed is either the incoming adjoint df[alpha] or, for Jacobians,
    // a product of deltas matching alpha against the primed output indices.
    let seed = match jacobian_syms {
        None => {
            let forms =
                spec.output_indices().iter().map(|s| AffineForm::symbol(s.clone())).collect();
            g.adjoint(forms)
        }
        Some(primes) => {
            let mut inner = g.one();
            let zero = g.zero();
            for (sym, prime) in spec.output_indices().iter().zip(primes).rev() {
                let cond = DeltaCond::Zero(
                    AffineForm::symbol(sym.clone()).sub(&AffineForm::symbol(prime.clone())),
                );
                inner = g.delta(cond, inner, zero);
            }
            inner
        }
    };

    let adjoints = reverse_ad(&mut g, split_body, seed)?;

    let mut per_arg = Vec::with_capacity(spec.args().len());
    let taken = taken_names(spec);
    for (p, decl) in spec.args().iter().enumerate() {
        let mut used = taken.clone();
        let beta: Vec<IndexSymbol> = (0..decl.rank())
            .map(|d| {
                IndexSymbol::derivative(fresh_name(format!("d{}_{}", decl.name, d), &mut used))
            })
            .collect();
        let beta_box: BTreeMap<IndexSymbol, (Int, Int)> = beta
            .iter()
            .zip(&decl.shape)
            .map(|(s, &n)| (s.clone(), (Int::zero(), Int::from(n) - 1)))
            .collect();

        let mut occ_derivs = Vec::new();
        let mut total: Option<ExprId> = None;
        for (qi, occ) in occs.iter().enumerate() {
            if occ.arg != p {
                continue;
            }
            let target = g.intern(Expr::Arg {
                arg: occ.arg,
                indices: occ.indices.clone(),
                tag: qi as u32,
            });
            let delta_expr = adjoints.adjoint_of(target);
            let od = derive_occurrence(
                &mut g,
                spec,
                decl,
                occ,
                &beta,
                &beta_box,
                delta_expr,
                &used,
            )?;
            total = Some(match total {
                None => od.term,
                Some(t) => g.add(t, od.term),
            });
            occ_derivs.push(od);
        }
        let adjoint = total.unwrap_or_else(|| g.zero());
        debug_assert!(
            g.free_symbols(adjoint)
                .iter()
                .all(|s| beta.contains(s) || jacobian_syms.is_some_and(|p| p.contains(s))),
            "adjoint of {} leaks symbols",
            decl.name
        );
        per_arg.push(ArgDerivation { arg: p, beta, occurrences: occ_derivs, adjoint });
    }

    Ok(DerivSpec { source: spec.clone(), graph: g, per_arg })
}

fn split_occurrences(
    g: &mut ExprGraph,
    id: ExprId,
    occs: &[Occurrence],
    chain: &mut Vec<SumScope>,
    memo: &mut BTreeMap<(ExprId, Vec<SumScope>), ExprId>,
) -> ExprId {
    let key = (id, chain.clone());
    if let Some(&done) = memo.get(&key) {
        return done;
    }
    let out = match g.node(id).clone() {
        Expr::Const(_) | Expr::Adjoint { .. } => id,
        Expr::Arg { arg, indices, .. } => {
            let tag = occs
                .iter()
                .position(|o| o.arg == arg && o.indices == indices && o.sums == *chain)
                .expect("every occurrence is in the table") as u32;
            g.intern(Expr::Arg { arg, indices, tag })
        }
        Expr::Unary(op, x) => {
            let x = split_occurrences(g, x, occs, chain, memo);
            g.unary(op, x)
        }
        Expr::Binary(op, a, b) => {
            let a = split_occurrences(g, a, occs, chain, memo);
            let b = split_occurrences(g, b, occs, chain, memo);
            g.binary(op, a, b)
        }
        Expr::Sum { index, lo, hi, body } => {
            chain.push(SumScope { symbol: index.clone(), lo: lo.clone(), hi: hi.clone() });
            let body = split_occurrences(g, body, occs, chain, memo);
            chain.pop();
            g.sum(index, lo, hi, body)
        }
        Expr::Delta { cond, then_branch, else_branch } => {
            let t = split_occurrences(g, then_branch, occs, chain, memo);
            let e = split_occurrences(g, else_branch, occs, chain, memo);
            g.delta(cond, t, e)
        }
    };
    memo.insert(key, out);
    out
}

#[allow(clippy::too_many_arguments)]
fn derive_occurrence(
    g: &mut ExprGraph,
    spec: &ElemFuncSpec,
    decl: &ArgDecl,
    occ: &Occurrence,
    beta: &[IndexSymbol],
    beta_box: &BTreeMap<IndexSymbol, (Int, Int)>,
    delta_expr: ExprId,
    taken: &BTreeSet<String>,
) -> Result<OccurrenceDerivation, DerivError> {
    let alpha_hat = occ.extended_indices(spec.output_indices());
    let index_map = spec.occurrence_map(occ);
    let solve = solve_structure(&index_map.coeffs);
    let m_hat = alpha_hat.len();
    let kappa = solve.kernel_dim();

    // beta - c, one form per argument dimension.
    let beta_minus_c: Vec<AffineForm> = beta
        .iter()
        .zip(&index_map.offset)
        .map(|(s, c)| {
            AffineForm::symbol(s.clone())
                .add_constant(&-Rat::from_integer(c.clone()))
        })
        .collect();

    // I·(beta - c) per extended index; rational entries are possible and are
    // guarded by divisibility conditions below.
    let pinv_forms: Vec<AffineForm> = (0..m_hat)
        .map(|j| {
            let mut f = AffineForm::zero();
            for (d, b) in beta_minus_c.iter().enumerate() {
                f = f.add(&b.scale(&solve.pinv[(j, d)]));
            }
            f
        })
        .collect();

    let mut used = taken.clone();
    let kernel_syms: Vec<IndexSymbol> = (0..kappa)
        .map(|t| IndexSymbol::kernel(fresh_name(format!("d{}_z{}", decl.name, t), &mut used)))
        .collect();

    // Substitution alpha_hat -> I·(beta - c) + K·z.
    let mut subst = BTreeMap::new();
    for (j, sym) in alpha_hat.iter().enumerate() {
        let mut f = pinv_forms[j].clone();
        for (t, z) in kernel_syms.iter().enumerate() {
            f = f.add(&AffineForm::term(
                z.clone(),
                Rat::from_integer(solve.kernel[(j, t)].clone()),
            ));
        }
        subst.insert(sym.clone(), f);
    }

    // Range constraints R·alpha_hat >= r: the output index box plus the
    // ranges of the enclosing summations.
    let mut rows: Vec<(Vec<Rat>, Rat)> = Vec::new();
    for (d, &n) in spec.output_shape().iter().enumerate() {
        let mut lo = alloc::vec![Rat::zero(); m_hat];
        lo[d] = Rat::one();
        rows.push((lo.clone(), Rat::zero()));
        let mut hi = alloc::vec![Rat::zero(); m_hat];
        hi[d] = -Rat::one();
        rows.push((hi, -Rat::from_integer(Int::from(n) - 1)));
    }
    for (s, scope) in occ.sums.iter().enumerate() {
        let pos = spec.output_shape().len() + s;
        for form in &scope.lo.forms {
            // k >= form  <=>  k - lin(form) >= const(form)
            let mut row = alloc::vec![Rat::zero(); m_hat];
            row[pos] = Rat::one();
            for (sym, c) in form.terms() {
                let j = alpha_hat.iter().position(|a| a == sym).expect("bound symbol in scope");
                row[j] -= c.clone();
            }
            rows.push((row, form.constant_part().clone()));
        }
        for form in &scope.hi.forms {
            // k <= form  <=>  lin(form) - k >= -const(form)
            let mut row = alloc::vec![Rat::zero(); m_hat];
            row[pos] = -Rat::one();
            for (sym, c) in form.terms() {
                let j = alpha_hat.iter().position(|a| a == sym).expect("bound symbol in scope");
                row[j] += c.clone();
            }
            rows.push((row, -form.constant_part().clone()));
        }
    }

    // Rewrite over z: (R·K)·z >= r - R·I·(beta - c).
    let mut coeff = RatMat::zeros(rows.len(), kappa);
    let mut b_forms = Vec::with_capacity(rows.len());
    for (ri, (row, rhs)) in rows.iter().enumerate() {
        for t in 0..kappa {
            let mut acc = Rat::zero();
            for (j, rj) in row.iter().enumerate() {
                acc += rj.clone() * Rat::from_integer(solve.kernel[(j, t)].clone());
            }
            coeff[(ri, t)] = acc;
        }
        let mut form = AffineForm::constant(rhs.clone());
        for (pf, rj) in pinv_forms.iter().zip(row) {
            form = form.sub(&pf.scale(rj));
        }
        b_forms.push(form);
    }
    let fm = fm_eliminate(&coeff);

    // Conditions, outermost first: cokernel deltas, divisibility of the
    // pseudo-inverse image, then any range conditions that do not involve a
    // kernel sum (trivially true ones over the argument's box are pruned).
    let mut conds: Vec<DeltaCond> = Vec::new();
    for r in 0..solve.cokernel.rows() {
        let mut f = AffineForm::zero();
        for (d, b) in beta_minus_c.iter().enumerate() {
            f = f.add(&b.scale(&Rat::from_integer(solve.cokernel[(r, d)].clone())));
        }
        conds.push(DeltaCond::Zero(f));
    }
    for pf in &pinv_forms {
        let m = pf.denom_lcm();
        if !m.is_one() {
            let cond =
                DeltaCond::Divisible(pf.scale(&Rat::from_integer(m.clone())), m);
            if !conds.contains(&cond) {
                conds.push(cond);
            }
        }
    }
    // Constraint rows without any kernel coefficient are pure conditions on
    // the derivative indices and cannot be absorbed into summation bounds.
    // (Feasibility rows that Fourier-Motzkin derives by pairing are implied
    // by empty summation ranges and need not be emitted.)
    let mut always_zero = false;
    for (ri, b_form) in b_forms.iter().enumerate() {
        if (0..kappa).any(|t| !coeff[(ri, t)].is_zero()) {
            continue;
        }
        let form = b_form.neg(); // 0 >= b_form
        match form.range_over_box(beta_box) {
            Some((lo, _)) if !lo.is_negative() => {} // holds everywhere
            Some((_, hi)) if hi.is_negative() => {
                always_zero = true; // fails everywhere
                break;
            }
            _ => {
                let cond = DeltaCond::Nonneg(form);
                if !conds.contains(&cond) {
                    conds.push(cond);
                }
            }
        }
    }

    let term = if always_zero {
        g.zero()
    } else {
        // Substitute the solution into the local derivative and wrap the
        // kernel sums (innermost first) and the guarding conditions.
        let mut term = g.substitute(delta_expr, &subst);
        for (t, z) in kernel_syms.iter().enumerate() {
            let tail: Vec<IndexSymbol> = kernel_syms[t + 1..].to_vec();
            let (lo_forms, hi_forms) = fm.bound_forms(&b_forms, &tail, t);
            if lo_forms.is_empty() || hi_forms.is_empty() {
                return Err(DerivError::UnboundedKernel { arg: decl.name.clone() });
            }
            term = g.sum(z.clone(), RangeBound::lower(lo_forms), RangeBound::upper(hi_forms), term);
        }
        let zero = g.zero();
        for cond in conds.into_iter().rev() {
            term = g.delta(cond, term, zero);
        }
        term
    };

    Ok(OccurrenceDerivation {
        occurrence: occ.clone(),
        alpha_hat,
        index_map,
        solve,
        fm,
        b_forms,
        delta_expr,
        kernel_syms,
        term,
    })
}
