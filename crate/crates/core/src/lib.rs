//! Core machinery for deriving element-wise tensor derivative expressions.
//!
//! Given a tensor-valued function defined element-wise, where the indices of
//! every argument are affine combinations of the output indices (possibly
//! under nested summations), this crate produces a closed-form symbolic
//! expression for the adjoint of every argument: summations with exact
//! integer bounds, delta conditions and index substitutions are inserted
//! automatically.
//!
//! The building blocks are:
//!
//! * [`expr`] — a hash-consed immutable expression DAG over argument
//!   elements, index symbols, bounded sums and delta conditionals;
//! * [`matrix`] / [`smith`] — exact integer linear algebra (Smith normal
//!   form, pseudo-inverse, kernel, cokernel) used to parameterize all
//!   integer solutions of an index equation `A·alpha = beta`;
//! * [`fm`] — parametric Fourier-Motzkin elimination yielding triangular
//!   per-variable bounds valid for every right-hand side;
//! * [`autodiff`] — reverse accumulation on the scalar expression DAG;
//! * [`deriv`] — the derivation pass itself, combining all of the above.
//!
//! The crate is `no_std` (with `alloc`); numeric evaluation, parsing and
//! printing live in the companion `tad-cli` crate.
//!
//! ```
//! use tad_core::{build_spec, derive, AffineForm, ArgDecl, ExprGraph, IndexSymbol};
//!
//! // f[i, j] = x[i] * y[i, j]
//! let i = IndexSymbol::output("i");
//! let j = IndexSymbol::output("j");
//! let mut g = ExprGraph::new();
//! let x = g.arg(0, vec![AffineForm::symbol(i.clone())]);
//! let y = g.arg(1, vec![AffineForm::symbol(i.clone()), AffineForm::symbol(j.clone())]);
//! let body = g.mul(x, y);
//! let spec = build_spec(
//!     "f",
//!     vec![i, j],
//!     vec![3, 4],
//!     vec![ArgDecl::new("x", vec![3]), ArgDecl::new("y", vec![3, 4])],
//!     g,
//!     body,
//! )?;
//!
//! // The missing index j turns into a summation in dx; dy needs none.
//! let d = derive(&spec)?;
//! assert_eq!(d.for_arg(0).occurrences[0].kernel_syms.len(), 1);
//! assert_eq!(d.for_arg(1).occurrences[0].kernel_syms.len(), 0);
//! # Ok::<(), Box<dyn core::error::Error>>(())
//! ```

#![no_std]

extern crate alloc;

pub mod affine;
pub mod autodiff;
pub mod deriv;
pub mod expr;
pub mod fm;
pub mod matrix;
pub mod smith;
pub mod spec;
pub mod symbol;

/// Exact integer used throughout index arithmetic.
pub type Int = num_bigint::BigInt;
/// Exact rational used for pseudo-inverses, bound matrices and constants.
pub type Rat = num_rational::BigRational;

pub use affine::{AffineForm, IndexAffineMap};
pub use autodiff::{reverse_ad, AdError, AdjointMap};
pub use deriv::{
    derive, derive_jacobian, occurrence_deltas, sum_liberate, ArgDerivation, DerivError,
    DerivSpec, OccurrenceDerivation, SumLiberation,
};
pub use expr::{BinOp, BoundDir, DeltaCond, Expr, ExprGraph, ExprId, RangeBound, SubstError, UnOp};
pub use fm::{fm_eliminate, FmError, FmSystem};
pub use matrix::{IntMat, RatMat};
pub use smith::{
    classify_rhs, extended_gcd, smith_normal_form, solve_structure, LinearSolveResult,
    SmithDecomposition, SmithError, SolutionClass,
};
pub use spec::{build_spec, eval_cond, ArgDecl, ElemFuncSpec, Occurrence, SpecError, SumScope};
pub use symbol::{IndexSymbol, SymbolKind};

/// Shorthand for an exact integer from a machine integer.
pub fn int(v: i64) -> Int {
    Int::from(v)
}

/// Shorthand for an exact rational from a machine integer.
pub fn rat(v: i64) -> Rat {
    Rat::from_integer(Int::from(v))
}

/// Shorthand for an exact rational fraction.
pub fn ratio(num: i64, den: i64) -> Rat {
    Rat::new(Int::from(num), Int::from(den))
}
