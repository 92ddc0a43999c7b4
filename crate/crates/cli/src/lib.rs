//! Text frontend, numeric evaluator and verification harness for
//! element-wise derivative expressions, built on `tad-core`.

pub mod eval;
pub mod parse;
pub mod print;
pub mod verify;

pub use eval::{
    brute_force_adjoint, eval_adjoint, eval_spec, finite_diff_jacobian, index_iter, DenseTensor,
    EvalError,
};
pub use parse::{parse_source, ParseError};
pub use print::{
    affine_str, definition_line, derivative_line, print_derivatives, print_spec, render_expr,
};
pub use verify::{verify, ArgReport, VerifyError, VerifyReport, FD_STEP, REL_FLOOR};
