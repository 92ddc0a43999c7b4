//! Text rendering of specs and derived adjoints.
//!
//! Conventions: zero-based indices, `**` for exponentiation, `sum{k}_lo^hi
//! (body)` for summations, `if {cond} then (a) else (b)` for delta
//! conditionals, index lists separated by `; `. Affine expressions print
//! their constant first (`-2 + dd_0`) and negative terms as `+ -x`, so a
//! condition reads `dc_0 + -dc_1 = 0`.

use num_traits::{One, Signed, Zero};
use tad_core::{
    AffineForm, BinOp, BoundDir, DeltaCond, DerivSpec, ElemFuncSpec, Expr, ExprGraph, ExprId,
    RangeBound, Rat, UnOp,
};

fn rat_str(v: &Rat) -> String {
    if v.denom().is_one() {
        format!("{}", v.numer())
    } else {
        format!("{} / {}", v.numer(), v.denom())
    }
}

/// Affine expression, constant first, one `+` between pieces. A form with
/// fractional coefficients prints as `(scaled integer form) / lcm`.
pub fn affine_str(f: &AffineForm) -> String {
    let lcm = f.denom_lcm();
    if !lcm.is_one() {
        let scaled = f.scale(&Rat::from_integer(lcm.clone()));
        return format!("({}) / {}", affine_str(&scaled), lcm);
    }
    let mut pieces = Vec::new();
    if !f.constant_part().is_zero() || f.num_terms() == 0 {
        pieces.push(rat_str(f.constant_part()));
    }
    for (sym, c) in f.terms() {
        if c.is_one() {
            pieces.push(sym.name.clone());
        } else if (-c.clone()).is_one() {
            pieces.push(format!("-{}", sym.name));
        } else {
            pieces.push(format!("{} * {}", rat_str(c), sym.name));
        }
    }
    pieces.join(" + ")
}

fn indices_str(forms: &[AffineForm]) -> String {
    forms.iter().map(affine_str).collect::<Vec<_>>().join("; ")
}

/// One side of a summation range: bare for plain nonnegative integers,
/// parenthesized otherwise, `max [..]`/`min [..]` for multiple forms.
fn bound_str(b: &RangeBound) -> String {
    if b.forms.len() == 1 {
        let f = &b.forms[0];
        if f.is_constant() && f.is_integral() && !f.constant_part().is_negative() {
            return rat_str(f.constant_part());
        }
        return format!("({})", affine_str(f));
    }
    let joined = b.forms.iter().map(affine_str).collect::<Vec<_>>().join("; ");
    match b.dir {
        BoundDir::Lower => format!("(max [{joined}])"),
        BoundDir::Upper => format!("(min [{joined}])"),
    }
}

fn cond_str(cond: &DeltaCond) -> String {
    match cond {
        DeltaCond::Zero(f) => format!("{} = 0", affine_str(f)),
        DeltaCond::Divisible(f, m) => format!("({}) % {} = 0", affine_str(f), m),
        DeltaCond::Nonneg(f) => format!("{} >= 0", affine_str(f)),
    }
}

fn unop_name(op: UnOp) -> &'static str {
    match op {
        UnOp::Neg => "-",
        UnOp::Exp => "exp",
        UnOp::Log => "log",
        UnOp::Sin => "sin",
        UnOp::Cos => "cos",
        UnOp::Sinh => "sinh",
        UnOp::Sqrt => "sqrt",
    }
}

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_POW: u8 = 3;
const PREC_ATOM: u8 = 4;

fn node_prec(g: &ExprGraph, id: ExprId) -> u8 {
    match g.node(id) {
        Expr::Const(v) => {
            if v.is_negative() {
                PREC_ADD
            } else if v.denom().is_one() {
                PREC_ATOM
            } else {
                PREC_MUL // prints as `p / q`
            }
        }
        Expr::Unary(UnOp::Neg, _) => PREC_ADD,
        Expr::Unary(..) | Expr::Arg { .. } | Expr::Adjoint { .. } => PREC_ATOM,
        Expr::Binary(BinOp::Add | BinOp::Sub, ..) => PREC_ADD,
        Expr::Binary(BinOp::Mul | BinOp::Div, ..) => PREC_MUL,
        Expr::Binary(BinOp::Pow, ..) => PREC_POW,
        Expr::Sum { .. } | Expr::Delta { .. } => PREC_ATOM,
    }
}

/// Display name for the incoming adjoint: `df` unless an argument already
/// uses it (possible for re-derived adjoint specs).
fn adjoint_name(names: &[&str]) -> String {
    let mut name = String::from("df");
    while names.contains(&name.as_str()) {
        name.insert(0, 'd');
    }
    name
}

fn expr_str(g: &ExprGraph, id: ExprId, names: &[&str], min_prec: u8) -> String {
    let s = match g.node(id) {
        Expr::Const(v) => {
            if v.denom().is_one() {
                format!("{}", v.numer())
            } else {
                format!("{} / {}", v.numer(), v.denom())
            }
        }
        Expr::Arg { arg, indices, .. } => {
            format!("{}[{}]", names[*arg], indices_str(indices))
        }
        Expr::Adjoint { indices } => {
            format!("{}[{}]", adjoint_name(names), indices_str(indices))
        }
        Expr::Unary(UnOp::Neg, x) => {
            // The operand keeps its own parentheses unless atomic.
            format!("-{}", expr_str(g, *x, names, PREC_ATOM))
        }
        Expr::Unary(op, x) => {
            format!("{} ({})", unop_name(*op), expr_str(g, *x, names, 0))
        }
        Expr::Binary(op, a, b) => {
            let (sym, prec) = match op {
                BinOp::Add => ("+", PREC_ADD),
                BinOp::Sub => ("-", PREC_ADD),
                BinOp::Mul => ("*", PREC_MUL),
                BinOp::Div => ("/", PREC_MUL),
                BinOp::Pow => ("**", PREC_POW),
            };
            let (lmin, rmin) = if *op == BinOp::Pow {
                (PREC_ATOM, PREC_ATOM)
            } else {
                (prec, prec + 1)
            };
            format!(
                "{} {} {}",
                expr_str(g, *a, names, lmin),
                sym,
                expr_str(g, *b, names, rmin)
            )
        }
        Expr::Sum { index, lo, hi, body } => {
            format!(
                "sum{{{}}}_{}^{} ({})",
                index.name,
                bound_str(lo),
                bound_str(hi),
                expr_str(g, *body, names, 0)
            )
        }
        Expr::Delta { cond, then_branch, else_branch } => {
            format!(
                "if {{{}}} then ({}) else ({})",
                cond_str(cond),
                expr_str(g, *then_branch, names, 0),
                expr_str(g, *else_branch, names, 0)
            )
        }
    };
    if node_prec(g, id) < min_prec {
        format!("({s})")
    } else {
        s
    }
}

/// Render an arbitrary expression of a graph with the given tensor names.
pub fn render_expr(g: &ExprGraph, id: ExprId, names: &[&str]) -> String {
    expr_str(g, id, names, 0)
}

/// The `name[i; j] = body` definition line of a spec.
pub fn definition_line(spec: &ElemFuncSpec) -> String {
    let names: Vec<&str> = spec.args().iter().map(|a| a.name.as_str()).collect();
    let idx = spec
        .output_indices()
        .iter()
        .map(|s| s.name.clone())
        .collect::<Vec<_>>()
        .join("; ");
    format!("{}[{}] = {}", spec.name(), idx, expr_str(spec.graph(), spec.body(), &names, 0))
}

fn shape_line(name: &str, shape: &[usize]) -> String {
    let dims = shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" x ");
    format!("{name} : {dims}")
}

/// Canonical file form of a spec: shape declarations, then the definition.
pub fn print_spec(spec: &ElemFuncSpec) -> String {
    let mut out = String::new();
    for arg in spec.args() {
        out.push_str(&shape_line(&arg.name, &arg.shape));
        out.push('\n');
    }
    out.push_str(&shape_line(spec.name(), spec.output_shape()));
    out.push('\n');
    out.push_str(&definition_line(spec));
    out.push('\n');
    out
}

/// One `Derivative of f wrt. x: dx[...] = ...` line.
pub fn derivative_line(d: &DerivSpec, arg: usize) -> String {
    let spec = d.source();
    let names: Vec<&str> = spec.args().iter().map(|a| a.name.as_str()).collect();
    let ad = d.for_arg(arg);
    let arg_name = &spec.args()[arg].name;
    let idx = ad.beta.iter().map(|s| s.name.clone()).collect::<Vec<_>>().join("; ");
    format!(
        "Derivative of {} wrt. {}: d{}[{}] = {}",
        spec.name(),
        arg_name,
        arg_name,
        idx,
        expr_str(d.graph(), ad.adjoint, &names, 0)
    )
}

/// Full derivation report: the input line followed by one derivative line
/// per argument.
pub fn print_derivatives(d: &DerivSpec) -> String {
    let mut out = format!("Input: {}\n", definition_line(d.source()));
    for arg in 0..d.source().args().len() {
        out.push_str(&derivative_line(d, arg));
        out.push('\n');
    }
    out
}
