//! Dense numeric evaluation of specs and derived adjoints, plus the two
//! reference paths every derivative is checked against: scatter
//! accumulation over the full index box and central finite differences.

use std::collections::BTreeMap;

use num_traits::{One, Signed, ToPrimitive};
use tad_core::{
    eval_cond, occurrence_deltas, AffineForm, BinOp, DerivSpec, ElemFuncSpec, Expr, ExprGraph,
    ExprId, IndexSymbol, Int, Occurrence, UnOp,
};

/// Row-major dense tensor of 64-bit floats.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        DenseTensor { shape, data: vec![0.0; len] }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Self::zeros(shape);
        let dims = t.shape.clone();
        for (lin, idx) in index_iter(&dims).enumerate() {
            t.data[lin] = f(&idx);
        }
        t
    }

    pub fn from_data(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape/data mismatch");
        DenseTensor { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn linear(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut lin = 0;
        for (i, &d) in idx.iter().zip(&self.shape) {
            debug_assert!(*i < d);
            lin = lin * d + i;
        }
        lin
    }

    pub fn unlinear(&self, mut lin: usize) -> Vec<usize> {
        let mut idx = vec![0; self.shape.len()];
        for d in (0..self.shape.len()).rev() {
            idx[d] = lin % self.shape[d];
            lin /= self.shape[d];
        }
        idx
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.linear(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let lin = self.linear(idx);
        self.data[lin] = v;
    }
}

/// Row-major iterator over all multi-indices of a shape.
pub fn index_iter(shape: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let total: usize = shape.iter().product();
    let rank = shape.len();
    (0..total).map(move |mut lin| {
        let mut idx = vec![0; rank];
        for d in (0..rank).rev() {
            idx[d] = lin % shape[d];
            lin /= shape[d];
        }
        idx
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum EvalError {
    ShapeMismatch { arg: String, expected: Vec<usize>, got: Vec<usize> },
    WrongArgCount { expected: usize, got: usize },
    MissingAdjoint,
    /// The spec cannot be differentiated (e.g. a fractional index map).
    Underivable { what: String },
    NumericDomain { what: String, at: Vec<usize> },
    IndexOutOfRange { arg: String, index: Vec<Int>, at: Vec<usize> },
    NonIntegerIndex { arg: String, at: Vec<usize> },
}

impl std::fmt::Display for EvalError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EvalError::ShapeMismatch { arg, expected, got } => {
                write!(f, "`{arg}` has shape {got:?}, expected {expected:?}")
            }
            EvalError::WrongArgCount { expected, got } => {
                write!(f, "expected {expected} argument tensors, got {got}")
            }
            EvalError::MissingAdjoint => write!(f, "expression references df but none was given"),
            EvalError::Underivable { what } => write!(f, "{what}"),
            EvalError::NumericDomain { what, at } => write!(f, "{what} at output index {at:?}"),
            EvalError::IndexOutOfRange { arg, index, at } => {
                write!(f, "`{arg}` indexed out of range ({index:?}) at output index {at:?}")
            }
            EvalError::NonIntegerIndex { arg, at } => {
                write!(f, "`{arg}` received a fractional index at output index {at:?}")
            }
        }
    }
}

impl std::error::Error for EvalError {}

struct EvalCtx<'a> {
    graph: &'a ExprGraph,
    arg_names: Vec<&'a str>,
    args: &'a [DenseTensor],
    df: Option<&'a DenseTensor>,
}

impl<'a> EvalCtx<'a> {
    fn tensor_element(
        &self,
        name: &str,
        tensor: &DenseTensor,
        indices: &[AffineForm],
        bindings: &BTreeMap<IndexSymbol, Int>,
        at: &[usize],
    ) -> Result<f64, EvalError> {
        let mut raw = Vec::with_capacity(indices.len());
        for form in indices {
            let v = form.eval(bindings);
            if !v.denom().is_one() {
                return Err(EvalError::NonIntegerIndex { arg: name.into(), at: at.to_vec() });
            }
            raw.push(v.to_integer());
        }
        let mut idx = Vec::with_capacity(raw.len());
        for (d, v) in raw.iter().enumerate() {
            if v.is_negative() || *v >= Int::from(tensor.shape()[d]) {
                return Err(EvalError::IndexOutOfRange {
                    arg: name.into(),
                    index: raw.clone(),
                    at: at.to_vec(),
                });
            }
            idx.push(v.to_usize().unwrap());
        }
        Ok(tensor.get(&idx))
    }

    fn eval(
        &self,
        id: ExprId,
        bindings: &mut BTreeMap<IndexSymbol, Int>,
        at: &[usize],
    ) -> Result<f64, EvalError> {
        match self.graph.node(id) {
            Expr::Const(v) => Ok(v.to_f64().expect("rational fits f64")),
            Expr::Arg { arg, indices, .. } => {
                self.tensor_element(self.arg_names[*arg], &self.args[*arg], indices, bindings, at)
            }
            Expr::Adjoint { indices } => {
                let df = self.df.ok_or(EvalError::MissingAdjoint)?;
                self.tensor_element("df", df, indices, bindings, at)
            }
            Expr::Unary(op, x) => {
                let v = self.eval(*x, bindings, at)?;
                match op {
                    UnOp::Neg => Ok(-v),
                    UnOp::Exp => Ok(v.exp()),
                    UnOp::Log => {
                        if v <= 0.0 {
                            return Err(EvalError::NumericDomain {
                                what: format!("log of non-positive value {v}"),
                                at: at.to_vec(),
                            });
                        }
                        Ok(v.ln())
                    }
                    UnOp::Sin => Ok(v.sin()),
                    UnOp::Cos => Ok(v.cos()),
                    UnOp::Sinh => Ok(v.sinh()),
                    UnOp::Sqrt => {
                        if v < 0.0 {
                            return Err(EvalError::NumericDomain {
                                what: format!("square root of negative value {v}"),
                                at: at.to_vec(),
                            });
                        }
                        Ok(v.sqrt())
                    }
                }
            }
            Expr::Binary(op, a, b) => {
                let x = self.eval(*a, bindings, at)?;
                match op {
                    BinOp::Add => Ok(x + self.eval(*b, bindings, at)?),
                    BinOp::Sub => Ok(x - self.eval(*b, bindings, at)?),
                    BinOp::Mul => Ok(x * self.eval(*b, bindings, at)?),
                    BinOp::Div => {
                        let y = self.eval(*b, bindings, at)?;
                        if y == 0.0 {
                            return Err(EvalError::NumericDomain {
                                what: "division by zero".into(),
                                at: at.to_vec(),
                            });
                        }
                        Ok(x / y)
                    }
                    BinOp::Pow => {
                        // Integer constant exponents use powi so negative
                        // bases stay well-defined.
                        if let Some(r) = self.graph.rational_value(*b) {
                            if r.denom().is_one() {
                                if let Some(e) = r.numer().to_i32() {
                                    return Ok(x.powi(e));
                                }
                            }
                        }
                        let y = self.eval(*b, bindings, at)?;
                        let out = x.powf(y);
                        if out.is_nan() {
                            return Err(EvalError::NumericDomain {
                                what: format!("{x} ** {y} is undefined"),
                                at: at.to_vec(),
                            });
                        }
                        Ok(out)
                    }
                }
            }
            Expr::Sum { index, lo, hi, body } => {
                let mut v = lo.eval(bindings);
                let hi = hi.eval(bindings);
                // The binder may shadow an outer binding of the same symbol
                // (a liberated summation index); restore it afterwards.
                let shadowed = bindings.get(index).cloned();
                let mut acc = 0.0;
                while v <= hi {
                    bindings.insert(index.clone(), v.clone());
                    acc += self.eval(*body, bindings, at)?;
                    v += 1;
                }
                match shadowed {
                    Some(old) => bindings.insert(index.clone(), old),
                    None => bindings.remove(index),
                };
                Ok(acc)
            }
            Expr::Delta { cond, then_branch, else_branch } => {
                let taken = if eval_cond(cond, bindings) { *then_branch } else { *else_branch };
                self.eval(taken, bindings, at)
            }
        }
    }
}

fn check_env(spec: &ElemFuncSpec, env: &[DenseTensor]) -> Result<(), EvalError> {
    if env.len() != spec.args().len() {
        return Err(EvalError::WrongArgCount { expected: spec.args().len(), got: env.len() });
    }
    for (decl, t) in spec.args().iter().zip(env) {
        if decl.shape != t.shape() {
            return Err(EvalError::ShapeMismatch {
                arg: decl.name.clone(),
                expected: decl.shape.clone(),
                got: t.shape().to_vec(),
            });
        }
    }
    Ok(())
}

fn check_df(spec: &ElemFuncSpec, df: &DenseTensor) -> Result<(), EvalError> {
    if df.shape() != spec.output_shape() {
        return Err(EvalError::ShapeMismatch {
            arg: "df".into(),
            expected: spec.output_shape().to_vec(),
            got: df.shape().to_vec(),
        });
    }
    Ok(())
}

/// Evaluate a spec at every output index.
pub fn eval_spec(spec: &ElemFuncSpec, env: &[DenseTensor]) -> Result<DenseTensor, EvalError> {
    check_env(spec, env)?;
    let ctx = EvalCtx {
        graph: spec.graph(),
        arg_names: spec.args().iter().map(|a| a.name.as_str()).collect(),
        args: env,
        df: None,
    };
    let mut out = DenseTensor::zeros(spec.output_shape().to_vec());
    let mut bindings = BTreeMap::new();
    for idx in index_iter(spec.output_shape()) {
        for (sym, &v) in spec.output_indices().iter().zip(&idx) {
            bindings.insert(sym.clone(), Int::from(v));
        }
        let v = ctx.eval(spec.body(), &mut bindings, &idx)?;
        out.set(&idx, v);
    }
    Ok(out)
}

/// Evaluate one derived adjoint over the argument's index box.
pub fn eval_adjoint(
    d: &DerivSpec,
    arg: usize,
    env: &[DenseTensor],
    df: &DenseTensor,
) -> Result<DenseTensor, EvalError> {
    let spec = d.source();
    check_env(spec, env)?;
    check_df(spec, df)?;
    let ad = d.for_arg(arg);
    let shape = spec.args()[arg].shape.clone();
    let ctx = EvalCtx {
        graph: d.graph(),
        arg_names: spec.args().iter().map(|a| a.name.as_str()).collect(),
        args: env,
        df: Some(df),
    };
    let mut out = DenseTensor::zeros(shape.clone());
    let mut bindings = BTreeMap::new();
    for idx in index_iter(&shape) {
        for (sym, &v) in ad.beta.iter().zip(&idx) {
            bindings.insert(sym.clone(), Int::from(v));
        }
        let v = ctx.eval(ad.adjoint, &mut bindings, &idx)?;
        out.set(&idx, v);
    }
    Ok(out)
}

/// Jacobian of the spec with respect to one argument by central finite
/// differences with step `h`; output rank is `rank f + rank arg`.
pub fn finite_diff_jacobian(
    spec: &ElemFuncSpec,
    env: &[DenseTensor],
    arg: usize,
    h: f64,
) -> Result<DenseTensor, EvalError> {
    assert!(h > 0.0, "step must be positive");
    check_env(spec, env)?;
    let mut out_shape = spec.output_shape().to_vec();
    out_shape.extend_from_slice(&spec.args()[arg].shape);
    let mut out = DenseTensor::zeros(out_shape);

    let f_len: usize = spec.output_shape().iter().product();
    let x_len: usize = spec.args()[arg].shape.iter().product();
    let mut env_pert: Vec<DenseTensor> = env.to_vec();
    for (lin_b, beta) in index_iter(&spec.args()[arg].shape).enumerate() {
        let orig = env[arg].get(&beta);
        env_pert[arg].set(&beta, orig + h);
        let fp = eval_spec(spec, &env_pert)?;
        env_pert[arg].set(&beta, orig - h);
        let fm = eval_spec(spec, &env_pert)?;
        env_pert[arg].set(&beta, orig);
        for lin_a in 0..f_len {
            out.data_mut()[lin_a * x_len + lin_b] =
                (fp.data()[lin_a] - fm.data()[lin_a]) / (2.0 * h);
        }
    }
    Ok(out)
}

/// Reference adjoint: iterate the full function index box (extended by each
/// occurrence's summation ranges), evaluate the local derivative and
/// scatter-accumulate into the target index. The derived closed form must
/// reproduce this exactly up to summation order.
pub fn brute_force_adjoint(
    spec: &ElemFuncSpec,
    env: &[DenseTensor],
    df: &DenseTensor,
    arg: usize,
) -> Result<DenseTensor, EvalError> {
    check_env(spec, env)?;
    check_df(spec, df)?;
    let (graph, deltas) = occurrence_deltas(spec).map_err(|e| EvalError::Underivable {
        what: e.to_string(),
    })?;
    let ctx = EvalCtx {
        graph: &graph,
        arg_names: spec.args().iter().map(|a| a.name.as_str()).collect(),
        args: env,
        df: Some(df),
    };
    let shape = spec.args()[arg].shape.clone();
    let mut out = DenseTensor::zeros(shape);

    for (occ, delta) in deltas.iter().filter(|(o, _)| o.arg == arg) {
        let mut bindings = BTreeMap::new();
        for alpha in index_iter(spec.output_shape()) {
            for (sym, &v) in spec.output_indices().iter().zip(&alpha) {
                bindings.insert(sym.clone(), Int::from(v));
            }
            scatter_sums(&ctx, occ, *delta, 0, &mut bindings, &mut out)?;
        }
    }
    Ok(out)
}

fn scatter_sums(
    ctx: &EvalCtx<'_>,
    occ: &Occurrence,
    delta: ExprId,
    depth: usize,
    bindings: &mut BTreeMap<IndexSymbol, Int>,
    out: &mut DenseTensor,
) -> Result<(), EvalError> {
    if depth == occ.sums.len() {
        let mut idx = Vec::with_capacity(occ.indices.len());
        for form in &occ.indices {
            let v = form.eval(bindings);
            debug_assert!(v.denom().is_one());
            idx.push(v.to_integer().to_usize().expect("validated in range"));
        }
        let v = ctx.eval(delta, bindings, &idx)?;
        let cur = out.get(&idx);
        out.set(&idx, cur + v);
        return Ok(());
    }
    let scope = &occ.sums[depth];
    let mut v = scope.lo.eval(bindings);
    let hi = scope.hi.eval(bindings);
    while v <= hi {
        bindings.insert(scope.symbol.clone(), v.clone());
        scatter_sums(ctx, occ, delta, depth + 1, bindings, out)?;
        v += 1;
    }
    bindings.remove(&scope.symbol);
    Ok(())
}
