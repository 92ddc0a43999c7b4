//! Shared helpers for the integration suites: a random element-wise spec
//! generator and tolerance checks.
#![allow(dead_code)]

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tad_cli::DenseTensor;
use tad_core::{
    build_spec, int, AffineForm, ArgDecl, BoundDir, ElemFuncSpec, ExprGraph, ExprId, IndexSymbol,
    Int, RangeBound, UnOp,
};

/// Random element-wise spec: up to 3 output dimensions, up to 3 arguments
/// of rank <= 2 with affine index coefficients in [-2, 2], shapes <= 5 on
/// the output, optionally one summation. Argument shapes are sized to cover
/// the index image and may be padded beyond it.
pub fn random_spec(rng: &mut ChaCha8Rng, tag: usize) -> ElemFuncSpec {
    let d_f = rng.gen_range(1..=3);
    let output_shape: Vec<usize> = (0..d_f).map(|_| rng.gen_range(1..=5)).collect();
    let output_indices: Vec<IndexSymbol> =
        (0..d_f).map(|d| IndexSymbol::output(format!("i{d}"))).collect();

    let with_sum = rng.gen_bool(0.5);
    let sum_sym = IndexSymbol::summation("k");
    // Constant upper bound, or one affine in the first output index (which
    // may leave the range empty for small values of that index).
    let affine_hi = with_sum && rng.gen_bool(0.3);
    let sum_hi_const: i64 = rng.gen_range(0..=3);
    let hi_offset: i64 = rng.gen_range(-1..=1);
    let (hi_bound, k_max) = if affine_hi {
        let n0 = output_shape[0] as i64;
        let off = hi_offset.max(1 - n0); // keep at least one nonempty range
        let form = AffineForm::symbol(output_indices[0].clone())
            .add_constant(&tad_core::rat(off));
        (RangeBound::upper(vec![form]), n0 - 1 + off)
    } else {
        (
            RangeBound::constant_int(BoundDir::Upper, sum_hi_const),
            sum_hi_const,
        )
    };

    // Box of every symbol a form may reference, for image sizing.
    let mut sym_box = std::collections::BTreeMap::new();
    for (s, &n) in output_indices.iter().zip(&output_shape) {
        sym_box.insert(s.clone(), (Int::from(0), Int::from(n) - 1));
    }
    if with_sum {
        sym_box.insert(sum_sym.clone(), (Int::from(0), Int::from(k_max.max(0))));
    }

    let n_args = rng.gen_range(1..=3);
    let mut g = ExprGraph::new();
    let mut args: Vec<ArgDecl> = Vec::new();
    let mut inner_terms: Vec<ExprId> = Vec::new();
    let mut outer_terms: Vec<ExprId> = Vec::new();

    for a in 0..n_args {
        let rank = rng.gen_range(1..=2);
        let inside = with_sum && rng.gen_bool(0.6);
        let occ_count = if rng.gen_bool(0.25) { 2 } else { 1 };
        let mut shape = vec![1usize; rank];
        let mut occ_forms: Vec<Vec<AffineForm>> = Vec::new();
        for _ in 0..occ_count {
            let mut forms = Vec::with_capacity(rank);
            for slot in shape.iter_mut().take(rank) {
                loop {
                    let mut form = AffineForm::constant_int(rng.gen_range(-2..=2));
                    let mut pool: Vec<IndexSymbol> = output_indices.clone();
                    if inside {
                        pool.push(sum_sym.clone());
                    }
                    for sym in pool {
                        if rng.gen_bool(0.5) {
                            let c = rng.gen_range(-2..=2);
                            form = form.add(&AffineForm::term(sym, tad_core::rat(c)));
                        }
                    }
                    let (lo, hi) = form.range_over_box(&sym_box).expect("all symbols boxed");
                    let lo = lo.to_integer();
                    let hi = hi.to_integer();
                    let span = hi.clone() - lo.clone() + 1;
                    if span > int(9) {
                        continue; // keep tensors small
                    }
                    // Shift the image to start at zero, pad the shape a
                    // little so indices outside the image exist.
                    form = form.add_constant(&tad_core::Rat::from_integer(-lo));
                    let pad = rng.gen_range(0..=2);
                    let size = usize::try_from(span).unwrap() + pad;
                    *slot = (*slot).max(size);
                    forms.push(form);
                    break;
                }
            }
            occ_forms.push(forms);
        }
        args.push(ArgDecl::new(format!("t{a}"), shape));
        for forms in occ_forms {
            let arg_ref = g.arg(a, forms);
            let term = match rng.gen_range(0..5) {
                0 => g.unary(UnOp::Sin, arg_ref),
                1 => g.unary(UnOp::Exp, arg_ref),
                2 => {
                    let e = g.constant_int(rng.gen_range(2..=3));
                    g.pow(arg_ref, e)
                }
                3 => g.unary(UnOp::Sqrt, arg_ref),
                _ => arg_ref,
            };
            if inside {
                inner_terms.push(term);
            } else {
                outer_terms.push(term);
            }
        }
    }

    let combine = |g: &mut ExprGraph, terms: &[ExprId], mul: bool| -> ExprId {
        let mut acc = terms[0];
        for t in &terms[1..] {
            acc = if mul { g.mul(acc, *t) } else { g.add(acc, *t) };
        }
        acc
    };

    let mut body_parts = Vec::new();
    if with_sum {
        let inner = if inner_terms.is_empty() {
            g.one()
        } else {
            let mul = rng.gen_bool(0.7);
            combine(&mut g, &inner_terms, mul)
        };
        body_parts.push(g.sum(
            sum_sym,
            RangeBound::constant_int(BoundDir::Lower, 0),
            hi_bound,
            inner,
        ));
    }
    if !outer_terms.is_empty() {
        let mul = rng.gen_bool(0.7);
        body_parts.push(combine(&mut g, &outer_terms, mul));
    }
    let mul = rng.gen_bool(0.5);
    let body = combine(&mut g, &body_parts, mul);

    build_spec(format!("g{tag}"), output_indices, output_shape, args, g, body)
        .expect("generated spec is valid by construction")
}

/// Random tensors in (0.1, 1.0) for every argument, away from
/// singularities.
pub fn random_env(rng: &mut ChaCha8Rng, spec: &ElemFuncSpec) -> Vec<DenseTensor> {
    let dist = Uniform::new(0.1, 1.0);
    spec.args()
        .iter()
        .map(|a| DenseTensor::from_fn(a.shape.clone(), |_| dist.sample(rng)))
        .collect()
}

pub fn random_like(rng: &mut ChaCha8Rng, shape: &[usize]) -> DenseTensor {
    let dist = Uniform::new(0.1, 1.0);
    DenseTensor::from_fn(shape.to_vec(), |_| dist.sample(rng))
}

/// Largest mixed error `|a - b| / max(|b|, 1)` over two equally shaped
/// tensors.
pub fn max_mixed_err(a: &DenseTensor, b: &DenseTensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Largest relative error with an absolute floor.
pub fn max_rel_err(a: &DenseTensor, b: &DenseTensor, floor: f64) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let abs = (x - y).abs();
            if y.abs() > floor {
                abs / y.abs()
            } else {
                abs
            }
        })
        .fold(0.0, f64::max)
}
