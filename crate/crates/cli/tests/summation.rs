//! Summation corner cases checked against the scatter reference and, where
//! short, closed-form expectations: nested sums, sibling sums, occurrences
//! both inside and outside a sum, bounds depending on outer indices, and
//! strided index maps.

mod common;

use common::{max_mixed_err, random_env, random_like};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tad_cli::{brute_force_adjoint, eval_adjoint, parse_source, DenseTensor};
use tad_core::derive;

fn check_against_reference(src: &str, seed: u64) {
    let spec = parse_source(src).unwrap_or_else(|e| panic!("parse failed: {e}\n{src}"));
    let d = derive(&spec).unwrap_or_else(|e| panic!("derive failed: {e}\n{src}"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..3 {
        let env = random_env(&mut rng, &spec);
        let df = random_like(&mut rng, spec.output_shape());
        for p in 0..spec.args().len() {
            let got = eval_adjoint(&d, p, &env, &df).unwrap();
            let want = brute_force_adjoint(&spec, &env, &df, p).unwrap();
            let err = max_mixed_err(&got, &want);
            assert!(err <= 1e-12, "argument {p} deviates by {err:e} for\n{src}");
        }
    }
}

#[test]
fn affine_upper_bound_from_output_index() {
    check_against_reference(
        "x : 5\nf : 3\nf[i] = sum{k}_0^(i) (x[i + k])",
        21,
    );
}

#[test]
fn affine_lower_bound_from_output_index() {
    check_against_reference(
        "x : 4\nf : 4\nf[i] = sum{k}_(i)^3 (x[k])",
        22,
    );
}

#[test]
fn nested_triangular_sums() {
    check_against_reference(
        "x : 3 x 3\ny : 4\nf : 4\nf[i] = sum{k}_0^2 (sum{m}_0^(k) (y[i] * x[k; m]))",
        23,
    );
}

#[test]
fn sibling_sums_count_separately() {
    let src = "x : 3\nf : 3\nf[i] = sum{k}_0^2 (x[i]) + sum{m}_0^4 (x[i])";
    check_against_reference(src, 24);
    // dx = (3 + 5) df: the direct contributions of each sum scope.
    let spec = parse_source(src).unwrap();
    let d = derive(&spec).unwrap();
    let env = vec![DenseTensor::from_fn(vec![3], |_| 0.5)];
    let df = DenseTensor::from_fn(vec![3], |i| 1.0 + i[0] as f64);
    let got = eval_adjoint(&d, 0, &env, &df).unwrap();
    for i in 0..3 {
        let want = 8.0 * df.get(&[i]);
        assert!((got.get(&[i]) - want).abs() <= 1e-12);
    }
}

#[test]
fn occurrence_inside_and_outside_a_sum() {
    let src = "x : 3\ny : 4\nf : 3\nf[i] = x[i] + sum{k}_0^3 (x[i] * y[k])";
    check_against_reference(src, 25);
    // dx = df * (1 + sum y).
    let spec = parse_source(src).unwrap();
    let d = derive(&spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let env = random_env(&mut rng, &spec);
    let df = random_like(&mut rng, spec.output_shape());
    let got = eval_adjoint(&d, 0, &env, &df).unwrap();
    let ysum: f64 = env[1].data().iter().sum();
    for i in 0..3 {
        let want = df.get(&[i]) * (1.0 + ysum);
        assert!((got.get(&[i]) - want).abs() / want.abs() <= 1e-14);
    }
}

#[test]
fn strided_offset_access() {
    // x[2i + 1]: even mapped positions never receive gradient.
    let src = "x : 6\nf : 2\nf[i] = sin (x[2 * i + 1])";
    check_against_reference(src, 27);
    let spec = parse_source(src).unwrap();
    let d = derive(&spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    let env = random_env(&mut rng, &spec);
    let df = random_like(&mut rng, spec.output_shape());
    let got = eval_adjoint(&d, 0, &env, &df).unwrap();
    for b in [0usize, 2, 4, 5] {
        assert_eq!(got.get(&[b]), 0.0, "position {b} is outside the image");
    }
}

#[test]
fn difference_of_output_indices() {
    check_against_reference(
        "x : 6\nf : 3 x 4\nf[i; j] = exp (x[i - j + 3])",
        29,
    );
}

#[test]
fn argument_indexed_by_constant() {
    // A constant index map has a full kernel: the adjoint collects the
    // whole output box into one element.
    let src = "x : 3\nf : 2 x 2\nf[i; j] = x[1] * x[i]";
    check_against_reference(src, 30);
}

#[test]
fn summation_index_used_twice() {
    check_against_reference(
        "x : 5\ny : 5\nf : 3\nf[i] = sum{k}_0^2 (x[i + k] * y[2 * k])",
        31,
    );
}

#[test]
fn mixed_coefficient_flattening() {
    // x[2i + j]: rational bound forms appear after the kernel rewrite.
    check_against_reference("x : 9\nf : 3 x 4\nf[i; j] = sin (x[2 * i + j])", 33);
}

#[test]
fn strided_map_with_kernel_and_divisibility() {
    // x[2i + 4j]: gradient lands on even positions only, via a divisibility
    // condition combined with a kernel summation.
    let src = "x : 17\nf : 3 x 4\nf[i; j] = exp (x[2 * i + 4 * j])";
    check_against_reference(src, 34);
    let spec = parse_source(src).unwrap();
    let d = derive(&spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let env = random_env(&mut rng, &spec);
    let df = random_like(&mut rng, spec.output_shape());
    let got = eval_adjoint(&d, 0, &env, &df).unwrap();
    for b in (1..17).step_by(2) {
        assert_eq!(got.get(&[b]), 0.0, "odd position {b} must stay zero");
    }
}

#[test]
fn two_occurrences_of_one_argument() {
    // x[i] * x[i + 1]: distinct maps derive independently and sum.
    check_against_reference("x : 4\nf : 3\nf[i] = x[i] * x[i + 1]", 36);
}

#[test]
fn independent_strides_on_both_axes() {
    // x[2i; 3j]: one divisibility condition per axis.
    check_against_reference("x : 5 x 7\nf : 3 x 3\nf[i; j] = exp (x[2 * i; 3 * j])", 37);
}

#[test]
fn stride_with_kernel_direction() {
    // x[2i + 2j]: a non-unit invariant factor combined with a kernel
    // summation; odd positions and the padded tail receive nothing.
    check_against_reference("x : 11\nf : 3 x 3\nf[i; j] = x[2 * i + 2 * j] ** 2", 38);
}

#[test]
fn three_nested_sums() {
    check_against_reference(
        "x : 3\ny : 3\nz : 3\nw : 2\nf : 2\n         f[i] = sum{a}_0^2 (sum{b}_(a)^2 (sum{c}_0^(b) (x[a] * y[b] * z[c] * w[i])))",
        39,
    );
}

#[test]
fn second_derivative_values_match_finite_differences() {
    // Full second-order pipeline on a nontrivial body.
    let src = "x : 4\nf : 3\nf[i] = sum{k}_0^1 (x[i + k] ** 2)";
    let spec = parse_source(src).unwrap();
    let d = derive(&spec).unwrap();
    let wrapped = d.adjoint_as_spec(0).unwrap();
    let second = tad_core::derive_jacobian(&wrapped, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let env = random_env(&mut rng, &wrapped);
    let got = tad_cli::eval_spec(&second, &env).unwrap();
    let fd = tad_cli::finite_diff_jacobian(&wrapped, &env, 0, 1e-6).unwrap();
    let err = common::max_rel_err(&got, &fd, 1e-8);
    assert!(err <= 1e-4, "second derivative deviates by {err:e}");
}
