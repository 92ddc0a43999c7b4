//! Evaluator checks against independent oracles: a hand-written nested-loop
//! evaluation of the worked example, analytic derivatives, and finite
//! differences, plus the negative control for the verification harness.

mod common;

use common::{max_mixed_err, max_rel_err, random_env, random_like};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tad_cli::{
    brute_force_adjoint, eval_adjoint, eval_spec, finite_diff_jacobian, parse_source, verify,
    DenseTensor, EvalError,
};
use tad_core::derive;

const MIXED_SRC: &str = "\
a : 3 x 5
b : 4 x 5
c : 3 x 3
d : 8
f : 3 x 4
f[i; j] = exp (-sum{k}_0^4 (((a[i; k] + b[j; k]) ** 2 * c[i; i] + d[i + k] ** 3)))
";

#[test]
fn known_sine_values() {
    let spec = parse_source("x : 3\nf : 3\nf[i] = sin (x[i])").unwrap();
    let x = DenseTensor::from_data(
        vec![3],
        vec![0.0, std::f64::consts::FRAC_PI_2, std::f64::consts::PI],
    );
    let out = eval_spec(&spec, &[x]).unwrap();
    assert!(out.data()[0].abs() < 1e-15);
    assert!((out.data()[1] - 1.0).abs() < 1e-15);
    assert!(out.data()[2].abs() < 1e-12);
}

/// Straight-loop re-implementation of the worked example, independent of
/// the expression machinery.
fn mixed_by_hand(a: &DenseTensor, b: &DenseTensor, c: &DenseTensor, d: &DenseTensor) -> DenseTensor {
    DenseTensor::from_fn(vec![3, 4], |idx| {
        let (i, j) = (idx[0], idx[1]);
        let mut s = 0.0;
        for k in 0..5 {
            let t = a.get(&[i, k]) + b.get(&[j, k]);
            s += t * t * c.get(&[i, i]) + d.get(&[i + k]).powi(3);
        }
        (-s).exp()
    })
}

#[test]
fn worked_example_matches_straight_loops() {
    let spec = parse_source(MIXED_SRC).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let env = random_env(&mut rng, &spec);
    let got = eval_spec(&spec, &env).unwrap();
    let want = mixed_by_hand(&env[0], &env[1], &env[2], &env[3]);
    assert!(max_mixed_err(&got, &want) <= 1e-12);
}

#[test]
fn scalar_identity_jacobian_is_one() {
    let spec = parse_source("x : 1\nf : 1\nf[i] = x[i]").unwrap();
    let env = vec![DenseTensor::from_data(vec![1], vec![0.4])];
    let j = finite_diff_jacobian(&spec, &env, 0, 1e-6).unwrap();
    assert!((j.data()[0] - 1.0).abs() <= 1e-10);
}

#[test]
fn sine_jacobian_is_diagonal_cosine() {
    let spec = parse_source("x : 4\nf : 4\nf[i] = sin (x[i])").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let env = random_env(&mut rng, &spec);
    let j = finite_diff_jacobian(&spec, &env, 0, 1e-6).unwrap();
    for r in 0..4 {
        for cidx in 0..4 {
            let v = j.get(&[r, cidx]);
            if r == cidx {
                let want = env[0].get(&[r]).cos();
                assert!((v - want).abs() / want.abs() <= 1e-9);
            } else {
                assert!(v.abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn diagonal_adjoint_is_exactly_zero_off_diagonal() {
    let spec = parse_source("x : 4 x 4\nf : 4\nf[i] = x[i; i] ** 3").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let env = random_env(&mut rng, &spec);
    let df = random_like(&mut rng, spec.output_shape());
    let bf = brute_force_adjoint(&spec, &env, &df, 0).unwrap();
    let d = derive(&spec).unwrap();
    let derived = eval_adjoint(&d, 0, &env, &df).unwrap();
    for r in 0..4 {
        for cidx in 0..4 {
            if r != cidx {
                assert_eq!(bf.get(&[r, cidx]), 0.0);
                assert_eq!(derived.get(&[r, cidx]), 0.0);
            }
        }
    }
}

#[test]
fn zero_seed_gives_zero_adjoint() {
    let spec = parse_source(MIXED_SRC).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let env = random_env(&mut rng, &spec);
    let df = DenseTensor::zeros(spec.output_shape().to_vec());
    for p in 0..4 {
        let bf = brute_force_adjoint(&spec, &env, &df, p).unwrap();
        assert!(bf.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn shared_subexpression_gradient_matches_finite_differences() {
    // sin(x^2) * cos(x^2): the squared term is shared by both consumers.
    let spec = parse_source("x : 1\nf : 1\nf[i] = sin (x[i] ** 2) * cos (x[i] ** 2)").unwrap();
    let d = derive(&spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let x: f64 = rng.gen_range(0.1..1.0);
        let env = vec![DenseTensor::from_data(vec![1], vec![x])];
        let df = DenseTensor::from_data(vec![1], vec![1.0]);
        let got = eval_adjoint(&d, 0, &env, &df).unwrap().data()[0];
        let h = 1e-6;
        let f = |x: f64| (x * x).sin() * (x * x).cos();
        let fd = (f(x + h) - f(x - h)) / (2.0 * h);
        assert!((got - fd).abs() / fd.abs().max(1e-3) <= 1e-6, "x = {x}: {got} vs {fd}");
    }
}

#[test]
fn three_variable_composition_gradient() {
    // sin(sin(x1 (x2 + x3) + sinh(x2 + x3))) with the inner sum shared.
    let src = "\
x : 3
f : 1
f[q] = sin (sin (x[0 * q] * (x[1] + x[2]) + sinh (x[1] + x[2])))
";
    let spec = parse_source(src).unwrap();
    let d = derive(&spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let env = random_env(&mut rng, &spec);
    let df = DenseTensor::from_data(vec![1], vec![1.0]);
    let got = eval_adjoint(&d, 0, &env, &df).unwrap();
    let fd = finite_diff_jacobian(&spec, &env, 0, 1e-6).unwrap();
    for i in 0..3 {
        let want = fd.get(&[0, i]);
        assert!((got.get(&[i]) - want).abs() / want.abs().max(1e-3) <= 1e-6);
    }
}

#[test]
fn adjoint_graph_stays_small() {
    // The adjoint expressions reuse primal subgraphs instead of duplicating
    // them; allow a factor of 4 over the primal node count.
    let spec = parse_source(MIXED_SRC).unwrap();
    let d = derive(&spec).unwrap();
    let primal = spec.graph().reachable_count(spec.body());
    let mut total = std::collections::BTreeSet::new();
    for p in 0..4 {
        let adj = d.for_arg(p).adjoint;
        total.insert(adj);
    }
    let mut count = 0;
    for &root in &total {
        count = count.max(d.graph().reachable_count(root));
    }
    assert!(
        count <= 4 * primal,
        "adjoint graph has {count} nodes for a primal of {primal}"
    );
}

#[test]
fn finite_difference_error_degrades_gracefully() {
    // Halving the step from 1e-5 to 1e-6 must not blow up the error by more
    // than 10x against the exact derived Jacobian.
    let spec = parse_source(MIXED_SRC).unwrap();
    let jac = tad_core::derive_jacobian(&spec, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let env = random_env(&mut rng, &spec);
    let exact = eval_spec(&jac, &env).unwrap();
    let err_at = |h: f64| {
        let fd = finite_diff_jacobian(&spec, &env, 0, h).unwrap();
        max_rel_err(&fd, &exact, 1e-8)
    };
    let coarse = err_at(1e-5);
    let fine = err_at(1e-6);
    assert!(fine <= 10.0 * coarse.max(1e-12), "coarse {coarse:e}, fine {fine:e}");
}

#[test]
fn corrupted_adjoint_is_detected() {
    // Swap cos for sin in a derived adjoint: the oracle comparison must
    // fail and locate a worst element.
    let spec = parse_source("x : 4\nf : 4\nf[i] = sin (x[i])").unwrap();
    let d = derive(&spec).unwrap();
    let line = tad_cli::derivative_line(&d, 0);
    let def = line.split(": ").nth(1).unwrap().replace("cos", "sin");
    let corrupted =
        parse_source(&format!("x : 4\ndf : 4\ndx : 4\n{def}")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut env = random_env(&mut rng, &spec);
    let df = random_like(&mut rng, spec.output_shape());
    let reference = brute_force_adjoint(&spec, &env, &df, 0).unwrap();
    env.push(df);
    let got = eval_spec(&corrupted, &env).unwrap();
    assert!(max_rel_err(&got, &reference, 1e-8) > 1e-2, "corruption went unnoticed");
}

#[test]
fn every_differentiation_rule_matches_finite_differences() {
    // One spec per elementary operation, each checked at random inputs
    // bounded away from singularities.
    let cases = [
        "x : 3\nf : 3\nf[i] = exp (x[i])",
        "x : 3\nf : 3\nf[i] = log (x[i])",
        "x : 3\nf : 3\nf[i] = sin (x[i])",
        "x : 3\nf : 3\nf[i] = cos (x[i])",
        "x : 3\nf : 3\nf[i] = sinh (x[i])",
        "x : 3\nf : 3\nf[i] = sqrt (x[i])",
        "x : 3\ny : 3\nf : 3\nf[i] = x[i] + y[i]",
        "x : 3\ny : 3\nf : 3\nf[i] = x[i] - y[i]",
        "x : 3\ny : 3\nf : 3\nf[i] = x[i] * y[i]",
        "x : 3\ny : 3\nf : 3\nf[i] = x[i] / y[i]",
        "x : 3\nf : 3\nf[i] = x[i] ** 3",
        "x : 3\nf : 3\nf[i] = -x[i]",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for src in cases {
        let spec = parse_source(src).unwrap();
        for p in 0..spec.args().len() {
            let jac = tad_core::derive_jacobian(&spec, p).unwrap();
            let env = random_env(&mut rng, &spec);
            let got = eval_spec(&jac, &env).unwrap();
            let fd = finite_diff_jacobian(&spec, &env, p, 1e-6).unwrap();
            let err = max_rel_err(&got, &fd, 1e-8);
            assert!(err <= 1e-5, "rule check failed for `{src}` argument {p}: {err:e}");
        }
    }
}

#[test]
fn worked_example_adjoints_match_reference_path_exactly() {
    // Same real-number semantics, only the summation structure differs:
    // agreement at 1e-12 relative.
    let spec = parse_source(MIXED_SRC).unwrap();
    let d = derive(&spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let env = random_env(&mut rng, &spec);
    let df = random_like(&mut rng, spec.output_shape());
    for p in 0..4 {
        let got = eval_adjoint(&d, p, &env, &df).unwrap();
        let want = brute_force_adjoint(&spec, &env, &df, p).unwrap();
        let err = max_rel_err(&got, &want, 1e-30);
        assert!(err <= 1e-12, "argument {p} deviates by {err:e}");
    }
}

#[test]
fn matrix_product_verifies() {
    let spec =
        parse_source("x : 3 x 5\ny : 5 x 4\nf : 3 x 4\nf[i; j] = sum{k}_0^4 (x[i; k] * y[k; j])")
            .unwrap();
    let report = verify(&spec, 3, 1e-5, 77).unwrap();
    assert!(report.pass, "{}", report.render_text());
}

#[test]
fn verify_is_deterministic() {
    let spec = parse_source(MIXED_SRC).unwrap();
    let a = verify(&spec, 2, 1e-5, 1234).unwrap().to_json();
    let b = verify(&spec, 2, 1e-5, 1234).unwrap().to_json();
    assert_eq!(a, b);
}

#[test]
fn verify_reports_failure_for_broken_tolerance() {
    // An absurdly tight tolerance cannot hold against finite differences.
    let spec = parse_source(MIXED_SRC).unwrap();
    let report = verify(&spec, 1, 1e-16, 99).unwrap();
    assert!(!report.pass);
    assert!(report.args.iter().any(|a| !a.pass));
}

#[test]
fn guarded_fractional_index_evaluates_but_cannot_be_rederived() {
    // `df[(i) / 2]` is legal under the divisibility guard and evaluates,
    // but a fractional index map has no integer solution structure, so
    // deriving such a spec is an error rather than a panic.
    let src = "\
y : 6
f : 6
f[i] = if {(i) % 2 = 0} then (y[(i) / 2]) else (0)
";
    let spec = parse_source(src).unwrap();
    let env = vec![DenseTensor::from_fn(vec![6], |i| i[0] as f64)];
    let out = eval_spec(&spec, &env).unwrap();
    assert_eq!(out.data(), &[0.0, 0.0, 1.0, 0.0, 2.0, 0.0]);
    assert!(derive(&spec).is_err());
    let df = DenseTensor::zeros(vec![6]);
    match brute_force_adjoint(&spec, &env, &df, 0) {
        Err(EvalError::Underivable { .. }) => {}
        other => panic!("expected Underivable, got {other:?}"),
    }
}

#[test]
fn shape_mismatch_is_reported() {
    let spec = parse_source("x : 3\nf : 3\nf[i] = x[i]").unwrap();
    let bad = vec![DenseTensor::zeros(vec![4])];
    match eval_spec(&spec, &bad) {
        Err(EvalError::ShapeMismatch { arg, .. }) => assert_eq!(arg, "x"),
        other => panic!("expected shape mismatch, got {other:?}"),
    }
}

#[test]
fn division_by_zero_is_a_domain_error() {
    let spec = parse_source("x : 2\ny : 2\nf : 2\nf[i] = x[i] / y[i]").unwrap();
    let env = vec![
        DenseTensor::from_data(vec![2], vec![1.0, 1.0]),
        DenseTensor::from_data(vec![2], vec![1.0, 0.0]),
    ];
    match eval_spec(&spec, &env) {
        Err(EvalError::NumericDomain { at, .. }) => assert_eq!(at, vec![1]),
        other => panic!("expected domain error, got {other:?}"),
    }
}
