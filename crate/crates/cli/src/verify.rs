//! Numeric verification of derived adjoints against the two reference
//! paths: the scatter evaluation over the full index box (same arithmetic,
//! different summation structure) and central finite differences of the
//! forward function (fully independent).

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use tad_core::{derive, derive_jacobian, DerivError, ElemFuncSpec};

use crate::eval::{
    brute_force_adjoint, eval_adjoint, eval_spec, finite_diff_jacobian, DenseTensor, EvalError,
};

/// Elements whose reference magnitude is at or below this floor are
/// compared absolutely.
pub const REL_FLOOR: f64 = 1e-8;

/// Finite-difference step used by verification.
pub const FD_STEP: f64 = 1e-6;

#[derive(Clone, Debug)]
pub enum VerifyError {
    Derive(DerivError),
    Eval(EvalError),
}

impl std::fmt::Display for VerifyError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VerifyError::Derive(e) => write!(f, "derivation failed: {e}"),
            VerifyError::Eval(e) => write!(f, "evaluation failed: {e}"),
        }
    }
}

impl std::error::Error for VerifyError {}

impl From<DerivError> for VerifyError {
    fn from(e: DerivError) -> Self {
        VerifyError::Derive(e)
    }
}

impl From<EvalError> for VerifyError {
    fn from(e: EvalError) -> Self {
        VerifyError::Eval(e)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ArgReport {
    pub arg: String,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub worst_index: Vec<usize>,
    pub pass: bool,
    #[serde(skip)]
    worst_metric: f64,
}

impl ArgReport {
    fn new(arg: String) -> Self {
        ArgReport {
            arg,
            max_abs_err: 0.0,
            max_rel_err: 0.0,
            worst_index: Vec::new(),
            pass: true,
            worst_metric: f64::NEG_INFINITY,
        }
    }

    fn update(&mut self, got: &DenseTensor, reference: &DenseTensor, tol: f64) {
        for (lin, (g, r)) in got.data().iter().zip(reference.data()).enumerate() {
            let abs = (g - r).abs();
            self.max_abs_err = self.max_abs_err.max(abs);
            // Tiny reference values are compared absolutely.
            let (metric, ok) = if r.abs() > REL_FLOOR {
                let rel = abs / r.abs();
                self.max_rel_err = self.max_rel_err.max(rel);
                (rel, rel <= tol)
            } else {
                (abs, abs <= tol)
            };
            if !ok {
                self.pass = false;
            }
            if metric > self.worst_metric {
                self.worst_metric = metric;
                self.worst_index = reference.unlinear(lin);
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub spec: String,
    pub trials: usize,
    pub tol: f64,
    pub seed: u64,
    pub args: Vec<ArgReport>,
    pub pass: bool,
}

impl VerifyReport {
    pub fn render_text(&self) -> String {
        let mut out = format!(
            "verify {}: {} trials, tol {:e}, seed {}\n",
            self.spec, self.trials, self.tol, self.seed
        );
        for a in &self.args {
            out.push_str(&format!(
                "  {}: max abs err {:.3e}, max rel err {:.3e}, worst at {:?}: {}\n",
                a.arg,
                a.max_abs_err,
                a.max_rel_err,
                a.worst_index,
                if a.pass { "pass" } else { "FAIL" }
            ));
        }
        out.push_str(&format!("overall: {}\n", if self.pass { "pass" } else { "FAIL" }));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Draw random inputs away from singularities, evaluate every derived
/// adjoint and Jacobian, and compare against both reference paths.
pub fn verify(
    spec: &ElemFuncSpec,
    trials: usize,
    tol: f64,
    seed: u64,
) -> Result<VerifyReport, VerifyError> {
    assert!(trials >= 1, "at least one trial");
    let derived = derive(spec)?;
    let jacobians: Vec<ElemFuncSpec> = (0..spec.args().len())
        .map(|p| derive_jacobian(spec, p))
        .collect::<Result<_, _>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new(0.1, 1.0);
    let mut reports: Vec<ArgReport> =
        spec.args().iter().map(|a| ArgReport::new(a.name.clone())).collect();

    for _ in 0..trials {
        let env: Vec<DenseTensor> = spec
            .args()
            .iter()
            .map(|a| DenseTensor::from_fn(a.shape.clone(), |_| dist.sample(&mut rng)))
            .collect();
        let df = DenseTensor::from_fn(spec.output_shape().to_vec(), |_| dist.sample(&mut rng));

        for (p, report) in reports.iter_mut().enumerate() {
            let got = eval_adjoint(&derived, p, &env, &df)?;
            let reference = brute_force_adjoint(spec, &env, &df, p)?;
            report.update(&got, &reference, tol);

            let jac = eval_spec(&jacobians[p], &env)?;
            let fd = finite_diff_jacobian(spec, &env, p, FD_STEP)?;
            report.update(&jac, &fd, tol);
        }
    }

    let pass = reports.iter().all(|r| r.pass);
    Ok(VerifyReport {
        spec: spec.name().to_string(),
        trials,
        tol,
        seed,
        args: reports,
        pass,
    })
}
