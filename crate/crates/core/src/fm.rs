//! Parametric Fourier-Motzkin elimination for `A·x >= b`.
//!
//! Elimination works on the coefficient matrix alone, so the produced bound
//! matrices are valid for every right-hand side `b`. Each variable `x_i`
//! receives lower bounds `L_i·b + Lhat_i·x_{i+1..M}` and upper bounds
//! `H_i·b + Hhat_i·x_{i+1..M}`; rows that lose all variables end up in the
//! feasibility matrix `F`, where `F·b <= 0` certifies real solvability.

use alloc::vec::Vec;

use num_traits::{Signed, Zero};

use crate::affine::AffineForm;
use crate::matrix::RatMat;
use crate::symbol::IndexSymbol;
use crate::{Int, Rat};

/// Per-variable bound matrices; `lower_b`/`upper_b` apply to `b`,
/// `lower_tail`/`upper_tail` to the already chosen `x_{i+1..M}`.
#[derive(Clone, Debug)]
pub struct VarBounds {
    pub lower_b: RatMat,
    pub lower_tail: RatMat,
    pub upper_b: RatMat,
    pub upper_tail: RatMat,
}

#[derive(Clone, Debug)]
pub struct FmSystem {
    nvars: usize,
    n_rhs: usize,
    bounds: Vec<VarBounds>,
    feas: RatMat,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FmError {
    DimensionMismatch { expected: usize, got: usize },
    /// A variable is unbounded on one side for the queried right-hand side.
    InfiniteRange { var: usize },
}

impl core::fmt::Display for FmError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            FmError::DimensionMismatch { expected, got } => {
                write!(f, "expected a vector of length {expected}, got {got}")
            }
            FmError::InfiniteRange { var } => {
                write!(f, "variable {var} has an unbounded integer range")
            }
        }
    }
}

impl core::error::Error for FmError {}

/// Eliminate all variables of `A·x >= b`, producing bound matrices for every
/// variable and the feasibility matrix.
pub fn fm_eliminate(a: &RatMat) -> FmSystem {
    let n = a.rows();
    let m = a.cols();
    let mut cur_a = a.clone();
    let mut cur_b = RatMat::identity(n);
    let mut bounds = Vec::with_capacity(m);

    for k in 0..m {
        // Normalize each row that mentions x_k to coefficient +-1.
        for i in 0..cur_a.rows() {
            if !cur_a[(i, k)].is_zero() {
                let f = cur_a[(i, k)].abs().recip();
                cur_a.scale_row(i, &f);
                cur_b.scale_row(i, &f);
            }
        }
        let mut zeta = Vec::new();
        let mut phi = Vec::new();
        let mut mu = Vec::new();
        for i in 0..cur_a.rows() {
            let c = &cur_a[(i, k)];
            if c.is_zero() {
                zeta.push(i);
            } else if c.is_positive() {
                phi.push(i);
            } else {
                mu.push(i);
            }
        }

        // Bound matrices for x_k: a phi row reads x_k >= B_i·b - tail,
        // a mu row reads x_k <= -B_i·b + tail.
        let tail_cols: Vec<usize> = (k + 1..m).collect();
        let tail = cur_a.select_cols(&tail_cols);
        bounds.push(VarBounds {
            lower_b: cur_b.select_rows(&phi),
            lower_tail: negate(&tail.select_rows(&phi)),
            upper_b: negate(&cur_b.select_rows(&mu)),
            upper_tail: tail.select_rows(&mu),
        });

        if phi.is_empty() && mu.is_empty() {
            // x_k does not occur; nothing to eliminate.
        } else if phi.is_empty() || mu.is_empty() {
            // One-sided: a value for x_k always exists, drop its rows.
            cur_a = cur_a.select_rows(&zeta);
            cur_b = cur_b.select_rows(&zeta);
        } else {
            let mut next_a = cur_a.select_rows(&zeta);
            let mut next_b = cur_b.select_rows(&zeta);
            for &p in &phi {
                for &q in &mu {
                    next_a.push_row_sum(&cur_a, p, q);
                    next_b.push_row_sum(&cur_b, p, q);
                }
            }
            cur_a = next_a;
            cur_b = next_b;
        }
        dedup_rows(&mut cur_a, &mut cur_b);
    }

    debug_assert!(cur_a.is_zero());
    FmSystem { nvars: m, n_rhs: n, bounds, feas: cur_b }
}

fn negate(m: &RatMat) -> RatMat {
    let mut out = m.clone();
    for i in 0..out.rows() {
        out.scale_row(i, &-Rat::from_integer(Int::from(1)));
    }
    out
}

/// Drop rows whose coefficient and right-hand-side parts are exact
/// duplicates of an earlier row. Component-wise domination would be unsound
/// here because `b` carries arbitrary signs.
fn dedup_rows(a: &mut RatMat, b: &mut RatMat) {
    let mut keep = Vec::new();
    'rows: for i in 0..a.rows() {
        for &j in &keep {
            if a.row(i) == a.row(j) && b.row(i) == b.row(j) {
                continue 'rows;
            }
        }
        keep.push(i);
    }
    if keep.len() != a.rows() {
        *a = a.select_rows(&keep);
        *b = b.select_rows(&keep);
    }
}

impl FmSystem {
    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn n_rhs(&self) -> usize {
        self.n_rhs
    }

    pub fn feasibility(&self) -> &RatMat {
        &self.feas
    }

    pub fn var_bounds(&self, i: usize) -> &VarBounds {
        &self.bounds[i]
    }

    /// `F·b <= 0`, i.e. the real system has a solution.
    pub fn feasible(&self, b: &[Rat]) -> Result<bool, FmError> {
        self.check_rhs(b)?;
        Ok(self.feas.mul_vec(b).iter().all(|v| !v.is_positive()))
    }

    fn check_rhs(&self, b: &[Rat]) -> Result<(), FmError> {
        if b.len() != self.n_rhs {
            return Err(FmError::DimensionMismatch { expected: self.n_rhs, got: b.len() });
        }
        Ok(())
    }

    /// Exact real bounds of `x_i` given `b` and the already fixed tail
    /// `x_{i+1..M}`; `None` means unbounded on that side.
    pub fn instantiate_real(
        &self,
        b: &[Rat],
        tail: &[Rat],
        i: usize,
    ) -> Result<(Option<Rat>, Option<Rat>), FmError> {
        self.check_rhs(b)?;
        let vb = &self.bounds[i];
        if tail.len() != vb.lower_tail.cols() {
            return Err(FmError::DimensionMismatch {
                expected: vb.lower_tail.cols(),
                got: tail.len(),
            });
        }
        let lows = add_vecs(vb.lower_b.mul_vec(b), vb.lower_tail.mul_vec(tail));
        let highs = add_vecs(vb.upper_b.mul_vec(b), vb.upper_tail.mul_vec(tail));
        Ok((lows.into_iter().max(), highs.into_iter().min()))
    }

    /// Integer bounds `(ceil(max lower), floor(min upper))` of `x_i`.
    pub fn instantiate(
        &self,
        b: &[Rat],
        tail: &[Int],
        i: usize,
    ) -> Result<(Option<Int>, Option<Int>), FmError> {
        let tail_r: Vec<Rat> = tail.iter().map(|v| Rat::from_integer(v.clone())).collect();
        let (lo, hi) = self.instantiate_real(b, &tail_r, i)?;
        Ok((lo.map(|v| v.ceil().to_integer()), hi.map(|v| v.floor().to_integer())))
    }

    /// All integer solutions of `A·x >= b`, outermost variable `x_M` first
    /// (i.e. in lexicographic order of `(x_M, ..., x_1)`).
    pub fn enumerate(&self, b: &[Rat]) -> Result<Vec<Vec<Int>>, FmError> {
        self.check_rhs(b)?;
        let mut out = Vec::new();
        if !self.feasible(b)? {
            return Ok(out);
        }
        if self.nvars == 0 {
            out.push(Vec::new());
            return Ok(out);
        }
        let mut tail: Vec<Int> = Vec::new();
        self.enumerate_rec(b, self.nvars - 1, &mut tail, &mut out)?;
        Ok(out)
    }

    fn enumerate_rec(
        &self,
        b: &[Rat],
        var: usize,
        tail: &mut Vec<Int>,
        out: &mut Vec<Vec<Int>>,
    ) -> Result<(), FmError> {
        // `tail` currently holds x_M, ..., x_{var+2} in reverse; instantiate
        // expects x_{var+1..M} in ascending variable order.
        let asc: Vec<Int> = tail.iter().rev().cloned().collect();
        let (lo, hi) = self.instantiate(b, &asc, var)?;
        let (Some(lo), Some(hi)) = (lo, hi) else {
            return Err(FmError::InfiniteRange { var });
        };
        let mut v = lo;
        while v <= hi {
            tail.push(v.clone());
            if var == 0 {
                // tail holds x_M..x_1 in push order.
                out.push(tail.iter().rev().cloned().collect());
            } else {
                self.enumerate_rec(b, var - 1, tail, out)?;
            }
            tail.pop();
            v += 1;
        }
        Ok(())
    }

    /// Symbolic counterpart of [`FmSystem::instantiate`]: bound expressions
    /// for `x_i` as affine forms, given the right-hand side as affine forms
    /// and the tail as symbols.
    pub fn bound_forms(
        &self,
        b_forms: &[AffineForm],
        tail_syms: &[IndexSymbol],
        i: usize,
    ) -> (Vec<AffineForm>, Vec<AffineForm>) {
        let vb = &self.bounds[i];
        let dot = |coeff: &RatMat, tail_m: &RatMat| -> Vec<AffineForm> {
            (0..coeff.rows())
                .map(|r| {
                    let mut form = AffineForm::zero();
                    for (j, bf) in b_forms.iter().enumerate() {
                        form = form.add(&bf.scale(&coeff[(r, j)]));
                    }
                    for (j, sym) in tail_syms.iter().enumerate() {
                        form = form.add(&AffineForm::term(sym.clone(), tail_m[(r, j)].clone()));
                    }
                    form
                })
                .collect()
        };
        (dot(&vb.lower_b, &vb.lower_tail), dot(&vb.upper_b, &vb.upper_tail))
    }

    /// Feasibility conditions as affine forms: the system is real-feasible
    /// iff every returned form is >= 0 (forms are the negated `F·b` rows).
    pub fn feasibility_forms(&self, b_forms: &[AffineForm]) -> Vec<AffineForm> {
        (0..self.feas.rows())
            .map(|r| {
                let mut form = AffineForm::zero();
                for (j, bf) in b_forms.iter().enumerate() {
                    form = form.add(&bf.scale(&self.feas[(r, j)]));
                }
                form.neg()
            })
            .collect()
    }
}

fn add_vecs(a: Vec<Rat>, b: Vec<Rat>) -> Vec<Rat> {
    a.into_iter().zip(b).map(|(x, y)| x + y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{int, rat};

    fn rv(vals: &[i64]) -> Vec<Rat> {
        vals.iter().map(|&v| rat(v)).collect()
    }

    #[test]
    fn two_sided_single_variable() {
        // x >= b1 and -x >= b2.
        let a = RatMat::from_i64(&[&[1], &[-1]]);
        let sys = fm_eliminate(&a);
        assert_eq!(sys.var_bounds(0).lower_b, RatMat::from_i64(&[&[1, 0]]));
        assert_eq!(sys.var_bounds(0).upper_b, RatMat::from_i64(&[&[0, -1]]));
        assert_eq!(sys.feasibility(), &RatMat::from_i64(&[&[1, 1]]));

        let (lo, hi) = sys.instantiate(&rv(&[0, -3]), &[], 0).unwrap();
        assert_eq!((lo, hi), (Some(int(0)), Some(int(3))));

        // Brute-force equivalence over a small grid of right-hand sides.
        for b1 in -5..=5 {
            for b2 in -5..=5 {
                let b = rv(&[b1, b2]);
                let pts = sys.enumerate(&b).unwrap();
                let expected: Vec<Vec<Int>> =
                    (-20..=20).filter(|&x| x >= b1 && -x >= b2).map(|x| alloc::vec![int(x)]).collect();
                assert_eq!(pts, expected, "b = ({b1}, {b2})");
            }
        }
    }

    #[test]
    fn one_sided_variable() {
        let a = RatMat::from_i64(&[&[1]]);
        let sys = fm_eliminate(&a);
        assert_eq!(sys.var_bounds(0).upper_b.rows(), 0);
        assert_eq!(sys.feasibility().rows(), 0);
        let (lo, hi) = sys.instantiate(&rv(&[2]), &[], 0).unwrap();
        assert_eq!(lo, Some(int(2)));
        assert_eq!(hi, None);
        assert_eq!(sys.enumerate(&rv(&[2])), Err(FmError::InfiniteRange { var: 0 }));
    }

    #[test]
    fn contradiction_is_empty() {
        // x >= 1 and -x >= 0.
        let a = RatMat::from_i64(&[&[1], &[-1]]);
        let sys = fm_eliminate(&a);
        assert!(!sys.feasible(&rv(&[1, 0])).unwrap());
        assert!(sys.enumerate(&rv(&[1, 0])).unwrap().is_empty());
    }

    #[test]
    fn box_system_two_vars() {
        // +-identity rows: x1 >= b1, -x1 >= b2, x2 >= b3, -x2 >= b4.
        let a = RatMat::from_i64(&[&[1, 0], &[-1, 0], &[0, 1], &[0, -1]]);
        let sys = fm_eliminate(&a);
        // Feasibility pairs the opposing rows.
        assert_eq!(sys.feasibility(), &RatMat::from_i64(&[&[1, 1, 0, 0], &[0, 0, 1, 1]]));
        let b = rv(&[0, -2, 1, -4]);
        let pts = sys.enumerate(&b).unwrap();
        let mut expected = Vec::new();
        for x2 in 1..=4 {
            for x1 in 0..=2 {
                expected.push(alloc::vec![int(x1), int(x2)]);
            }
        }
        // Outermost variable first: sort expectation by (x2, x1).
        assert_eq!(pts, expected);
    }

    #[test]
    fn empty_coefficient_matrix() {
        let a = RatMat::zeros(0, 2);
        let sys = fm_eliminate(&a);
        assert_eq!(sys.feasibility().rows(), 0);
        // Unconstrained variables are unbounded.
        assert_eq!(sys.enumerate(&[]), Err(FmError::InfiniteRange { var: 1 }));
    }
}
