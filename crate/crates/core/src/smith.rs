//! Smith normal form and the integer solution structure of `A·x = b`.
//!
//! For an integer matrix `A` the decomposition `S = U·A·V` (with `U`, `V`
//! unimodular and `S` diagonal with a divisibility chain) yields a
//! pseudo-inverse `I = V·S†·U`, a kernel basis `K` and a cokernel `C` that
//! together describe every integer solution of `A·x = b` as
//! `x = I·b + K·z` subject to `C·b = 0` and `I·b` integral.

use alloc::vec::Vec;

use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::matrix::{abs, IntMat, RatMat};
use crate::{Int, Rat};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SmithError {
    /// extended_gcd called with two zero inputs.
    BothZero,
}

impl core::fmt::Display for SmithError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SmithError::BothZero => write!(f, "gcd of (0, 0) is undefined"),
        }
    }
}

impl core::error::Error for SmithError {}

/// Extended Euclidean algorithm for arbitrary-sign inputs.
///
/// Returns `(g, x, y)` with `g = gcd(|a|, |b|) > 0` and `a·x + b·y = g`.
pub fn extended_gcd(a: &Int, b: &Int) -> Result<(Int, Int, Int), SmithError> {
    if a.is_zero() && b.is_zero() {
        return Err(SmithError::BothZero);
    }
    // Run the classic iteration on |a|, |b| and fix the Bezout
    // coefficients' signs afterwards.
    let (mut r0, mut r1) = (a.abs(), b.abs());
    let (mut s0, mut s1) = (Int::one(), Int::zero());
    let (mut t0, mut t1) = (Int::zero(), Int::one());
    while !r1.is_zero() {
        let q = r0.clone() / r1.clone();
        let r2 = r0 - q.clone() * r1.clone();
        r0 = core::mem::replace(&mut r1, r2);
        let s2 = s0 - q.clone() * s1.clone();
        s0 = core::mem::replace(&mut s1, s2);
        let t2 = t0 - q * t1.clone();
        t0 = core::mem::replace(&mut t1, t2);
    }
    let x = if a.is_negative() { -s0 } else { s0 };
    let y = if b.is_negative() { -t0 } else { t0 };
    Ok((r0, x, y))
}

/// Result of the Smith normal form computation: `s = u·a·v` exactly.
#[derive(Clone, Debug)]
pub struct SmithDecomposition {
    pub s: IntMat,
    pub u: IntMat,
    pub v: IntMat,
    pub rank: usize,
}

/// Smith normal form of an integer matrix by elementary row and column
/// operations. A zero matrix yields rank 0 with identity transforms.
pub fn smith_normal_form(a: &IntMat) -> SmithDecomposition {
    let (n, m) = (a.rows(), a.cols());
    let mut s = a.clone();
    let mut u = IntMat::identity(n);
    let mut v = IntMat::identity(m);

    'restart: loop {
        let mut active = 0;
        // Diagonalize: clear everything below and right of each pivot.
        while let Some((pi, pj)) = pick_pivot(&s, active) {
            s.swap_cols(active, pj);
            v.swap_cols(active, pj);
            s.swap_rows(active, pi);
            u.swap_rows(active, pi);

            let mut changing = true;
            while changing {
                changing = false;
                // Ensure the pivot divides the rest of its column.
                while let Some(i) =
                    (active + 1..n).find(|&i| !s[(i, active)].is_multiple_of(&s[(active, active)]))
                {
                    row_gcd_step(&mut s, &mut u, active, i);
                    changing = true;
                }
                // Eliminate the rest of the column.
                while let Some(i) = (active + 1..n).find(|&i| !s[(i, active)].is_zero()) {
                    let f = s[(i, active)].clone() / s[(active, active)].clone();
                    row_subtract(&mut s, active, i, &f);
                    row_subtract(&mut u, active, i, &f);
                    changing = true;
                }
                // Ensure the pivot divides the rest of its row.
                while let Some(j) =
                    (active + 1..m).find(|&j| !s[(active, j)].is_multiple_of(&s[(active, active)]))
                {
                    col_gcd_step(&mut s, &mut v, active, j);
                    changing = true;
                }
                // Eliminate the rest of the row.
                while let Some(j) = (active + 1..m).find(|&j| !s[(active, j)].is_zero()) {
                    let f = s[(active, j)].clone() / s[(active, active)].clone();
                    col_subtract(&mut s, active, j, &f);
                    col_subtract(&mut v, active, j, &f);
                    changing = true;
                }
            }
            active += 1;
        }
        let rank = active;

        // Fix signs and the divisibility chain on the diagonal.
        for a in 0..rank {
            if s[(a, a)].is_negative() {
                negate_col(&mut s, a);
                negate_col(&mut v, a);
            }
            if a + 1 < rank && !s[(a + 1, a + 1)].is_multiple_of(&s[(a, a)]) {
                // Merge the next diagonal entry into column a and rerun.
                add_col(&mut s, a + 1, a);
                add_col(&mut v, a + 1, a);
                continue 'restart;
            }
        }
        return SmithDecomposition { s, u, v, rank };
    }
}

/// Nonzero entry with minimal absolute value in the active sub-matrix,
/// scanning row-major so ties resolve deterministically.
fn pick_pivot(s: &IntMat, active: usize) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize, Int)> = None;
    for i in active..s.rows() {
        for j in active..s.cols() {
            if s[(i, j)].is_zero() {
                continue;
            }
            let a = abs(&s[(i, j)]);
            match &best {
                Some((_, _, b)) if *b <= a => {}
                _ => best = Some((i, j, a)),
            }
        }
    }
    best.map(|(i, j, _)| (i, j))
}

/// Unimodular row pair replacing `S_a·` by the gcd combination of rows `a`
/// and `i` so that the pivot divides `S_ia`.
fn row_gcd_step(s: &mut IntMat, u: &mut IntMat, a: usize, i: usize) {
    let (g, sigma, tau) = extended_gcd(&s[(a, a)], &s[(i, a)]).expect("pivot is nonzero");
    let gamma = s[(i, a)].clone() / g.clone();
    let alpha = s[(a, a)].clone() / g;
    combine_rows(s, a, i, &sigma, &tau, &gamma, &alpha);
    combine_rows(u, a, i, &sigma, &tau, &gamma, &alpha);
}

fn col_gcd_step(s: &mut IntMat, v: &mut IntMat, a: usize, j: usize) {
    let (g, sigma, tau) = extended_gcd(&s[(a, a)], &s[(a, j)]).expect("pivot is nonzero");
    let gamma = s[(a, j)].clone() / g.clone();
    let alpha = s[(a, a)].clone() / g;
    combine_cols(s, a, j, &sigma, &tau, &gamma, &alpha);
    combine_cols(v, a, j, &sigma, &tau, &gamma, &alpha);
}

/// Simultaneously `row_a <- sigma·row_a + tau·row_i`,
/// `row_i <- -gamma·row_a + alpha·row_i`; determinant of the 2x2 block is 1.
fn combine_rows(m: &mut IntMat, a: usize, i: usize, sigma: &Int, tau: &Int, gamma: &Int, alpha: &Int) {
    for j in 0..m.cols() {
        let va = m[(a, j)].clone();
        let vi = m[(i, j)].clone();
        m[(a, j)] = sigma.clone() * va.clone() + tau.clone() * vi.clone();
        m[(i, j)] = alpha.clone() * vi - gamma.clone() * va;
    }
}

fn combine_cols(m: &mut IntMat, a: usize, j: usize, sigma: &Int, tau: &Int, gamma: &Int, alpha: &Int) {
    for i in 0..m.rows() {
        let va = m[(i, a)].clone();
        let vj = m[(i, j)].clone();
        m[(i, a)] = sigma.clone() * va.clone() + tau.clone() * vj.clone();
        m[(i, j)] = alpha.clone() * vj - gamma.clone() * va;
    }
}

fn row_subtract(m: &mut IntMat, a: usize, i: usize, f: &Int) {
    for j in 0..m.cols() {
        let d = f.clone() * m[(a, j)].clone();
        m[(i, j)] -= d;
    }
}

fn col_subtract(m: &mut IntMat, a: usize, j: usize, f: &Int) {
    for i in 0..m.rows() {
        let d = f.clone() * m[(i, a)].clone();
        m[(i, j)] -= d;
    }
}

fn negate_col(m: &mut IntMat, j: usize) {
    for i in 0..m.rows() {
        let v = -m[(i, j)].clone();
        m[(i, j)] = v;
    }
}

fn add_col(m: &mut IntMat, from: usize, to: usize) {
    for i in 0..m.rows() {
        let v = m[(i, from)].clone();
        m[(i, to)] += v;
    }
}

/// Pseudo-inverse, kernel and cokernel of an integer matrix.
///
/// * `pinv·b` is a (rational) particular solution whenever one exists;
/// * the columns of `kernel` span the integer null lattice of `A`;
/// * `cokernel·b != 0` certifies that `A·x = b` has no solution.
#[derive(Clone, Debug)]
pub struct LinearSolveResult {
    pub pinv: RatMat,
    pub kernel: IntMat,
    pub cokernel: IntMat,
    pub rank: usize,
}

/// Solution structure of `A·x = b` for all right-hand sides at once.
pub fn solve_structure(a: &IntMat) -> LinearSolveResult {
    let (n, m) = (a.rows(), a.cols());
    let dec = smith_normal_form(a);
    let r = dec.rank;

    // S† holds the reciprocals of the diagonal entries.
    let mut s_dagger = RatMat::zeros(m, n);
    for i in 0..r {
        s_dagger[(i, i)] = Rat::new(Int::one(), dec.s[(i, i)].clone());
    }
    let pinv = dec.v.to_rat().mul(&s_dagger).mul(&dec.u.to_rat());

    let kernel_cols: Vec<usize> = (r..m).collect();
    let kernel = dec.v.select_cols(&kernel_cols);
    let cokernel_rows: Vec<usize> = (r..n).collect();
    let cokernel = dec.u.select_rows(&cokernel_rows);

    LinearSolveResult { pinv, kernel, cokernel, rank: r }
}

impl LinearSolveResult {
    /// Dimension of the kernel.
    pub fn kernel_dim(&self) -> usize {
        self.kernel.cols()
    }
}

/// Classification of `A·x = b` for one concrete right-hand side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolutionClass {
    NoSolution,
    /// Full rank square system with its single integer solution.
    Unique(Vec<Int>),
    /// Base point of the affine solution set `base + kernel·z`.
    Parametric(Vec<Int>),
}

pub fn classify_rhs(res: &LinearSolveResult, b: &[Int]) -> SolutionClass {
    // pinv is M x N for the original N x M system.
    assert_eq!(b.len(), res.pinv.cols(), "right-hand side length mismatch");
    if !res.cokernel.is_empty() {
        let cb = res.cokernel.mul_vec(b);
        if cb.iter().any(|v| !v.is_zero()) {
            return SolutionClass::NoSolution;
        }
    }
    let rb: Vec<Rat> = b.iter().map(|v| Rat::from_integer(v.clone())).collect();
    let x = res.pinv.mul_vec(&rb);
    if x.iter().any(|v| !v.denom().is_one()) {
        return SolutionClass::NoSolution;
    }
    let x: Vec<Int> = x.into_iter().map(|v| v.to_integer()).collect();
    if res.rank == res.pinv.cols() && res.rank == res.pinv.rows() {
        SolutionClass::Unique(x)
    } else {
        SolutionClass::Parametric(x)
    }
}
