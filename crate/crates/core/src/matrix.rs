//! Dense exact matrices over arbitrary-precision integers and rationals.
//!
//! Entries never leave exact arithmetic: intermediate values in the Smith
//! normal form computation can grow far beyond machine words even for small
//! inputs.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::{One, Signed, Zero};

use crate::{Int, Rat};

/// Rectangular matrix with arbitrary-precision integer entries, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntMat {
    rows: usize,
    cols: usize,
    data: Vec<Int>,
}

/// Rectangular matrix with exact rational entries, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RatMat {
    rows: usize,
    cols: usize,
    data: Vec<Rat>,
}

macro_rules! common_impl {
    ($name:ident, $elem:ty) => {
        impl $name {
            pub fn zeros(rows: usize, cols: usize) -> Self {
                $name { rows, cols, data: vec![<$elem>::zero(); rows * cols] }
            }

            pub fn identity(n: usize) -> Self {
                let mut m = Self::zeros(n, n);
                for i in 0..n {
                    m[(i, i)] = <$elem>::one();
                }
                m
            }

            pub fn from_rows(rows: Vec<Vec<$elem>>) -> Self {
                let r = rows.len();
                let c = rows.first().map_or(0, |row| row.len());
                assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
                $name { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
            }

            pub fn rows(&self) -> usize {
                self.rows
            }

            pub fn cols(&self) -> usize {
                self.cols
            }

            pub fn is_empty(&self) -> bool {
                self.rows == 0 || self.cols == 0
            }

            pub fn row(&self, i: usize) -> &[$elem] {
                &self.data[i * self.cols..(i + 1) * self.cols]
            }

            pub fn iter_rows(&self) -> impl Iterator<Item = &[$elem]> {
                self.data.chunks(self.cols.max(1)).take(self.rows)
            }

            pub fn transpose(&self) -> Self {
                let mut t = Self::zeros(self.cols, self.rows);
                for i in 0..self.rows {
                    for j in 0..self.cols {
                        t[(j, i)] = self[(i, j)].clone();
                    }
                }
                t
            }

            pub fn mul(&self, other: &Self) -> Self {
                assert_eq!(self.cols, other.rows, "dimension mismatch");
                let mut out = Self::zeros(self.rows, other.cols);
                for i in 0..self.rows {
                    for k in 0..self.cols {
                        let a = &self[(i, k)];
                        if a.is_zero() {
                            continue;
                        }
                        for j in 0..other.cols {
                            let p = a.clone() * other[(k, j)].clone();
                            out[(i, j)] += p;
                        }
                    }
                }
                out
            }

            pub fn mul_vec(&self, v: &[$elem]) -> Vec<$elem> {
                assert_eq!(self.cols, v.len(), "dimension mismatch");
                (0..self.rows)
                    .map(|i| {
                        let mut acc = <$elem>::zero();
                        for j in 0..self.cols {
                            acc += self[(i, j)].clone() * v[j].clone();
                        }
                        acc
                    })
                    .collect()
            }

            /// Sub-matrix consisting of the given rows, in order.
            pub fn select_rows(&self, idx: &[usize]) -> Self {
                let mut out = Self::zeros(idx.len(), self.cols);
                for (r, &i) in idx.iter().enumerate() {
                    for j in 0..self.cols {
                        out[(r, j)] = self[(i, j)].clone();
                    }
                }
                out
            }

            /// Sub-matrix consisting of the given columns, in order.
            pub fn select_cols(&self, idx: &[usize]) -> Self {
                let mut out = Self::zeros(self.rows, idx.len());
                for i in 0..self.rows {
                    for (c, &j) in idx.iter().enumerate() {
                        out[(i, c)] = self[(i, j)].clone();
                    }
                }
                out
            }

            pub fn swap_rows(&mut self, a: usize, b: usize) {
                if a == b {
                    return;
                }
                for j in 0..self.cols {
                    self.data.swap(a * self.cols + j, b * self.cols + j);
                }
            }

            pub fn swap_cols(&mut self, a: usize, b: usize) {
                if a == b {
                    return;
                }
                for i in 0..self.rows {
                    self.data.swap(i * self.cols + a, i * self.cols + b);
                }
            }

            pub fn is_zero(&self) -> bool {
                self.data.iter().all(|e| e.is_zero())
            }
        }

        impl core::ops::Index<(usize, usize)> for $name {
            type Output = $elem;
            fn index(&self, (i, j): (usize, usize)) -> &$elem {
                debug_assert!(i < self.rows && j < self.cols);
                &self.data[i * self.cols + j]
            }
        }

        impl core::ops::IndexMut<(usize, usize)> for $name {
            fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut $elem {
                debug_assert!(i < self.rows && j < self.cols);
                &mut self.data[i * self.cols + j]
            }
        }
    };
}

common_impl!(IntMat, Int);
common_impl!(RatMat, Rat);

impl IntMat {
    pub fn from_i64(rows: &[&[i64]]) -> Self {
        Self::from_rows(rows.iter().map(|r| r.iter().map(|&v| Int::from(v)).collect()).collect())
    }

    pub fn to_rat(&self) -> RatMat {
        let mut out = RatMat::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = Rat::from_integer(self[(i, j)].clone());
            }
        }
        out
    }

    /// Determinant of a square matrix by fraction-free (Bareiss) elimination.
    pub fn det(&self) -> Int {
        assert_eq!(self.rows, self.cols, "determinant of non-square matrix");
        let n = self.rows;
        if n == 0 {
            return Int::one();
        }
        let mut m = self.clone();
        let mut sign = Int::one();
        let mut prev = Int::one();
        for k in 0..n - 1 {
            if m[(k, k)].is_zero() {
                match (k + 1..n).find(|&i| !m[(i, k)].is_zero()) {
                    Some(i) => {
                        m.swap_rows(k, i);
                        sign = -sign;
                    }
                    None => return Int::zero(),
                }
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let num = m[(k, k)].clone() * m[(i, j)].clone()
                        - m[(i, k)].clone() * m[(k, j)].clone();
                    m[(i, j)] = num / prev.clone();
                }
                m[(i, k)] = Int::zero();
            }
            prev = m[(k, k)].clone();
        }
        sign * m[(n - 1, n - 1)].clone()
    }
}

impl RatMat {
    pub fn from_i64(rows: &[&[i64]]) -> Self {
        Self::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|&v| Rat::from_integer(Int::from(v))).collect())
                .collect(),
        )
    }

    /// True if every entry has denominator one.
    pub fn is_integral(&self) -> bool {
        self.data.iter().all(|e| e.denom().is_one())
    }

    /// Rank by Gaussian elimination over the rationals.
    pub fn rank(&self) -> usize {
        let mut m = self.clone();
        let mut rank = 0;
        for col in 0..m.cols {
            let Some(pivot) = (rank..m.rows).find(|&i| !m[(i, col)].is_zero()) else {
                continue;
            };
            m.swap_rows(rank, pivot);
            let p = m[(rank, col)].clone();
            for i in 0..m.rows {
                if i != rank && !m[(i, col)].is_zero() {
                    let f = m[(i, col)].clone() / p.clone();
                    for j in col..m.cols {
                        let d = f.clone() * m[(rank, j)].clone();
                        m[(i, j)] -= d;
                    }
                }
            }
            rank += 1;
            if rank == m.rows {
                break;
            }
        }
        rank
    }

    /// Scale a row in place.
    pub fn scale_row(&mut self, i: usize, f: &Rat) {
        for j in 0..self.cols {
            let v = self[(i, j)].clone() * f.clone();
            self[(i, j)] = v;
        }
    }

    /// Append a row formed as the sum of rows `a` and `b` of `src`.
    pub fn push_row_sum(&mut self, src: &RatMat, a: usize, b: usize) {
        assert_eq!(self.cols, src.cols);
        for j in 0..src.cols {
            self.data.push(src[(a, j)].clone() + src[(b, j)].clone());
        }
        self.rows += 1;
    }

    pub fn push_row(&mut self, row: &[Rat]) {
        assert_eq!(self.cols, row.len());
        self.data.extend(row.iter().cloned());
        self.rows += 1;
    }
}

impl core::fmt::Display for IntMat {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        for i in 0..self.rows {
            write!(f, "[")?;
            for j in 0..self.cols {
                if j > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{}", self[(i, j)])?;
            }
            writeln!(f, "]")?;
        }
        Ok(())
    }
}

/// Signed absolute value helper used by pivot selection.
pub(crate) fn abs(v: &Int) -> Int {
    v.abs()
}
