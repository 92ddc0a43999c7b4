//! Affine expressions over index symbols.
//!
//! An [`AffineForm`] is `sum_i c_i * sym_i + c0` with exact rational
//! coefficients. Argument index maps are required to stay integral; rational
//! coefficients arise only inside derived bound expressions and
//! pseudo-inverse substitutions, where a divisibility condition guards
//! integrality at evaluation time.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::matrix::IntMat;
use crate::symbol::IndexSymbol;
use crate::{Int, Rat};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AffineForm {
    /// Symbol coefficients; zero coefficients are never stored.
    terms: BTreeMap<IndexSymbol, Rat>,
    constant: Rat,
}

impl AffineForm {
    pub fn zero() -> Self {
        AffineForm { terms: BTreeMap::new(), constant: Rat::zero() }
    }

    pub fn constant(c: Rat) -> Self {
        AffineForm { terms: BTreeMap::new(), constant: c }
    }

    pub fn constant_int(c: i64) -> Self {
        Self::constant(Rat::from_integer(Int::from(c)))
    }

    pub fn symbol(sym: IndexSymbol) -> Self {
        Self::term(sym, Rat::one())
    }

    pub fn term(sym: IndexSymbol, coeff: Rat) -> Self {
        let mut terms = BTreeMap::new();
        if !coeff.is_zero() {
            terms.insert(sym, coeff);
        }
        AffineForm { terms, constant: Rat::zero() }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn constant_part(&self) -> &Rat {
        &self.constant
    }

    pub fn coeff(&self, sym: &IndexSymbol) -> Rat {
        self.terms.get(sym).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&IndexSymbol, &Rat)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn symbols(&self) -> BTreeSet<IndexSymbol> {
        self.terms.keys().cloned().collect()
    }

    pub fn add_term(&mut self, sym: IndexSymbol, coeff: Rat) {
        if coeff.is_zero() {
            return;
        }
        use alloc::collections::btree_map::Entry;
        match self.terms.entry(sym) {
            Entry::Vacant(e) => {
                e.insert(coeff);
            }
            Entry::Occupied(mut e) => {
                let sum = e.get().clone() + coeff;
                if sum.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = sum;
                }
            }
        }
    }

    pub fn add(&self, other: &AffineForm) -> AffineForm {
        let mut out = self.clone();
        out.constant += other.constant.clone();
        for (sym, c) in &other.terms {
            out.add_term(sym.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &AffineForm) -> AffineForm {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> AffineForm {
        self.scale(&-Rat::one())
    }

    pub fn scale(&self, f: &Rat) -> AffineForm {
        if f.is_zero() {
            return AffineForm::zero();
        }
        AffineForm {
            terms: self.terms.iter().map(|(s, c)| (s.clone(), c.clone() * f.clone())).collect(),
            constant: self.constant.clone() * f.clone(),
        }
    }

    pub fn add_constant(&self, c: &Rat) -> AffineForm {
        let mut out = self.clone();
        out.constant += c.clone();
        out
    }

    /// Replace each mapped symbol with its substitute form; unmapped symbols
    /// stay as themselves.
    pub fn substitute(&self, mapping: &BTreeMap<IndexSymbol, AffineForm>) -> AffineForm {
        let mut out = AffineForm::constant(self.constant.clone());
        for (sym, c) in &self.terms {
            match mapping.get(sym) {
                Some(form) => out = out.add(&form.scale(c)),
                None => out.add_term(sym.clone(), c.clone()),
            }
        }
        out
    }

    /// Exact value under an integer assignment of every symbol.
    pub fn eval(&self, bindings: &BTreeMap<IndexSymbol, Int>) -> Rat {
        let mut acc = self.constant.clone();
        for (sym, c) in &self.terms {
            let v = bindings.get(sym).unwrap_or_else(|| panic!("unbound symbol {}", sym.name));
            acc += c.clone() * Rat::from_integer(v.clone());
        }
        acc
    }

    /// True if all coefficients and the constant are integers.
    pub fn is_integral(&self) -> bool {
        self.constant.denom().is_one() && self.terms.values().all(|c| c.denom().is_one())
    }

    /// Least common multiple of all denominators.
    pub fn denom_lcm(&self) -> Int {
        let mut l = self.constant.denom().clone();
        for c in self.terms.values() {
            l = l.lcm(c.denom());
        }
        l
    }

    /// Interval of values over a box of symbol ranges; symbols missing from
    /// `box_ranges` make the result `None` (unbounded for this purpose).
    pub fn range_over_box(
        &self,
        box_ranges: &BTreeMap<IndexSymbol, (Int, Int)>,
    ) -> Option<(Rat, Rat)> {
        let mut lo = self.constant.clone();
        let mut hi = self.constant.clone();
        for (sym, c) in &self.terms {
            let (a, b) = box_ranges.get(sym)?;
            let ca = c.clone() * Rat::from_integer(a.clone());
            let cb = c.clone() * Rat::from_integer(b.clone());
            if ca <= cb {
                lo += ca;
                hi += cb;
            } else {
                lo += cb;
                hi += ca;
            }
        }
        Some((lo, hi))
    }

    /// Scale to integer coefficients with content 1 and positive leading
    /// coefficient. Used to canonicalize delta conditions (`f = 0` is
    /// invariant under nonzero scaling).
    pub fn canonical_eq_zero(&self) -> AffineForm {
        if self.terms.is_empty() && self.constant.is_zero() {
            return AffineForm::zero();
        }
        let scaled = self.scale(&Rat::from_integer(self.denom_lcm()));
        let mut content = scaled.constant.numer().abs();
        for c in scaled.terms.values() {
            content = content.gcd(&c.numer().abs());
        }
        if content.is_zero() {
            content = Int::one();
        }
        let mut out = scaled.scale(&Rat::new(Int::one(), content));
        let leading_negative = match out.terms.values().next() {
            Some(c) => c.is_negative(),
            None => out.constant.is_negative(),
        };
        if leading_negative {
            out = out.neg();
        }
        out
    }
}

impl From<i64> for AffineForm {
    fn from(v: i64) -> Self {
        AffineForm::constant_int(v)
    }
}

/// Integer matrix plus offset mapping a source multi-index to an argument
/// multi-index: `index = coeffs · alpha + offset`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexAffineMap {
    pub coeffs: IntMat,
    pub offset: Vec<Int>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MapError {
    /// A coefficient or offset is not an integer.
    NonInteger { row: usize },
    /// A form references a symbol outside the given ordering.
    UnknownSymbol { name: alloc::string::String },
}

impl core::fmt::Display for MapError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MapError::NonInteger { row } => {
                write!(f, "index expression {row} has a non-integer coefficient")
            }
            MapError::UnknownSymbol { name } => write!(f, "unknown index symbol {name}"),
        }
    }
}

impl core::error::Error for MapError {}

impl IndexAffineMap {
    /// Build the matrix form of a list of affine index expressions relative
    /// to an ordered list of source symbols.
    pub fn from_forms(forms: &[AffineForm], order: &[IndexSymbol]) -> Result<Self, MapError> {
        let mut coeffs = IntMat::zeros(forms.len(), order.len());
        let mut offset = Vec::with_capacity(forms.len());
        for (r, form) in forms.iter().enumerate() {
            if !form.is_integral() {
                return Err(MapError::NonInteger { row: r });
            }
            for (sym, c) in form.terms() {
                let col = order
                    .iter()
                    .position(|s| s == sym)
                    .ok_or_else(|| MapError::UnknownSymbol { name: sym.name.clone() })?;
                coeffs[(r, col)] = c.numer().clone();
            }
            offset.push(form.constant_part().numer().clone());
        }
        Ok(IndexAffineMap { coeffs, offset })
    }

    pub fn rows(&self) -> usize {
        self.coeffs.rows()
    }

    pub fn apply(&self, alpha: &[Int]) -> Vec<Int> {
        let mut out = self.coeffs.mul_vec(alpha);
        for (o, c) in out.iter_mut().zip(&self.offset) {
            *o += c.clone();
        }
        out
    }
}
