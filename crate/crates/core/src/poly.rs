//! Sparse multivariate polynomials over `f64` in graded-lexicographic order.
//!
//! Variables are positional (`x1 … xn`); names only matter when parsing or
//! printing. Arithmetic prunes exact zeros and nothing else.

mod parse;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

pub use parse::{parse_terms, Call, ParsedTerm};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected} variables, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("variable index {index} out of range for {nvars} variables")]
    VariableOutOfRange { index: usize, nvars: usize },
    #[error("parse error at offset {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

/// Exponent vector `x1^a1 … xn^an`.
///
/// `Ord` is graded lexicographic: total degree first, then the exponent
/// vectors compared left to right. Monomials of different length are ordered
/// by length so that the order stays total; use [`grlex_compare`] when a
/// mismatch should be an error.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Monomial(exponents)
    }

    pub fn one(nvars: usize) -> Self {
        Monomial(vec![0; nvars])
    }

    /// `x_var`.
    pub fn var(nvars: usize, var: usize) -> Self {
        let mut e = vec![0; nvars];
        e[var] = 1;
        Monomial(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_one(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.0.len(), other.0.len());
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .fold(1.0, |acc, (&e, &xi)| acc * crate::math::powi(xi, e))
    }

    /// Returns `self / x_var` with the multiplicity, or `None` if `x_var` is absent.
    fn derive(&self, var: usize) -> Option<(u32, Monomial)> {
        let e = self.0[var];
        if e == 0 {
            return None;
        }
        let mut out = self.0.clone();
        out[var] -= 1;
        Some((e, Monomial(out)))
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.degree().cmp(&other.degree()))
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Graded lexicographic comparison.
pub fn grlex_compare(a: &Monomial, b: &Monomial) -> Result<Ordering, PolyError> {
    if a.nvars() != b.nvars() {
        return Err(PolyError::DimensionMismatch {
            expected: a.nvars(),
            found: b.nvars(),
        });
    }
    Ok(a.cmp(b))
}

/// All monomials in `n` variables of total degree `≤ d`, grlex ascending.
pub fn monomial_basis(n: usize, d: u32) -> Vec<Monomial> {
    monomials_in_degree_range(n, 0, d)
}

/// All monomials in `n` variables with `lo ≤ degree ≤ hi`, grlex ascending.
pub fn monomials_in_degree_range(n: usize, lo: u32, hi: u32) -> Vec<Monomial> {
    let mut out = Vec::new();
    for deg in lo..=hi {
        let mut level = Vec::new();
        let mut current = vec![0u32; n];
        fill_degree(n, 0, deg, &mut current, &mut level);
        level.sort();
        out.extend(level);
    }
    out
}

fn fill_degree(n: usize, pos: usize, remaining: u32, cur: &mut Vec<u32>, out: &mut Vec<Monomial>) {
    if n == 0 {
        if remaining == 0 {
            out.push(Monomial(Vec::new()));
        }
        return;
    }
    if pos == n - 1 {
        cur[pos] = remaining;
        out.push(Monomial(cur.clone()));
        cur[pos] = 0;
        return;
    }
    for e in 0..=remaining {
        cur[pos] = e;
        fill_degree(n, pos + 1, remaining - e, cur, out);
    }
    cur[pos] = 0;
}

/// Sparse polynomial in a fixed number of positional variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        Self::term(Monomial::one(nvars), c)
    }

    pub fn var(nvars: usize, var: usize) -> Self {
        Self::term(Monomial::var(nvars, var), 1.0)
    }

    pub fn term(m: Monomial, c: f64) -> Self {
        let mut p = Polynomial::zero(m.nvars());
        p.add_term(m, c);
        p
    }

    /// Builds a polynomial from `(monomial, coefficient)` pairs, summing repeats.
    pub fn from_terms<I>(nvars: usize, terms: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = (Monomial, f64)>,
    {
        let mut p = Polynomial::zero(nvars);
        for (m, c) in terms {
            if m.nvars() != nvars {
                return Err(PolyError::DimensionMismatch {
                    expected: nvars,
                    found: m.nvars(),
                });
            }
            p.add_term(m, c);
        }
        Ok(p)
    }

    /// `Σ coeffs[k] · x_var^k` embedded in `nvars` variables.
    pub fn univariate(nvars: usize, var: usize, coeffs: &[f64]) -> Self {
        let mut p = Polynomial::zero(nvars);
        for (k, &c) in coeffs.iter().enumerate() {
            let mut e = vec![0; nvars];
            e[var] = k as u32;
            p.add_term(Monomial(e), c);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in grlex ascending order.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> + '_ {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn support(&self) -> impl Iterator<Item = &Monomial> + '_ {
        self.terms.keys()
    }

    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn constant_term(&self) -> f64 {
        self.coeff(&Monomial::one(self.nvars))
    }

    /// Adds `c·m` in place; an exact zero result removes the entry.
    pub fn add_term(&mut self, m: Monomial, c: f64) {
        debug_assert_eq!(m.nvars(), self.nvars);
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(m);
        match entry {
            alloc::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            alloc::collections::btree_map::Entry::Occupied(mut o) => {
                let s = *o.get() + c;
                if s == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    /// Total degree; `0` for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Smallest total degree among the terms; `0` for the zero polynomial.
    pub fn min_degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).min().unwrap_or(0)
    }

    /// Largest exponent of each variable over the support.
    pub fn max_exponents(&self) -> Vec<u32> {
        let mut out = vec![0; self.nvars];
        for m in self.terms.keys() {
            for (o, &e) in out.iter_mut().zip(m.exponents()) {
                *o = (*o).max(e);
            }
        }
        out
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, &c| a.max(crate::math::abs(c)))
    }

    fn check_dims(&self, other: &Polynomial) -> Result<(), PolyError> {
        if self.nvars != other.nvars {
            return Err(PolyError::DimensionMismatch {
                expected: self.nvars,
                found: other.nvars,
            });
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dims(other)?;
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), c);
        }
        Ok(out)
    }

    pub fn checked_sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dims(other)?;
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), -c);
        }
        Ok(out)
    }

    pub fn checked_mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dims(other)?;
        let mut out = Polynomial::zero(self.nvars);
        for (m1, &c1) in &self.terms {
            for (m2, &c2) in &other.terms {
                out.add_term(m1.mul(m2), c1 * c2);
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> Polynomial {
        let mut out = Polynomial::zero(self.nvars);
        for (m, &v) in &self.terms {
            out.add_term(m.clone(), v * c);
        }
        out
    }

    pub fn pow(&self, k: u32) -> Polynomial {
        let mut acc = Polynomial::constant(self.nvars, 1.0);
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    /// Evaluates at `x`.
    ///
    /// Panics if `x.len() != self.nvars()`; see [`Polynomial::checked_eval`].
    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nvars, "point dimension mismatch");
        self.terms.iter().map(|(m, &c)| c * m.eval(x)).sum()
    }

    pub fn checked_eval(&self, x: &[f64]) -> Result<f64, PolyError> {
        if x.len() != self.nvars {
            return Err(PolyError::DimensionMismatch {
                expected: self.nvars,
                found: x.len(),
            });
        }
        Ok(self.eval(x))
    }

    /// Formal partial derivative with respect to `x_var`.
    pub fn partial(&self, var: usize) -> Result<Polynomial, PolyError> {
        if var >= self.nvars {
            return Err(PolyError::VariableOutOfRange {
                index: var,
                nvars: self.nvars,
            });
        }
        let mut out = Polynomial::zero(self.nvars);
        for (m, &c) in &self.terms {
            if let Some((e, dm)) = m.derive(var) {
                out.add_term(dm, c * e as f64);
            }
        }
        Ok(out)
    }

    pub fn grad(&self) -> PolyVector {
        PolyVector {
            nvars: self.nvars,
            components: (0..self.nvars)
                .map(|i| self.partial(i).expect("index in range"))
                .collect(),
        }
    }

    /// `∇self · field`.
    pub fn lie_derivative(&self, field: &PolyVector) -> Result<Polynomial, PolyError> {
        if field.len() != self.nvars || field.nvars() != self.nvars {
            return Err(PolyError::DimensionMismatch {
                expected: self.nvars,
                found: field.len(),
            });
        }
        let mut out = Polynomial::zero(self.nvars);
        for (i, fi) in field.components.iter().enumerate() {
            let d = self.partial(i)?;
            if d.is_zero() {
                continue;
            }
            out = &out + &(&d * fi);
        }
        Ok(out)
    }

    /// Terms of total degree exactly `d`.
    pub fn homogeneous_part(&self, d: u32) -> Polynomial {
        let mut out = Polynomial::zero(self.nvars);
        for (m, &c) in &self.terms {
            if m.degree() == d {
                out.add_term(m.clone(), c);
            }
        }
        out
    }

    /// Substitutes `x_var = value` for each `(var, value)`, keeping the
    /// variable count (the substituted variables no longer occur).
    pub fn partial_eval(&self, assignments: &[(usize, f64)]) -> Polynomial {
        let mut out = Polynomial::zero(self.nvars);
        for (m, &c) in &self.terms {
            let mut e = m.0.clone();
            let mut factor = c;
            for &(var, val) in assignments {
                factor *= crate::math::powi(val, e[var]);
                e[var] = 0;
            }
            out.add_term(Monomial(e), factor);
        }
        out
    }

    /// Keeps the first `n` variables; fails if any dropped variable occurs.
    pub fn truncate_vars(&self, n: usize) -> Result<Polynomial, PolyError> {
        let mut out = Polynomial::zero(n);
        for (m, &c) in &self.terms {
            if m.0[n..].iter().any(|&e| e > 0) {
                return Err(PolyError::VariableOutOfRange {
                    index: n + m.0[n..].iter().position(|&e| e > 0).unwrap_or(0),
                    nvars: n,
                });
            }
            out.add_term(Monomial(m.0[..n].to_vec()), c);
        }
        Ok(out)
    }

    /// Re-embeds into `nvars ≥ self.nvars()` variables (new ones appended).
    pub fn extend_vars(&self, nvars: usize) -> Polynomial {
        assert!(nvars >= self.nvars);
        let mut out = Polynomial::zero(nvars);
        for (m, &c) in &self.terms {
            let mut e = m.0.clone();
            e.resize(nvars, 0);
            out.add_term(Monomial(e), c);
        }
        out
    }

    /// Degree in the variables `vars` only.
    pub fn degree_in(&self, vars: core::ops::Range<usize>) -> u32 {
        self.terms
            .keys()
            .map(|m| m.0[vars.clone()].iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    /// Maximum absolute coefficient difference to `other`.
    pub fn max_coeff_diff(&self, other: &Polynomial) -> f64 {
        let diff = self - other;
        diff.max_abs_coeff()
    }

    /// Canonical text form with custom variable names.
    pub fn display_with<'a>(&'a self, names: &'a [&'a str]) -> DisplayWith<'a> {
        DisplayWith { poly: self, names }
    }

    /// Parses the text form with variables `x1 … xn`.
    pub fn parse(text: &str, nvars: usize) -> Result<Polynomial, PolyError> {
        let names: Vec<String> = (1..=nvars).map(|i| alloc::format!("x{}", i)).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        Self::parse_with_names(text, &refs)
    }

    /// Parses the text form with the given variable names.
    pub fn parse_with_names(text: &str, names: &[&str]) -> Result<Polynomial, PolyError> {
        let terms = parse_terms(text, names)?;
        let mut out = Polynomial::zero(names.len());
        for t in terms {
            if let Some(call) = t.call {
                return Err(PolyError::Parse {
                    pos: call.pos,
                    msg: alloc::format!("unexpected function call `{}`", call.name),
                });
            }
            out = &out + &t.coeff;
        }
        Ok(out)
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    /// Panics on dimension mismatch.
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.checked_add(rhs).expect("polynomial dimension mismatch")
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self.checked_sub(rhs).expect("polynomial dimension mismatch")
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.checked_mul(rhs).expect("polynomial dimension mismatch")
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

pub struct DisplayWith<'a> {
    poly: &'a Polynomial,
    names: &'a [&'a str],
}

impl fmt::Display for DisplayWith<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_poly(f, self.poly, |f, i| f.write_str(self.names[i]))
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_poly(f, self, |f, i| write!(f, "x{}", i + 1))
    }
}

fn write_poly<F>(f: &mut fmt::Formatter<'_>, p: &Polynomial, mut var: F) -> fmt::Result
where
    F: FnMut(&mut fmt::Formatter<'_>, usize) -> fmt::Result,
{
    if p.is_zero() {
        return f.write_str("0");
    }
    for (k, (m, &c)) in p.terms.iter().enumerate() {
        let mag = if k == 0 {
            c
        } else if c < 0.0 {
            f.write_str(" - ")?;
            -c
        } else {
            f.write_str(" + ")?;
            c
        };
        let mut first = true;
        if m.is_one() {
            write!(f, "{:?}", mag)?;
            continue;
        }
        if mag == -1.0 {
            f.write_str("-")?;
        } else if mag != 1.0 {
            write!(f, "{:?}", mag)?;
            first = false;
        }
        for (i, &e) in m.exponents().iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                f.write_str("*")?;
            }
            first = false;
            var(f, i)?;
            if e > 1 {
                write!(f, "^{}", e)?;
            }
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct PolyRepr {
    nvars: usize,
    terms: Vec<(Monomial, f64)>,
}

impl Serialize for Polynomial {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PolyRepr {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(m, &c)| (m.clone(), c)).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Polynomial {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = PolyRepr::deserialize(d)?;
        Polynomial::from_terms(r.nvars, r.terms).map_err(serde::de::Error::custom)
    }
}

/// A vector of polynomials sharing the same variables (a vector field).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyVector {
    nvars: usize,
    components: Vec<Polynomial>,
}

impl PolyVector {
    pub fn new(components: Vec<Polynomial>) -> Result<Self, PolyError> {
        let nvars = components.first().map(Polynomial::nvars).unwrap_or(0);
        if let Some(bad) = components.iter().find(|p| p.nvars() != nvars) {
            return Err(PolyError::DimensionMismatch {
                expected: nvars,
                found: bad.nvars(),
            });
        }
        Ok(PolyVector { nvars, components })
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|p| p.eval(x)).collect()
    }

    pub fn degree(&self) -> u32 {
        self.components.iter().map(Polynomial::degree).max().unwrap_or(0)
    }
}

impl core::ops::Index<usize> for PolyVector {
    type Output = Polynomial;
    fn index(&self, i: usize) -> &Polynomial {
        &self.components[i]
    }
}
