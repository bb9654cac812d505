//! Sum-of-squares programs with affine polynomial expressions, and their
//! compilation to block SDPs by Gram-matrix coefficient matching.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

use super::{SdpConstraint, SdpError, SdpProblem};
use crate::math;
use crate::poly::{monomials_in_degree_range, Monomial, Polynomial};

/// Handle of a decision variable of a [`SosProgram`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Unknown {
    /// A free real number.
    Scalar(usize),
    /// A polynomial with free coefficients on a fixed support.
    Poly(usize),
    /// A sum of squares `bᵀ Q b` over a fixed basis `b`.
    Sos(usize),
}

/// `constant + Σ unknown·factor` where each factor is a fixed polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePoly {
    nvars: usize,
    constant: Polynomial,
    parts: Vec<(Unknown, Polynomial)>,
}

impl AffinePoly {
    pub fn zero(nvars: usize) -> Self {
        Self::constant(Polynomial::zero(nvars))
    }

    pub fn constant(p: Polynomial) -> Self {
        Self {
            nvars: p.nvars(),
            constant: p,
            parts: Vec::new(),
        }
    }

    /// `u · factor`.
    pub fn unknown(u: Unknown, factor: Polynomial) -> Self {
        Self {
            nvars: factor.nvars(),
            constant: Polynomial::zero(factor.nvars()),
            parts: vec![(u, factor)],
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn constant_part(&self) -> &Polynomial {
        &self.constant
    }

    pub fn parts(&self) -> &[(Unknown, Polynomial)] {
        &self.parts
    }

    pub fn is_constant(&self) -> bool {
        self.parts.is_empty()
    }

    fn normalize(mut self) -> Self {
        let mut merged: BTreeMap<Unknown, Polynomial> = BTreeMap::new();
        for (u, f) in self.parts.drain(..) {
            let e = merged.entry(u).or_insert_with(|| Polynomial::zero(f.nvars()));
            *e = &*e + &f;
        }
        self.parts = merged.into_iter().filter(|(_, f)| !f.is_zero()).collect();
        self
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            nvars: self.nvars,
            constant: self.constant.scale(c),
            parts: self.parts.iter().map(|(u, f)| (*u, f.scale(c))).collect(),
        }
        .normalize()
    }

    /// Product with a fixed polynomial.
    pub fn mul_poly(&self, p: &Polynomial) -> Self {
        Self {
            nvars: self.nvars,
            constant: &self.constant * p,
            parts: self.parts.iter().map(|(u, f)| (*u, f * p)).collect(),
        }
        .normalize()
    }

    /// Product of two affine expressions; fails when both carry unknowns.
    pub fn try_mul(&self, other: &AffinePoly, prog: &SosProgram) -> Result<Self, SdpError> {
        match (self.is_constant(), other.is_constant()) {
            (true, _) => Ok(other.mul_poly(&self.constant)),
            (_, true) => Ok(self.mul_poly(&other.constant)),
            _ => Err(SdpError::Bilinear(format!(
                "{} · {}",
                prog.name_of(self.parts[0].0),
                prog.name_of(other.parts[0].0)
            ))),
        }
    }
}

impl Add for &AffinePoly {
    type Output = AffinePoly;
    fn add(self, rhs: &AffinePoly) -> AffinePoly {
        let mut parts = self.parts.clone();
        parts.extend(rhs.parts.iter().cloned());
        AffinePoly {
            nvars: self.nvars,
            constant: &self.constant + &rhs.constant,
            parts,
        }
        .normalize()
    }
}

impl Sub for &AffinePoly {
    type Output = AffinePoly;
    fn sub(self, rhs: &AffinePoly) -> AffinePoly {
        self + &rhs.scale(-1.0)
    }
}

impl Neg for &AffinePoly {
    type Output = AffinePoly;
    fn neg(self) -> AffinePoly {
        self.scale(-1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintKind {
    /// The expression must be a sum of squares.
    Sos,
    /// The expression must vanish identically.
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SosConstraint {
    pub name: String,
    pub expr: AffinePoly,
    pub kind: ConstraintKind,
    /// Gram basis of the remainder; chosen by the Newton box when `None`.
    pub basis: Option<Vec<Monomial>>,
}

/// A set of polynomial identities, affine in the unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct SosProgram {
    nvars: usize,
    scalars: Vec<String>,
    polys: Vec<(String, Vec<Monomial>)>,
    sos: Vec<(String, Vec<Monomial>)>,
    constraints: Vec<SosConstraint>,
    objective: Option<Unknown>,
}

impl SosProgram {
    pub fn new(nvars: usize) -> Self {
        Self {
            nvars,
            scalars: Vec::new(),
            polys: Vec::new(),
            sos: Vec::new(),
            constraints: Vec::new(),
            objective: None,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn new_scalar(&mut self, name: &str) -> Unknown {
        self.scalars.push(name.into());
        Unknown::Scalar(self.scalars.len() - 1)
    }

    pub fn new_poly(&mut self, name: &str, support: Vec<Monomial>) -> Unknown {
        self.polys.push((name.into(), support));
        Unknown::Poly(self.polys.len() - 1)
    }

    pub fn new_sos(&mut self, name: &str, basis: Vec<Monomial>) -> Unknown {
        self.sos.push((name.into(), basis));
        Unknown::Sos(self.sos.len() - 1)
    }

    /// `u` as an expression (`u · 1`).
    pub fn expr(&self, u: Unknown) -> AffinePoly {
        AffinePoly::unknown(u, Polynomial::constant(self.nvars, 1.0))
    }

    pub fn name_of(&self, u: Unknown) -> &str {
        match u {
            Unknown::Scalar(i) => &self.scalars[i],
            Unknown::Poly(i) => &self.polys[i].0,
            Unknown::Sos(i) => &self.sos[i].0,
        }
    }

    pub fn sos_basis(&self, i: usize) -> &[Monomial] {
        &self.sos[i].1
    }

    pub fn poly_support(&self, i: usize) -> &[Monomial] {
        &self.polys[i].1
    }

    pub fn num_scalars(&self) -> usize {
        self.scalars.len()
    }

    pub fn num_polys(&self) -> usize {
        self.polys.len()
    }

    pub fn num_sos(&self) -> usize {
        self.sos.len()
    }

    pub fn constraints(&self) -> &[SosConstraint] {
        &self.constraints
    }

    pub fn objective(&self) -> Option<Unknown> {
        self.objective
    }

    pub fn require_sos(&mut self, name: &str, expr: AffinePoly) {
        self.constraints.push(SosConstraint {
            name: name.into(),
            expr,
            kind: ConstraintKind::Sos,
            basis: None,
        });
    }

    pub fn require_sos_with_basis(&mut self, name: &str, expr: AffinePoly, basis: Vec<Monomial>) {
        self.constraints.push(SosConstraint {
            name: name.into(),
            expr,
            kind: ConstraintKind::Sos,
            basis: Some(basis),
        });
    }

    pub fn require_zero(&mut self, name: &str, expr: AffinePoly) {
        self.constraints.push(SosConstraint {
            name: name.into(),
            expr,
            kind: ConstraintKind::Zero,
            basis: None,
        });
    }

    /// Maximize a scalar unknown instead of solving a feasibility problem.
    pub fn maximize(&mut self, u: Unknown) -> Result<(), SdpError> {
        match u {
            Unknown::Scalar(_) => {
                self.objective = Some(u);
                Ok(())
            }
            _ => Err(SdpError::Objective),
        }
    }

    /// Fixed-support polynomial for unknown `Poly(i)` with the given values.
    pub(crate) fn poly_from_values(&self, i: usize, vals: &[f64]) -> Polynomial {
        let mut p = Polynomial::zero(self.nvars);
        for (m, v) in self.polys[i].1.iter().zip(vals) {
            p.add_term(m.clone(), *v);
        }
        p
    }
}

/// Coefficients below this magnitude that no unknown can match are dropped at
/// compile time; verification still accounts for them.
pub const NEGLIGIBLE: f64 = 1e-11;

/// Newton-box Gram basis for an expression with the given support.
pub fn newton_basis(nvars: usize, support: &[Monomial]) -> Vec<Monomial> {
    if support.is_empty() {
        return Vec::new();
    }
    let mut lo_deg = u32::MAX;
    let mut hi_deg = 0;
    let mut lo_exp = vec![u32::MAX; nvars];
    let mut hi_exp = vec![0u32; nvars];
    for m in support {
        lo_deg = lo_deg.min(m.degree());
        hi_deg = hi_deg.max(m.degree());
        for (i, e) in m.exponents().iter().enumerate() {
            lo_exp[i] = lo_exp[i].min(*e);
            hi_exp[i] = hi_exp[i].max(*e);
        }
    }
    let (lo, hi) = (lo_deg.div_ceil(2), hi_deg / 2);
    if lo > hi {
        return Vec::new();
    }
    monomials_in_degree_range(nvars, lo, hi)
        .into_iter()
        .filter(|m| {
            m.exponents()
                .iter()
                .enumerate()
                .all(|(i, e)| 2 * e >= lo_exp[i] && 2 * e <= hi_exp[i])
        })
        .collect()
}

/// Where each unknown lives in the compiled SDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    /// Free-variable index of each scalar unknown.
    pub scalars: Vec<usize>,
    /// First free-variable index of each polynomial unknown.
    pub polys: Vec<usize>,
    /// Block index of each SOS unknown.
    pub sos: Vec<usize>,
    /// Block index and basis of each SOS constraint's remainder.
    pub remainders: Vec<Option<(usize, Vec<Monomial>)>>,
    /// Free-variable index of the phase-I margin `t`, if any.
    pub margin: Option<usize>,
    /// Constraints found unsatisfiable at compile time.
    pub inconsistent: Vec<String>,
}

#[derive(Default)]
struct Row {
    entries: BTreeMap<(usize, usize, usize), f64>,
    free: BTreeMap<usize, f64>,
}

fn support_of(prog: &SosProgram, c: &SosConstraint) -> Vec<Monomial> {
    let mut set: BTreeMap<Monomial, ()> = BTreeMap::new();
    for (m, v) in c.expr.constant.terms() {
        if math::abs(v) > NEGLIGIBLE {
            set.insert(m.clone(), ());
        }
    }
    for (u, f) in &c.expr.parts {
        let base: Vec<Monomial> = match u {
            Unknown::Scalar(_) => vec![Monomial::one(prog.nvars)],
            Unknown::Poly(i) => prog.polys[*i].1.clone(),
            Unknown::Sos(i) => {
                let b = &prog.sos[*i].1;
                let mut out = Vec::new();
                for p in 0..b.len() {
                    for q in p..b.len() {
                        out.push(b[p].mul(&b[q]));
                    }
                }
                out
            }
        };
        for m in base {
            for fm in f.support() {
                set.insert(m.mul(fm), ());
            }
        }
    }
    set.into_keys().collect()
}

/// Compiles `prog` into a block SDP in the primal form
/// `min ⟨C,X⟩ + cᵀy  s.t.  A(X) + B·y = b,  X ⪰ 0`.
///
/// Without an objective the program is compiled in phase-I form: every Gram
/// block is `X_j + t·I`, `t ≤ 1` and `t` is maximized, so a positive optimum
/// means strictly feasible.
pub fn compile(prog: &SosProgram) -> Result<SdpProblem, SdpError> {
    let n = prog.nvars;
    for c in &prog.constraints {
        if c.expr.nvars != n {
            return Err(SdpError::Dimension(c.name.clone()));
        }
    }
    let mut blocks: Vec<usize> = Vec::new();
    let mut nfree = 0usize;
    let scalars: Vec<usize> = (0..prog.scalars.len())
        .map(|_| {
            nfree += 1;
            nfree - 1
        })
        .collect();
    let polys: Vec<usize> = prog
        .polys
        .iter()
        .map(|(_, s)| {
            nfree += s.len();
            nfree - s.len()
        })
        .collect();
    let sos: Vec<usize> = prog
        .sos
        .iter()
        .map(|(_, b)| {
            blocks.push(b.len());
            blocks.len() - 1
        })
        .collect();

    let mut remainders = Vec::with_capacity(prog.constraints.len());
    for c in &prog.constraints {
        match c.kind {
            ConstraintKind::Zero => remainders.push(None),
            ConstraintKind::Sos => {
                let basis = match &c.basis {
                    Some(b) => b.clone(),
                    None => newton_basis(n, &support_of(prog, c)),
                };
                blocks.push(basis.len());
                remainders.push(Some((blocks.len() - 1, basis)));
            }
        }
    }

    let phase_one = prog.objective.is_none();
    let margin = if phase_one {
        nfree += 1;
        Some(nfree - 1)
    } else {
        None
    };

    let mut constraints: Vec<SdpConstraint> = Vec::new();
    let mut inconsistent = Vec::new();
    for (ci, c) in prog.constraints.iter().enumerate() {
        let mut rows: BTreeMap<Monomial, Row> = BTreeMap::new();
        let add_gram =
            |rows: &mut BTreeMap<Monomial, Row>, block: usize, basis: &[Monomial], factor: &Polynomial, sign: f64| {
                for p in 0..basis.len() {
                    for q in p..basis.len() {
                        let bpq = basis[p].mul(&basis[q]);
                        for (fm, fv) in factor.terms() {
                            let row = rows.entry(bpq.mul(fm)).or_default();
                            *row.entries.entry((block, p, q)).or_insert(0.0) += sign * fv;
                        }
                    }
                }
            };
        for (u, f) in &c.expr.parts {
            match u {
                Unknown::Scalar(i) => {
                    for (fm, fv) in f.terms() {
                        let row = rows.entry(fm.clone()).or_default();
                        *row.free.entry(scalars[*i]).or_insert(0.0) += fv;
                    }
                }
                Unknown::Poly(i) => {
                    for (k, m) in prog.polys[*i].1.iter().enumerate() {
                        for (fm, fv) in f.terms() {
                            let row = rows.entry(m.mul(fm)).or_default();
                            *row.free.entry(polys[*i] + k).or_insert(0.0) += fv;
                        }
                    }
                }
                Unknown::Sos(i) => {
                    add_gram(&mut rows, sos[*i], &prog.sos[*i].1, f, 1.0);
                }
            }
        }
        if let Some((block, basis)) = &remainders[ci] {
            add_gram(&mut rows, *block, basis, &Polynomial::constant(n, 1.0), -1.0);
        }
        for m in c.expr.constant.support() {
            rows.entry(m.clone()).or_default();
        }
        for (m, row) in rows {
            let rhs = -c.expr.constant.coeff(&m);
            let entries: Vec<(usize, usize, usize, f64)> = row
                .entries
                .into_iter()
                .filter(|(_, v)| *v != 0.0)
                .map(|((b, p, q), v)| (b, p, q, v))
                .collect();
            let mut free: Vec<(usize, f64)> = row.free.into_iter().filter(|(_, v)| *v != 0.0).collect();
            if let Some(t) = margin {
                // Q = X + t·I: diagonal entries also carry t
                let tcoef: f64 = entries.iter().filter(|(_, p, q, _)| p == q).map(|e| e.3).sum();
                if tcoef != 0.0 {
                    free.push((t, tcoef));
                }
            }
            if entries.is_empty() && free.is_empty() {
                if math::abs(rhs) > NEGLIGIBLE {
                    inconsistent.push(format!("{}: unmatched term {:?}", c.name, m.exponents()));
                }
                continue;
            }
            constraints.push(SdpConstraint { entries, free, rhs });
        }
    }

    let mut objective_free = vec![0.0; nfree];
    let objective_blocks = Vec::new();
    match (prog.objective, margin) {
        (Some(Unknown::Scalar(i)), _) => objective_free[scalars[i]] = -1.0,
        (_, Some(t)) => {
            objective_free[t] = -1.0;
            // t + s = 1 with a 1×1 slack block s ⪰ 0
            blocks.push(1);
            constraints.push(SdpConstraint {
                entries: vec![(blocks.len() - 1, 0, 0, 1.0)],
                free: vec![(t, 1.0)],
                rhs: 1.0,
            });
        }
        _ => return Err(SdpError::Objective),
    }

    Ok(SdpProblem {
        blocks,
        nfree,
        constraints,
        objective_blocks,
        objective_free,
        layout: Layout {
            scalars,
            polys,
            sos,
            remainders,
            margin,
            inconsistent,
        },
    })
}
