//! Certified polynomial enclosures of transcendental terms.
//!
//! A term `φ(x)` is written as `φ(0) + p̃(x)·x^γ + u·x^γ` with `|u| ≤ b` on a
//! box. The interpolation method builds `p̃` by Lagrange interpolation of
//! `ψ(x) = (φ(x) − φ(0))/x^γ` on an equispaced mesh and bounds the remainder
//! by `n/(n+1)·λ·s` where `λ` bounds `‖∇(ψ − p̃)‖` and `s` is the mesh spacing.
//! The Taylor method is kept as a baseline.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::linalg::{self, Mat, Vector};
use crate::math;
use crate::poly::{monomial_basis, Monomial, Polynomial};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ApproxError {
    #[error("degree {degree} must exceed the minimal monomial order {gamma}")]
    DegreeTooLow { degree: u32, gamma: u32 },
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("a mesh needs at least {min} nodes, got {got}")]
    TooFewNodes { min: usize, got: usize },
    #[error("{got} nodes do not match a full polynomial basis in {dim} variables")]
    NodeCount { got: usize, dim: usize },
    #[error("mesh nodes are not unisolvent for degree {0}")]
    NotUnisolvent(u32),
    #[error("{0}-dimensional meshes are not supported")]
    UnsupportedDimension(usize),
    #[error("unknown catalog function `{0}`")]
    UnknownFunction(String),
    #[error("{0} is not defined on the whole box")]
    OutOfDomain(String),
    #[error("variable index {index} out of range for {nvars} variables")]
    VariableOutOfRange { index: usize, nvars: usize },
}

/// The closed catalog of supported transcendental functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionKind {
    Sin,
    Cos,
    Exp,
    /// `eˣ − 1`
    Expm1,
    /// `ln(1 + x)`
    Log1p,
}

impl FunctionKind {
    pub const ALL: [FunctionKind; 5] = [
        FunctionKind::Sin,
        FunctionKind::Cos,
        FunctionKind::Exp,
        FunctionKind::Expm1,
        FunctionKind::Log1p,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FunctionKind::Sin => "sin",
            FunctionKind::Cos => "cos",
            FunctionKind::Exp => "exp",
            FunctionKind::Expm1 => "expm1",
            FunctionKind::Log1p => "log1p",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, ApproxError> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == name)
            .ok_or_else(|| ApproxError::UnknownFunction(name.into()))
    }

    /// Degree of the first non-constant nonzero Taylor term at 0.
    pub fn minimal_order(self) -> u32 {
        match self {
            FunctionKind::Cos => 2,
            _ => 1,
        }
    }

    /// `k`-th Taylor coefficient at 0.
    pub fn taylor_coefficient(self, k: u32) -> f64 {
        let kf = math::factorial(k);
        match self {
            FunctionKind::Sin => match k % 4 {
                1 => 1.0 / kf,
                3 => -1.0 / kf,
                _ => 0.0,
            },
            FunctionKind::Cos => match k % 4 {
                0 => 1.0 / kf,
                2 => -1.0 / kf,
                _ => 0.0,
            },
            FunctionKind::Exp => 1.0 / kf,
            FunctionKind::Expm1 => {
                if k == 0 {
                    0.0
                } else {
                    1.0 / kf
                }
            }
            FunctionKind::Log1p => match k {
                0 => 0.0,
                _ if k % 2 == 1 => 1.0 / k as f64,
                _ => -1.0 / k as f64,
            },
        }
    }

    pub fn eval(self, u: f64) -> f64 {
        match self {
            FunctionKind::Sin => math::sin(u),
            FunctionKind::Cos => math::cos(u),
            FunctionKind::Exp => math::exp(u),
            FunctionKind::Expm1 => math::expm1(u),
            FunctionKind::Log1p => math::ln_1p(u),
        }
    }

    /// `k`-th derivative at `u`.
    pub fn derivative(self, k: u32, u: f64) -> f64 {
        if k == 0 {
            return self.eval(u);
        }
        match self {
            FunctionKind::Sin => math::sin(u + k as f64 * FRAC_PI_2),
            FunctionKind::Cos => math::cos(u + k as f64 * FRAC_PI_2),
            FunctionKind::Exp | FunctionKind::Expm1 => math::exp(u),
            FunctionKind::Log1p => {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * math::factorial(k - 1) / math::powi(1.0 + u, k)
            }
        }
    }

    /// `sup |g⁽ᵏ⁾(u)|` for `u ∈ [lo, hi]`.
    pub fn derivative_sup(self, k: u32, lo: f64, hi: f64) -> Result<f64, ApproxError> {
        match self {
            FunctionKind::Sin | FunctionKind::Cos => {
                // |sin(u + δ)| with δ from the derivative order and the kind
                let delta = k as f64 * FRAC_PI_2 + if self == FunctionKind::Cos { FRAC_PI_2 } else { 0.0 };
                let (a, b) = (lo + delta, hi + delta);
                // peaks of |sin| sit at π/2 + jπ
                let j = math::ceil((a - FRAC_PI_2) / PI);
                if FRAC_PI_2 + j * PI <= b {
                    Ok(1.0)
                } else {
                    Ok(math::abs(math::sin(a)).max(math::abs(math::sin(b))))
                }
            }
            FunctionKind::Exp => Ok(math::exp(hi)),
            FunctionKind::Expm1 => {
                if k == 0 {
                    Ok(math::abs(math::expm1(lo)).max(math::abs(math::expm1(hi))))
                } else {
                    Ok(math::exp(hi))
                }
            }
            FunctionKind::Log1p => {
                if 1.0 + lo <= 0.0 {
                    return Err(ApproxError::OutOfDomain("log1p".into()));
                }
                if k == 0 {
                    Ok(math::abs(math::ln_1p(lo)).max(math::abs(math::ln_1p(hi))))
                } else {
                    Ok(math::factorial(k - 1) / math::powi(1.0 + lo, k))
                }
            }
        }
    }
}

impl fmt::Display for FunctionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A univariate function of one state variable that can be enclosed.
///
/// `t` below is the raw value of the state variable `x_var`.
pub trait Enclosable {
    fn var(&self) -> usize;
    /// `|γ|`, the order of the minimal monomial.
    fn gamma_order(&self) -> u32;
    fn value(&self, t: f64) -> f64;
    /// `ψ(t) = (φ(t) − φ(0)) / t^γ`, continuous at 0.
    fn psi(&self, t: f64) -> f64;
    fn psi_derivative(&self, t: f64) -> f64;
    /// `k`-th Taylor coefficient of `φ` in `t` at 0.
    fn taylor_coefficient(&self, k: u32) -> f64;
    /// `sup |φ⁽ᵏ⁾(t)|` over `t ∈ [lo, hi]`.
    fn derivative_sup(&self, k: u32, lo: f64, hi: f64) -> Result<f64, ApproxError>;
    fn label(&self) -> String;
    /// Validity check of the function on `[lo, hi]`.
    fn check_interval(&self, _lo: f64, _hi: f64) -> Result<(), ApproxError> {
        Ok(())
    }
}

/// A catalog function applied to a scaled state variable, `kind(scale·x_var)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementaryFunction {
    pub kind: FunctionKind,
    pub var: usize,
    pub scale: f64,
}

/// Terms of the series of ψ used near the origin.
const SERIES_TERMS: u32 = 40;
/// `|c·t|` below which ψ and ψ' are summed from the series.
const SERIES_RADIUS: f64 = 0.5;
/// log1p's series converges slowly, so it switches earlier.
const SERIES_RADIUS_LOG1P: f64 = 0.1;

impl ElementaryFunction {
    pub fn new(kind: FunctionKind, var: usize, scale: f64) -> Self {
        Self { kind, var, scale }
    }

    /// `φ` at an ambient state point.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.value(x[self.var])
    }

    pub fn value_at_zero(&self) -> f64 {
        self.kind.taylor_coefficient(0)
    }

    /// `k`-th derivative with respect to the state variable.
    pub fn derivative(&self, k: u32, t: f64) -> f64 {
        math::powi(self.scale, k) * self.kind.derivative(k, self.scale * t)
    }

    /// The minimal monomial `x^γ` in `nvars` ambient variables.
    pub fn gamma(&self, nvars: usize) -> Monomial {
        detect_gamma(self, nvars)
    }

    fn series_radius(&self) -> f64 {
        match self.kind {
            FunctionKind::Log1p => SERIES_RADIUS_LOG1P,
            _ => SERIES_RADIUS,
        }
    }

    fn series_psi(&self, t: f64, deriv: bool) -> f64 {
        let g = self.kind.minimal_order();
        let c = self.scale;
        let mut acc = 0.0;
        for j in 0..SERIES_TERMS {
            let a = math::powi(c, j + g) * self.kind.taylor_coefficient(j + g);
            if a == 0.0 {
                continue;
            }
            if deriv {
                if j > 0 {
                    acc += a * j as f64 * math::powi(t, j - 1);
                }
            } else {
                acc += a * math::powi(t, j);
            }
        }
        acc
    }
}

impl Enclosable for ElementaryFunction {
    fn var(&self) -> usize {
        self.var
    }

    fn gamma_order(&self) -> u32 {
        self.kind.minimal_order()
    }

    fn value(&self, t: f64) -> f64 {
        self.kind.eval(self.scale * t)
    }

    fn psi(&self, t: f64) -> f64 {
        let c = self.scale;
        let ct = c * t;
        if math::abs(ct) < self.series_radius() {
            return self.series_psi(t, false);
        }
        match self.kind {
            FunctionKind::Sin => math::sin(ct) / t,
            FunctionKind::Cos => {
                let h = math::sin(0.5 * ct);
                -2.0 * h * h / (t * t)
            }
            FunctionKind::Exp | FunctionKind::Expm1 => math::expm1(ct) / t,
            FunctionKind::Log1p => math::ln_1p(ct) / t,
        }
    }

    fn psi_derivative(&self, t: f64) -> f64 {
        let c = self.scale;
        let ct = c * t;
        if math::abs(ct) < self.series_radius() {
            return self.series_psi(t, true);
        }
        let t2 = t * t;
        match self.kind {
            FunctionKind::Sin => (ct * math::cos(ct) - math::sin(ct)) / t2,
            FunctionKind::Cos => {
                let h = math::sin(0.5 * ct);
                (-ct * math::sin(ct) + 4.0 * h * h) / (t2 * t)
            }
            FunctionKind::Exp | FunctionKind::Expm1 => (ct * math::exp(ct) - math::expm1(ct)) / t2,
            FunctionKind::Log1p => (ct / (1.0 + ct) - math::ln_1p(ct)) / t2,
        }
    }

    fn taylor_coefficient(&self, k: u32) -> f64 {
        math::powi(self.scale, k) * self.kind.taylor_coefficient(k)
    }

    fn derivative_sup(&self, k: u32, lo: f64, hi: f64) -> Result<f64, ApproxError> {
        let (a, b) = if self.scale >= 0.0 {
            (self.scale * lo, self.scale * hi)
        } else {
            (self.scale * hi, self.scale * lo)
        };
        Ok(math::powi(math::abs(self.scale), k) * self.kind.derivative_sup(k, a, b)?)
    }

    fn label(&self) -> String {
        if self.scale == 1.0 {
            format!("{}(x{})", self.kind, self.var + 1)
        } else {
            format!("{}({:?}*x{})", self.kind, self.scale, self.var + 1)
        }
    }

    fn check_interval(&self, lo: f64, hi: f64) -> Result<(), ApproxError> {
        if self.kind == FunctionKind::Log1p {
            let m = (self.scale * lo).min(self.scale * hi);
            if 1.0 + m <= 0.0 {
                return Err(ApproxError::OutOfDomain(self.label()));
            }
        }
        Ok(())
    }
}

/// A univariate polynomial posing as an enclosable function. Its `ψ` is a
/// polynomial, so interpolation of high enough degree reproduces it exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialFunction {
    pub var: usize,
    /// Coefficients in increasing degree.
    pub coeffs: Vec<f64>,
}

impl PolynomialFunction {
    pub fn new(var: usize, coeffs: Vec<f64>) -> Self {
        Self { var, coeffs }
    }

    fn tail(&self) -> &[f64] {
        let g = self.gamma_order() as usize;
        self.coeffs.get(g..).unwrap_or(&[])
    }
}

fn horner(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

fn horner_derivative(coeffs: &[f64], t: f64) -> f64 {
    let mut acc = 0.0;
    for (j, c) in coeffs.iter().enumerate().skip(1).rev() {
        acc = acc * t + j as f64 * c;
    }
    acc
}

impl Enclosable for PolynomialFunction {
    fn var(&self) -> usize {
        self.var
    }

    fn gamma_order(&self) -> u32 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .find(|(_, c)| **c != 0.0)
            .map(|(k, _)| k as u32)
            .unwrap_or(1)
    }

    fn value(&self, t: f64) -> f64 {
        horner(&self.coeffs, t)
    }

    fn psi(&self, t: f64) -> f64 {
        horner(self.tail(), t)
    }

    fn psi_derivative(&self, t: f64) -> f64 {
        horner_derivative(self.tail(), t)
    }

    fn taylor_coefficient(&self, k: u32) -> f64 {
        self.coeffs.get(k as usize).copied().unwrap_or(0.0)
    }

    fn derivative_sup(&self, k: u32, lo: f64, hi: f64) -> Result<f64, ApproxError> {
        let m = math::abs(lo).max(math::abs(hi));
        let mut acc = 0.0;
        for (j, c) in self.coeffs.iter().enumerate().skip(k as usize) {
            let falling = (0..k).fold(1.0, |a, i| a * (j as u32 - i) as f64);
            acc += math::abs(*c) * falling * math::powi(m, j as u32 - k);
        }
        Ok(acc)
    }

    fn label(&self) -> String {
        format!("poly(x{})", self.var + 1)
    }
}

/// The minimal monomial of `f`, placed on its argument variable.
pub fn detect_gamma<F: Enclosable + ?Sized>(f: &F, nvars: usize) -> Monomial {
    let mut e = vec![0u32; nvars];
    e[f.var()] = f.gamma_order();
    Monomial::new(e)
}

/// Axis-aligned box `[lower, upper]` containing the origin in its interior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Box {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Box {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, ApproxError> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(ApproxError::InvalidBox("bounds must have equal, nonzero length".into()));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && *l < 0.0 && 0.0 < *u) {
                return Err(ApproxError::InvalidBox(format!(
                    "side {} is [{}, {}]; it must be finite and contain 0 strictly",
                    i + 1,
                    l,
                    u
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[−r_i, r_i]` on every axis.
    pub fn symmetric(radii: &[f64]) -> Result<Self, ApproxError> {
        Self::new(radii.iter().map(|r| -r).collect(), radii.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn interval(&self, i: usize) -> (f64, f64) {
        (self.lower[i], self.upper[i])
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// All `2ⁿ` corners.
    pub fn corners(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..(1usize << n))
            .map(|mask| {
                (0..n)
                    .map(|i| {
                        if mask >> i & 1 == 1 {
                            self.upper[i]
                        } else {
                            self.lower[i]
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// The box scaled about the origin by `factor`.
    pub fn scaled(&self, factor: f64) -> Box {
        Box {
            lower: self.lower.iter().map(|v| v * factor).collect(),
            upper: self.upper.iter().map(|v| v * factor).collect(),
        }
    }

    /// Point at relative position `w ∈ [0,1]ⁿ`.
    pub fn lerp(&self, w: &[f64]) -> Vec<f64> {
        w.iter()
            .enumerate()
            .map(|(i, t)| self.lower[i] + t * (self.upper[i] - self.lower[i]))
            .collect()
    }

    /// The quadratic constraints `(x_i − l_i)(u_i − x_i) ≥ 0` describing the box.
    pub fn constraint_polys(&self) -> Vec<Polynomial> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let (l, u) = self.interval(i);
                let lin = Polynomial::var(n, i);
                let a = &lin - &Polynomial::constant(n, l);
                let b = &Polynomial::constant(n, u) - &lin;
                &a * &b
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshKind {
    Rectangular,
    Simplicial,
}

/// Placement of 1D nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NodeLayout {
    #[default]
    Equispaced,
    /// Chebyshev–Lobatto points; the spacing is then the largest gap.
    Chebyshev,
}

/// Interpolation nodes with the cells they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<Vec<f64>>,
    /// Largest cell diameter.
    pub spacing: f64,
    pub cells: Vec<Vec<usize>>,
    pub kind: MeshKind,
}

impl Mesh {
    pub fn dim(&self) -> usize {
        self.nodes.first().map_or(0, |n| n.len())
    }
}

/// Equispaced mesh with `k` nodes on `domain`.
///
/// In 1D the cells are consecutive intervals. In 2D `k` must be the size of a
/// full polynomial basis; the nodes are the box corners plus points chosen
/// greedily to keep the Vandermonde matrix full rank, and the cells are a
/// Delaunay triangulation of them.
pub fn build_mesh(domain: &Box, k: usize, kind: MeshKind) -> Result<Mesh, ApproxError> {
    build_mesh_with(domain, k, kind, NodeLayout::Equispaced)
}

pub fn build_mesh_with(domain: &Box, k: usize, kind: MeshKind, layout: NodeLayout) -> Result<Mesh, ApproxError> {
    match domain.dim() {
        1 => {
            if k < 2 {
                return Err(ApproxError::TooFewNodes { min: 2, got: k });
            }
            let (a, b) = domain.interval(0);
            let nodes: Vec<f64> = (0..k)
                .map(|i| {
                    let w = i as f64 / (k - 1) as f64;
                    match layout {
                        NodeLayout::Equispaced => a + (b - a) * w,
                        NodeLayout::Chebyshev => a + (b - a) * 0.5 * (1.0 - math::cos(PI * w)),
                    }
                })
                .collect();
            let spacing = nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
            Ok(Mesh {
                nodes: nodes.iter().map(|v| vec![*v]).collect(),
                spacing,
                cells: (0..k - 1).map(|i| vec![i, i + 1]).collect(),
                kind: MeshKind::Rectangular,
            })
        }
        2 => build_mesh_2d(domain, k, kind),
        n => Err(ApproxError::UnsupportedDimension(n)),
    }
}

fn basis_degree_for(n: usize, k: usize) -> Option<u32> {
    (0..64u32).find(|&e| math::binomial(n + e as usize, n) == k)
}

fn build_mesh_2d(domain: &Box, k: usize, _kind: MeshKind) -> Result<Mesh, ApproxError> {
    if k < 4 {
        return Err(ApproxError::TooFewNodes { min: 4, got: k });
    }
    let e = basis_degree_for(2, k).ok_or(ApproxError::NodeCount { got: k, dim: 2 })?;
    let basis = monomial_basis(2, e);
    let row = |p: &[f64]| -> Vec<f64> { basis.iter().map(|m| m.eval(p)).collect() };

    let mut nodes: Vec<Vec<f64>> = domain.corners();
    // orthonormal rows spanned so far (Gram–Schmidt)
    let mut span: Vec<Vec<f64>> = Vec::new();
    let absorb = |r: Vec<f64>, span: &mut Vec<Vec<f64>>| -> f64 {
        let mut v = r;
        for q in span.iter() {
            let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= d * qi;
            }
        }
        let nrm = math::norm2(&v);
        if nrm > 1e-9 {
            span.push(v.iter().map(|x| x / nrm).collect());
        }
        nrm
    };
    for c in &nodes {
        absorb(row(c), &mut span);
    }
    let g = 2 * (e as usize + 1);
    let candidates: Vec<Vec<f64>> = (0..=g)
        .flat_map(|i| (0..=g).map(move |j| (i, j)))
        .map(|(i, j)| domain.lerp(&[i as f64 / g as f64, j as f64 / g as f64]))
        .collect();
    while nodes.len() < k {
        let mut best: Option<(f64, usize)> = None;
        for (ci, c) in candidates.iter().enumerate() {
            if nodes.iter().any(|n| n == c) {
                continue;
            }
            let mut v = row(c);
            for q in &span {
                let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= d * qi;
                }
            }
            let r = math::norm2(&v);
            if best.is_none_or(|(br, _)| r > br + 1e-12) {
                best = Some((r, ci));
            }
        }
        match best {
            Some((r, ci)) if r > 1e-9 => {
                absorb(row(&candidates[ci]), &mut span);
                nodes.push(candidates[ci].clone());
            }
            _ => return Err(ApproxError::NotUnisolvent(e)),
        }
    }
    let cells = delaunay(&nodes);
    let spacing = cells
        .iter()
        .flat_map(|t| {
            let pts: Vec<&Vec<f64>> = t.iter().map(|i| &nodes[*i]).collect();
            [(0, 1), (1, 2), (0, 2)]
                .into_iter()
                .map(move |(a, b)| dist(pts[a], pts[b]))
        })
        .fold(0.0, f64::max);
    Ok(Mesh {
        nodes,
        spacing,
        cells,
        kind: MeshKind::Simplicial,
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    math::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Bowyer–Watson triangulation of planar points.
fn delaunay(pts: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = pts.len();
    let (mut minx, mut miny, mut maxx, mut maxy) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in pts {
        minx = minx.min(p[0]);
        maxx = maxx.max(p[0]);
        miny = miny.min(p[1]);
        maxy = maxy.max(p[1]);
    }
    let d = (maxx - minx).max(maxy - miny) * 20.0;
    let (cx, cy) = (0.5 * (minx + maxx), 0.5 * (miny + maxy));
    let mut all: Vec<[f64; 2]> = pts.iter().map(|p| [p[0], p[1]]).collect();
    all.push([cx - d, cy - d]);
    all.push([cx + d, cy - d]);
    all.push([cx, cy + d]);
    let mut tris: Vec<[usize; 3]> = vec![[n, n + 1, n + 2]];
    for i in 0..n {
        let p = all[i];
        let (bad, keep): (Vec<[usize; 3]>, Vec<[usize; 3]>) = tris.iter().partition(|t| in_circumcircle(&all, t, p));
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for t in &bad {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                let shared = bad.iter().filter(|o| *o != t).any(|o| o.contains(&a) && o.contains(&b));
                if !shared {
                    edges.push((a, b));
                }
            }
        }
        tris = keep;
        for (a, b) in edges {
            tris.push([a, b, i]);
        }
    }
    tris.into_iter()
        .filter(|t| t.iter().all(|v| *v < n))
        .filter(|t| math::abs(orient(&all, t)) > 1e-14)
        .map(|t| t.to_vec())
        .collect()
}

fn orient(p: &[[f64; 2]], t: &[usize; 3]) -> f64 {
    let (a, b, c) = (p[t[0]], p[t[1]], p[t[2]]);
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn in_circumcircle(p: &[[f64; 2]], t: &[usize; 3], q: [f64; 2]) -> bool {
    let (mut a, mut b, c) = (p[t[0]], p[t[1]], p[t[2]]);
    if orient(p, t) < 0.0 {
        core::mem::swap(&mut a, &mut b);
    }
    let m = |u: [f64; 2]| -> [f64; 3] {
        let dx = u[0] - q[0];
        let dy = u[1] - q[1];
        [dx, dy, dx * dx + dy * dy]
    };
    let (r0, r1, r2) = (m(a), m(b), m(c));
    let det = r0[0] * (r1[1] * r2[2] - r2[1] * r1[2]) - r0[1] * (r1[0] * r2[2] - r2[0] * r1[2])
        + r0[2] * (r1[0] * r2[1] - r2[0] * r1[1]);
    det > 1e-12
}

/// Vandermonde matrix of `basis` at `nodes`.
fn vandermonde(nodes: &[Vec<f64>], basis: &[Monomial]) -> Mat {
    Mat::from_fn(nodes.len(), basis.len(), |i, j| basis[j].eval(&nodes[i]))
}

/// Lagrange interpolant of degree `degree` through `(node, value)` pairs, in
/// the mesh's own variables.
pub fn interpolate(psi_values: &[f64], mesh: &Mesh, degree: u32) -> Result<Polynomial, ApproxError> {
    let n = mesh.dim();
    let basis = monomial_basis(n, degree);
    if basis.len() != mesh.nodes.len() || psi_values.len() != mesh.nodes.len() {
        return Err(ApproxError::NodeCount {
            got: mesh.nodes.len(),
            dim: n,
        });
    }
    let v = vandermonde(&mesh.nodes, &basis);
    if linalg::rank(&v, 1e-13) < basis.len() {
        return Err(ApproxError::NotUnisolvent(degree));
    }
    let rhs = Vector::from_column_slice(psi_values);
    let sol = linalg::solve_square(&v, &rhs).ok_or(ApproxError::NotUnisolvent(degree))?;
    Polynomial::from_terms(n, basis.into_iter().zip(sol.iter().copied()))
        .map_err(|_| ApproxError::NotUnisolvent(degree))
}

/// Result of the gradient sup estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaEstimate {
    /// Safety factor times the sampled maximum.
    pub lambda: f64,
    pub raw_max: f64,
    pub grid_points: usize,
    pub safety_factor: f64,
    /// False when six doublings did not settle the maximum to 1%.
    pub converged: bool,
}

pub const LAMBDA_SAFETY: f64 = 1.1;
const LAMBDA_START: usize = 1024;
const LAMBDA_DOUBLINGS: usize = 6;

/// Sup of `|dr(t)|` over `[lo, hi]` by refining a uniform grid until the max
/// moves by less than 1%, times [`LAMBDA_SAFETY`].
pub fn estimate_lambda<F: Fn(f64) -> f64>(dr: F, lo: f64, hi: f64) -> LambdaEstimate {
    let sample = |cells: usize| -> f64 {
        (0..=cells)
            .map(|i| math::abs(dr(lo + (hi - lo) * i as f64 / cells as f64)))
            .fold(0.0, f64::max)
    };
    let mut cells = LAMBDA_START;
    let mut prev = sample(cells);
    let mut converged = false;
    for _ in 0..LAMBDA_DOUBLINGS {
        cells *= 2;
        let cur = sample(cells);
        let change = math::abs(cur - prev);
        prev = prev.max(cur);
        if change <= 0.01 * prev || prev == 0.0 {
            converged = true;
            break;
        }
    }
    LambdaEstimate {
        lambda: LAMBDA_SAFETY * prev,
        raw_max: prev,
        grid_points: cells + 1,
        safety_factor: LAMBDA_SAFETY,
        converged,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnclosureMethod {
    Interpolation,
    Taylor,
}

/// `φ(x) = p(x) + u·x^γ`, `|u| ≤ bound`, valid on `domain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Enclosure {
    pub function: String,
    pub var: usize,
    /// `φ(0) + p̃(x)·x^γ` in the ambient variables.
    pub p: Polynomial,
    pub p_tilde: Polynomial,
    pub gamma: Monomial,
    pub bound: f64,
    pub domain: Box,
    pub degree: u32,
    pub lambda: f64,
    pub spacing: f64,
    pub method: EnclosureMethod,
    pub grid_points: usize,
    pub safety_factor: f64,
    pub lambda_converged: bool,
    /// Part of `bound` that pays for coefficients rounded away as negligible.
    pub pruned: f64,
}

impl Enclosure {
    /// Largest `|φ(x) − p(x)| − b·|x^γ|` over `samples` equispaced points of
    /// the argument interval (positive means the enclosure is violated).
    pub fn max_violation<F: Enclosable + ?Sized>(&self, f: &F, samples: usize) -> f64 {
        let (lo, hi) = self.domain.interval(self.var);
        let n = self.domain.dim();
        let mut x = vec![0.0; n];
        let mut worst = f64::NEG_INFINITY;
        for i in 0..samples {
            let t = lo + (hi - lo) * i as f64 / (samples.max(2) - 1) as f64;
            x[self.var] = t;
            let err = math::abs(f.value(t) - self.p.eval(&x));
            let allowed = self.bound * math::abs(self.gamma.eval(&x));
            worst = worst.max(err - allowed - 1e-15 * (1.0 + math::abs(f.value(t))));
        }
        worst
    }

    /// Coefficients of `p` as a function of its argument variable, low to high.
    pub fn univariate_coefficients(&self) -> Vec<f64> {
        let n = self.domain.dim();
        let d = self.p.degree() as usize;
        (0..=d)
            .map(|k| {
                let mut e = vec![0u32; n];
                e[self.var] = k as u32;
                self.p.coeff(&Monomial::new(e))
            })
            .collect()
    }
}

/// Drops coefficients of `p̃` that are negligible on `[−m, m]` and returns the
/// remaining coefficients with the sound bound increase they cost.
fn prune(coeffs: &mut [f64], m: f64) -> f64 {
    let weight = |j: usize, c: f64| math::abs(c) * math::powi(m, j as u32);
    let top = coeffs
        .iter()
        .enumerate()
        .map(|(j, c)| weight(j, *c))
        .fold(0.0, f64::max);
    let mut extra = 0.0;
    for (j, c) in coeffs.iter_mut().enumerate() {
        let w = weight(j, *c);
        if *c != 0.0 && w <= 1e-14 * top {
            extra += w;
            *c = 0.0;
        }
    }
    extra
}

fn assemble<F: Enclosable + ?Sized>(f: &F, domain: &Box, coeffs: &[f64]) -> (Polynomial, Polynomial, Monomial) {
    let n = domain.dim();
    let v = f.var();
    let g = f.gamma_order();
    let gamma = detect_gamma(f, n);
    let p_tilde = Polynomial::univariate(n, v, coeffs);
    let mut full = vec![0.0; coeffs.len() + g as usize];
    full[0] = f.taylor_coefficient(0);
    for (j, c) in coeffs.iter().enumerate() {
        full[j + g as usize] = *c;
    }
    let p = Polynomial::univariate(n, v, &full);
    (p, p_tilde, gamma)
}

fn check_target<F: Enclosable + ?Sized>(f: &F, domain: &Box) -> Result<(f64, f64), ApproxError> {
    if f.var() >= domain.dim() {
        return Err(ApproxError::VariableOutOfRange {
            index: f.var(),
            nvars: domain.dim(),
        });
    }
    let (lo, hi) = domain.interval(f.var());
    f.check_interval(lo, hi)?;
    Ok((lo, hi))
}

/// Interpolation enclosure of `f` on `domain` with total degree `d > |γ|`.
pub fn enclose<F: Enclosable + ?Sized>(f: &F, domain: &Box, d: u32) -> Result<Enclosure, ApproxError> {
    let g = f.gamma_order();
    if d <= g {
        return Err(ApproxError::DegreeTooLow { degree: d, gamma: g });
    }
    let (lo, hi) = check_target(f, domain)?;
    let e = d - g;
    let k = e as usize + 1;
    let line = Box::new(vec![lo], vec![hi])?;
    let mesh = build_mesh(&line, k, MeshKind::Rectangular)?;
    let values: Vec<f64> = mesh.nodes.iter().map(|x| f.psi(x[0])).collect();
    let pt = interpolate(&values, &mesh, e)?;
    let mut coeffs: Vec<f64> = (0..=e).map(|j| pt.coeff(&Monomial::new(vec![j]))).collect();
    let m = math::abs(lo).max(math::abs(hi));

    let est = estimate_lambda(|t| f.psi_derivative(t) - horner_derivative(&coeffs, t), lo, hi);
    // effective dimension of a univariate argument
    let n_eff = 1.0;
    let base = n_eff / (n_eff + 1.0) * est.lambda * mesh.spacing;
    let pruned = prune(&mut coeffs, m);
    let (p, p_tilde, gamma) = assemble(f, domain, &coeffs);
    Ok(Enclosure {
        function: f.label(),
        var: f.var(),
        p,
        p_tilde,
        gamma,
        bound: base + pruned,
        domain: domain.clone(),
        degree: d,
        lambda: est.lambda,
        spacing: mesh.spacing,
        method: EnclosureMethod::Interpolation,
        grid_points: est.grid_points,
        safety_factor: est.safety_factor,
        lambda_converged: est.converged,
        pruned,
    })
}

/// Taylor–Lagrange enclosure: the degree `d − 1` Taylor polynomial at 0 with
/// remainder `sup|φ⁽ᵈ⁾|/d! · max|x|^{d−|γ|}` folded onto `x^γ`.
pub fn taylor_enclose<F: Enclosable + ?Sized>(f: &F, domain: &Box, d: u32) -> Result<Enclosure, ApproxError> {
    let g = f.gamma_order();
    if d < g {
        return Err(ApproxError::DegreeTooLow { degree: d, gamma: g });
    }
    let (lo, hi) = check_target(f, domain)?;
    let m = math::abs(lo).max(math::abs(hi));
    let mut coeffs: Vec<f64> = (g..d).map(|k| f.taylor_coefficient(k)).collect();
    let sup = f.derivative_sup(d, lo, hi)?;
    let base = sup / math::factorial(d) * math::powi(m, d - g);
    let pruned = prune(&mut coeffs, m);
    let (p, p_tilde, gamma) = assemble(f, domain, &coeffs);
    Ok(Enclosure {
        function: f.label(),
        var: f.var(),
        p,
        p_tilde,
        gamma,
        bound: base + pruned,
        domain: domain.clone(),
        degree: d,
        lambda: sup,
        spacing: 0.0,
        method: EnclosureMethod::Taylor,
        grid_points: 0,
        safety_factor: 1.0,
        lambda_converged: true,
        pruned,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(a: f64, b: f64) -> Box {
        Box::new(vec![a], vec![b]).unwrap()
    }

    #[test]
    fn catalog_gamma() {
        let cases = [
            (FunctionKind::Cos, vec![2, 0]),
            (FunctionKind::Sin, vec![1, 0]),
            (FunctionKind::Exp, vec![1, 0]),
        ];
        for (k, g) in cases {
            let f = ElementaryFunction::new(k, 0, 1.0);
            assert_eq!(detect_gamma(&f, 2), Monomial::new(g));
        }
    }

    #[test]
    fn catalog_consistent_with_series() {
        for kind in FunctionKind::ALL {
            let f = ElementaryFunction::new(kind, 0, 0.7);
            assert!((f.value(0.0) - f.taylor_coefficient(0)).abs() < 1e-15);
            for k in 1..6 {
                let expected = f.taylor_coefficient(k) * math::factorial(k);
                assert!((f.derivative(k, 0.0) - expected).abs() < 1e-12, "{kind} {k}");
            }
            let first = (1..10).find(|k| f.taylor_coefficient(*k) != 0.0).unwrap();
            assert_eq!(first, kind.minimal_order());
        }
    }

    #[test]
    fn psi_is_smooth_across_series_switch() {
        for kind in FunctionKind::ALL {
            let c = if kind == FunctionKind::Log1p { 0.7 } else { 1.3 };
            let f = ElementaryFunction::new(kind, 0, c);
            // just past the switch the closed forms are in use
            let t = f.series_radius() / c * 1.01;
            assert!((f.psi(t) - f.series_psi(t, false)).abs() < 1e-13, "{kind}");
            assert!((f.psi_derivative(t) - f.series_psi(t, true)).abs() < 1e-12, "{kind}");
            let h = 1e-5;
            for &x in &[-0.9, -0.2, 0.0, 0.3, 0.8] {
                let fd = (f.psi(x + h) - f.psi(x - h)) / (2.0 * h);
                assert!((fd - f.psi_derivative(x)).abs() < 1e-7, "{kind} at {x}");
            }
        }
    }

    #[test]
    fn mesh_1d_spacing() {
        let m = build_mesh(&line(-1.2, 1.2), 5, MeshKind::Rectangular).unwrap();
        let nodes: Vec<f64> = m.nodes.iter().map(|v| v[0]).collect();
        for (a, b) in nodes.iter().zip([-1.2, -0.6, 0.0, 0.6, 1.2]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((m.spacing - 0.6).abs() < 1e-15);
        assert_eq!(m.cells.len(), 4);
        let m = build_mesh(&line(-0.84, 0.84), 7, MeshKind::Rectangular).unwrap();
        assert!((m.spacing - 0.28).abs() < 1e-15);
    }

    #[test]
    fn mesh_rejects_bad_requests() {
        assert!(build_mesh(&line(-1.0, 1.0), 1, MeshKind::Rectangular).is_err());
        assert!(Box::new(vec![0.5], vec![1.0]).is_err());
        assert!(Box::new(vec![1.0], vec![-1.0]).is_err());
        let b3 = Box::symmetric(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(
            build_mesh(&b3, 10, MeshKind::Simplicial),
            Err(ApproxError::UnsupportedDimension(3))
        );
    }

    #[test]
    fn mesh_2d_unisolvent() {
        let sq = Box::symmetric(&[1.0, 1.0]).unwrap();
        for k in [6, 10, 15] {
            let m = build_mesh(&sq, k, MeshKind::Rectangular).unwrap();
            assert_eq!(m.kind, MeshKind::Simplicial);
            assert_eq!(m.nodes.len(), k);
            assert!(m.cells.iter().all(|c| c.len() == 3));
            assert!(m.nodes.iter().all(|p| sq.contains(p)));
            let e = basis_degree_for(2, k).unwrap();
            let v = vandermonde(&m.nodes, &monomial_basis(2, e));
            assert_eq!(linalg::rank(&v, 1e-10), k);
            // cells tile the square
            let area: f64 = m
                .cells
                .iter()
                .map(|c| {
                    let p: Vec<[f64; 2]> = m.nodes.iter().map(|q| [q[0], q[1]]).collect();
                    0.5 * orient(&p, &[c[0], c[1], c[2]]).abs()
                })
                .sum();
            assert!((area - 4.0).abs() < 1e-9, "area {area}");
            assert!(m.spacing > 0.0 && m.spacing <= 8f64.sqrt() + 1e-12);
        }
        assert!(build_mesh(&sq, 7, MeshKind::Simplicial).is_err());
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        let m = build_mesh(&line(-1.0, 1.0), 3, MeshKind::Rectangular).unwrap();
        let vals: Vec<f64> = m.nodes.iter().map(|x| x[0] * x[0]).collect();
        let p = interpolate(&vals, &m, 2).unwrap();
        assert!(p.max_coeff_diff(&Polynomial::parse("x1^2", 1).unwrap()) < 1e-12);
        let p = interpolate(&[1.0, 1.0, 1.0], &m, 2).unwrap();
        assert!(p.max_coeff_diff(&Polynomial::constant(1, 1.0)) < 1e-12);
        assert!(interpolate(&[1.0, 1.0], &m, 2).is_err());
    }

    #[test]
    fn lambda_of_exact_residual() {
        let est = estimate_lambda(|_| 0.0, -1.0, 1.0);
        assert!(est.lambda <= 1e-10);
    }

    #[test]
    fn enclosure_degree_guard() {
        let f = ElementaryFunction::new(FunctionKind::Cos, 0, 1.0);
        assert!(matches!(
            enclose(&f, &line(-1.0, 1.0), 2),
            Err(ApproxError::DegreeTooLow { .. })
        ));
        assert!(taylor_enclose(&f, &line(-1.0, 1.0), 1).is_err());
    }

    #[test]
    fn taylor_cos_degree_two() {
        let f = ElementaryFunction::new(FunctionKind::Cos, 0, 1.0);
        let e = taylor_enclose(&f, &line(-1.2, 1.2), 2).unwrap();
        assert_eq!(e.p, Polynomial::constant(1, 1.0));
        assert!((e.bound - 0.5).abs() < 1e-15);
    }

    #[test]
    fn log1p_domain_checked() {
        let f = ElementaryFunction::new(FunctionKind::Log1p, 0, 1.0);
        assert!(matches!(
            enclose(&f, &line(-1.5, 1.0), 4),
            Err(ApproxError::OutOfDomain(_))
        ));
        let e = enclose(&f, &line(-0.5, 0.5), 6).unwrap();
        assert!(e.max_violation(&f, 10_000) <= 0.0);
    }

    #[test]
    fn derivative_sup_of_trig() {
        // sin'' = −sin on [0.1, 0.2]: peak at the right end
        let s = FunctionKind::Sin.derivative_sup(2, 0.1, 0.2).unwrap();
        assert!((s - 0.2f64.sin()).abs() < 1e-15);
        assert_eq!(FunctionKind::Cos.derivative_sup(1, 1.0, 2.0).unwrap(), 1.0);
        assert_eq!(FunctionKind::Cos.derivative_sup(6, -1.2, 1.2).unwrap(), 1.0);
    }
}
