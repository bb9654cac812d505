//! Enclosure substitution, vertex enumeration, and the three Lyapunov
//! workflows: fixed-`V` level bisection, numeric upper bound, and the
//! alternating `V`/multiplier search.
//!
//! Polynomials of a system live in `n + m` variables: the states
//! `x_1..x_n` first, then the parameters `θ_1..θ_m`.

mod certificate;
mod fixed;
mod relax;
mod search;
mod upper;


use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::approx::{enclose, ApproxError, Box, ElementaryFunction, Enclosable, Enclosure};
use crate::boundary;
use crate::math;
use crate::poly::{Monomial, PolyError, PolyVector, Polynomial};
use crate::sdp::SdpError;

pub use certificate::{check_conditions, Check, ConditionReport, DoaCertificate, Identity, IdentityKind};
pub use fixed::{certify_at_level, fixed_v_lower, FixedVReport, LevelProbe};
pub use search::{search_v, SearchIteration, SearchOptions, SearchReport};
pub use upper::{upper_bound, UpperBoundReport};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CertifyError {
    #[error("equation {equation} does not vanish at the origin for θ = {theta:?} (value {value:e})")]
    NotEquilibrium {
        equation: usize,
        theta: Vec<f64>,
        value: f64,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("enclosure of {function} failed: {source}")]
    Enclosure {
        function: String,
        #[source]
        source: ApproxError,
    },
    #[error("enclosure of {0} does not contain the true dynamics at a sampled point")]
    Inclusion(String),
    #[error("θ enters equation {0} non-affinely; vertex enumeration is unsound, use the S-procedure mode")]
    NonAffineTheta(usize),
    #[error("invalid relaxation parameters: {0}")]
    Params(String),
    #[error("invalid shape region: {0}")]
    Shape(String),
    #[error("initialization failed: {0}")]
    Initialization(String),
    #[error("V is not a valid Lyapunov candidate: {0}")]
    NotPositive(String),
    #[error("no upper bound found ≤ {0}")]
    NoUpperBound(f64),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// `coeff(x, θ) · function(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: Polynomial,
    pub function: ElementaryFunction,
}

/// `f_i = poly(x, θ) + Σ_j coeff_j(x, θ) · φ_j(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equation {
    pub poly: Polynomial,
    pub terms: Vec<Term>,
}

/// Interval box for `θ`, optionally with a polynomial description
/// `ψ_k(θ) ≥ 0` used by the S-procedure mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ThetaDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Polynomials in the full `n + m` variables (only `θ` may occur).
    pub description: Vec<Polynomial>,
}

impl ThetaDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, CertifyError> {
        if lower.len() != upper.len()
            || lower
                .iter()
                .zip(&upper)
                .any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite())
        {
            return Err(CertifyError::Dimension(
                "θ bounds must be finite with lower ≤ upper".into(),
            ));
        }
        Ok(Self {
            lower,
            upper,
            description: Vec::new(),
        })
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    /// Distinct corners of the box (degenerate sides collapse).
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = vec![Vec::new()];
        for (l, u) in self.lower.iter().zip(&self.upper) {
            let sides: Vec<f64> = if l == u { vec![*l] } else { vec![*l, *u] };
            out = out
                .into_iter()
                .flat_map(|v| {
                    sides.iter().map(move |s| {
                        let mut w = v.clone();
                        w.push(*s);
                        w
                    })
                })
                .collect();
        }
        out
    }

    /// `ψ_k(θ) ≥ 0` in `n + m` variables: the recorded description, or the
    /// quadratic side constraints `(θ_j − l_j)(u_j − θ_j)` of the box.
    pub fn constraint_polys(&self, n: usize) -> Vec<Polynomial> {
        if !self.description.is_empty() {
            return self.description.clone();
        }
        let nv = n + self.dim();
        (0..self.dim())
            .filter(|&j| self.lower[j] < self.upper[j])
            .map(|j| {
                let t = Polynomial::var(nv, n + j);
                let a = &t - &Polynomial::constant(nv, self.lower[j]);
                let b = &Polynomial::constant(nv, self.upper[j]) - &t;
                &a * &b
            })
            .collect()
    }

    pub(crate) fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| l + (u - l) * rng.gen::<f64>())
            .collect()
    }
}

/// Tolerance of the equilibrium check `f(0, θ) = 0`.
const EQUILIBRIUM_TOL: f64 = 1e-10;

/// A non-polynomial system `ẋ = f(x, θ)` on the working box `Ψ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemDef {
    nvars: usize,
    equations: Vec<Equation>,
    theta: ThetaDomain,
    domain: Box,
}

impl SystemDef {
    pub fn new(equations: Vec<Equation>, theta: ThetaDomain, domain: Box) -> Result<Self, CertifyError> {
        let n = equations.len();
        let nv = n + theta.dim();
        if domain.dim() != n {
            return Err(CertifyError::Dimension(format!(
                "{} equations but a {}-dimensional box",
                n,
                domain.dim()
            )));
        }
        for (i, eq) in equations.iter().enumerate() {
            let bad_poly = eq.poly.nvars() != nv || eq.terms.iter().any(|t| t.coeff.nvars() != nv);
            if bad_poly {
                return Err(CertifyError::Dimension(format!(
                    "equation {} is not over {} variables",
                    i + 1,
                    nv
                )));
            }
            if let Some(t) = eq.terms.iter().find(|t| t.function.var >= n) {
                return Err(CertifyError::Dimension(format!(
                    "{} takes variable {} of {}",
                    t.function.label(),
                    t.function.var + 1,
                    n
                )));
            }
        }
        if theta
            .description
            .iter()
            .any(|p| p.nvars() != nv || p.degree_in(0..n) > 0)
        {
            return Err(CertifyError::Dimension(
                "θ description must be polynomials in θ only".into(),
            ));
        }
        let sys = Self {
            nvars: n,
            equations,
            theta,
            domain,
        };
        let zero = vec![0.0; n];
        for th in sys.theta.vertices() {
            for (i, v) in sys.eval(&zero, &th).iter().enumerate() {
                if !(math::abs(*v) <= EQUILIBRIUM_TOL) {
                    return Err(CertifyError::NotEquilibrium {
                        equation: i + 1,
                        theta: th,
                        value: *v,
                    });
                }
            }
        }
        Ok(sys)
    }

    /// A polynomial system without transcendental terms or parameters.
    pub fn polynomial(field: Vec<Polynomial>, domain: Box) -> Result<Self, CertifyError> {
        let eqs = field
            .into_iter()
            .map(|p| Equation {
                poly: p,
                terms: Vec::new(),
            })
            .collect();
        Self::new(eqs, ThetaDomain::none(), domain)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn ntheta(&self) -> usize {
        self.theta.dim()
    }

    pub fn equations(&self) -> &[Equation] {
        &self.equations
    }

    pub fn theta(&self) -> &ThetaDomain {
        &self.theta
    }

    pub fn domain(&self) -> &Box {
        &self.domain
    }

    /// The distinct transcendental functions in order of first appearance.
    pub fn functions(&self) -> Vec<ElementaryFunction> {
        let mut out: Vec<ElementaryFunction> = Vec::new();
        for t in self.equations.iter().flat_map(|e| &e.terms) {
            if !out.contains(&t.function) {
                out.push(t.function);
            }
        }
        out
    }

    /// `f(x, θ)`.
    pub fn eval(&self, x: &[f64], theta: &[f64]) -> Vec<f64> {
        let z = joined(x, theta);
        self.equations
            .iter()
            .map(|eq| {
                eq.poly.eval(&z)
                    + eq.terms
                        .iter()
                        .map(|t| t.coeff.eval(&z) * t.function.eval(x))
                        .sum::<f64>()
            })
            .collect()
    }

    /// Jacobian `∂f/∂x` at the origin for fixed `θ`.
    pub fn jacobian_at_origin(&self, theta: &[f64]) -> Vec<Vec<f64>> {
        let n = self.nvars;
        let z = joined(&vec![0.0; n], theta);
        self.equations
            .iter()
            .map(|eq| {
                (0..n)
                    .map(|k| {
                        let mut d = eq.poly.partial(k).map(|p| p.eval(&z)).unwrap_or(0.0);
                        for t in &eq.terms {
                            let dc = t.coeff.partial(k).map(|p| p.eval(&z)).unwrap_or(0.0);
                            d += dc * t.function.value_at_zero();
                            if t.function.var == k {
                                d += t.coeff.eval(&z) * t.function.derivative(1, 0.0);
                            }
                        }
                        d
                    })
                    .collect()
            })
            .collect()
    }
}

pub(crate) fn joined(x: &[f64], theta: &[f64]) -> Vec<f64> {
    let mut z = x.to_vec();
    z.extend_from_slice(theta);
    z
}

/// One occurrence of an enclosed function: `coeff · (p_k + u_k·x^γ_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertainTerm {
    pub equation: usize,
    pub coeff: Polynomial,
    /// Index into the enclosures, which is also the index of `u`.
    pub uncertainty: usize,
}

/// `f̂_i = nominal_i + Σ coeff·u_k·x^γ_k` with `|u_k| ≤ b_k`, where the
/// nominal part already contains every `coeff·p_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertainPolySystem {
    nvars: usize,
    pub nominal: Vec<Polynomial>,
    pub terms: Vec<UncertainTerm>,
    pub enclosures: Vec<Enclosure>,
    pub functions: Vec<ElementaryFunction>,
    pub theta: ThetaDomain,
    pub domain: Box,
}

/// One extreme member of an uncertain system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexSystem {
    pub u: Vec<f64>,
    /// Empty when `θ` is kept symbolic.
    pub theta: Vec<f64>,
    pub field: PolyVector,
}

/// Samples of the enclosure inclusion check run by [`substitute`].
const INCLUSION_SAMPLES: usize = 1000;

/// Replaces every transcendental function by its enclosure of the given
/// degree. `degrees[k]` applies to the `k`-th distinct function (see
/// [`SystemDef::functions`]); a single entry applies to all. Each distinct
/// function carries one uncertainty `u_k`, shared by its occurrences.
pub fn substitute(sys: &SystemDef, degrees: &[u32]) -> Result<UncertainPolySystem, CertifyError> {
    let n = sys.nvars;
    let nv = n + sys.ntheta();
    let functions = sys.functions();
    if !functions.is_empty() && degrees.len() != 1 && degrees.len() != functions.len() {
        return Err(CertifyError::Dimension(format!(
            "{} degrees for {} functions",
            degrees.len(),
            functions.len()
        )));
    }
    let mut enclosures = Vec::with_capacity(functions.len());
    for (k, f) in functions.iter().enumerate() {
        let d = if degrees.len() == 1 { degrees[0] } else { degrees[k] };
        let e = enclose(f, &sys.domain, d).map_err(|source| CertifyError::Enclosure {
            function: f.label(),
            source,
        })?;
        enclosures.push(e);
    }
    let mut nominal = Vec::with_capacity(n);
    let mut terms = Vec::new();
    for (i, eq) in sys.equations.iter().enumerate() {
        let mut p = eq.poly.clone();
        for t in &eq.terms {
            let k = functions.iter().position(|f| *f == t.function).unwrap_or(0);
            p = &p + &(&t.coeff * &enclosures[k].p.extend_vars(nv));
            let gamma = Polynomial::term(enclosures[k].gamma.clone(), 1.0).extend_vars(nv);
            terms.push(UncertainTerm {
                equation: i,
                coeff: &t.coeff * &gamma,
                uncertainty: k,
            });
        }
        nominal.push(p);
    }
    let usys = UncertainPolySystem {
        nvars: n,
        nominal,
        terms,
        enclosures,
        functions,
        theta: sys.theta.clone(),
        domain: sys.domain.clone(),
    };
    check_inclusion(sys, &usys)?;
    Ok(usys)
}

fn check_inclusion(sys: &SystemDef, usys: &UncertainPolySystem) -> Result<(), CertifyError> {
    if usys.terms.is_empty() {
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = sys.nvars;
    for _ in 0..INCLUSION_SAMPLES {
        let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let x = sys.domain.lerp(&w);
        let th = sys.theta.sample(&mut rng);
        let f = sys.eval(&x, &th);
        for (i, (lo, hi)) in usys.hull(&x, &th).into_iter().enumerate() {
            let slack = 1e-9 * (1.0 + math::abs(f[i]));
            if f[i] < lo - slack || f[i] > hi + slack {
                let culprit = usys
                    .terms
                    .iter()
                    .find(|t| t.equation == i)
                    .map(|t| usys.functions[t.uncertainty].label())
                    .unwrap_or_default();
                return Err(CertifyError::Inclusion(culprit));
            }
        }
    }
    Ok(())
}

impl UncertainPolySystem {
    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn ntheta(&self) -> usize {
        self.theta.dim()
    }

    /// The bounds `b_k`.
    pub fn bounds(&self) -> Vec<f64> {
        self.enclosures.iter().map(|e| e.bound).collect()
    }

    /// `f̂(x, θ, u)`.
    pub fn eval(&self, x: &[f64], theta: &[f64], u: &[f64]) -> Vec<f64> {
        let z = joined(x, theta);
        let mut out: Vec<f64> = self.nominal.iter().map(|p| p.eval(&z)).collect();
        for t in &self.terms {
            out[t.equation] += u[t.uncertainty] * t.coeff.eval(&z);
        }
        out
    }

    /// Range of each `f̂_i(x, θ, ·)` over `|u| ≤ b`.
    pub fn hull(&self, x: &[f64], theta: &[f64]) -> Vec<(f64, f64)> {
        let z = joined(x, theta);
        let b = self.bounds();
        let mut out: Vec<(f64, f64)> = self
            .nominal
            .iter()
            .map(|p| {
                let v = p.eval(&z);
                (v, v)
            })
            .collect();
        for t in &self.terms {
            let w = b[t.uncertainty] * math::abs(t.coeff.eval(&z));
            out[t.equation].0 -= w;
            out[t.equation].1 += w;
        }
        out
    }

    fn u_vertices(&self) -> Vec<Vec<f64>> {
        let b = self.bounds();
        (0..(1usize << b.len()))
            .map(|mask| {
                b.iter()
                    .enumerate()
                    .map(|(k, bk)| if mask >> k & 1 == 1 { *bk } else { -*bk })
                    .collect()
            })
            .collect()
    }

    fn field_for(&self, u: &[f64]) -> Vec<Polynomial> {
        let mut f = self.nominal.clone();
        for t in &self.terms {
            f[t.equation] = &f[t.equation] + &t.coeff.scale(u[t.uncertainty]);
        }
        f
    }

    fn fix_theta(&self, field: &[Polynomial], theta: &[f64]) -> Result<PolyVector, CertifyError> {
        let n = self.nvars;
        let assign: Vec<(usize, f64)> = theta.iter().enumerate().map(|(j, v)| (n + j, *v)).collect();
        let comps = field
            .iter()
            .map(|p| p.partial_eval(&assign).truncate_vars(n))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PolyVector::new(comps)?)
    }

    /// The member with `u = 0` at the given `θ`, in `n` variables.
    pub fn nominal_field(&self, theta: &[f64]) -> Result<PolyVector, CertifyError> {
        self.fix_theta(&self.nominal, theta)
    }

    /// Whether every coefficient is affine in `θ`.
    pub fn theta_affine(&self) -> Result<(), CertifyError> {
        let range = self.nvars..self.nvars + self.ntheta();
        for (i, p) in self.nominal.iter().enumerate() {
            if p.degree_in(range.clone()) > 1 {
                return Err(CertifyError::NonAffineTheta(i + 1));
            }
        }
        for t in &self.terms {
            if t.coeff.degree_in(range.clone()) > 1 {
                return Err(CertifyError::NonAffineTheta(t.equation + 1));
            }
        }
        Ok(())
    }

    /// Members with `u` at `{±b}` and `θ` at symbolic values, in `n + m` variables.
    pub fn symbolic_theta_systems(&self) -> Result<Vec<VertexSystem>, CertifyError> {
        self.u_vertices()
            .into_iter()
            .map(|u| {
                Ok(VertexSystem {
                    field: PolyVector::new(self.field_for(&u))?,
                    u,
                    theta: Vec::new(),
                })
            })
            .collect()
    }
}

/// One field per combination of `u_k ∈ {±b_k}` and `θ ∈ vertices(Θ)`.
pub fn vertex_systems(usys: &UncertainPolySystem) -> Result<Vec<VertexSystem>, CertifyError> {
    usys.theta_affine()?;
    let mut out = Vec::new();
    for th in usys.theta.vertices() {
        for u in usys.u_vertices() {
            let field = usys.fix_theta(&usys.field_for(&u), &th)?;
            out.push(VertexSystem {
                u,
                theta: th.clone(),
                field,
            });
        }
    }
    Ok(out)
}

/// How `θ` is handled in the decrease conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaMode {
    /// One decrease condition per vertex of `Θ` (requires affine `θ`).
    #[default]
    Vertices,
    /// `θ` stays symbolic; `ψ(θ) ≥ 0` enters through SOS multipliers.
    SProcedure,
}

/// Margins and multiplier degrees of the SOS relaxation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationParams {
    /// `l_1 = l_2 = ε Σ x_i^m`.
    pub epsilon: f64,
    pub m: u32,
    /// Margin of the box containment `h_k − δ₁ ≥ 0` on `Ω`.
    pub delta1: f64,
    /// Recorded for completeness; strict decrease is carried by `l_2`.
    pub delta2: f64,
    /// Margin of the inclusion `V ≤ 1 − δ₃` on `P_β`.
    pub delta3: f64,
    /// Degree of the level multiplier in the decrease condition; by default
    /// `deg V̇ − deg V` rounded up to even.
    pub multiplier_degree: Option<u32>,
    /// Localizes every decrease condition to the working box.
    pub box_multipliers: bool,
    pub theta_mode: ThetaMode,
}

impl Default for RelaxationParams {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            m: 2,
            delta1: 1e-6,
            delta2: 1e-6,
            delta3: 1e-6,
            multiplier_degree: None,
            box_multipliers: true,
            theta_mode: ThetaMode::Vertices,
        }
    }
}

impl RelaxationParams {
    pub fn validate(&self) -> Result<(), CertifyError> {
        if !(self.epsilon > 0.0) {
            return Err(CertifyError::Params(format!(
                "ε must be positive, got {}",
                self.epsilon
            )));
        }
        if self.m == 0 || self.m % 2 == 1 {
            return Err(CertifyError::Params(format!(
                "m must be even and positive, got {}",
                self.m
            )));
        }
        for (name, d) in [("δ1", self.delta1), ("δ2", self.delta2), ("δ3", self.delta3)] {
            if !(d > 0.0) {
                return Err(CertifyError::Params(format!("{} must be positive, got {}", name, d)));
            }
        }
        if let Some(d) = self.multiplier_degree {
            if d % 2 == 1 {
                return Err(CertifyError::Params(format!(
                    "multiplier degree must be even, got {}",
                    d
                )));
            }
        }
        Ok(())
    }

    /// `ε Σ_{i<n} x_i^m` in `nvars ≥ n` variables.
    pub fn l(&self, n: usize, nvars: usize) -> Polynomial {
        let mut p = Polynomial::zero(nvars);
        for i in 0..n {
            let mut e = vec![0u32; nvars];
            e[i] = self.m;
            p.add_term(Monomial::new(e), self.epsilon);
        }
        p
    }
}

/// `P_β = {x : g(x) ≤ β}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeRegion {
    pub g: Polynomial,
    pub beta: f64,
}

impl ShapeRegion {
    pub fn new(g: Polynomial, beta: f64) -> Result<Self, CertifyError> {
        if g.constant_term() != 0.0 {
            return Err(CertifyError::Shape("g(0) must be 0".into()));
        }
        let n = g.nvars();
        let dirs = boundary::directions(n, 720, 1);
        for r in [1e-3, 1e-1, 1.0] {
            for d in &dirs {
                let x: Vec<f64> = d.iter().map(|v| v * r).collect();
                if !(g.eval(&x) > 0.0) {
                    return Err(CertifyError::Shape(format!("g is not positive at {:?}", x)));
                }
            }
        }
        Ok(Self { g, beta })
    }

    /// `g = Σ x_i²`.
    pub fn ball(n: usize, beta: f64) -> Self {
        let mut g = Polynomial::zero(n);
        for i in 0..n {
            let mut e = vec![0u32; n];
            e[i] = 2;
            g.add_term(Monomial::new(e), 1.0);
        }
        Self { g, beta }
    }
}
