//! The certificate record, its offline re-verification and the structural
//! checks on `V`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::relax::{containment_expr, decrease_expr, effective_degree, inclusion_expr, vdot, Setup};
use super::{RelaxationParams, VertexSystem};
use crate::approx::Box;
use crate::boundary;
use crate::poly::Polynomial;
use crate::sdp::{AffinePoly, GramMatrix, SosProgram, VerificationReport};

/// Which condition an identity certifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum IdentityKind {
    /// `V − l₁ = σ`.
    Positivity,
    /// `−V̇ − l₂ − λ(c − V) − Σ s_k h_k − Σ r_j ψ_j = σ` for one vertex system.
    Decrease { vertex: usize },
    /// `h_k − δ₁ − μ(c − V) = σ` for box side `k`.
    Containment { var: usize },
    /// `c − δ₃ − V − ρ(β − g) = σ`.
    Inclusion,
}

impl IdentityKind {
    pub fn label(&self) -> String {
        match self {
            IdentityKind::Positivity => "positivity".into(),
            IdentityKind::Decrease { vertex } => format!("decrease[{}]", vertex),
            IdentityKind::Containment { var } => format!("containment[{}]", var + 1),
            IdentityKind::Inclusion => "inclusion".into(),
        }
    }
}

/// One polynomial identity with its SOS multipliers and SOS remainder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identity {
    pub kind: IdentityKind,
    pub multipliers: Vec<GramMatrix>,
    pub remainder: GramMatrix,
}

/// `Ω = {V ≤ level}` with everything needed to re-check it offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoaCertificate {
    pub v: Polynomial,
    pub level: f64,
    pub beta: Option<f64>,
    pub shape: Option<Polynomial>,
    pub params: RelaxationParams,
    pub domain: Box,
    pub vertices: Vec<VertexSystem>,
    /// `ψ(θ) ≥ 0` constraints of the S-procedure mode (empty otherwise).
    pub theta_constraints: Vec<Polynomial>,
    pub identities: Vec<Identity>,
    pub report: VerificationReport,
}

impl DoaCertificate {
    pub fn nvars(&self) -> usize {
        self.v.nvars()
    }

    fn setup(&self) -> Setup<'_> {
        Setup {
            n: self.nvars(),
            params: &self.params,
            domain: &self.domain,
            theta_constraints: &self.theta_constraints,
            interior: false,
        }
    }

    /// Rebuilds every identity from `V`, the level, the vertex systems and the
    /// stored Gram matrices, and checks residuals and eigenvalues. Missing
    /// identities count as failures.
    pub fn verify(&self) -> VerificationReport {
        let mut residuals = Vec::new();
        let mut min_eig = f64::INFINITY;
        for id in &self.identities {
            for g in id.multipliers.iter().chain(core::iter::once(&id.remainder)) {
                let e = if g.is_consistent() {
                    g.min_eigenvalue()
                } else {
                    f64::NEG_INFINITY
                };
                min_eig = min_eig.min(e);
            }
            let res = match self.target(id) {
                Some((target, nv)) => (&target - &id.remainder.to_polynomial(nv)).max_abs_coeff(),
                None => f64::INFINITY,
            };
            residuals.push((id.kind.label(), res));
        }
        for kind in self.required() {
            if !self.identities.iter().any(|id| id.kind == kind) {
                residuals.push((format!("missing {}", kind.label()), f64::INFINITY));
            }
        }
        if min_eig == f64::INFINITY {
            min_eig = 0.0;
        }
        VerificationReport::from_parts(residuals, min_eig)
    }

    fn required(&self) -> Vec<IdentityKind> {
        let mut out = alloc::vec![IdentityKind::Positivity];
        out.extend((0..self.vertices.len()).map(|vertex| IdentityKind::Decrease { vertex }));
        out.extend((0..self.nvars()).map(|var| IdentityKind::Containment { var }));
        if self.beta.is_some() {
            out.push(IdentityKind::Inclusion);
        }
        out
    }

    /// The polynomial each identity says is SOS, in the identity's variables.
    fn target(&self, id: &Identity) -> Option<(Polynomial, usize)> {
        let setup = self.setup();
        let n = self.nvars();
        let prog = SosProgram::new(n);
        let fixed = |g: &GramMatrix, nv: usize| AffinePoly::constant(g.to_polynomial(nv));
        match id.kind {
            IdentityKind::Positivity => {
                if !id.multipliers.is_empty() {
                    return None;
                }
                Some((&self.v - &self.params.l(n, n), n))
            }
            IdentityKind::Decrease { vertex } => {
                let vx = self.vertices.get(vertex)?;
                let nv = vx.field.nvars();
                let nbox = if self.params.box_multipliers { n } else { 0 };
                if id.multipliers.len() != 1 + nbox + self.theta_constraints.len() {
                    return None;
                }
                let vd = vdot(&self.v, &vx.field, n).ok()?;
                let boxes: Vec<AffinePoly> = id.multipliers[1..1 + nbox].iter().map(|g| fixed(g, nv)).collect();
                let thetas: Vec<AffinePoly> = id.multipliers[1 + nbox..].iter().map(|g| fixed(g, nv)).collect();
                let e = decrease_expr(
                    &setup,
                    nv,
                    &AffinePoly::constant(self.v.extend_vars(nv)),
                    &AffinePoly::constant(vd),
                    self.level,
                    &fixed(&id.multipliers[0], nv),
                    &boxes,
                    &thetas,
                    &prog,
                )
                .ok()?;
                Some((e.constant_part().clone(), nv))
            }
            IdentityKind::Containment { var } => {
                if var >= n || id.multipliers.len() != 1 {
                    return None;
                }
                let e = containment_expr(
                    &setup,
                    &AffinePoly::constant(self.v.clone()),
                    var,
                    self.level,
                    &fixed(&id.multipliers[0], n),
                    &prog,
                )
                .ok()?;
                Some((e.constant_part().clone(), n))
            }
            IdentityKind::Inclusion => {
                let (beta, g) = (self.beta?, self.shape.as_ref()?);
                if id.multipliers.len() != 1 {
                    return None;
                }
                let e = inclusion_expr(
                    &setup,
                    &AffinePoly::constant(self.v.clone()),
                    g,
                    self.level,
                    &AffinePoly::constant(Polynomial::constant(n, beta)),
                    &fixed(&id.multipliers[0], n),
                    &prog,
                )
                .ok()?;
                Some((e.constant_part().clone(), n))
            }
        }
    }
}

/// Outcome of one structural check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    pub passed: bool,
}

impl ConditionReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Sampled directions for the sphere and level-set checks.
const SAMPLES_2D: usize = 720;
const SAMPLES_ND: usize = 2000;

fn sample_count(n: usize) -> usize {
    if n <= 2 {
        SAMPLES_2D
    } else {
        SAMPLES_ND
    }
}

/// Structural conditions for `{V ≤ level}` to be an invariant subset of the
/// domain of attraction: `V(0) = 0`, all certificates present and valid,
/// bounded level set, and level set inside the working box.
pub fn check_conditions(cert: &DoaCertificate) -> ConditionReport {
    let mut checks = Vec::new();
    let mut warnings = Vec::new();
    let n = cert.nvars();
    let mut push = |name: &str, passed: bool, detail: String| {
        checks.push(Check {
            name: name.into(),
            passed,
            detail,
        })
    };

    let c0 = cert.v.constant_term();
    push(
        "V(0)=0",
        c0 == 0.0,
        if c0 == 0.0 {
            "no constant term".into()
        } else {
            format!("V(0)≠0 (constant term {:e})", c0)
        },
    );

    let has = |k: IdentityKind| cert.identities.iter().any(|id| id.kind == k);
    push("positivity", has(IdentityKind::Positivity), "V − l₁ is SOS".into());
    let missing: Vec<usize> = (0..cert.vertices.len())
        .filter(|&vertex| !has(IdentityKind::Decrease { vertex }))
        .collect();
    push(
        "decrease",
        missing.is_empty() && !cert.vertices.is_empty(),
        if missing.is_empty() {
            format!("{} vertex systems", cert.vertices.len())
        } else {
            format!("missing vertices {:?}", missing)
        },
    );
    let contained = (0..n).all(|var| has(IdentityKind::Containment { var }));
    push("containment", contained, "box sides certified".into());
    match cert.beta {
        Some(b) => push(
            "inclusion",
            has(IdentityKind::Inclusion),
            format!("P_β ⊆ Ω with β = {}", b),
        ),
        None => push("inclusion", true, "no shape region".into()),
    }

    let report = cert.verify();
    push(
        "re-verification",
        report.passed,
        format!(
            "max residual {:e}, min eigenvalue {:e}",
            report.max_residual, report.min_eigenvalue
        ),
    );

    let top = cert.v.homogeneous_part(effective_degree(&cert.v));
    let dirs = boundary::directions(n, sample_count(n), 3);
    let top_min = dirs.iter().map(|d| top.eval(d)).fold(f64::INFINITY, f64::min);
    let bounded = if top_min > 0.0 {
        (true, format!("top-degree part ≥ {:e} on the unit sphere", top_min))
    } else {
        let wide = cert.domain.scaled(10.0);
        let s = boundary::boundary_sample(&cert.v, cert.level, &wide, sample_count(n), 3);
        warnings.push("top-degree part of V is not positive definite; boundedness checked by sampling".into());
        (
            s.gaps.is_empty(),
            format!(
                "{} of {} rays cross the level inside 10·Ψ",
                s.points.len(),
                s.points.len() + s.gaps.len()
            ),
        )
    };
    push("bounded", bounded.0, bounded.1);

    let s = boundary::boundary_sample(&cert.v, cert.level, &cert.domain, sample_count(n), 3);
    let reach: Vec<f64> = (0..n)
        .map(|i| s.points.iter().map(|p| p[i].abs()).fold(0.0, f64::max))
        .collect();
    push(
        "inside-box",
        s.gaps.is_empty(),
        if s.gaps.is_empty() {
            format!("max |x_i| on the level set: {:?}", reach)
        } else {
            format!("{} rays leave the box before reaching the level", s.gaps.len())
        },
    );

    let passed = checks.iter().all(|c| c.passed);
    ConditionReport {
        checks,
        warnings,
        passed,
    }
}
