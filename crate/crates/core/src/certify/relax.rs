//! SOS programs for the individual certificate conditions.

use alloc::format;
use alloc::vec::Vec;

use super::{CertifyError, Identity, IdentityKind, RelaxationParams, VertexSystem};
use crate::approx::Box;
use crate::poly::{monomials_in_degree_range, Monomial, Polynomial};
use crate::sdp::{probe_options, solve_sos, AffinePoly, SolverOptions, SosOutcome, SosProgram, Unknown};

/// Coefficients below this fraction of the largest are ignored when reading
/// off degrees.
const DEGREE_THRESHOLD: f64 = 1e-10;

pub(crate) fn effective_degree(p: &Polynomial) -> u32 {
    let cut = DEGREE_THRESHOLD * p.max_abs_coeff();
    p.terms()
        .filter(|(_, c)| c.abs() > cut)
        .map(|(m, _)| m.degree())
        .max()
        .unwrap_or(0)
}

/// Drops coefficients below `rel · max|c|`.
pub(crate) fn clean(p: &Polynomial, rel: f64) -> Polynomial {
    let cut = rel * p.max_abs_coeff();
    let mut out = Polynomial::zero(p.nvars());
    for (m, c) in p.terms() {
        if c.abs() > cut {
            out.add_term(m.clone(), c);
        }
    }
    out
}

fn even_up(d: u32) -> u32 {
    d + d % 2
}

/// Shared inputs of the condition builders.
pub(crate) struct Setup<'a> {
    pub n: usize,
    pub params: &'a RelaxationParams,
    pub domain: &'a Box,
    /// `ψ(θ) ≥ 0` in `n + m` variables; empty in vertex mode.
    pub theta_constraints: &'a [Polynomial],
    /// Maximize the margin instead of stopping at the first strictly
    /// feasible point (gives multipliers deeper inside their cones).
    pub interior: bool,
}

impl Setup<'_> {
    fn box_polys(&self, nv: usize) -> Vec<Polynomial> {
        self.domain
            .constraint_polys()
            .iter()
            .map(|h| h.extend_vars(nv))
            .collect()
    }

    fn options(&self) -> SolverOptions {
        if self.interior {
            SolverOptions::default()
        } else {
            probe_options()
        }
    }

    fn mu_degree(&self, dv: u32) -> u32 {
        if dv <= 2 {
            0
        } else {
            even_up(dv - 2)
        }
    }
}

/// `Σ_k ∂V/∂x_k · f_k` where `V` is in the first `n` variables of the field.
pub(crate) fn vdot(v: &Polynomial, field: &crate::poly::PolyVector, n: usize) -> Result<Polynomial, CertifyError> {
    let nv = field.nvars();
    let ve = v.extend_vars(nv);
    let mut out = Polynomial::zero(nv);
    for k in 0..n {
        let d = ve.partial(k)?;
        if !d.is_zero() {
            out = &out + &(&d * &field[k]);
        }
    }
    Ok(out)
}

/// Unknown degrees of the decrease multipliers for a given `V`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DecreaseDegrees {
    pub level: u32,
    pub boxes: u32,
    pub theta: u32,
}

pub(crate) fn decrease_degrees(setup: &Setup, v: &Polynomial, vdot: &Polynomial) -> DecreaseDegrees {
    let dv = effective_degree(v);
    let dvd = effective_degree(vdot);
    let level = setup
        .params
        .multiplier_degree
        .unwrap_or_else(|| even_up(dvd.saturating_sub(dv)).max(2));
    let rest = side_degree(dvd);
    DecreaseDegrees {
        level,
        boxes: rest,
        theta: rest,
    }
}

/// Degree of the box and `θ` multipliers for a `V̇` of degree `dvd`.
pub(crate) fn side_degree(dvd: u32) -> u32 {
    even_up(dvd.saturating_sub(2)).max(2)
}

/// `−V̇ − l₂ − λ(c − V) − Σ s_k h_k − Σ r_j ψ_j`; either `V` (with its
/// `V̇`) or the multipliers may carry unknowns, not both.
pub(crate) fn decrease_expr(
    setup: &Setup,
    nv: usize,
    v: &AffinePoly,
    vdot: &AffinePoly,
    level: f64,
    level_mult: &AffinePoly,
    box_mults: &[AffinePoly],
    theta_mults: &[AffinePoly],
    prog: &SosProgram,
) -> Result<AffinePoly, CertifyError> {
    let l2 = setup.params.l(setup.n, nv);
    let c_minus_v = &AffinePoly::constant(Polynomial::constant(nv, level)) - v;
    let mut e = &(-vdot) - &AffinePoly::constant(l2);
    e = &e - &level_mult.try_mul(&c_minus_v, prog)?;
    for (s, h) in box_mults.iter().zip(setup.box_polys(nv)) {
        e = &e - &s.mul_poly(&h);
    }
    for (r, p) in theta_mults.iter().zip(setup.theta_constraints) {
        e = &e - &r.mul_poly(p);
    }
    Ok(e)
}

fn sos_unknowns(prog: &mut SosProgram, name: &str, nv: usize, lo: u32, hi_degree: u32) -> Unknown {
    prog.new_sos(name, monomials_in_degree_range(nv, lo, hi_degree / 2))
}

/// SOS unknown vanishing at `x = 0`: every basis monomial has a state factor.
/// Multipliers of constraints that are positive at the origin must have this
/// form, since the decrease polynomial vanishes there.
pub(crate) fn vanishing_sos(prog: &mut SosProgram, name: &str, n: usize, nv: usize, hi_degree: u32) -> Unknown {
    let basis = monomials_in_degree_range(nv, 1, hi_degree / 2)
        .into_iter()
        .filter(|m| m.exponents()[..n].iter().sum::<u32>() >= 1)
        .collect();
    prog.new_sos(name, basis)
}

fn run(prog: &SosProgram, opts: &SolverOptions) -> Result<SosOutcome, CertifyError> {
    Ok(solve_sos(prog, opts)?)
}

pub(crate) fn gram_of(out: &SosOutcome, u: Unknown) -> crate::sdp::GramMatrix {
    let sol = out.solution.as_ref().expect("certified outcome has a solution");
    match u {
        Unknown::Sos(i) => sol.sos[i].clone(),
        _ => unreachable!("multipliers are SOS unknowns"),
    }
}

fn remainder_of(out: &SosOutcome) -> crate::sdp::GramMatrix {
    out.solution
        .as_ref()
        .and_then(|s| s.remainders[0].clone())
        .expect("certified outcome has a remainder")
}

/// Decrease condition for one vertex with `V` fixed at `level`.
pub(crate) fn decrease_identity(
    setup: &Setup,
    v: &Polynomial,
    vertex: &VertexSystem,
    index: usize,
    level: f64,
) -> Result<Option<Identity>, CertifyError> {
    let nv = vertex.field.nvars();
    let vd = vdot(v, &vertex.field, setup.n)?;
    let deg = decrease_degrees(setup, v, &vd);
    let mut prog = SosProgram::new(nv);
    let lam = sos_unknowns(&mut prog, "lambda", nv, 1, deg.level);
    let boxes: Vec<Unknown> = if setup.params.box_multipliers {
        (0..setup.n)
            .map(|k| vanishing_sos(&mut prog, &format!("s{}", k + 1), setup.n, nv, deg.boxes))
            .collect()
    } else {
        Vec::new()
    };
    let thetas: Vec<Unknown> = (0..setup.theta_constraints.len())
        .map(|j| vanishing_sos(&mut prog, &format!("r{}", j + 1), setup.n, nv, deg.theta))
        .collect();
    let box_exprs: Vec<AffinePoly> = boxes.iter().map(|u| prog.expr(*u)).collect();
    let theta_exprs: Vec<AffinePoly> = thetas.iter().map(|u| prog.expr(*u)).collect();
    let expr = decrease_expr(
        setup,
        nv,
        &AffinePoly::constant(v.extend_vars(nv)),
        &AffinePoly::constant(vd),
        level,
        &prog.expr(lam),
        &box_exprs,
        &theta_exprs,
        &prog,
    )?;
    prog.require_sos(&format!("decrease[{}]", index), expr);
    let out = run(&prog, &setup.options())?;
    if !out.certified() {
        return Ok(None);
    }
    let mut multipliers = Vec::with_capacity(1 + boxes.len() + thetas.len());
    multipliers.push(gram_of(&out, lam));
    multipliers.extend(boxes.iter().map(|u| gram_of(&out, *u)));
    multipliers.extend(thetas.iter().map(|u| gram_of(&out, *u)));
    Ok(Some(Identity {
        kind: IdentityKind::Decrease { vertex: index },
        multipliers,
        remainder: remainder_of(&out),
    }))
}

/// `h_k − δ₁ − μ(c − V)` SOS, so that `{V ≤ c}` stays inside side `k` of the box.
pub(crate) fn containment_identity(
    setup: &Setup,
    v: &Polynomial,
    var: usize,
    level: f64,
) -> Result<Option<Identity>, CertifyError> {
    let n = setup.n;
    let dv = effective_degree(v);
    let mut prog = SosProgram::new(n);
    let mu = sos_unknowns(&mut prog, "mu", n, 0, setup.mu_degree(dv));
    let expr = containment_expr(
        setup,
        &AffinePoly::constant(v.clone()),
        var,
        level,
        &prog.expr(mu),
        &prog,
    )?;
    prog.require_sos(&format!("containment[{}]", var + 1), expr);
    let out = run(&prog, &setup.options())?;
    if !out.certified() {
        return Ok(None);
    }
    Ok(Some(Identity {
        kind: IdentityKind::Containment { var },
        multipliers: alloc::vec![gram_of(&out, mu)],
        remainder: remainder_of(&out),
    }))
}

pub(crate) fn containment_expr(
    setup: &Setup,
    v: &AffinePoly,
    var: usize,
    level: f64,
    mu: &AffinePoly,
    prog: &SosProgram,
) -> Result<AffinePoly, CertifyError> {
    let n = setup.n;
    let h = &setup.domain.constraint_polys()[var] - &Polynomial::constant(n, setup.params.delta1);
    let c_minus_v = &AffinePoly::constant(Polynomial::constant(n, level)) - v;
    Ok(&AffinePoly::constant(h) - &mu.try_mul(&c_minus_v, prog)?)
}

/// `c − δ₃ − V − ρ(β − g)` SOS, so that `P_β ⊆ {V ≤ c}`.
pub(crate) fn inclusion_identity(
    setup: &Setup,
    v: &Polynomial,
    g: &Polynomial,
    level: f64,
    beta: f64,
) -> Result<Option<Identity>, CertifyError> {
    let n = setup.n;
    let dv = effective_degree(v);
    let mut prog = SosProgram::new(n);
    let rho = sos_unknowns(&mut prog, "rho", n, 0, setup.mu_degree(dv));
    let expr = inclusion_expr(
        setup,
        &AffinePoly::constant(v.clone()),
        g,
        level,
        &AffinePoly::constant(Polynomial::constant(n, beta)),
        &prog.expr(rho),
        &prog,
    )?;
    prog.require_sos("inclusion", expr);
    let out = run(&prog, &setup.options())?;
    if !out.certified() {
        return Ok(None);
    }
    Ok(Some(Identity {
        kind: IdentityKind::Inclusion,
        multipliers: alloc::vec![gram_of(&out, rho)],
        remainder: remainder_of(&out),
    }))
}

pub(crate) fn inclusion_expr(
    setup: &Setup,
    v: &AffinePoly,
    g: &Polynomial,
    level: f64,
    beta: &AffinePoly,
    rho: &AffinePoly,
    prog: &SosProgram,
) -> Result<AffinePoly, CertifyError> {
    let n = setup.n;
    let head = &AffinePoly::constant(Polynomial::constant(n, level - setup.params.delta3)) - v;
    let beta_minus_g = beta - &AffinePoly::constant(g.clone());
    Ok(&head - &rho.try_mul(&beta_minus_g, prog)?)
}

/// `V − l₁` SOS.
pub(crate) fn positivity_identity(setup: &Setup, v: &Polynomial) -> Result<Option<Identity>, CertifyError> {
    let n = setup.n;
    let mut prog = SosProgram::new(n);
    let expr = &AffinePoly::constant(v.clone()) - &AffinePoly::constant(setup.params.l(n, n));
    prog.require_sos("positivity", expr);
    let out = run(&prog, &setup.options())?;
    if !out.certified() {
        return Ok(None);
    }
    Ok(Some(Identity {
        kind: IdentityKind::Positivity,
        multipliers: Vec::new(),
        remainder: remainder_of(&out),
    }))
}

/// All level-dependent identities (containment first, as it fails fastest
/// for levels that are too large), or `None` as soon as one fails.
pub(crate) fn level_identities(
    setup: &Setup,
    v: &Polynomial,
    vertices: &[VertexSystem],
    level: f64,
) -> Result<Option<Vec<Identity>>, CertifyError> {
    let mut out = Vec::with_capacity(setup.n + vertices.len());
    for k in 0..setup.n {
        match containment_identity(setup, v, k, level)? {
            Some(id) => out.push(id),
            None => return Ok(None),
        }
    }
    for (i, vx) in vertices.iter().enumerate() {
        match decrease_identity(setup, v, vx, i, level)? {
            Some(id) => out.push(id),
            None => return Ok(None),
        }
    }
    Ok(Some(out))
}

/// Polynomial of a Gram record in `nv` variables.
pub(crate) fn gram_poly(g: &crate::sdp::GramMatrix, nv: usize) -> Polynomial {
    g.to_polynomial(nv)
}

/// Monomials `x^α` with `lo ≤ |α| ≤ hi` in the first `n` of `nv` variables.
pub(crate) fn state_monomials(n: usize, nv: usize, lo: u32, hi: u32) -> Vec<Monomial> {
    monomials_in_degree_range(n, lo, hi)
        .into_iter()
        .map(|m| {
            let mut e = m.exponents().to_vec();
            e.resize(nv, 0);
            Monomial::new(e)
        })
        .collect()
}
