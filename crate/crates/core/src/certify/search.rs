//! Alternating search for `V` maximizing the shape level `β` with
//! `P_β ⊆ {V ≤ 1}`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::fixed::{assemble, prepare};
use super::relax::{
    clean, containment_expr, decrease_expr, effective_degree, gram_of, gram_poly, inclusion_expr, inclusion_identity,
    level_identities, positivity_identity, side_degree, state_monomials, vanishing_sos, vdot, Setup,
};
use super::{
    CertifyError, DoaCertificate, Identity, IdentityKind, RelaxationParams, ShapeRegion, ThetaMode,
    UncertainPolySystem, VertexSystem,
};
use crate::boundary;
use crate::linalg;
use crate::poly::{Monomial, Polynomial};
use crate::sdp::{solve_sos, AffinePoly, SolverOptions, SosProgram, Unknown};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Even degree of `V`.
    pub deg_v: u32,
    /// Maximum number of alternations.
    pub budget: usize,
    /// Starting `V`. By default `xᵀPx` from the linearization for quadratic
    /// `V`; higher degrees start from the result of the quadratic search.
    pub initial: Option<Polynomial>,
    /// Weight of the box-scaled `(Σ x_i²)^{deg_v/2}` added to a
    /// lower-degree start (0 adds nothing).
    pub seed_weight: f64,
    /// `V ← (1 − mixing)·V + mixing·V*` after each `V` step.
    pub mixing: f64,
    pub beta_tol: f64,
    /// Re-solve the box multipliers together with `V` instead of keeping
    /// them from the last certificate.
    pub free_box_multipliers: bool,
    /// Stop when `β` changes by less than this between iterations.
    pub stop_tol: f64,
    /// Relative tolerance of the level normalization.
    pub level_tol: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            deg_v: 2,
            budget: 30,
            initial: None,
            seed_weight: 0.1,
            mixing: 0.8,
            beta_tol: 1e-4,
            free_box_multipliers: false,
            stop_tol: 1e-3,
            level_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchIteration {
    /// Factor `V` was divided by to bring its certified level to 1.
    pub scale: f64,
    pub beta: f64,
    /// Whether the iterate became the new best certificate.
    pub accepted: bool,
    /// `β` reached by the `V` step, if it succeeded.
    pub vstep_beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub v: Polynomial,
    pub beta: f64,
    pub certificate: DoaCertificate,
    pub history: Vec<SearchIteration>,
    pub stop_reason: String,
    /// `β` of the quadratic search a higher-degree run started from.
    pub warm_start_beta: Option<f64>,
}

/// `xᵀPx` with `AᵀP + PA = −I` for the linearization at the nominal member.
fn lyapunov_start(usys: &UncertainPolySystem) -> Result<Polynomial, CertifyError> {
    let n = usys.nvars();
    let field = usys.nominal_field(&usys.theta.midpoint())?;
    let a = DMatrix::from_fn(n, n, |i, k| field[i].coeff(&Monomial::var(n, k)));
    let p = linalg::solve_lyapunov(&a, &DMatrix::identity(n, n))
        .ok_or_else(|| CertifyError::Initialization("Lyapunov equation is singular".into()))?;
    if !(linalg::min_eigenvalue(&p) > 0.0) {
        return Err(CertifyError::Initialization(
            "linearization at the origin is not Hurwitz".into(),
        ));
    }
    let mut v = Polynomial::zero(n);
    for i in 0..n {
        for k in 0..n {
            let mut e = vec![0u32; n];
            e[i] += 1;
            e[k] += 1;
            v.add_term(Monomial::new(e), p[(i, k)]);
        }
    }
    Ok(v)
}

/// Adds `w·c·(Σ (x_i/r_i)²)^{deg_v/2}`, with `r_i` the half-widths of `Ψ`
/// and `c` the largest value of `V` at its corners, so the seed stays a
/// fixed fraction of `V` on `Ψ` whatever the box size.
fn add_seed(v: &Polynomial, domain: &crate::approx::Box, deg_v: u32, weight: f64) -> Polynomial {
    let n = v.nvars();
    let c = domain.corners().iter().map(|x| v.eval(x)).fold(0.0, f64::max);
    let mut ball = Polynomial::zero(n);
    for i in 0..n {
        let r = 0.5 * (domain.upper()[i] - domain.lower()[i]);
        ball = &ball + &Polynomial::var(n, i).pow(2).scale(1.0 / (r * r));
    }
    v + &ball.pow(deg_v / 2).scale(weight * c)
}

/// Largest `γ` (within a relative tolerance) such that `{V/γ ≤ 1}` is
/// certified, with the identities for `V/γ`.
fn normalize(
    setup: &Setup,
    v: &Polynomial,
    vertices: &[VertexSystem],
    guess: Option<f64>,
    tol: f64,
) -> Result<Option<(f64, Vec<Identity>)>, CertifyError> {
    let c_max = setup.domain.corners().iter().map(|x| v.eval(x)).fold(0.0, f64::max);
    let probe = |g: f64| level_identities(setup, &v.scale(1.0 / g), vertices, 1.0);
    let (mut lo, mut hi) = (0.0, c_max);
    let mut best = None;
    if let Some(g) = guess.filter(|g| *g < c_max) {
        match probe(g)? {
            Some(ids) => {
                lo = g;
                best = Some(ids);
            }
            None => hi = g,
        }
    }
    while hi - lo > tol * hi && hi > 1e-9 * c_max {
        let mid = 0.5 * (lo + hi);
        match probe(mid)? {
            Some(ids) => {
                lo = mid;
                best = Some(ids);
            }
            None => hi = mid,
        }
    }
    Ok(best.map(|ids| (lo, ids)))
}

/// Largest `β` with `P_β ⊆ {V ≤ 1}` certified, bisected below the sampled
/// minimum of `g` on `{V = 1}`.
fn best_beta(setup: &Setup, v: &Polynomial, g: &Polynomial, tol: f64) -> Result<Option<(f64, Identity)>, CertifyError> {
    let n = setup.n;
    let count = if n <= 2 { 720 } else { 2000 };
    let s = boundary::boundary_sample(v, 1.0, setup.domain, count, 17);
    let Some(cap) = s.points.iter().map(|p| g.eval(p)).reduce(f64::min) else {
        return Ok(None);
    };
    let first = tol.min(0.5 * cap);
    let (mut lo, mut hi) = (first, cap);
    let Some(mut best) = inclusion_identity(setup, v, g, 1.0, first)? else {
        return Ok(None);
    };
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        match inclusion_identity(setup, v, g, 1.0, mid)? {
            Some(id) => {
                lo = mid;
                best = id;
            }
            None => hi = mid,
        }
    }
    Ok(Some((lo, best)))
}

struct VStep {
    v: Polynomial,
    beta: f64,
    certificate: DoaCertificate,
}

/// Optimizer output that missed verification.
struct Unverified {
    v: Polynomial,
    beta: f64,
    /// Larger of the identity residual and the eigenvalue deficit.
    defect: f64,
}

/// Outcome of the `V` step: where the iteration moves next, and the best
/// verified candidate found on the way.
struct StepResult {
    v: Polynomial,
    verified: Option<VStep>,
}

/// Fractions of the way from the current `β` to the optimizer's value tried
/// when the optimal `V` sits too close to the cone boundary to verify.
const BACKOFF: [f64; 3] = [0.95, 0.7, 0.3];

/// An unverified optimum this close to feasible still steers the iteration.
const STEER_DEFECT: f64 = 1e-5;

/// With every multiplier fixed, solves for `V` (support of degrees
/// `2..=deg_v`) and `β` jointly, maximizing `β`. If the optimum does not
/// verify, `β` is fixed slightly below it and `V` is re-solved for the
/// largest margin; the near-feasible optimum still sets the direction.
fn v_step(
    setup: &Setup,
    vertices: &[VertexSystem],
    ids: &[Identity],
    rho: &Identity,
    g: &Polynomial,
    deg_v: u32,
    free_boxes: bool,
    beta_now: f64,
) -> Result<Option<StepResult>, CertifyError> {
    let opt = match v_step_at(setup, vertices, ids, rho, g, deg_v, free_boxes, None)? {
        Ok(step) => {
            return Ok(Some(StepResult {
                v: step.v.clone(),
                verified: Some(step),
            }))
        }
        Err(u) => u,
    };
    let Some(opt) = opt.filter(|u| u.beta.is_finite() && u.beta > beta_now) else {
        return Ok(None);
    };
    let mut verified = None;
    for f in BACKOFF {
        let b = beta_now + f * (opt.beta - beta_now);
        if let Ok(step) = v_step_at(setup, vertices, ids, rho, g, deg_v, free_boxes, Some(b))? {
            verified = Some(step);
            break;
        }
    }
    let v = if opt.defect <= STEER_DEFECT {
        opt.v
    } else {
        match &verified {
            Some(step) => step.v.clone(),
            None => return Ok(None),
        }
    };
    Ok(Some(StepResult { v, verified }))
}

/// One `V` step; `beta` fixed or (when `None`) maximized. On failure returns
/// what the solver reached, if anything.
fn v_step_at(
    setup: &Setup,
    vertices: &[VertexSystem],
    ids: &[Identity],
    rho: &Identity,
    g: &Polynomial,
    deg_v: u32,
    free_boxes: bool,
    fixed_beta: Option<f64>,
) -> Result<Result<VStep, Option<Unverified>>, CertifyError> {
    let n = setup.n;
    let mons = state_monomials(n, n, 2, deg_v);
    let mut prog = SosProgram::new(n);
    let coeffs: Vec<Unknown> = (0..mons.len()).map(|i| prog.new_scalar(&format!("v{}", i))).collect();
    let beta = match fixed_beta {
        Some(_) => None,
        None => Some(prog.new_scalar("beta")),
    };
    let mut v_aff = AffinePoly::zero(n);
    for (u, m) in coeffs.iter().zip(&mons) {
        v_aff = &v_aff + &AffinePoly::unknown(*u, Polynomial::term(m.clone(), 1.0));
    }

    prog.require_sos("positivity", &v_aff - &AffinePoly::constant(setup.params.l(n, n)));
    let fixed = |g: &crate::sdp::GramMatrix| AffinePoly::constant(gram_poly(g, n));
    let mut order = vec![IdentityKind::Positivity];
    let mut box_unknowns: Vec<Vec<Unknown>> = Vec::new();
    for (i, vx) in vertices.iter().enumerate() {
        let id = ids
            .iter()
            .find(|id| id.kind == IdentityKind::Decrease { vertex: i })
            .ok_or_else(|| CertifyError::Dimension(format!("no multipliers for vertex {}", i)))?;
        let mut vd = AffinePoly::zero(n);
        for (u, m) in coeffs.iter().zip(&mons) {
            vd = &vd + &AffinePoly::unknown(*u, vdot(&Polynomial::term(m.clone(), 1.0), &vx.field, n)?);
        }
        let nbox = if setup.params.box_multipliers { n } else { 0 };
        let boxes: Vec<AffinePoly> = if free_boxes {
            let field_degree = vx.field.degree().max(1);
            let side = side_degree(deg_v - 1 + field_degree);
            let unknowns: Vec<Unknown> = (0..nbox)
                .map(|k| vanishing_sos(&mut prog, &format!("s{}_{}", i, k + 1), n, n, side))
                .collect();
            let exprs = unknowns.iter().map(|u| prog.expr(*u)).collect();
            box_unknowns.push(unknowns);
            exprs
        } else {
            id.multipliers[1..1 + nbox].iter().map(fixed).collect()
        };
        let e = decrease_expr(
            setup,
            n,
            &v_aff,
            &vd,
            1.0,
            &fixed(&id.multipliers[0]),
            &boxes,
            &[],
            &prog,
        )?;
        prog.require_sos(&format!("decrease[{}]", i), e);
        order.push(id.kind);
    }
    for k in 0..n {
        let id = ids
            .iter()
            .find(|id| id.kind == IdentityKind::Containment { var: k })
            .ok_or_else(|| CertifyError::Dimension(format!("no multiplier for side {}", k + 1)))?;
        let e = containment_expr(setup, &v_aff, k, 1.0, &fixed(&id.multipliers[0]), &prog)?;
        prog.require_sos(&format!("containment[{}]", k + 1), e);
        order.push(id.kind);
    }
    let beta_expr = match (beta, fixed_beta) {
        (Some(b), _) => prog.expr(b),
        (None, b) => AffinePoly::constant(Polynomial::constant(n, b.unwrap_or_default())),
    };
    let e = inclusion_expr(setup, &v_aff, g, 1.0, &beta_expr, &fixed(&rho.multipliers[0]), &prog)?;
    prog.require_sos("inclusion", e);
    order.push(IdentityKind::Inclusion);
    if let Some(b) = beta {
        prog.maximize(b)?;
    }

    let out = solve_sos(&prog, &SolverOptions::default())?;
    let Some(sol) = out.solution.as_ref() else {
        return Ok(Err(None));
    };
    let mut v = Polynomial::zero(n);
    for (i, m) in mons.iter().enumerate() {
        v.add_term(m.clone(), sol.scalars[i]);
    }
    let beta_val = fixed_beta
        .or_else(|| sol.scalars.get(mons.len()).copied())
        .unwrap_or_default();
    if !out.certified() {
        let defect = out
            .report
            .as_ref()
            .map_or(f64::INFINITY, |r| r.max_residual.max(-r.min_eigenvalue));
        return Ok(Err(beta.map(|_| Unverified {
            v,
            beta: beta_val,
            defect,
        })));
    }
    let mut new_ids = Vec::with_capacity(order.len());
    for (k, kind) in order.into_iter().enumerate() {
        let multipliers = match kind {
            IdentityKind::Positivity => Vec::new(),
            IdentityKind::Inclusion => rho.multipliers.clone(),
            IdentityKind::Decrease { vertex } if free_boxes => {
                let old = ids
                    .iter()
                    .find(|id| id.kind == kind)
                    .map(|id| id.multipliers.clone())
                    .unwrap_or_default();
                let mut m = vec![old[0].clone()];
                m.extend(box_unknowns[vertex].iter().map(|u| gram_of(&out, *u)));
                m
            }
            _ => ids
                .iter()
                .find(|id| id.kind == kind)
                .map(|id| id.multipliers.clone())
                .unwrap_or_default(),
        };
        let Some(remainder) = out.solution.as_ref().and_then(|s| s.remainders[k].clone()) else {
            return Ok(Err(None));
        };
        new_ids.push(Identity {
            kind,
            multipliers,
            remainder,
        });
    }
    let certificate = assemble(
        &v,
        1.0,
        Some((g, beta_val)),
        setup.params,
        setup.domain,
        vertices.to_vec(),
        Vec::new(),
        new_ids,
    );
    Ok(Ok(VStep {
        v,
        beta: beta_val,
        certificate,
    }))
}

/// Alternates between certifying the current `V` (level normalized to 1,
/// `β` bisected) and re-solving for `V` with the multipliers fixed. Only
/// re-verified certificates are kept; the best one is returned.
pub fn search_v(
    usys: &UncertainPolySystem,
    shape: &ShapeRegion,
    params: &RelaxationParams,
    opts: &SearchOptions,
) -> Result<SearchReport, CertifyError> {
    let n = usys.nvars();
    if opts.deg_v < 2 || opts.deg_v % 2 == 1 {
        return Err(CertifyError::Params(format!(
            "degree of V must be even and ≥ 2, got {}",
            opts.deg_v
        )));
    }
    if params.theta_mode != ThetaMode::Vertices {
        return Err(CertifyError::Params(
            "the V search supports the vertex θ mode only".into(),
        ));
    }
    if shape.g.nvars() != n {
        return Err(CertifyError::Shape(format!(
            "g has {} variables, the system {}",
            shape.g.nvars(),
            n
        )));
    }
    let (vertices, theta_constraints) = prepare(usys, params)?;
    let setup = Setup {
        n,
        params,
        domain: &usys.domain,
        theta_constraints: &theta_constraints,
        interior: false,
    };
    let interior = Setup {
        interior: true,
        ..setup
    };
    let mut warm_start_beta = None;
    let mut v = match &opts.initial {
        Some(v0) => {
            super::fixed::check_candidate(v0, &usys.domain)?;
            v0.clone()
        }
        None if opts.deg_v > 2 => {
            let quadratic = SearchOptions {
                deg_v: 2,
                ..opts.clone()
            };
            let low = search_v(usys, shape, params, &quadratic)?;
            warm_start_beta = Some(low.beta);
            low.v
        }
        None => lyapunov_start(usys)?,
    };
    if opts.deg_v > effective_degree(&v) && opts.seed_weight > 0.0 {
        v = add_seed(&v, &usys.domain, opts.deg_v, opts.seed_weight);
    }

    let mut best: Option<(DoaCertificate, f64)> = None;
    let mut history: Vec<SearchIteration> = Vec::new();
    let mut stop_reason = String::from("budget exhausted");
    let mut guess = None;
    for _ in 0..opts.budget {
        let Some((scale, ids)) = normalize(&setup, &v, &vertices, guess, opts.level_tol)? else {
            stop_reason = "no certified level for the current V".into();
            break;
        };
        v = v.scale(1.0 / scale);
        guess = Some(1.0);
        let ids = level_identities(&interior, &v, &vertices, 1.0)?.unwrap_or(ids);
        let Some(pos) = positivity_identity(&setup, &v)? else {
            stop_reason = "V − l₁ is not SOS".into();
            break;
        };
        let Some((beta, rho)) = best_beta(&setup, &v, &shape.g, opts.beta_tol)? else {
            stop_reason = "no certified shape level".into();
            break;
        };
        let mut all = vec![pos];
        all.extend(ids.iter().cloned());
        all.push(rho.clone());
        let cert = assemble(
            &v,
            1.0,
            Some((&shape.g, beta)),
            params,
            &usys.domain,
            vertices.clone(),
            Vec::new(),
            all,
        );
        let accepted = cert.report.passed && best.as_ref().is_none_or(|b| beta >= b.1);
        if accepted {
            best = Some((cert, beta));
        }
        let prev = history.iter().rev().find(|h| h.beta > 0.0).map(|h| h.beta);
        let mut record = SearchIteration {
            scale,
            beta,
            accepted,
            vstep_beta: None,
        };

        let step = v_step(
            &setup,
            &vertices,
            &ids,
            &rho,
            &shape.g,
            opts.deg_v,
            opts.free_box_multipliers,
            beta,
        )?;
        let Some(step) = step else {
            history.push(record);
            stop_reason = "V step infeasible".into();
            break;
        };
        if let Some(vs) = step.verified {
            record.vstep_beta = Some(vs.beta);
            if vs.certificate.report.passed && best.as_ref().is_none_or(|b| vs.beta > b.1) {
                best = Some((vs.certificate, vs.beta));
            }
        }
        history.push(record);
        let mixed = &v.scale(1.0 - opts.mixing) + &step.v.scale(opts.mixing);
        v = clean(&mixed, 1e-12);
        if prev.is_some_and(|p| (beta - p).abs() < opts.stop_tol) {
            stop_reason = "β converged".into();
            break;
        }
    }
    let (certificate, beta) =
        best.ok_or_else(|| CertifyError::Initialization(format!("no verified iterate ({})", stop_reason)))?;
    Ok(SearchReport {
        v: certificate.v.clone(),
        beta,
        certificate,
        history,
        stop_reason,
        warm_start_beta,
    })
}
