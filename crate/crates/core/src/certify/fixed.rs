//! Largest certified level of a fixed Lyapunov candidate.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::relax::{inclusion_identity, level_identities, positivity_identity, Setup};
use super::{
    vertex_systems, CertifyError, DoaCertificate, Identity, RelaxationParams, ShapeRegion, ThetaMode,
    UncertainPolySystem, VertexSystem,
};
use crate::approx::Box;
use crate::boundary;
use crate::poly::Polynomial;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelProbe {
    pub level: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedVReport {
    /// Largest certified level, 0 when none was found.
    pub level: f64,
    pub certificate: Option<DoaCertificate>,
    pub probes: Vec<LevelProbe>,
    /// Upper end of the bisection: `max V` over the corners of `Ψ`.
    pub c_max: f64,
    pub diagnostics: Vec<String>,
}

/// Vertex systems and `θ` constraints for the chosen `θ` mode.
pub(crate) fn prepare(
    usys: &UncertainPolySystem,
    params: &RelaxationParams,
) -> Result<(Vec<VertexSystem>, Vec<Polynomial>), CertifyError> {
    params.validate()?;
    match params.theta_mode {
        ThetaMode::Vertices => Ok((vertex_systems(usys)?, Vec::new())),
        ThetaMode::SProcedure => Ok((
            usys.symbolic_theta_systems()?,
            usys.theta.constraint_polys(usys.nvars()),
        )),
    }
}

/// `V(0) = 0` and `V > 0` at sampled points of `Ψ`.
pub(crate) fn check_candidate(v: &Polynomial, domain: &Box) -> Result<(), CertifyError> {
    let n = domain.dim();
    if v.nvars() != n {
        return Err(CertifyError::Dimension(format!(
            "V has {} variables, the system {}",
            v.nvars(),
            n
        )));
    }
    if v.constant_term() != 0.0 {
        return Err(CertifyError::NotPositive("V(0)≠0".into()));
    }
    for d in boundary::directions(n, 360, 5) {
        let rmax = boundary::exit_distance(domain, &d);
        for k in 1..=20 {
            let r = rmax * k as f64 / 20.0;
            let x: Vec<f64> = d.iter().map(|c| c * r).collect();
            if !(v.eval(&x) > 0.0) {
                return Err(CertifyError::NotPositive(format!("V ≤ 0 at {:?}", x)));
            }
        }
    }
    Ok(())
}

pub(crate) fn assemble(
    v: &Polynomial,
    level: f64,
    shape: Option<(&Polynomial, f64)>,
    params: &RelaxationParams,
    domain: &Box,
    vertices: Vec<VertexSystem>,
    theta_constraints: Vec<Polynomial>,
    identities: Vec<Identity>,
) -> DoaCertificate {
    let mut cert = DoaCertificate {
        v: v.clone(),
        level,
        beta: shape.map(|s| s.1),
        shape: shape.map(|s| s.0.clone()),
        params: params.clone(),
        domain: domain.clone(),
        vertices,
        theta_constraints,
        identities,
        report: crate::sdp::VerificationReport::from_parts(Vec::new(), 0.0),
    };
    cert.report = cert.verify();
    cert
}

/// Certificate for `{V ≤ level}` (and `P_β` inside it when a shape is
/// given), or `None` if some condition could not be certified.
pub fn certify_at_level(
    v: &Polynomial,
    usys: &UncertainPolySystem,
    level: f64,
    shape: Option<&ShapeRegion>,
    params: &RelaxationParams,
) -> Result<Option<DoaCertificate>, CertifyError> {
    check_candidate(v, &usys.domain)?;
    let (vertices, theta_constraints) = prepare(usys, params)?;
    let setup = Setup {
        n: usys.nvars(),
        params,
        domain: &usys.domain,
        theta_constraints: &theta_constraints,
        interior: false,
    };
    let Some(pos) = positivity_identity(&setup, v)? else {
        return Ok(None);
    };
    let Some(mut ids) = level_identities(&setup, v, &vertices, level)? else {
        return Ok(None);
    };
    ids.insert(0, pos);
    if let Some(s) = shape {
        match inclusion_identity(&setup, v, &s.g, level, s.beta)? {
            Some(id) => ids.push(id),
            None => return Ok(None),
        }
    }
    let cert = assemble(
        v,
        level,
        shape.map(|s| (&s.g, s.beta)),
        params,
        &usys.domain,
        vertices,
        theta_constraints,
        ids,
    );
    Ok(if cert.report.passed { Some(cert) } else { None })
}

/// Bisection for the largest level `c ∈ [0, c_max]` at which every vertex
/// system decreases `V` on `{V ≤ c} \ {0}` and the level set stays in `Ψ`.
pub fn fixed_v_lower(
    v: &Polynomial,
    usys: &UncertainPolySystem,
    params: &RelaxationParams,
    tol: f64,
) -> Result<FixedVReport, CertifyError> {
    check_candidate(v, &usys.domain)?;
    let (vertices, theta_constraints) = prepare(usys, params)?;
    let setup = Setup {
        n: usys.nvars(),
        params,
        domain: &usys.domain,
        theta_constraints: &theta_constraints,
        interior: false,
    };
    let c_max = usys.domain.corners().iter().map(|x| v.eval(x)).fold(0.0, f64::max);
    let tol = tol.max(1e-12 * c_max);
    let mut diagnostics = Vec::new();
    let pos = positivity_identity(&setup, v)?
        .ok_or_else(|| CertifyError::NotPositive("no SOS certificate for V − l₁".into()))?;

    let mut probes = Vec::new();
    let mut probe = |c: f64| -> Result<Option<Vec<Identity>>, CertifyError> {
        let r = level_identities(&setup, v, &vertices, c)?;
        probes.push(LevelProbe {
            level: c,
            feasible: r.is_some(),
        });
        Ok(r)
    };

    let (mut lo, mut hi) = (tol, c_max);
    let mut best = match probe(tol)? {
        Some(ids) => ids,
        None => {
            diagnostics.push(format!("infeasible already at level {:e}", tol));
            return Ok(FixedVReport {
                level: 0.0,
                certificate: None,
                probes,
                c_max,
                diagnostics,
            });
        }
    };
    if let Some(ids) = probe(c_max)? {
        lo = c_max;
        best = ids;
        diagnostics.push("feasible at c_max; Ψ limits the estimate".into());
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        match probe(mid)? {
            Some(ids) => {
                lo = mid;
                best = ids;
            }
            None => hi = mid,
        }
    }
    let mut ids = vec![pos];
    ids.extend(best);
    let cert = assemble(
        v,
        lo,
        None,
        params,
        &usys.domain,
        vertices.clone(),
        theta_constraints.clone(),
        ids,
    );
    if !cert.report.passed {
        diagnostics.push(format!(
            "assembled certificate failed re-verification (residual {:e})",
            cert.report.max_residual
        ));
        return Ok(FixedVReport {
            level: 0.0,
            certificate: None,
            probes,
            c_max,
            diagnostics,
        });
    }
    Ok(FixedVReport {
        level: lo,
        certificate: Some(cert),
        probes,
        c_max,
        diagnostics,
    })
}
