//! Certificate archives: everything needed to re-check a run offline.
//!
//! An archive carries the config text it was produced from, the enclosures
//! and the certificate, sealed by a SHA-256 digest of the body. Verification
//! recomputes the digest, re-derives the enclosures and vertex systems from
//! the embedded config, and re-checks every identity of the certificate.

use doacert_core::approx::{enclose, Enclosable, Enclosure};
use doacert_core::certify::{
    check_conditions, substitute, vertex_systems, ConditionReport, SystemDef, ThetaMode, UncertainPolySystem,
    VertexSystem,
};
use doacert_core::sdp::{EIGEN_TOL, RESIDUAL_TOL};
use doacert_core::{DoaCertificate, Polynomial};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::CliError;

pub const FORMAT: &str = "doacert-archive/1";

/// Relative tolerance when comparing re-derived polynomials with the archive.
const MATCH_TOL: f64 = 1e-9;

/// Samples of the enclosure soundness check.
const ENCLOSURE_SAMPLES: usize = 10_000;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{:02x}", b)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveBody {
    pub format: String,
    pub command: String,
    /// The config file, verbatim.
    pub config: String,
    pub system_hash: String,
    /// Enclosure degrees, one per distinct function (or one for all).
    pub degrees: Vec<u32>,
    pub enclosures: Vec<Enclosure>,
    pub certificate: Option<DoaCertificate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archive {
    pub body: ArchiveBody,
    pub digest: String,
}

impl Archive {
    pub fn seal(
        command: &str,
        config: &Config,
        degrees: Vec<u32>,
        enclosures: Vec<Enclosure>,
        certificate: Option<DoaCertificate>,
    ) -> Result<Self, CliError> {
        let body = ArchiveBody {
            format: FORMAT.into(),
            command: command.into(),
            config: config.source.clone(),
            system_hash: sha256_hex(config.source.as_bytes()),
            degrees,
            enclosures,
            certificate,
        };
        let digest = body_digest(&body)?;
        Ok(Archive { body, digest })
    }

    /// Recomputes the digest after a deliberate edit of the body.
    pub fn reseal(&mut self) -> Result<(), CliError> {
        self.digest = body_digest(&self.body)?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Archive(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn config(&self) -> Result<Config, CliError> {
        Config::parse(&self.body.config)
    }
}

fn body_digest(body: &ArchiveBody) -> Result<String, CliError> {
    Ok(sha256_hex(&serde_json::to_vec(body)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub digest_ok: bool,
    pub system_hash_ok: bool,
    /// Enclosures and vertex systems re-derived from the config agree.
    pub system_ok: bool,
    pub conditions: Option<ConditionReport>,
    pub max_residual: Option<f64>,
    pub min_eigenvalue: Option<f64>,
    pub problems: Vec<String>,
    pub passed: bool,
}

/// Re-checks an archive from scratch.
pub fn verify(archive: &Archive) -> VerifyReport {
    let mut problems = Vec::new();
    let body = &archive.body;
    let digest_ok = body_digest(body).is_ok_and(|d| d == archive.digest);
    if !digest_ok {
        problems.push("digest does not match the archive body".into());
    }
    if body.format != FORMAT {
        problems.push(format!("unknown archive format '{}'", body.format));
    }
    let system_hash_ok = sha256_hex(body.config.as_bytes()) == body.system_hash;
    if !system_hash_ok {
        problems.push("system hash does not match the embedded config".into());
    }
    let mut system_ok = false;
    let mut conditions = None;
    let (mut max_residual, mut min_eigenvalue) = (None, None);
    match archive.config() {
        Err(e) => problems.push(format!("embedded config: {}", e)),
        Ok(cfg) => {
            system_ok = match &body.certificate {
                Some(cert) => check_certified_system(&cfg, body, cert, &mut problems),
                None => check_enclosures(&cfg, body, &mut problems),
            };
        }
    }
    if let Some(cert) = &body.certificate {
        let c = check_conditions(cert);
        let vr = cert.verify();
        if !(vr.max_residual <= RESIDUAL_TOL && vr.min_eigenvalue >= EIGEN_TOL) {
            problems.push(format!(
                "identities fail: max residual {:e}, min eigenvalue {:e}",
                vr.max_residual, vr.min_eigenvalue
            ));
        }
        for failed in c.checks.iter().filter(|k| !k.passed) {
            problems.push(format!("{}: {}", failed.name, failed.detail));
        }
        max_residual = Some(vr.max_residual);
        min_eigenvalue = Some(vr.min_eigenvalue);
        conditions = Some(c);
    }
    let passed = problems.is_empty();
    VerifyReport {
        digest_ok,
        system_hash_ok,
        system_ok,
        conditions,
        max_residual,
        min_eigenvalue,
        problems,
        passed,
    }
}

fn close(a: &Polynomial, b: &Polynomial) -> bool {
    a.nvars() == b.nvars() && (a - b).max_abs_coeff() <= MATCH_TOL * (1.0 + a.max_abs_coeff())
}

fn close_f(a: f64, b: f64) -> bool {
    (a - b).abs() <= MATCH_TOL * (1.0 + a.abs())
}

fn same_vertex(a: &VertexSystem, b: &VertexSystem) -> bool {
    a.u.len() == b.u.len()
        && a.theta.len() == b.theta.len()
        && a.u.iter().zip(&b.u).all(|(x, y)| close_f(*x, *y))
        && a.theta.iter().zip(&b.theta).all(|(x, y)| close_f(*x, *y))
        && a.field.len() == b.field.len()
        && a.field
            .components()
            .iter()
            .zip(b.field.components())
            .all(|(p, q)| close(p, q))
}

/// The uncertain system of `cfg` on `domain` with the archived degrees.
fn rederive(cfg: &Config, domain: &doacert_core::Box, degrees: &[u32]) -> Result<UncertainPolySystem, String> {
    let sys = SystemDef::new(
        cfg.system.equations().to_vec(),
        cfg.system.theta().clone(),
        domain.clone(),
    )
    .map_err(|e| e.to_string())?;
    substitute(&sys, degrees).map_err(|e| e.to_string())
}

fn check_certified_system(cfg: &Config, body: &ArchiveBody, cert: &DoaCertificate, problems: &mut Vec<String>) -> bool {
    let usys = match rederive(cfg, &cert.domain, &body.degrees) {
        Ok(u) => u,
        Err(e) => {
            problems.push(format!("re-deriving the uncertain system: {}", e));
            return false;
        }
    };
    let expected = match cert.params.theta_mode {
        ThetaMode::Vertices => vertex_systems(&usys),
        ThetaMode::SProcedure => usys.symbolic_theta_systems(),
    };
    let expected = match expected {
        Ok(v) => v,
        Err(e) => {
            problems.push(format!("vertex systems: {}", e));
            return false;
        }
    };
    let mut ok =
        expected.len() == cert.vertices.len() && expected.iter().zip(&cert.vertices).all(|(a, b)| same_vertex(a, b));
    if !ok {
        problems.push("certificate vertex systems differ from those of the config".into());
    }
    let constraints = match cert.params.theta_mode {
        ThetaMode::Vertices => Vec::new(),
        ThetaMode::SProcedure => usys.theta.constraint_polys(usys.nvars()),
    };
    if constraints.len() != cert.theta_constraints.len()
        || !constraints
            .iter()
            .zip(&cert.theta_constraints)
            .all(|(a, b)| close(a, b))
    {
        problems.push("θ constraints differ from those of the config".into());
        ok = false;
    }
    if !same_enclosures(&usys.enclosures, &body.enclosures) {
        problems.push("archived enclosures differ from the re-derived ones".into());
        ok = false;
    }
    ok
}

fn same_enclosures(a: &[Enclosure], b: &[Enclosure]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.function == y.function && x.degree == y.degree && close(&x.p, &y.p) && close_f(x.bound, y.bound)
        })
}

/// Enclosure-only archives: recompute on the archived domain and sample
/// soundness against the true functions.
fn check_enclosures(cfg: &Config, body: &ArchiveBody, problems: &mut Vec<String>) -> bool {
    let functions = cfg.system.functions();
    if body.enclosures.len() != functions.len() {
        problems.push(format!(
            "{} enclosures for {} functions",
            body.enclosures.len(),
            functions.len()
        ));
        return false;
    }
    let mut ok = true;
    for (k, (f, e)) in functions.iter().zip(&body.enclosures).enumerate() {
        let d = body
            .degrees
            .get(k)
            .or(body.degrees.first())
            .copied()
            .unwrap_or(e.degree);
        match enclose(f, &e.domain, d) {
            Ok(fresh) if same_enclosures(std::slice::from_ref(&fresh), std::slice::from_ref(e)) => {}
            Ok(_) => {
                problems.push(format!("enclosure of {} differs from a recomputation", f.label()));
                ok = false;
            }
            Err(err) => {
                problems.push(format!("enclosure of {}: {}", f.label(), err));
                ok = false;
            }
        }
        let worst = e.max_violation(f, ENCLOSURE_SAMPLES);
        if worst > 0.0 {
            problems.push(format!("enclosure of {} violated by {:e}", f.label(), worst));
            ok = false;
        }
    }
    ok
}
