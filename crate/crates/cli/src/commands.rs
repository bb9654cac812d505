//! One function per CLI command. Each returns an [`Outcome`]: the result
//! record, the archive to write and, for `boundary`, the CSV text.

use doacert_core::approx::{enclose, taylor_enclose, Enclosable};
use doacert_core::boundary::boundary_sample;
use doacert_core::certify::{
    fixed_v_lower, search_v, substitute, upper_bound, vertex_systems, LevelProbe, SearchIteration, SearchOptions,
    ShapeRegion, SystemDef, UncertainPolySystem,
};
use doacert_core::validate::{inclusion_check, monte_carlo_doa, InclusionReport, MonteCarloReport, SimOptions};
use doacert_core::{DoaCertificate, Polynomial};
use serde::Serialize;

use crate::archive::{self, Archive, VerifyReport};
use crate::config::{Config, Resolved, Workflow};
use crate::error::CliError;

/// Soundness samples per enclosure in `approx`.
const APPROX_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Certified,
    NotCertified,
    Pass,
    Fail,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Certified | Status::Pass => 0,
            Status::NotCertified | Status::Fail => 1,
        }
    }

    fn pass(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

/// The structured result of one run. Keys serialize in declaration order;
/// nothing in it depends on the clock.
#[derive(Debug, Clone, Serialize)]
pub struct Record {
    pub command: String,
    pub system_hash: String,
    pub status: Status,
    pub exit_code: i32,
    pub result: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub record: Record,
    pub archive: Option<Archive>,
    pub csv: Option<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        self.record.exit_code
    }

    pub fn record_json(&self) -> Result<String, CliError> {
        Ok(serde_json::to_string_pretty(&self.record)?)
    }
}

fn outcome<T: Serialize>(
    command: &str,
    system_hash: String,
    status: Status,
    result: &T,
    archive: Option<Archive>,
) -> Result<Outcome, CliError> {
    Ok(Outcome {
        record: Record {
            command: command.into(),
            system_hash,
            status,
            exit_code: status.exit_code(),
            result: serde_json::to_value(result)?,
        },
        archive,
        csv: None,
    })
}

/// Command-line values that take precedence over the config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub degree: Option<Vec<u32>>,
    pub deg_v: Option<u32>,
    pub tol: Option<f64>,
    pub budget: Option<usize>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
}

fn resolve(cfg: &Config, workflow: Workflow, ov: &Overrides) -> Result<Resolved, CliError> {
    let mut r = cfg.resolve(workflow, ov.deg_v)?;
    if let Some(d) = &ov.degree {
        if d.is_empty() || d.contains(&0) {
            return Err(CliError::Config("--degree needs positive degrees".into()));
        }
        r.degree = d.clone();
    }
    if let Some(t) = ov.tol {
        if !(t > 0.0 && t < 1.0) {
            return Err(CliError::Config(format!("--tol must lie in (0, 1), got {}", t)));
        }
        r.tol = t;
    }
    if let Some(b) = ov.budget {
        r.budget = b;
    }
    if let Some(s) = ov.seed {
        r.seed = s;
    }
    if let Some(n) = ov.samples {
        r.samples = n;
    }
    Ok(r)
}

fn hash(cfg: &Config) -> String {
    archive::sha256_hex(cfg.source.as_bytes())
}

fn show(p: &Polynomial, cfg: &Config) -> String {
    let names: Vec<&str> = cfg.states.iter().map(String::as_str).collect();
    p.display_with(&names).to_string()
}

#[derive(Debug, Clone, Serialize)]
struct EnclosureEntry {
    function: String,
    degree: u32,
    gamma: Vec<u32>,
    /// Coefficients of `p` in its argument variable, low to high.
    coefficients: Vec<f64>,
    bound: f64,
    taylor_bound: Option<f64>,
    interval: (f64, f64),
    /// Largest sampled `|φ − p| − b·|x^γ|`; positive means unsound.
    max_violation: f64,
}

#[derive(Debug, Clone, Serialize)]
struct ApproxResult {
    samples: usize,
    enclosures: Vec<EnclosureEntry>,
}

pub fn approx(cfg: &Config, ov: &Overrides) -> Result<Outcome, CliError> {
    let r = resolve(cfg, Workflow::Approx, ov)?;
    let functions = r.system.functions();
    let mut entries = Vec::new();
    let mut enclosures = Vec::new();
    for (k, f) in functions.iter().enumerate() {
        let d = *r.degree.get(k).unwrap_or(&r.degree[0]);
        let e = enclose(f, r.system.domain(), d)?;
        let taylor = taylor_enclose(f, r.system.domain(), d).ok().map(|t| t.bound);
        entries.push(EnclosureEntry {
            function: f.label(),
            degree: d,
            gamma: e.gamma.exponents().to_vec(),
            coefficients: e.univariate_coefficients(),
            bound: e.bound,
            taylor_bound: taylor,
            interval: e.domain.interval(e.var),
            max_violation: e.max_violation(f, APPROX_SAMPLES),
        });
        enclosures.push(e);
    }
    let sound = entries.iter().all(|e| e.max_violation <= 0.0);
    let result = ApproxResult {
        samples: APPROX_SAMPLES,
        enclosures: entries,
    };
    let archive = Archive::seal("approx", cfg, r.degree.clone(), enclosures, None)?;
    outcome("approx", hash(cfg), Status::pass(sound), &result, Some(archive))
}

#[derive(Debug, Clone, Serialize)]
struct SubstituteResult {
    nominal: Vec<String>,
    uncertainty_bounds: Vec<f64>,
    vertex_systems: usize,
    inclusion: InclusionReport,
}

fn uncertain(r: &Resolved) -> Result<UncertainPolySystem, CliError> {
    Ok(substitute(&r.system, &r.degree)?)
}

pub fn substitute_cmd(cfg: &Config, workflow: Workflow, ov: &Overrides) -> Result<Outcome, CliError> {
    let r = resolve(cfg, workflow, ov)?;
    let usys = uncertain(&r)?;
    let names: Vec<String> = cfg.states.iter().chain(&cfg.theta_names).cloned().collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    let inclusion = inclusion_check(&r.system, &usys, r.samples, r.seed);
    let result = SubstituteResult {
        nominal: usys
            .nominal
            .iter()
            .map(|p| p.display_with(&names).to_string())
            .collect(),
        uncertainty_bounds: usys.bounds(),
        vertex_systems: vertex_systems(&usys).map(|v| v.len()).unwrap_or(0),
        inclusion,
    };
    let ok = result.inclusion.violations == 0;
    let archive = Archive::seal("substitute", cfg, r.degree.clone(), usys.enclosures.clone(), None)?;
    outcome("substitute", hash(cfg), Status::pass(ok), &result, Some(archive))
}

#[derive(Debug, Clone, Serialize)]
struct UpperEntry {
    upsilon: f64,
    witness: Vec<f64>,
    theta: Vec<f64>,
    vdot_true: f64,
    vdot_vertex: f64,
}

#[derive(Debug, Clone, Serialize)]
struct Verification {
    max_residual: f64,
    min_eigenvalue: f64,
    passed: bool,
}

fn verification(cert: &Option<DoaCertificate>) -> Option<Verification> {
    cert.as_ref().map(|c| Verification {
        max_residual: c.report.max_residual,
        min_eigenvalue: c.report.min_eigenvalue,
        passed: c.report.passed,
    })
}

#[derive(Debug, Clone, Serialize)]
struct FixedResult {
    v: String,
    degree: Vec<u32>,
    tol: f64,
    level: f64,
    c_max: f64,
    probes: Vec<LevelProbe>,
    upper: Option<UpperEntry>,
    upper_error: Option<String>,
    diagnostics: Vec<String>,
    verification: Option<Verification>,
}

fn fixed_candidate(cfg: &Config, r: &Resolved) -> Result<Polynomial, CliError> {
    r.v.clone()
        .or_else(|| cfg.shape.clone())
        .ok_or_else(|| CliError::Config("no fixed V: set [options.fixed] v".into()))
}

fn upper_entry(
    v: &Polynomial,
    r: &Resolved,
    usys: &UncertainPolySystem,
    c_lo: f64,
) -> (Option<UpperEntry>, Option<String>) {
    match upper_bound(v, &r.system, usys, c_lo, r.tol) {
        Ok(u) => (
            Some(UpperEntry {
                upsilon: u.upsilon,
                witness: u.witness,
                theta: u.theta,
                vdot_true: u.vdot_true,
                vdot_vertex: u.vdot_vertex,
            }),
            None,
        ),
        Err(e) => (None, Some(e.to_string())),
    }
}

/// Largest certified level of the configured `V`, followed by the upper
/// bound search from that level.
pub fn certify_fixed(cfg: &Config, ov: &Overrides) -> Result<Outcome, CliError> {
    let r = resolve(cfg, Workflow::Fixed, ov)?;
    let v = fixed_candidate(cfg, &r)?;
    let usys = uncertain(&r)?;
    let report = fixed_v_lower(&v, &usys, &r.params, r.tol)?;
    let (upper, upper_error) = if report.certificate.is_some() {
        upper_entry(&v, &r, &usys, report.level)
    } else {
        (None, None)
    };
    let result = FixedResult {
        v: show(&v, cfg),
        degree: r.degree.clone(),
        tol: r.tol,
        level: report.level,
        c_max: report.c_max,
        probes: report.probes,
        upper,
        upper_error,
        diagnostics: report.diagnostics,
        verification: verification(&report.certificate),
    };
    let status = if report.certificate.is_some() {
        Status::Certified
    } else {
        Status::NotCertified
    };
    let archive = Archive::seal(
        "certify-fixed",
        cfg,
        r.degree.clone(),
        usys.enclosures.clone(),
        report.certificate,
    )?;
    outcome("certify-fixed", hash(cfg), status, &result, Some(archive))
}

#[derive(Debug, Clone, Serialize)]
struct UpperResult {
    v: String,
    c_lo: f64,
    tol: f64,
    upper: Option<UpperEntry>,
    error: Option<String>,
}

pub fn upper_bound_cmd(cfg: &Config, ov: &Overrides, c_lo: f64) -> Result<Outcome, CliError> {
    let r = resolve(cfg, Workflow::Fixed, ov)?;
    let v = fixed_candidate(cfg, &r)?;
    let usys = uncertain(&r)?;
    let (upper, error) = upper_entry(&v, &r, &usys, c_lo);
    let status = Status::pass(upper.is_some());
    let result = UpperResult {
        v: show(&v, cfg),
        c_lo,
        tol: r.tol,
        upper,
        error,
    };
    let archive = Archive::seal("upper-bound", cfg, r.degree.clone(), usys.enclosures.clone(), None)?;
    outcome("upper-bound", hash(cfg), status, &result, Some(archive))
}

#[derive(Debug, Clone, Serialize)]
struct SearchResult {
    deg_v: u32,
    degree: Vec<u32>,
    beta: Option<f64>,
    v: Option<String>,
    warm_start_beta: Option<f64>,
    stop_reason: String,
    history: Vec<SearchIteration>,
    verification: Option<Verification>,
}

pub fn certify_search(cfg: &Config, ov: &Overrides) -> Result<Outcome, CliError> {
    let r = resolve(cfg, Workflow::Search, ov)?;
    let g = cfg
        .shape
        .clone()
        .ok_or_else(|| CliError::Config("the V search needs [shape] g".into()))?;
    let shape = ShapeRegion::new(g, 0.0)?;
    let usys = uncertain(&r)?;
    let d = SearchOptions::default();
    let opts = SearchOptions {
        deg_v: r.deg_v,
        budget: r.budget,
        initial: r.initial_v.clone(),
        seed_weight: r.seed_weight.unwrap_or(d.seed_weight),
        free_box_multipliers: r.free_box_multipliers,
        ..d
    };
    let (result, certificate) = match search_v(&usys, &shape, &r.params, &opts) {
        Ok(rep) => (
            SearchResult {
                deg_v: r.deg_v,
                degree: r.degree.clone(),
                beta: Some(rep.beta),
                v: Some(show(&rep.v, cfg)),
                warm_start_beta: rep.warm_start_beta,
                stop_reason: rep.stop_reason,
                history: rep.history,
                verification: verification(&Some(rep.certificate.clone())),
            },
            Some(rep.certificate),
        ),
        Err(doacert_core::certify::CertifyError::Initialization(msg)) => (
            SearchResult {
                deg_v: r.deg_v,
                degree: r.degree.clone(),
                beta: None,
                v: None,
                warm_start_beta: None,
                stop_reason: msg,
                history: Vec::new(),
                verification: None,
            },
            None,
        ),
        Err(e) => return Err(e.into()),
    };
    let status = if certificate.is_some() {
        Status::Certified
    } else {
        Status::NotCertified
    };
    let archive = Archive::seal(
        "certify-search",
        cfg,
        r.degree.clone(),
        usys.enclosures.clone(),
        certificate,
    )?;
    outcome("certify-search", hash(cfg), status, &result, Some(archive))
}

fn certificate_of(archive: &Archive) -> Result<&DoaCertificate, CliError> {
    archive
        .body
        .certificate
        .as_ref()
        .ok_or_else(|| CliError::Archive(format!("the {} archive holds no certificate", archive.body.command)))
}

/// `θ` samples for simulation: the vertices of `Θ` and its midpoint.
pub fn theta_samples(sys: &SystemDef) -> Vec<Vec<f64>> {
    if sys.ntheta() == 0 {
        return Vec::new();
    }
    let mut out = sys.theta().vertices();
    out.push(sys.theta().midpoint());
    out
}

#[derive(Debug, Clone, Serialize)]
struct ValidateResult {
    level: f64,
    thetas: Vec<Vec<f64>>,
    seed: u64,
    monte_carlo: MonteCarloReport,
}

/// Monte Carlo simulation of the true dynamics from the certified set.
pub fn validate(archive: &Archive, ov: &Overrides) -> Result<Outcome, CliError> {
    let cfg = archive.config()?;
    let cert = certificate_of(archive)?;
    let r = resolve(&cfg, Workflow::Fixed, ov)?;
    let sys = SystemDef::new(
        cfg.system.equations().to_vec(),
        cfg.system.theta().clone(),
        cert.domain.clone(),
    )?;
    let thetas = theta_samples(&sys);
    let mc = monte_carlo_doa(
        &sys,
        &cert.v,
        cert.level,
        &thetas,
        r.samples,
        r.seed,
        &SimOptions::default(),
    );
    let ok = mc.converged == mc.runs && mc.level_exits == 0;
    let result = ValidateResult {
        level: cert.level,
        thetas,
        seed: r.seed,
        monte_carlo: mc,
    };
    outcome("validate", hash(&cfg), Status::pass(ok), &result, None)
}

pub fn verify(archive: &Archive) -> Result<Outcome, CliError> {
    let report: VerifyReport = archive::verify(archive);
    let status = Status::pass(report.passed);
    outcome("verify", archive.body.system_hash.clone(), status, &report, None)
}

#[derive(Debug, Clone, Serialize)]
struct BoundaryResult {
    level: f64,
    points: usize,
    gaps: usize,
}

/// Points of `{V = level}` along `count` rays, as CSV.
pub fn boundary(archive: &Archive, count: usize) -> Result<Outcome, CliError> {
    let cfg = archive.config()?;
    let cert = certificate_of(archive)?;
    let s = boundary_sample(&cert.v, cert.level, &cert.domain, count, 0);
    let mut csv = cfg.states.join(",");
    csv.push('\n');
    for p in &s.points {
        let row: Vec<String> = p.iter().map(|x| format!("{}", x)).collect();
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    let result = BoundaryResult {
        level: cert.level,
        points: s.points.len(),
        gaps: s.gaps.len(),
    };
    let mut out = outcome("boundary", hash(&cfg), Status::Pass, &result, None)?;
    out.csv = Some(csv);
    Ok(out)
}
