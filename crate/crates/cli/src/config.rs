//! System definition files.
//!
//! A config is TOML with the sections `[variables]`, `[dynamics]`, `[theta]`,
//! `[domain]`, `[shape]` and `[options]`. Right-hand sides are polynomials in
//! the text form of `doacert-core`, with transcendental terms written as
//! `coeff*name(scale*var)` for a catalog function `name`:
//!
//! ```toml
//! [variables]
//! states = ["x1", "x2"]
//!
//! [dynamics]
//! x1 = "x2"
//! x2 = "-theta*x2 - 10*sin(x1)"
//!
//! [theta]
//! theta = [0.2, 1.0]
//!
//! [domain]
//! x1 = [-2.4, 2.4]
//! x2 = [-6.0, 6.0]
//! ```
//!
//! `[options]` holds defaults for every workflow; the sub-tables
//! `[options.approx]`, `[options.fixed]` and `[options.search]` override them
//! per workflow, and `[options.search.deg4]` (any `degN`) per degree of `V`.

use std::collections::BTreeMap;

use doacert_core::approx::{Box, ElementaryFunction, FunctionKind};
use doacert_core::certify::{Equation, RelaxationParams, SystemDef, Term, ThetaDomain, ThetaMode};
use doacert_core::poly::parse_terms;
use doacert_core::Polynomial;
use serde::Deserialize;
use toml::Table;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    variables: RawVariables,
    dynamics: Table,
    #[serde(default)]
    theta: Table,
    domain: Table,
    #[serde(default)]
    shape: Option<RawShape>,
    #[serde(default)]
    options: RawOptions,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVariables {
    states: Vec<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawShape {
    g: String,
}

/// Workflow knobs; every field is optional so that sub-tables only need to
/// name what they change.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct RawOptions {
    pub degree: Option<Degrees>,
    pub tol: Option<f64>,
    pub deg_v: Option<u32>,
    pub budget: Option<usize>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    /// Fixed Lyapunov candidate.
    pub v: Option<String>,
    /// Starting point of the `V` search.
    pub initial_v: Option<String>,
    pub domain: Option<Table>,
    pub epsilon: Option<f64>,
    pub m: Option<u32>,
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
    pub delta3: Option<f64>,
    pub multiplier_degree: Option<u32>,
    pub box_multipliers: Option<bool>,
    /// Search only: re-solve box multipliers in the `V` step.
    pub free_box_multipliers: Option<bool>,
    /// Search only: weight of the higher-degree seed term.
    pub seed_weight: Option<f64>,
    pub theta_mode: Option<String>,
    pub approx: Option<std::boxed::Box<RawOptions>>,
    pub fixed: Option<std::boxed::Box<RawOptions>>,
    pub search: Option<std::boxed::Box<RawOptions>>,
    /// `degN` tables of the search, and anything misspelled.
    #[serde(flatten)]
    pub by_degree: BTreeMap<String, toml::Value>,
}

/// One degree for all functions, or one per distinct function.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Degrees {
    One(u32),
    Each(Vec<u32>),
}

impl Degrees {
    pub fn to_vec(&self) -> Vec<u32> {
        match self {
            Degrees::One(d) => vec![*d],
            Degrees::Each(v) => v.clone(),
        }
    }
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl RawOptions {
    fn overlay(&mut self, top: &RawOptions) {
        overlay!(
            self,
            top,
            degree,
            tol,
            deg_v,
            budget,
            seed,
            samples,
            v,
            initial_v,
            domain,
            epsilon,
            m,
            delta1,
            delta2,
            delta3,
            multiplier_degree,
            box_multipliers,
            free_box_multipliers,
            seed_weight,
            theta_mode
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Workflow {
    Approx,
    Fixed,
    Search,
}

/// Options resolved for one workflow run.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub degree: Vec<u32>,
    pub tol: f64,
    pub deg_v: u32,
    pub budget: usize,
    pub seed: u64,
    pub samples: usize,
    pub v: Option<Polynomial>,
    pub initial_v: Option<Polynomial>,
    pub free_box_multipliers: bool,
    pub seed_weight: Option<f64>,
    pub params: RelaxationParams,
    /// The system on the workflow's working box.
    pub system: SystemDef,
}

/// A parsed system definition.
#[derive(Debug, Clone)]
pub struct Config {
    /// The file contents, verbatim.
    pub source: String,
    pub states: Vec<String>,
    pub theta_names: Vec<String>,
    pub system: SystemDef,
    pub shape: Option<Polynomial>,
    options: RawOptions,
}

pub const DEFAULT_DEGREE: u32 = 6;
pub const DEFAULT_TOL: f64 = 1e-4;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_SAMPLES: usize = 1000;

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        let states = raw.variables.states.clone();
        if states.is_empty() {
            return Err(config_err("[variables] states is empty"));
        }
        let mut theta_names = Vec::new();
        let (mut lo, mut hi) = (Vec::new(), Vec::new());
        for (name, value) in &raw.theta {
            let (a, b) =
                interval(value).ok_or_else(|| config_err(format!("[theta] {}: expected [lower, upper]", name)))?;
            theta_names.push(name.clone());
            lo.push(a);
            hi.push(b);
        }
        let mut names: Vec<&str> = states.iter().map(String::as_str).collect();
        names.extend(theta_names.iter().map(String::as_str));
        if let Some(dup) = names.iter().enumerate().find(|(i, n)| names[..*i].contains(n)) {
            return Err(config_err(format!("variable '{}' declared twice", dup.1)));
        }
        let theta = if theta_names.is_empty() {
            ThetaDomain::none()
        } else {
            ThetaDomain::new(lo, hi).map_err(|e| config_err(format!("[theta]: {}", e)))?
        };
        let domain = parse_box(&raw.domain, &states, "[domain]")?;

        let mut equations = Vec::with_capacity(states.len());
        for s in &states {
            let rhs = raw
                .dynamics
                .get(s)
                .ok_or_else(|| config_err(format!("[dynamics] has no equation for {}", s)))?
                .as_str()
                .ok_or_else(|| config_err(format!("[dynamics] {}: expected a string", s)))?;
            equations.push(parse_equation(rhs, &names, states.len()).map_err(|e| match e {
                CliError::Config(m) => config_err(format!("[dynamics] {}: {}", s, m)),
                other => other,
            })?);
        }
        if let Some(extra) = raw.dynamics.keys().find(|k| !states.contains(k)) {
            return Err(config_err(format!("[dynamics] {}: not a state", extra)));
        }
        let system = SystemDef::new(equations, theta, domain).map_err(|e| config_err(e.to_string()))?;
        let shape = match &raw.shape {
            Some(s) => Some(parse_state_poly(&s.g, &states, "[shape] g")?),
            None => None,
        };
        let cfg = Config {
            source: text.to_string(),
            states,
            theta_names,
            system,
            shape,
            options: raw.options,
        };
        // surface option errors at load time
        for w in [Workflow::Approx, Workflow::Fixed, Workflow::Search] {
            cfg.resolve(w, None)?;
        }
        let per_degree = cfg
            .options
            .search
            .as_ref()
            .map(|s| s.by_degree.keys().cloned().collect::<Vec<_>>());
        for key in per_degree.unwrap_or_default() {
            if let Some(d) = key.strip_prefix("deg").and_then(|d| d.parse().ok()) {
                cfg.resolve(Workflow::Search, Some(d))?;
            }
        }
        Ok(cfg)
    }

    pub fn nvars(&self) -> usize {
        self.states.len()
    }

    /// Options for `workflow` (and, for the search, the given degree of `V`),
    /// before command-line overrides.
    pub fn resolve(&self, workflow: Workflow, deg_v: Option<u32>) -> Result<Resolved, CliError> {
        let mut o = self.options.clone();
        let sub = match workflow {
            Workflow::Approx => self.options.approx.as_deref(),
            Workflow::Fixed => self.options.fixed.as_deref(),
            Workflow::Search => self.options.search.as_deref(),
        };
        if let Some(sub) = sub {
            o.overlay(sub);
            let dv = deg_v.or(o.deg_v);
            if let Some(by) = dv.and_then(|d| sub.by_degree.get(&format!("deg{}", d))) {
                let by: RawOptions = by
                    .clone()
                    .try_into()
                    .map_err(|e| config_err(format!("[options.search.deg{}]: {}", dv.unwrap_or(0), e)))?;
                if let Some(bad) = by.by_degree.keys().next() {
                    return Err(config_err(format!(
                        "[options.search.deg{}]: unknown key '{}'",
                        dv.unwrap_or(0),
                        bad
                    )));
                }
                o.overlay(&by);
            }
        }
        let tables = [
            ("[options]", Some(&self.options), false),
            ("[options.approx]", self.options.approx.as_deref(), false),
            ("[options.fixed]", self.options.fixed.as_deref(), false),
            ("[options.search]", self.options.search.as_deref(), true),
        ];
        for (name, table, per_degree) in tables {
            let Some(t) = table else { continue };
            if let Some(bad) = t.by_degree.keys().find(|k| !(per_degree && is_degree_key(k))) {
                return Err(config_err(format!("{}: unknown key '{}'", name, bad)));
            }
        }
        let params = self.params(&o)?;
        let system = match &o.domain {
            Some(t) => {
                let b = parse_box(t, &self.states, "[options] domain")?;
                SystemDef::new(self.system.equations().to_vec(), self.system.theta().clone(), b)
                    .map_err(|e| config_err(e.to_string()))?
            }
            None => self.system.clone(),
        };
        let tol = o.tol.unwrap_or(DEFAULT_TOL);
        if !(tol > 0.0 && tol < 1.0) {
            return Err(config_err(format!("tol must lie in (0, 1), got {}", tol)));
        }
        let degree = o
            .degree
            .as_ref()
            .map(Degrees::to_vec)
            .unwrap_or_else(|| vec![DEFAULT_DEGREE]);
        if degree.contains(&0) {
            return Err(config_err("degrees must be positive"));
        }
        let deg_v = deg_v.or(o.deg_v).unwrap_or(2);
        Ok(Resolved {
            degree,
            tol,
            deg_v,
            budget: o.budget.unwrap_or(30),
            seed: o.seed.unwrap_or(DEFAULT_SEED),
            samples: o.samples.unwrap_or(DEFAULT_SAMPLES),
            v: o.v
                .as_deref()
                .map(|t| parse_state_poly(t, &self.states, "v"))
                .transpose()?,
            initial_v: o
                .initial_v
                .as_deref()
                .map(|t| parse_state_poly(t, &self.states, "initial_v"))
                .transpose()?,
            free_box_multipliers: o.free_box_multipliers.unwrap_or(false),
            seed_weight: o.seed_weight,
            params,
            system,
        })
    }

    fn params(&self, o: &RawOptions) -> Result<RelaxationParams, CliError> {
        let d = RelaxationParams::default();
        let theta_mode = match o.theta_mode.as_deref() {
            None | Some("vertices") => ThetaMode::Vertices,
            Some("s-procedure") => ThetaMode::SProcedure,
            Some(other) => {
                return Err(config_err(format!(
                    "theta_mode '{}' is not 'vertices' or 's-procedure'",
                    other
                )))
            }
        };
        let p = RelaxationParams {
            epsilon: o.epsilon.unwrap_or(d.epsilon),
            m: o.m.unwrap_or(d.m),
            delta1: o.delta1.unwrap_or(d.delta1),
            delta2: o.delta2.unwrap_or(d.delta2),
            delta3: o.delta3.unwrap_or(d.delta3),
            multiplier_degree: o.multiplier_degree.or(d.multiplier_degree),
            box_multipliers: o.box_multipliers.unwrap_or(d.box_multipliers),
            theta_mode,
        };
        p.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(p)
    }
}

fn is_degree_key(k: &str) -> bool {
    k.strip_prefix("deg")
        .is_some_and(|d| !d.is_empty() && d.chars().all(|c| c.is_ascii_digit()))
}

fn interval(v: &toml::Value) -> Option<(f64, f64)> {
    let a = v.as_array()?;
    let num = |x: &toml::Value| x.as_float().or_else(|| x.as_integer().map(|i| i as f64));
    match a.as_slice() {
        [l, u] => Some((num(l)?, num(u)?)),
        _ => None,
    }
}

fn parse_box(t: &Table, states: &[String], section: &str) -> Result<Box, CliError> {
    let mut lo = Vec::with_capacity(states.len());
    let mut hi = Vec::with_capacity(states.len());
    for s in states {
        let v = t
            .get(s)
            .ok_or_else(|| config_err(format!("{} has no interval for {}", section, s)))?;
        let (a, b) = interval(v).ok_or_else(|| config_err(format!("{} {}: expected [lower, upper]", section, s)))?;
        lo.push(a);
        hi.push(b);
    }
    if let Some(extra) = t.keys().find(|k| !states.contains(k)) {
        return Err(config_err(format!("{} {}: not a state", section, extra)));
    }
    Box::new(lo, hi).map_err(|e| config_err(format!("{}: {}", section, e)))
}

/// A polynomial in the states only.
pub fn parse_state_poly(text: &str, states: &[String], what: &str) -> Result<Polynomial, CliError> {
    let names: Vec<&str> = states.iter().map(String::as_str).collect();
    Polynomial::parse_with_names(text, &names).map_err(|e| config_err(format!("{}: {}", what, e)))
}

/// `x_k` or `c·x_k` as an elementary-function argument.
fn scaled_state(arg: &Polynomial, n: usize) -> Option<(usize, f64)> {
    let mut terms = arg.terms();
    let (m, c) = terms.next()?;
    if terms.next().is_some() || m.degree() != 1 {
        return None;
    }
    let var = m.exponents().iter().position(|e| *e == 1)?;
    (var < n && c != 0.0).then_some((var, c))
}

fn parse_equation(text: &str, names: &[&str], n: usize) -> Result<Equation, CliError> {
    let nv = names.len();
    let parsed = parse_terms(text, names).map_err(|e| config_err(e.to_string()))?;
    let mut poly = Polynomial::zero(nv);
    let mut terms: Vec<Term> = Vec::new();
    for t in parsed {
        let Some(call) = t.call else {
            poly = &poly + &t.coeff;
            continue;
        };
        let kind = FunctionKind::from_name(&call.name)
            .map_err(|_| config_err(format!("unknown catalog function '{}' at byte {}", call.name, call.pos)))?;
        let (var, scale) = scaled_state(&call.arg, n).ok_or_else(|| {
            config_err(format!(
                "argument of {} at byte {} must be a state times a constant",
                call.name, call.pos
            ))
        })?;
        let function = ElementaryFunction::new(kind, var, scale);
        match terms.iter_mut().find(|t| t.function == function) {
            Some(existing) => existing.coeff = &existing.coeff + &t.coeff,
            None => terms.push(Term {
                coeff: t.coeff,
                function,
            }),
        }
    }
    Ok(Equation { poly, terms })
}
