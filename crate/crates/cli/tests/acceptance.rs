//! Acceptance run over the bundled benchmarks. Prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails. The V searches dominate the
//! running time (several minutes on one core).

use std::path::Path;
use std::time::{Duration, Instant};

use doacert::commands::{self, Outcome, Overrides};
use doacert::{Archive, Config, Workflow};
use doacert_core::approx::{enclose, Box, ElementaryFunction, FunctionKind};
use doacert_core::certify::{fixed_v_lower, substitute, upper_bound, RelaxationParams, SystemDef};
use doacert_core::poly::monomial_basis;
use doacert_core::sdp::{solve_sos, AffinePoly, SolverOptions, SosProgram};
use doacert_core::{Monomial, Polynomial};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn config(name: &str) -> Config {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    Config::parse(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

fn f64_at(v: &Value, path: &[&str]) -> Option<f64> {
    path.iter().try_fold(v, |acc, k| acc.get(*k)).and_then(Value::as_f64)
}

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: u32, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("criterion {:>2}: {} {}", id, if ok { "PASS" } else { "FAIL" }, detail);
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed())
}

fn enclosure_entries(out: &Outcome) -> Vec<Value> {
    out.record.result["enclosures"].as_array().cloned().unwrap_or_default()
}

fn cos_benchmark(r: &mut Report) {
    let cfg = config("example2.toml");
    let (out, took) = timed(|| commands::approx(&cfg, &Overrides::default()).unwrap());
    let e = &enclosure_entries(&out)[0];
    let c: Vec<f64> = e["coefficients"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    let expected = [1.0, 0.0, -0.5, 0.0, 0.0416525, 0.0, -0.00134386];
    let coeff_err = c.iter().zip(expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let b = e["bound"].as_f64().unwrap();
    let viol = e["max_violation"].as_f64().unwrap();
    let samples = out.record.result["samples"].as_u64().unwrap();
    let ok = c.len() == 7
        && coeff_err <= 1e-4
        && b <= 6.72e-5
        && viol <= 0.0
        && samples >= 10_000
        && took.as_secs_f64() < 1.0;
    r.line(
        1,
        ok,
        format!(
            "coeff err {:.2e}, b {:.3e}, violation {:.2e} over {} samples, {:.3}s",
            coeff_err,
            b,
            viol,
            samples,
            took.as_secs_f64()
        ),
    );
}

fn interpolation_vs_taylor(r: &mut Report) {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["example2.toml", "example4.toml", "example5.toml"] {
        let out = commands::approx(&config(name), &Overrides::default()).unwrap();
        for e in enclosure_entries(&out) {
            let (b, t) = (
                e["bound"].as_f64().unwrap(),
                e["taylor_bound"].as_f64().unwrap_or(f64::INFINITY),
            );
            ok &= b < t;
            parts.push(format!("{} {:.2e}<{:.2e}", e["function"].as_str().unwrap(), b, t));
        }
    }
    r.line(2, ok, parts.join(", "));
}

/// Runs `certify-fixed` and checks `c ≥ c_min`, `c ≤ υ`, `υ` in range and a
/// non-decreasing witness.
fn fixed(r: &mut Report, id: u32, name: &str, c_min: f64, ups: (f64, f64), max_secs: Option<f64>) -> Option<Archive> {
    let cfg = config(name);
    let (out, took) = timed(|| commands::certify_fixed(&cfg, &Overrides::default()));
    let out = match out {
        Ok(o) => o,
        Err(e) => {
            r.line(id, false, format!("{}: {}", name, e));
            return None;
        }
    };
    let res = &out.record.result;
    let c = f64_at(res, &["level"]).unwrap_or(0.0);
    let u = f64_at(res, &["upper", "upsilon"]).unwrap_or(f64::NAN);
    let w = f64_at(res, &["upper", "vdot_true"]).unwrap_or(f64::NAN);
    let in_time = max_secs.is_none_or(|s| took.as_secs_f64() < s);
    let ok = out.exit_code() == 0 && c >= c_min && c <= u && (ups.0..=ups.1).contains(&u) && w >= 0.0 && in_time;
    r.line(
        id,
        ok,
        format!(
            "c {:.6}, upsilon {:.6}, witness vdot {:.2e}, {:.1}s",
            c,
            u,
            w,
            took.as_secs_f64()
        ),
    );
    (out.exit_code() == 0).then(|| out.archive.unwrap())
}

fn search(name: &str, deg_v: u32) -> (Option<f64>, Option<Archive>, f64) {
    let ov = Overrides {
        deg_v: Some(deg_v),
        ..Overrides::default()
    };
    let (out, took) = timed(|| commands::certify_search(&config(name), &ov));
    match out {
        Ok(o) if o.exit_code() == 0 => (f64_at(&o.record.result, &["beta"]), o.archive, took.as_secs_f64()),
        _ => (None, None, took.as_secs_f64()),
    }
}

fn search_pair(r: &mut Report, id: u32, name: &str, mins: &[(u32, f64)], archives: &mut Vec<(String, Archive)>) {
    let mut ok = true;
    let mut parts = Vec::new();
    for &(deg_v, min) in mins {
        let (beta, archive, secs) = search(name, deg_v);
        ok &= beta.is_some_and(|b| b >= min);
        parts.push(format!(
            "degV {}: beta {} (need {}) {:.0}s",
            deg_v,
            beta.map_or("none".into(), |b| format!("{:.4}", b)),
            min,
            secs
        ));
        if let Some(a) = archive {
            archives.push((format!("{} degV {}", name, deg_v), a));
        }
    }
    r.line(id, ok, parts.join("; "));
}

fn cubic_scalar(r: &mut Report) {
    let sys = SystemDef::polynomial(
        vec![Polynomial::parse("-x1 + x1^3", 1).unwrap()],
        Box::symmetric(&[2.0]).unwrap(),
    )
    .unwrap();
    let usys = substitute(&sys, &[]).unwrap();
    let v = Polynomial::parse("x1^2", 1).unwrap();
    let c = fixed_v_lower(&v, &usys, &RelaxationParams::default(), 1e-4)
        .map(|l| l.level)
        .unwrap_or(0.0);
    let u = upper_bound(&v, &sys, &usys, c, 1e-4)
        .map(|u| u.upsilon)
        .unwrap_or(f64::NAN);
    r.line(
        8,
        (0.98..=1.0).contains(&c) && (1.0..=1.02).contains(&u),
        format!("c {:.5}, upsilon {:.5}", c, u),
    );
}

fn random_poly(rng: &mut ChaCha8Rng, n: usize, deg: u32) -> Polynomial {
    let mut p = Polynomial::zero(n);
    for m in monomial_basis(n, deg) {
        p.add_term(m, rng.gen_range(-1.0..1.0));
    }
    p
}

/// `Σ q_k² + 0.05·(1 + Σ x_i^{2h})` for random `q_k` of degree `h`.
fn sos_case(rng: &mut ChaCha8Rng) -> Polynomial {
    let n = rng.gen_range(1..3);
    let half = rng.gen_range(1..3);
    let mut p = Polynomial::constant(n, 0.05);
    for i in 0..n {
        let mut e = vec![0; n];
        e[i] = 2 * half;
        p.add_term(Monomial::new(e), 0.05);
    }
    for _ in 0..3 {
        let q = random_poly(rng, n, half);
        p = &p + &(&q * &q);
    }
    p
}

fn sos_certified(p: &Polynomial) -> bool {
    let mut prog = SosProgram::new(p.nvars());
    prog.require_sos("p", AffinePoly::constant(p.clone()));
    solve_sos(&prog, &SolverOptions::default())
        .map(|o| o.certified())
        .unwrap_or(false)
}

/// 20 sums of squares that must be accepted and 10 non-SOS polynomials
/// (negative somewhere, or Motzkin) that must be rejected.
fn sos_library(rng: &mut ChaCha8Rng) -> (usize, usize) {
    let accepted = (0..20).filter(|_| sos_certified(&sos_case(rng))).count();
    let mut negative: Vec<Polynomial> = (0..9)
        .map(|_| {
            let s = sos_case(rng);
            let x0: Vec<f64> = (0..s.nvars()).map(|i| 0.3 * (i as f64 + 1.0)).collect();
            &s - &Polynomial::constant(s.nvars(), s.eval(&x0) + 0.5)
        })
        .collect();
    negative.push(Polynomial::parse("x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1", 2).unwrap());
    let rejected = negative.iter().filter(|p| !sos_certified(p)).count();
    (accepted, rejected)
}

/// Enclosure soundness and inclusion over every bundled config and workflow.
fn bundled_soundness() -> (usize, usize) {
    let (mut unsound, mut excluded) = (0, 0);
    for name in ["example2.toml", "example4.toml", "example5.toml", "example6.toml"] {
        let cfg = config(name);
        for e in enclosure_entries(&commands::approx(&cfg, &Overrides::default()).unwrap()) {
            unsound += usize::from(e["max_violation"].as_f64().unwrap() > 0.0);
        }
        for w in [Workflow::Fixed, Workflow::Search] {
            let out = commands::substitute_cmd(&cfg, w, &Overrides::default()).unwrap();
            excluded += out.record.result["inclusion"]["violations"].as_u64().unwrap() as usize;
        }
    }
    (unsound, excluded)
}

/// A quick sweep of the randomized properties (the full suites run as their
/// own test targets), then simulation from every certified set.
fn properties_and_simulation(r: &mut Report, archives: &[(String, Archive)]) {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let kinds = [FunctionKind::Sin, FunctionKind::Cos, FunctionKind::Exp];
    let mut unsound = 0;
    for _ in 0..100 {
        let kind = kinds[rng.gen_range(0..3)];
        let scale = rng.gen_range(0.5..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let rad = rng.gen_range(0.2..2.0);
        let d = rng.gen_range(3..9);
        let e = enclose(
            &ElementaryFunction::new(kind, 0, scale),
            &Box::symmetric(&[rad]).unwrap(),
            d,
        )
        .unwrap();
        let g = e.gamma.exponents()[0] as i32;
        for _ in 0..500 {
            let x: f64 = rng.gen_range(-rad..=rad);
            let t = scale * x;
            let exact = match kind {
                FunctionKind::Sin => t.sin(),
                FunctionKind::Cos => t.cos(),
                _ => t.exp(),
            };
            if (exact - e.p.eval(&[x])).abs() > e.bound * x.abs().powi(g) + 1e-14 {
                unsound += 1;
            }
        }
    }
    let mut ring_errors = 0;
    let (a, b) = (
        Polynomial::parse("x1^2 - 3*x1*x2 + 0.5", 2).unwrap(),
        Polynomial::parse("x2^3 + x1 - 1", 2).unwrap(),
    );
    for _ in 0..1000 {
        let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let lhs = (&a * &b).eval(&x);
        if (lhs - a.eval(&x) * b.eval(&x)).abs() > 1e-9 * (1.0 + lhs.abs()) {
            ring_errors += 1;
        }
    }

    let (accepted, rejected) = sos_library(&mut rng);
    let (unsound_bundled, excluded) = bundled_soundness();

    let ov = Overrides {
        samples: Some(1000),
        seed: Some(42),
        ..Overrides::default()
    };
    let mut ok = unsound == 0
        && ring_errors == 0
        && accepted == 20
        && rejected == 10
        && unsound_bundled == 0
        && excluded == 0
        && !archives.is_empty();
    let mut parts = vec![format!(
        "SOS {}/20 accepted {}/10 rejected, random enclosure violations {}, product errors {}/1000, \
         bundled enclosure violations {}, inclusion violations {}",
        accepted, rejected, unsound, ring_errors, unsound_bundled, excluded
    )];
    for (label, a) in archives {
        let out = commands::validate(a, &ov).unwrap();
        let mc = &out.record.result["monte_carlo"];
        ok &= out.exit_code() == 0;
        parts.push(format!(
            "{}: {}/{} converged, {} exits",
            label, mc["converged"], mc["runs"], mc["level_exits"]
        ));
    }
    r.line(9, ok, parts.join("; "));
}

fn archives_reverify(r: &mut Report, archives: &[(String, Archive)]) {
    let mut ok = !archives.is_empty();
    let mut bad = Vec::new();
    for (label, a) in archives {
        let round = Archive::from_json(&a.to_json().unwrap()).unwrap();
        if commands::verify(&round).unwrap().exit_code() != 0 {
            ok = false;
            bad.push(label.clone());
        }
    }
    // injected fault: a level 5% above the certified one, resealed
    let mut faulty = archives[0].1.clone();
    faulty.body.certificate.as_mut().unwrap().level *= 1.05;
    faulty.reseal().unwrap();
    let caught = commands::verify(&faulty).unwrap().exit_code() != 0;
    ok &= caught;
    r.line(
        10,
        ok,
        format!(
            "{} archives re-verified, failures {:?}, injected fault caught: {}",
            archives.len(),
            bad,
            caught
        ),
    );
}

fn main() {
    let mut r = Report { failed: 0 };
    let mut archives = Vec::new();
    cos_benchmark(&mut r);
    interpolation_vs_taylor(&mut r);
    if let Some(a) = fixed(&mut r, 3, "example4.toml", 0.315, (0.3210, 0.3226), Some(60.0)) {
        archives.push(("example4 fixed".to_string(), a));
    }
    if let Some(a) = fixed(&mut r, 4, "example5.toml", 0.695, (0.6990, 0.7010), None) {
        archives.push(("example5 fixed".to_string(), a));
    }
    search_pair(&mut r, 5, "example4.toml", &[(2, 1.00), (4, 1.28)], &mut archives);
    search_pair(&mut r, 6, "example5.toml", &[(2, 0.281), (4, 1.12)], &mut archives);
    search_pair(&mut r, 7, "example6.toml", &[(4, 0.60)], &mut archives);
    cubic_scalar(&mut r);
    properties_and_simulation(&mut r, &archives);
    if archives.is_empty() {
        r.line(10, false, "no certified archives".into());
    } else {
        archives_reverify(&mut r, &archives);
    }
    println!("{} of 10 criteria failed", r.failed);
    if r.failed > 0 {
        std::process::exit(1);
    }
}
