//! Numerical cross-checks against the true (non-polynomial) dynamics:
//! fixed-step RK4 trajectories, Monte Carlo sampling of certified sets and
//! sampled inclusion of the true field in the uncertain polynomial one.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::approx::Box;
use crate::boundary;
use crate::certify::{SystemDef, UncertainPolySystem};
use crate::math;
use crate::poly::Polynomial;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// `‖x‖` fell below the convergence radius.
    Converged,
    /// Left the escape box or became non-finite.
    Diverged,
    TimeOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().map(|s| s.as_slice()).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub t_end: f64,
    pub h: f64,
    pub converge_radius: f64,
    /// A step changing some coordinate by more than this is redone in halves.
    pub max_change: f64,
    /// Trajectories leaving `escape_factor · Ψ` count as diverged.
    pub escape_factor: f64,
    /// Keep every k-th state in the recorded trajectory.
    pub record_every: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            t_end: 100.0,
            h: 1e-3,
            converge_radius: 1e-3,
            max_change: 0.1,
            escape_factor: 10.0,
            record_every: 1,
        }
    }
}

/// Halvings before a step is declared divergent.
const MAX_HALVINGS: u32 = 30;

fn rk4(sys: &SystemDef, x: &[f64], theta: &[f64], h: f64) -> Vec<f64> {
    let axpy = |a: &[f64], k: &[f64], s: f64| -> Vec<f64> { a.iter().zip(k).map(|(a, k)| a + s * k).collect() };
    let k1 = sys.eval(x, theta);
    let k2 = sys.eval(&axpy(x, &k1, 0.5 * h), theta);
    let k3 = sys.eval(&axpy(x, &k2, 0.5 * h), theta);
    let k4 = sys.eval(&axpy(x, &k3, h), theta);
    (0..x.len())
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Advances by `h`, split into `2^k` equal substeps so that no substep moves
/// a coordinate by more than `max_change`.
fn advance(sys: &SystemDef, x: &[f64], theta: &[f64], h: f64, max_change: f64) -> Option<Vec<f64>> {
    let mut pieces = 1u32;
    'outer: for _ in 0..=MAX_HALVINGS {
        let dt = h / pieces as f64;
        let mut y = x.to_vec();
        for _ in 0..pieces {
            let z = rk4(sys, &y, theta, dt);
            if z.iter().any(|v| !v.is_finite()) {
                return None;
            }
            if z.iter().zip(&y).any(|(a, b)| math::abs(a - b) > max_change) {
                pieces *= 2;
                continue 'outer;
            }
            y = z;
        }
        return Some(y);
    }
    None
}

/// Steps a trajectory, calling `visit(t, x)` on every accepted state until it
/// returns `false` or the run terminates.
fn integrate<F: FnMut(f64, &[f64]) -> bool>(
    sys: &SystemDef,
    x0: &[f64],
    theta: &[f64],
    opts: &SimOptions,
    mut visit: F,
) -> Termination {
    let escape = sys.domain().scaled(opts.escape_factor);
    let steps = math::ceil(opts.t_end / opts.h) as usize;
    let mut x = x0.to_vec();
    if !visit(0.0, &x) {
        return Termination::TimeOut;
    }
    for k in 1..=steps {
        if math::norm2(&x) <= opts.converge_radius {
            return Termination::Converged;
        }
        x = match advance(sys, &x, theta, opts.h, opts.max_change) {
            Some(y) if escape.contains(&y) => y,
            _ => return Termination::Diverged,
        };
        if !visit(k as f64 * opts.h, &x) {
            return Termination::TimeOut;
        }
    }
    if math::norm2(&x) <= opts.converge_radius {
        Termination::Converged
    } else {
        Termination::TimeOut
    }
}

/// Classical RK4 trajectory of the true dynamics from `x0` at parameter `θ`.
pub fn simulate(sys: &SystemDef, x0: &[f64], theta: &[f64], opts: &SimOptions) -> Trajectory {
    let every = opts.record_every.max(1);
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut count = 0usize;
    let mut last = (0.0, x0.to_vec());
    let termination = integrate(sys, x0, theta, opts, |t, x| {
        if count.is_multiple_of(every) {
            times.push(t);
            states.push(x.to_vec());
        }
        count += 1;
        last = (t, x.to_vec());
        true
    });
    if times.last() != Some(&last.0) {
        times.push(last.0);
        states.push(last.1);
    }
    Trajectory {
        times,
        states,
        termination,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    /// Initial points drawn inside `{V ≤ level} ∩ Ψ`.
    pub points: usize,
    /// Trajectories simulated (`points × θ samples`).
    pub runs: usize,
    pub converged: usize,
    /// Runs where `V` rose above the level at some step.
    pub level_exits: usize,
    pub fraction: f64,
    /// Initial states (with their `θ`) of runs that failed to converge.
    pub failures: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Relative slack on `V ≤ level` along trajectories, for integration error.
const EXIT_SLACK: f64 = 1e-9;

/// Samples `count` points uniformly from `{V ≤ level} ∩ Ψ` by rejection from
/// the bounding box of the level set.
pub fn sample_sublevel(v: &Polynomial, level: f64, domain: &Box, count: usize, seed: u64) -> Vec<Vec<f64>> {
    if level <= 0.0 || count == 0 {
        return Vec::new();
    }
    let n = domain.dim();
    let rim = boundary::boundary_sample(v, level, domain, if n <= 2 { 720 } else { 2000 }, seed);
    let (mut lo, mut hi) = (domain.lower().to_vec(), domain.upper().to_vec());
    if rim.gaps.is_empty() && !rim.points.is_empty() {
        for i in 0..n {
            // a little room for the curvature between sampled rays
            let reach = |sel: fn(f64, f64) -> f64| rim.points.iter().map(|p| p[i]).fold(0.0, sel);
            let (a, b) = (reach(f64::min), reach(f64::max));
            let pad = 0.05 * (b - a);
            lo[i] = lo[i].max(a - pad);
            hi[i] = hi[i].min(b + pad);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut tries = 0usize;
    while out.len() < count && tries < 10_000 * count {
        tries += 1;
        let x: Vec<f64> = (0..n).map(|i| lo[i] + (hi[i] - lo[i]) * rng.gen::<f64>()).collect();
        if v.eval(&x) <= level && domain.contains(&x) {
            out.push(x);
        }
    }
    out
}

/// Simulates `count` uniform initial points of `{V ≤ level} ∩ Ψ` at every
/// given `θ`, counting convergent runs and runs whose `V` leaves the level.
/// An empty sample set gives the vacuous fraction 1.
pub fn monte_carlo_doa(
    sys: &SystemDef,
    v: &Polynomial,
    level: f64,
    thetas: &[Vec<f64>],
    count: usize,
    seed: u64,
    opts: &SimOptions,
) -> MonteCarloReport {
    let points = sample_sublevel(v, level, sys.domain(), count, seed);
    let no_theta = [Vec::new()];
    let thetas = if thetas.is_empty() { &no_theta[..] } else { thetas };
    let bound = level + EXIT_SLACK * (1.0 + math::abs(level));
    let mut report = MonteCarloReport {
        points: points.len(),
        runs: 0,
        converged: 0,
        level_exits: 0,
        fraction: 1.0,
        failures: Vec::new(),
    };
    for x0 in &points {
        for th in thetas {
            let mut exited = false;
            let end = integrate(sys, x0, th, opts, |_, x| {
                if v.eval(x) > bound {
                    exited = true;
                }
                true
            });
            report.runs += 1;
            if exited {
                report.level_exits += 1;
            }
            if end == Termination::Converged {
                report.converged += 1;
            } else {
                report.failures.push((x0.clone(), th.clone()));
            }
        }
    }
    if report.runs > 0 {
        report.fraction = report.converged as f64 / report.runs as f64;
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    pub samples: usize,
    pub violations: usize,
    /// Largest distance of a true `f_i` outside the hull of `f̂_i` (0 if none).
    pub max_violation: f64,
}

/// Inclusion violations below this are rounding noise.
pub const INCLUSION_TOL: f64 = 1e-9;

/// Checks at `count` uniform `(x, θ) ∈ Ψ × Θ` that each true `f_i` lies in
/// the range of `f̂_i` over the uncertainty box.
pub fn inclusion_check(sys: &SystemDef, usys: &UncertainPolySystem, count: usize, seed: u64) -> InclusionReport {
    let n = sys.nvars();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = InclusionReport {
        samples: count,
        violations: 0,
        max_violation: 0.0,
    };
    for _ in 0..count {
        let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let x = sys.domain().lerp(&w);
        let th = sys.theta().sample(&mut rng);
        let f = sys.eval(&x, &th);
        for (fi, (lo, hi)) in f.iter().zip(usys.hull(&x, &th)) {
            let out = (lo - fi).max(fi - hi).max(0.0);
            if out > INCLUSION_TOL * (1.0 + math::abs(*fi)) {
                report.violations += 1;
            }
            report.max_violation = report.max_violation.max(out);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::{ElementaryFunction, FunctionKind};
    use crate::certify::{substitute, Equation, Term, ThetaDomain};
    use core::f64::consts::PI;

    fn pendulum() -> SystemDef {
        // ẋ₁ = x₂, ẋ₂ = −θ x₂ − 10 sin x₁
        let x2 = Polynomial::parse("x2", 3).unwrap();
        let eqs = alloc::vec![
            Equation {
                poly: x2.clone(),
                terms: Vec::new(),
            },
            Equation {
                poly: Polynomial::parse("-x3*x2", 3).unwrap(),
                terms: alloc::vec![Term {
                    coeff: Polynomial::constant(3, -10.0),
                    function: ElementaryFunction::new(FunctionKind::Sin, 0, 1.0),
                }],
            },
        ];
        let theta = ThetaDomain::new(alloc::vec![0.2], alloc::vec![1.0]).unwrap();
        SystemDef::new(eqs, theta, Box::symmetric(&[2.4, 6.0]).unwrap()).unwrap()
    }

    #[test]
    fn origin_stays_put() {
        let t = simulate(&pendulum(), &[0.0, 0.0], &[0.6], &SimOptions::default());
        assert_eq!(t.termination, Termination::Converged);
        assert_eq!(t.last(), &[0.0, 0.0]);
    }

    #[test]
    fn damped_pendulum_converges() {
        let opts = SimOptions {
            record_every: 100,
            ..SimOptions::default()
        };
        let t = simulate(&pendulum(), &[1.2, 0.0], &[0.6], &opts);
        assert_eq!(t.termination, Termination::Converged);
        assert!(math::norm2(t.last()) <= 1e-3);
    }

    #[test]
    fn inverted_pendulum_does_not_reach_origin() {
        let opts = SimOptions {
            t_end: 20.0,
            ..SimOptions::default()
        };
        let t = simulate(&pendulum(), &[PI, 0.0], &[0.6], &opts);
        assert_ne!(t.termination, Termination::Converged);
    }

    #[test]
    fn empty_level_is_vacuous() {
        let v = Polynomial::parse("x1^2 + x2^2", 2).unwrap();
        let r = monte_carlo_doa(
            &pendulum(),
            &v,
            0.0,
            &[alloc::vec![0.6]],
            100,
            42,
            &SimOptions::default(),
        );
        assert_eq!(r.runs, 0);
        assert_eq!(r.fraction, 1.0);
    }

    #[test]
    fn inclusion_holds_and_fails_when_bounds_shrink() {
        let sys = pendulum();
        let mut usys = substitute(&sys, &[7]).unwrap();
        assert_eq!(inclusion_check(&sys, &usys, 2000, 1).violations, 0);
        for e in &mut usys.enclosures {
            e.bound /= 100.0;
        }
        assert!(inclusion_check(&sys, &usys, 2000, 1).violations > 0);
    }

    #[test]
    fn sublevel_samples_lie_inside() {
        let v = Polynomial::parse("x1^2 + 4*x2^2", 2).unwrap();
        let dom = Box::symmetric(&[2.0, 2.0]).unwrap();
        let pts = sample_sublevel(&v, 1.0, &dom, 500, 7);
        assert_eq!(pts.len(), 500);
        assert!(pts.iter().all(|p| v.eval(p) <= 1.0));
        // both halves of the ellipse are hit
        assert!(pts.iter().any(|p| p[0] > 0.9) && pts.iter().any(|p| p[0] < -0.9));
    }
}
