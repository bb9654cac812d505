//! Numeric upper bound on the best level of a fixed `V`: the smallest level
//! whose sublevel set contains a nonzero point where the true dynamics do not
//! decrease `V`.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fixed::LevelProbe;
use super::{CertifyError, SystemDef, UncertainPolySystem};
use crate::boundary::{directions, exit_distance, ray_crossing};
use crate::math;
use crate::poly::{PolyVector, Polynomial};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundReport {
    pub upsilon: f64,
    /// `x*` with `V(x*) ≤ υ`, `x* ≠ 0` and `V̇(x*) ≥ 0` under the true dynamics.
    pub witness: Vec<f64>,
    /// The `θ` vertex attaining the true `V̇`.
    pub theta: Vec<f64>,
    pub vdot_true: f64,
    /// Largest `V̇` over the vertex systems at `(x*, θ)`.
    pub vdot_vertex: f64,
    pub probes: Vec<LevelProbe>,
}

struct Witness {
    x: Vec<f64>,
    theta: usize,
    value: f64,
}

struct Search<'a> {
    v: &'a Polynomial,
    grad: PolyVector,
    sys: &'a SystemDef,
    thetas: Vec<Vec<f64>>,
    dirs: Vec<Vec<f64>>,
    grid: Vec<Vec<f64>>,
    step0: f64,
}

/// Points closer to the origin are ignored.
const MIN_NORM: f64 = 1e-8;
const KEEP: usize = 8;

impl<'a> Search<'a> {
    fn new(v: &'a Polynomial, sys: &'a SystemDef) -> Self {
        let n = sys.nvars();
        let domain = sys.domain();
        let grid = if n <= 2 {
            let k = if n == 1 { 2001 } else { 121 };
            let axis: Vec<f64> = (0..k).map(|i| i as f64 / (k - 1) as f64).collect();
            if n == 1 {
                axis.iter().map(|a| domain.lerp(&[*a])).collect()
            } else {
                axis.iter()
                    .flat_map(|a| axis.iter().map(move |b| [*a, *b]))
                    .map(|w| domain.lerp(&w))
                    .collect()
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            (0..20000)
                .map(|_| {
                    let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
                    domain.lerp(&w)
                })
                .collect()
        };
        let step0 = (0..n)
            .map(|i| {
                let (l, u) = domain.interval(i);
                (u - l) * 0.02
            })
            .fold(0.0, f64::max);
        Self {
            v,
            grad: v.grad(),
            sys,
            thetas: sys.theta().vertices(),
            dirs: directions(n, if n <= 2 { 3600 } else { 4000 }, 13),
            grid,
            step0,
        }
    }

    /// `max_θ ∇V·f(x, θ)` over the `θ` vertices (exact since `V̇` is affine in `θ`).
    fn vdot(&self, x: &[f64]) -> (f64, usize) {
        let g = self.grad.eval(x);
        self.thetas
            .iter()
            .enumerate()
            .map(|(k, th)| {
                let f = self.sys.eval(x, th);
                (g.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>(), k)
            })
            .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a })
    }

    /// Pulls `y` back onto `{V ≤ level}` along its ray.
    fn project(&self, y: Vec<f64>, level: f64) -> Option<Vec<f64>> {
        if self.v.eval(&y) <= level {
            return Some(y);
        }
        let r = math::norm2(&y);
        if r < MIN_NORM {
            return None;
        }
        let d: Vec<f64> = y.iter().map(|c| c / r).collect();
        let mut s = ray_crossing(self.v, level, &d, r)?;
        let mut x: Vec<f64> = d.iter().map(|c| c * s).collect();
        while self.v.eval(&x) > level {
            s *= 1.0 - 1e-12;
            x = d.iter().map(|c| c * s).collect();
        }
        Some(x)
    }

    fn probe(&self, level: f64) -> Option<Witness> {
        let mut cands: Vec<Witness> = Vec::new();
        let mut consider = |x: Vec<f64>, this: &Self| {
            if math::norm2(&x) < MIN_NORM {
                return;
            }
            let (value, theta) = this.vdot(&x);
            cands.push(Witness { x, theta, value });
        };
        let window = self.sys.domain().scaled(3.0);
        for d in &self.dirs {
            if let Some(r) = ray_crossing(self.v, level, d, exit_distance(&window, d)) {
                if let Some(x) = self.project(d.iter().map(|c| c * r).collect(), level) {
                    consider(x, self);
                }
            }
        }
        for p in &self.grid {
            if self.v.eval(p) <= level {
                consider(p.clone(), self);
            }
        }
        cands.sort_by(|a, b| b.value.partial_cmp(&a.value).unwrap_or(core::cmp::Ordering::Equal));
        cands.truncate(KEEP);
        for c in cands {
            let w = self.ascend(c, level);
            if w.value >= 0.0 {
                return Some(w);
            }
        }
        None
    }

    /// Pattern search on `V̇` restricted to `{V ≤ level}`.
    fn ascend(&self, mut w: Witness, level: f64) -> Witness {
        let n = w.x.len();
        let mut step = self.step0;
        while step > 1e-11 && w.value < 0.0 {
            let mut improved = false;
            for i in 0..n {
                for s in [step, -step] {
                    let mut y = w.x.clone();
                    y[i] += s;
                    let Some(y) = self.project(y, level) else { continue };
                    if math::norm2(&y) < MIN_NORM {
                        continue;
                    }
                    let (value, theta) = self.vdot(&y);
                    if value > w.value {
                        w = Witness { x: y, theta, value };
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        w
    }
}

/// Bisection for the smallest `υ ≥ c_lo` with a witness of non-decrease in
/// `{V ≤ υ}`, searched up to `2·max V` over the corners of `Ψ`.
pub fn upper_bound(
    v: &Polynomial,
    sys: &SystemDef,
    usys: &UncertainPolySystem,
    c_lo: f64,
    tol: f64,
) -> Result<UpperBoundReport, CertifyError> {
    if v.nvars() != sys.nvars() {
        return Err(CertifyError::Dimension("V and the system differ in dimension".into()));
    }
    let search = Search::new(v, sys);
    let c_max = sys.domain().corners().iter().map(|x| v.eval(x)).fold(0.0, f64::max);
    let upsilon_max = 2.0 * c_max;
    let mut probes = Vec::new();
    let mut run = |c: f64| {
        let w = search.probe(c);
        probes.push(LevelProbe {
            level: c,
            feasible: w.is_some(),
        });
        w
    };
    let mut best = run(upsilon_max).ok_or(CertifyError::NoUpperBound(upsilon_max))?;
    let (mut lo, mut hi) = (c_lo.max(0.0), upsilon_max);
    if let Some(w) = run(lo) {
        best = w;
        hi = lo;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        match run(mid) {
            Some(w) => {
                best = w;
                hi = mid;
            }
            None => lo = mid,
        }
    }
    let theta = search.thetas[best.theta].clone();
    let grad = search.grad.eval(&best.x);
    let vdot_vertex = usys
        .u_vertices()
        .iter()
        .map(|u| {
            let f = usys.eval(&best.x, &theta, u);
            grad.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(UpperBoundReport {
        upsilon: hi,
        witness: best.x,
        theta,
        vdot_true: best.value,
        vdot_vertex,
        probes,
    })
}
