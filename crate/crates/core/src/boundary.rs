//! Points on the level curve `{V = level}` found by bisection along rays.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::approx::Box;
use crate::math;
use crate::poly::Polynomial;

/// Level-set samples plus the rays that left the window first.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySample {
    pub points: Vec<Vec<f64>>,
    /// Ray directions (indices into the direction list) that were skipped.
    pub gaps: Vec<usize>,
}

/// Unit directions: equispaced angles for `n = 2`, seeded uniform directions
/// on the sphere otherwise.
pub fn directions(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    match n {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / count as f64;
                vec![math::cos(a), math::sin(a)]
            })
            .collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count).map(|_| random_unit(&mut rng, n)).collect()
        }
    }
}

pub(crate) fn random_unit<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        // Box–Muller normals
        let mut v: Vec<f64> = (0..n)
            .map(|_| {
                let u1: f64 = rng.gen::<f64>().max(1e-300);
                let u2: f64 = rng.gen();
                math::sqrt(-2.0 * math::ln(u1)) * math::cos(2.0 * PI * u2)
            })
            .collect();
        let nrm = math::norm2(&v);
        if nrm > 1e-12 {
            v.iter_mut().for_each(|x| *x /= nrm);
            return v;
        }
    }
}

/// Largest `r` with `origin + r·dir` inside `window`.
pub fn exit_distance(window: &Box, dir: &[f64]) -> f64 {
    let mut r = f64::INFINITY;
    for (i, d) in dir.iter().enumerate() {
        let (lo, hi) = window.interval(i);
        if *d > 0.0 {
            r = r.min(hi / d);
        } else if *d < 0.0 {
            r = r.min(lo / d);
        }
    }
    r
}

fn along(dir: &[f64], r: f64) -> Vec<f64> {
    dir.iter().map(|d| d * r).collect()
}

/// First `r ∈ (0, rmax]` with `V(r·dir) = level`, assuming `V(0) < level`.
pub fn ray_crossing(v: &Polynomial, level: f64, dir: &[f64], rmax: f64) -> Option<f64> {
    const MARCH: usize = 256;
    let f = |r: f64| v.eval(&along(dir, r)) - level;
    let mut lo = 0.0;
    let mut hit = None;
    for k in 1..=MARCH {
        let r = rmax * k as f64 / MARCH as f64;
        if f(r) >= 0.0 {
            hit = Some(r);
            break;
        }
        lo = r;
    }
    let mut hi = hit?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // the side closer to the level
    Some(if math::abs(f(lo)) < math::abs(f(hi)) { lo } else { hi })
}

/// Samples `{V = level}` along `count` rays from the origin inside `window`.
pub fn boundary_sample(v: &Polynomial, level: f64, window: &Box, count: usize, seed: u64) -> BoundarySample {
    let n = v.nvars();
    if level <= 0.0 {
        return BoundarySample {
            points: vec![vec![0.0; n]],
            gaps: Vec::new(),
        };
    }
    let mut points = Vec::new();
    let mut gaps = Vec::new();
    for (k, d) in directions(n, count, seed).iter().enumerate() {
        match ray_crossing(v, level, d, exit_distance(window, d)) {
            Some(r) => points.push(along(d, r)),
            None => gaps.push(k),
        }
    }
    BoundarySample { points, gaps }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_circle() {
        let v = Polynomial::parse("x1^2 + x2^2", 2).unwrap();
        let w = Box::symmetric(&[2.0, 2.0]).unwrap();
        let s = boundary_sample(&v, 1.0, &w, 360, 0);
        assert_eq!(s.points.len(), 360);
        assert!(s.gaps.is_empty());
        for p in &s.points {
            assert!((math::norm2(p) - 1.0).abs() <= 1e-6);
            assert!((v.eval(p) - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn level_zero_is_origin() {
        let v = Polynomial::parse("x1^2 + x2^2", 2).unwrap();
        let w = Box::symmetric(&[2.0, 2.0]).unwrap();
        assert_eq!(boundary_sample(&v, 0.0, &w, 10, 0).points, vec![vec![0.0, 0.0]]);
    }

    #[test]
    fn gaps_when_window_too_small() {
        let v = Polynomial::parse("x1^2 + 4*x2^2", 2).unwrap();
        let w = Box::symmetric(&[0.5, 2.0]).unwrap();
        let s = boundary_sample(&v, 1.0, &w, 8, 0);
        // rays along ±x1 leave the window at 0.5 before reaching V = 1
        assert!(s.gaps.contains(&0) && s.gaps.contains(&4));
    }

    #[test]
    fn random_directions_in_3d() {
        let dirs = directions(3, 50, 7);
        assert_eq!(dirs, directions(3, 50, 7));
        assert!(dirs.iter().all(|d| (math::norm2(d) - 1.0).abs() < 1e-12));
    }
}
