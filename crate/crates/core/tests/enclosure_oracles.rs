//! Enclosures against independent oracles: dense sampling of the residual,
//! closed-form Taylor remainders, and the benchmark coefficients.

use doacert_core::approx::{enclose, taylor_enclose, Box, ElementaryFunction, Enclosure, FunctionKind};
use doacert_core::Polynomial;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn f(kind: FunctionKind, scale: f64) -> ElementaryFunction {
    ElementaryFunction::new(kind, 0, scale)
}

fn interval(r: f64) -> Box {
    Box::symmetric(&[r]).unwrap()
}

fn value(kind: FunctionKind, t: f64) -> f64 {
    match kind {
        FunctionKind::Sin => t.sin(),
        FunctionKind::Cos => t.cos(),
        FunctionKind::Exp => t.exp(),
        _ => unreachable!("not used here"),
    }
}

/// Largest `|φ(x) − p(x)| − b·|x^γ|` at uniform random points.
fn sampled_violation(e: &Enclosure, kind: FunctionKind, scale: f64, count: usize, seed: u64) -> f64 {
    let (lo, hi) = e.domain.interval(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = e.gamma.exponents()[0] as i32;
    (0..count)
        .map(|_| {
            let x = rng.gen_range(lo..=hi);
            let err = (value(kind, scale * x) - e.p.eval(&[x])).abs();
            err - e.bound * x.abs().powi(g) - 1e-14
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `sup |d/dx (ψ − p̃)|` on a uniform grid of `count` points, with
/// `ψ(x) = (cos x − 1)/x²` evaluated by its series near 0.
fn cos_residual_gradient(p_tilde: &Polynomial, r: f64, count: usize) -> f64 {
    let psi = |x: f64| {
        if x.abs() < 1e-2 {
            let x2 = x * x;
            -0.5 + x2 / 24.0 - x2 * x2 / 720.0 + x2 * x2 * x2 / 40320.0
        } else {
            (x.cos() - 1.0) / (x * x)
        }
    };
    let resid = |x: f64| psi(x) - p_tilde.eval(&[x]);
    let h = 1e-4;
    (0..count)
        .map(|i| {
            let x = -r + 2.0 * r * i as f64 / (count - 1) as f64;
            let (a, b) = ((x - h).max(-r), (x + h).min(r));
            ((resid(b) - resid(a)) / (b - a)).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn cosine_benchmark_coefficients_and_bound() {
    let e = enclose(&f(FunctionKind::Cos, 1.0), &interval(1.2), 6).unwrap();
    let c = e.univariate_coefficients();
    let expected = [(0, 1.0), (2, -0.5), (4, 0.0416525), (6, -0.00134386)];
    for (k, v) in expected {
        assert!((c[k] - v).abs() <= 1e-4, "x^{}: {} vs {}", k, c[k], v);
    }
    for k in [1, 3, 5] {
        assert!(c[k].abs() < 1e-12);
    }
    assert!(e.bound <= 5e-5, "{}", e.bound);
    assert!(sampled_violation(&e, FunctionKind::Cos, 1.0, 10_000, 1) <= 0.0);
}

/// Frozen output of `cos_residual_gradient` at 10⁵ points for the degree-6
/// enclosure of cos on [−1.2, 1.2].
const COS_LAMBDA_ORACLE: f64 = 8.9258e-5;

#[test]
fn cosine_lambda_matches_dense_sampling() {
    let e = enclose(&f(FunctionKind::Cos, 1.0), &interval(1.2), 6).unwrap();
    let oracle = cos_residual_gradient(&e.p_tilde, 1.2, 100_000);
    assert!(
        (oracle - COS_LAMBDA_ORACLE).abs() <= 1e-3 * COS_LAMBDA_ORACLE,
        "oracle {}",
        oracle
    );
    // the estimate carries a 1.1 safety factor over the sampled supremum
    assert!(e.lambda >= oracle, "{} < {}", e.lambda, oracle);
    assert!(e.lambda <= 1.1 * oracle * 1.02, "{} vs {}", e.lambda, oracle);
    assert!((e.bound - 0.5 * e.lambda * e.spacing).abs() <= 1e-12 + e.pruned);
}

#[test]
fn benchmark_bounds() {
    let cases = [
        (FunctionKind::Exp, 1.0, 0.6, 6, 6e-6),
        // the sampled supremum alone is 1.11e-7, so 1e-7 is out of reach
        (FunctionKind::Sin, 1.0, 0.84, 7, 1.3e-7),
        (FunctionKind::Sin, 1.0, 2.4, 7, 9e-4),
    ];
    for (kind, scale, r, d, cap) in cases {
        let e = enclose(&f(kind, scale), &interval(r), d).unwrap();
        assert!(e.bound <= cap, "{:?} on ±{} d={}: {} > {}", kind, r, d, e.bound, cap);
        assert!(sampled_violation(&e, kind, scale, 10_000, 2) <= 0.0);
    }
}

#[test]
fn taylor_remainders_match_closed_form() {
    let e = taylor_enclose(&f(FunctionKind::Cos, 1.0), &interval(1.2), 2).unwrap();
    assert_eq!(e.univariate_coefficients()[0], 1.0);
    assert!((e.bound - 0.5).abs() < 1e-12, "{}", e.bound);

    // exp, d = 6: sup e^ξ / 6! · max|x|^{6−1}
    let e = taylor_enclose(&f(FunctionKind::Exp, 1.0), &interval(0.6), 6).unwrap();
    let closed = 0.6f64.exp() / 720.0 * 0.6f64.powi(5);
    assert!((e.bound - closed).abs() <= 1e-9 * closed, "{} vs {}", e.bound, closed);
    assert!(sampled_violation(&e, FunctionKind::Exp, 1.0, 10_000, 3) <= 0.0);
}

#[test]
fn interpolation_beats_taylor_on_benchmarks() {
    let cases = [
        (FunctionKind::Cos, 1.0, 1.2, 6),
        (FunctionKind::Exp, 1.0, 0.6, 6),
        (FunctionKind::Cos, 1.0, 0.6, 6),
        (FunctionKind::Sin, 2.0, 0.84, 7),
        (FunctionKind::Sin, 1.0, 0.84, 7),
    ];
    for (kind, scale, r, d) in cases {
        let phi = f(kind, scale);
        let i = enclose(&phi, &interval(r), d).unwrap();
        let t = taylor_enclose(&phi, &interval(r), d).unwrap();
        assert!(
            i.bound < t.bound,
            "{:?}({}x) ±{} d={}: {} vs {}",
            kind,
            scale,
            r,
            d,
            i.bound,
            t.bound
        );
    }
}

#[test]
fn bounds_tighten_with_degree() {
    let phi = f(FunctionKind::Cos, 1.0);
    let b: Vec<f64> = [3, 4, 6]
        .iter()
        .map(|&d| enclose(&phi, &interval(1.2), d).unwrap().bound)
        .collect();
    assert!(b[2] < b[1] && b[1] < b[0], "{:?}", b);
}

#[test]
fn origin_value_is_kept() {
    for kind in [FunctionKind::Sin, FunctionKind::Cos, FunctionKind::Exp] {
        let e = enclose(&f(kind, 1.3), &interval(1.0), 6).unwrap();
        assert_eq!(e.p.eval(&[0.0]), value(kind, 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enclosures_are_sound(
        k in 0usize..3,
        scale in prop::sample::select(vec![-2.0, -1.0, 0.5, 1.0, 2.0]),
        r in 0.2f64..2.0,
        d in 3u32..9,
        seed in 0u64..1000,
    ) {
        let kind = [FunctionKind::Sin, FunctionKind::Cos, FunctionKind::Exp][k];
        let phi = f(kind, scale);
        let i = enclose(&phi, &interval(r), d).unwrap();
        prop_assert!(sampled_violation(&i, kind, scale, 2000, seed) <= 0.0);
        let t = taylor_enclose(&phi, &interval(r), d).unwrap();
        prop_assert!(sampled_violation(&t, kind, scale, 2000, seed) <= 0.0);
    }
}
