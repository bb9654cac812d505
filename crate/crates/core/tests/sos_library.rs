//! A fixed library of polynomials with known SOS status.
//!
//! Accepted cases are sums of squares by construction (plus a strictly
//! positive definite pad so the Gram matrix has an interior). Rejected cases
//! are either negative somewhere, which the test confirms by evaluation
//! before asking the solver, or the Motzkin polynomial, which is nonnegative
//! but provably not a sum of squares.

use doacert_core::sdp::{solve_sos, AffinePoly, SolverOptions, SosProgram};
use doacert_core::{Monomial, Polynomial};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_poly(rng: &mut ChaCha8Rng, n: usize, max_deg: u32) -> Polynomial {
    let mut p = Polynomial::zero(n);
    for m in doacert_core::poly::monomial_basis(n, max_deg) {
        p.add_term(m, rng.gen_range(-1.0..1.0));
    }
    p
}

fn pad(n: usize, half: u32) -> Polynomial {
    let mut p = Polynomial::constant(n, 0.05);
    for i in 0..n {
        let mut e = vec![0; n];
        e[i] = 2 * half;
        p.add_term(Monomial::new(e), 0.05);
    }
    p
}

/// `Σ q_k² + pad`, with `q_k` random of degree `half`.
fn sos_case(seed: u64) -> Polynomial {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 1 + (seed % 2) as usize;
    let half = 1 + (seed % 3) as u32 / 2 + (seed % 2) as u32;
    let mut p = pad(n, half);
    for _ in 0..3 {
        let q = random_poly(&mut rng, n, half);
        p = &p + &(&q * &q);
    }
    p
}

fn certified(p: &Polynomial) -> bool {
    let mut prog = SosProgram::new(p.nvars());
    prog.require_sos("p", AffinePoly::constant(p.clone()));
    solve_sos(&prog, &SolverOptions::default())
        .map(|o| o.certified())
        .unwrap_or(false)
}

#[test]
fn twenty_sums_of_squares_are_accepted() {
    let failures: Vec<u64> = (0..20).filter(|&s| !certified(&sos_case(s))).collect();
    assert!(failures.is_empty(), "rejected SOS cases: {:?}", failures);
}

#[test]
fn ten_non_sos_polynomials_are_rejected() {
    let mut cases = Vec::new();
    // a sum of squares shifted down so that it is negative at a known point
    for seed in 100..109 {
        let sigma = sos_case(seed);
        let n = sigma.nvars();
        let x0: Vec<f64> = (0..n).map(|i| 0.3 * (i as f64 + 1.0)).collect();
        let p = &sigma - &Polynomial::constant(n, sigma.eval(&x0) + 0.5);
        assert!(p.eval(&x0) < 0.0);
        cases.push(p);
    }
    let motzkin = Polynomial::parse("x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1", 2).unwrap();
    cases.push(motzkin);
    assert_eq!(cases.len(), 10);
    let accepted: Vec<usize> = (0..cases.len()).filter(|&k| certified(&cases[k])).collect();
    assert!(accepted.is_empty(), "accepted non-SOS cases: {:?}", accepted);
}

#[test]
fn odd_degree_and_negative_leading_terms_are_rejected() {
    for text in ["x1^3 + x1^2 + 1", "-x1^4 + x1^2", "x1^2 - x2^2"] {
        let p = Polynomial::parse(text, 2).unwrap();
        assert!(!certified(&p), "{}", text);
    }
}

#[test]
fn gram_squares_reconstruct_the_polynomial() {
    let p = sos_case(7);
    let mut prog = SosProgram::new(p.nvars());
    prog.require_sos("p", AffinePoly::constant(p.clone()));
    let out = solve_sos(&prog, &SolverOptions::default()).unwrap();
    let gram = out.solution.unwrap().remainders[0].clone().unwrap();
    let sum = gram
        .squares(p.nvars())
        .iter()
        .fold(Polynomial::zero(p.nvars()), |acc, q| &acc + &(q * q));
    assert!((&sum - &p).max_abs_coeff() < 1e-7);
}
