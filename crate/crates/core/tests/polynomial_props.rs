//! Ring and evaluation invariants of `Polynomial` on random inputs.

use doacert_core::{Monomial, Polynomial};
use proptest::prelude::*;

const N: usize = 3;

fn poly() -> impl Strategy<Value = Polynomial> {
    prop::collection::vec((prop::collection::vec(0u32..4, N), -5.0f64..5.0), 0..7).prop_map(|terms| {
        let mut p = Polynomial::zero(N);
        for (e, c) in terms {
            p.add_term(Monomial::new(e), c);
        }
        p
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5f64..1.5, N)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

fn same(a: &Polynomial, b: &Polynomial) -> bool {
    (a - b).max_abs_coeff() <= 1e-9 * (1.0 + a.max_abs_coeff().max(b.max_abs_coeff()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn addition_commutes(a in poly(), b in poly()) {
        prop_assert!(same(&(&a + &b), &(&b + &a)));
    }

    #[test]
    fn multiplication_associates(a in poly(), b in poly(), c in poly()) {
        prop_assert!(same(&(&(&a * &b) * &c), &(&a * &(&b * &c))));
    }

    #[test]
    fn multiplication_distributes(a in poly(), b in poly(), c in poly()) {
        prop_assert!(same(&(&a * &(&b + &c)), &(&(&a * &b) + &(&a * &c))));
    }

    #[test]
    fn subtraction_cancels(a in poly()) {
        prop_assert!((&a - &a).is_zero());
        prop_assert!((&a + &(-&a)).is_zero());
    }

    #[test]
    fn eval_is_a_ring_homomorphism(a in poly(), b in poly(), x in point()) {
        prop_assert!(close((&a + &b).eval(&x), a.eval(&x) + b.eval(&x)));
        prop_assert!(close((&a * &b).eval(&x), a.eval(&x) * b.eval(&x)));
    }

    #[test]
    fn power_matches_repeated_product(a in poly(), x in point()) {
        let cube = &(&a * &a) * &a;
        prop_assert!(same(&a.pow(3), &cube));
        prop_assert!(close(a.pow(3).eval(&x), a.eval(&x).powi(3)));
    }

    #[test]
    fn derivative_obeys_product_rule(a in poly(), b in poly(), k in 0usize..N) {
        let d = |p: &Polynomial| p.partial(k).unwrap();
        let lhs = d(&(&a * &b));
        let rhs = &(&d(&a) * &b) + &(&a * &d(&b));
        prop_assert!(same(&lhs, &rhs));
    }

    #[test]
    fn degree_of_product_adds(a in poly(), b in poly()) {
        prop_assume!(!a.is_zero() && !b.is_zero());
        // the top-degree parts multiply to a nonzero polynomial
        prop_assert_eq!((&a * &b).degree(), a.degree() + b.degree());
    }

    #[test]
    fn text_form_round_trips(a in poly()) {
        let back = Polynomial::parse(&a.to_string(), N).unwrap();
        prop_assert!(same(&a, &back), "{} -> {}", a, back);
    }
}
