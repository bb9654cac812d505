//! Level certificates against analytic answers and structural expectations.

use doacert_core::approx::{Box, ElementaryFunction, FunctionKind};
use doacert_core::certify::{
    check_conditions, fixed_v_lower, substitute, upper_bound, vertex_systems, Equation, RelaxationParams, SystemDef,
    Term, ThetaDomain,
};
use doacert_core::validate::{inclusion_check, monte_carlo_doa, SimOptions};
use doacert_core::Polynomial;

fn p(s: &str, n: usize) -> Polynomial {
    Polynomial::parse(s, n).unwrap()
}

fn term(coeff: Polynomial, kind: FunctionKind, scale: f64) -> Term {
    Term {
        coeff,
        function: ElementaryFunction::new(kind, 0, scale),
    }
}

fn example4(domain: Box) -> SystemDef {
    let eqs = vec![
        Equation {
            poly: p("-x1 + x2 - 0.5", 2),
            terms: vec![term(Polynomial::constant(2, 0.5), FunctionKind::Exp, 1.0)],
        },
        Equation {
            poly: p("-x1 - x2 + x1*x2", 2),
            terms: vec![term(p("x1", 2), FunctionKind::Cos, 1.0)],
        },
    ];
    SystemDef::new(eqs, ThetaDomain::none(), domain).unwrap()
}

fn pendulum() -> SystemDef {
    let eqs = vec![
        Equation {
            poly: p("x2", 3),
            terms: vec![],
        },
        Equation {
            poly: p("-x3*x2", 3),
            terms: vec![term(Polynomial::constant(3, -10.0), FunctionKind::Sin, 1.0)],
        },
    ];
    SystemDef::new(
        eqs,
        ThetaDomain::new(vec![0.2], vec![1.0]).unwrap(),
        Box::symmetric(&[2.4, 6.0]).unwrap(),
    )
    .unwrap()
}

/// `ẋ = −x + x³` with `V = x²`: `V̇ = −2x² + 2x⁴ < 0` exactly when
/// `0 < |x| < 1`, so the largest certifiable level is 1.
#[test]
fn cubic_scalar_brackets_the_analytic_level() {
    let sys = SystemDef::polynomial(vec![p("-x1 + x1^3", 1)], Box::symmetric(&[2.0]).unwrap()).unwrap();
    let usys = substitute(&sys, &[]).unwrap();
    let v = p("x1^2", 1);
    let lower = fixed_v_lower(&v, &usys, &RelaxationParams::default(), 1e-4).unwrap();
    assert!((0.98..=1.0).contains(&lower.level), "c = {}", lower.level);
    assert!(check_conditions(lower.certificate.as_ref().unwrap()).passed);
    let upper = upper_bound(&v, &sys, &usys, lower.level, 1e-4).unwrap();
    assert!((1.0..=1.02).contains(&upper.upsilon), "υ = {}", upper.upsilon);
    assert!(upper.vdot_true >= 0.0);
    assert!((upper.witness[0].abs() - 1.0).abs() < 1e-2);
}

#[test]
fn pendulum_has_four_vertex_systems() {
    let usys = substitute(&pendulum(), &[7]).unwrap();
    assert_eq!(vertex_systems(&usys).unwrap().len(), 4);
    let inc = inclusion_check(&pendulum(), &usys, 10_000, 5);
    assert_eq!(inc.violations, 0, "{:?}", inc);
}

#[test]
fn shrunk_uncertainty_breaks_inclusion() {
    let sys = example4(Box::symmetric(&[0.6, 1.0]).unwrap());
    let mut usys = substitute(&sys, &[4]).unwrap();
    assert_eq!(inclusion_check(&sys, &usys, 10_000, 1).violations, 0);
    for e in &mut usys.enclosures {
        e.bound /= 100.0;
    }
    assert!(inclusion_check(&sys, &usys, 10_000, 1).violations > 0);
}

/// Tighter enclosures can only help: the certified level does not drop when
/// the degree goes from 4 to 6.
#[test]
fn fixed_level_is_monotone_in_the_enclosure_degree() {
    let sys = example4(Box::symmetric(&[0.6, 1.0]).unwrap());
    let v = p("x1^2 + x2^2", 2);
    let level = |d: u32| {
        let usys = substitute(&sys, &[d]).unwrap();
        fixed_v_lower(&v, &usys, &RelaxationParams::default(), 1e-4)
            .unwrap()
            .level
    };
    let (c4, c6) = (level(4), level(6));
    assert!(c4 > 0.0 && c4 <= c6 + 1e-4, "c4 = {}, c6 = {}", c4, c6);
}

#[test]
fn certified_set_of_example4_survives_simulation() {
    let sys = example4(Box::symmetric(&[0.6, 1.0]).unwrap());
    let usys = substitute(&sys, &[6]).unwrap();
    let v = p("x1^2 + x2^2", 2);
    let r = fixed_v_lower(&v, &usys, &RelaxationParams::default(), 1e-4).unwrap();
    let mc = monte_carlo_doa(&sys, &v, r.level, &[], 300, 42, &SimOptions::default());
    assert_eq!(mc.points, 300);
    assert_eq!(mc.converged, mc.runs);
    assert_eq!(mc.level_exits, 0);
}
