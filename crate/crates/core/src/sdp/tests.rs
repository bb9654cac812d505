use super::*;
use crate::poly::monomial_basis;
use alloc::vec;

fn p1(s: &str) -> Polynomial {
    Polynomial::parse(s, 1).unwrap()
}

fn is_sos(p: &Polynomial) -> SosOutcome {
    let mut prog = SosProgram::new(p.nvars());
    prog.require_sos("p", AffinePoly::constant(p.clone()));
    solve_sos(&prog, &SolverOptions::default()).unwrap()
}

#[test]
fn square_is_sos_with_2x2_block() {
    let p = p1("x1^2 + 2*x1 + 1");
    let mut prog = SosProgram::new(1);
    prog.require_sos("p", AffinePoly::constant(p.clone()));
    let problem = compile(&prog).unwrap();
    assert_eq!(problem.layout.remainders[0].as_ref().unwrap().1.len(), 2);
    let out = is_sos(&p);
    assert!(out.certified(), "{:?}", out.report);
    // the Gram matrix [[1,1],[1,1]] is singular, so the margin is zero
    assert!(out.margin().unwrap().abs() < 1e-6);
}

#[test]
fn negative_polynomial_is_infeasible() {
    let out = is_sos(&p1("-x1^2 - 1"));
    assert_eq!(out.status, SolveStatus::Infeasible);
    assert!(!out.certified());
}

#[test]
fn trace_minimization() {
    let problem = SdpProblem {
        blocks: vec![1],
        nfree: 0,
        constraints: vec![SdpConstraint {
            entries: vec![(0, 0, 0, 1.0)],
            free: vec![],
            rhs: 3.0,
        }],
        objective_blocks: vec![(0, 0, 0, 1.0)],
        objective_free: vec![],
        layout: Layout {
            scalars: vec![],
            polys: vec![],
            sos: vec![],
            remainders: vec![],
            margin: None,
            inconsistent: vec![],
        },
    };
    let sol = solve(&problem, &SolverOptions::default());
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.primal_objective - 3.0).abs() < 1e-7);
    assert!((sol.dual_objective - 3.0).abs() < 1e-6);
}

#[test]
fn quartic_examples() {
    let out = is_sos(&p1("x1^4 + 1"));
    assert!(out.certified());
    assert!(out.report.unwrap().max_residual <= 1e-8);
    // −1 at x = 1
    let q = p1("x1^4 - 3*x1^2 + 1");
    assert!(q.eval(&[1.0]) < 0.0);
    assert_eq!(is_sos(&q).status, SolveStatus::Infeasible);
}

#[test]
fn multiplier_identity() {
    // s0 + s1·(1 − V) = 1 − V² ... pick an identity with a known solution:
    // (1 − x²) = s0 + s1·(1 − x²) has s1 = 1, s0 = 0 among others.
    let v = p1("x1^2");
    let mut prog = SosProgram::new(1);
    let s1 = prog.new_sos("s1", monomial_basis(1, 1));
    let one_minus_v = &Polynomial::constant(1, 1.0) - &v;
    let expr = &AffinePoly::constant(one_minus_v.clone()) - &prog.expr(s1).mul_poly(&one_minus_v);
    prog.require_sos("s0", expr);
    let out = solve_sos(&prog, &SolverOptions::default()).unwrap();
    assert!(out.certified(), "{:?}", out.report);
    let sol = out.solution.unwrap();
    // coefficient-matching oracle: expand symbolically and compare
    let s1p = sol.sos[0].to_polynomial(1);
    let s0p = sol.remainders[0].as_ref().unwrap().to_polynomial(1);
    let lhs = &s0p + &(&s1p * &one_minus_v);
    assert!(lhs.max_coeff_diff(&one_minus_v) < 1e-7);
}

#[test]
fn bilinear_products_are_rejected() {
    let mut prog = SosProgram::new(1);
    let s = prog.new_sos("sigma", monomial_basis(1, 1));
    let v = prog.new_poly("V", vec![Monomial::new(vec![2])]);
    let err = prog.expr(s).try_mul(&prog.expr(v), &prog).unwrap_err();
    match err {
        SdpError::Bilinear(msg) => assert!(msg.contains("sigma") && msg.contains('V')),
        other => panic!("{other:?}"),
    }
}

#[test]
fn corrupted_gram_fails_verification() {
    let p = p1("x1^2 + 2*x1 + 1");
    let mut prog = SosProgram::new(1);
    prog.require_sos("p", AffinePoly::constant(p.clone()));
    let mut sol = solve_sos(&prog, &SolverOptions::default()).unwrap().solution.unwrap();
    let exact = GramMatrix::new(monomial_basis(1, 1), vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
    sol.remainders[0] = Some(exact.clone());
    let rep = verify_certificate(&prog, &sol);
    assert!(rep.passed && rep.max_residual == 0.0);
    let mut bad = exact;
    bad.matrix[0][1] += 1e-3;
    sol.remainders[0] = Some(bad);
    let rep = verify_certificate(&prog, &sol);
    assert!(!rep.passed);
    assert!(rep.max_residual >= 1e-4);
}

#[test]
fn maximize_scalar() {
    // max b s.t. x² + 1 − b is SOS  →  b = 1
    let mut prog = SosProgram::new(1);
    let b = prog.new_scalar("b");
    let expr = &AffinePoly::constant(p1("x1^2 + 1")) - &prog.expr(b);
    prog.require_sos("p", expr);
    prog.maximize(b).unwrap();
    let out = solve_sos(&prog, &SolverOptions::default()).unwrap();
    assert_eq!(out.status, SolveStatus::Optimal);
    let v = out.solution.as_ref().unwrap().scalars[0];
    assert!((v - 1.0).abs() < 1e-6, "{v}");
    assert!(out.certified(), "{:?}", out.report);
}

#[test]
fn newton_box_halves_degrees() {
    let sup = vec![
        Monomial::new(vec![2, 0]),
        Monomial::new(vec![0, 6]),
        Monomial::new(vec![1, 1]),
    ];
    let b = newton_basis(2, &sup);
    assert!(b.iter().all(|m| m.degree() >= 1 && m.degree() <= 3));
    assert!(b.iter().all(|m| m.exponents()[0] <= 1));
    assert!(b.contains(&Monomial::new(vec![0, 3])));
}

#[test]
fn dump_is_deterministic() {
    let mut prog = SosProgram::new(1);
    prog.require_sos("p", AffinePoly::constant(p1("x1^4 + x1^2")));
    let a = compile(&prog).unwrap().dump();
    let b = compile(&prog).unwrap().dump();
    assert_eq!(a, b);
    assert!(a.contains("blocks"));
}
