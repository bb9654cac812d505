//! Sum-of-squares programs, their compilation to semidefinite programs and a
//! dense interior-point solver, plus an independent certificate checker.

mod ipm;
mod program;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::linalg::{self, Mat};
use crate::math;
use crate::poly::{Monomial, Polynomial};

pub use ipm::{solve, SolverOptions};
pub use program::{
    compile, newton_basis, AffinePoly, ConstraintKind, Layout, SosConstraint, SosProgram, Unknown, NEGLIGIBLE,
};

/// Identity residual accepted by [`verify_certificate`].
pub const RESIDUAL_TOL: f64 = 1e-7;
/// Smallest Gram eigenvalue accepted by [`verify_certificate`].
pub const EIGEN_TOL: f64 = -1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SdpError {
    #[error("constraint is not affine in the unknowns: product {0}")]
    Bilinear(String),
    #[error("constraint `{0}` has the wrong number of variables")]
    Dimension(String),
    #[error("only a single scalar unknown can be maximized")]
    Objective,
}

/// `Σ entries ⟨E_pq, X_block⟩ + Σ free·y = rhs`; an entry `(b, p, q, v)` with
/// `p ≠ q` stands for `v` at both `(p,q)` and `(q,p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpConstraint {
    pub entries: Vec<(usize, usize, usize, f64)>,
    pub free: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    /// Order of each symmetric block.
    pub blocks: Vec<usize>,
    pub nfree: usize,
    pub constraints: Vec<SdpConstraint>,
    /// Objective entries over the blocks (minimized), same convention as constraints.
    pub objective_blocks: Vec<(usize, usize, usize, f64)>,
    pub objective_free: Vec<f64>,
    pub layout: Layout,
}

impl SdpProblem {
    /// Deterministic structured-text dump.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "blocks {:?}", self.blocks);
        let _ = writeln!(s, "free {}", self.nfree);
        let _ = writeln!(s, "constraints {}", self.constraints.len());
        for (k, c) in self.constraints.iter().enumerate() {
            let _ = write!(s, "c{} rhs={:?}", k, c.rhs);
            for (b, p, q, v) in &c.entries {
                let _ = write!(s, " X{}[{},{}]*{:?}", b, p, q, v);
            }
            for (i, v) in &c.free {
                let _ = write!(s, " y{}*{:?}", i, v);
            }
            s.push('\n');
        }
        let _ = writeln!(s, "objective_free {:?}", self.objective_free);
        for (i, r) in self.layout.remainders.iter().enumerate() {
            if let Some((b, basis)) = r {
                let e: Vec<&[u32]> = basis.iter().map(|m| m.exponents()).collect();
                let _ = writeln!(s, "basis constraint{} block{} {:?}", i, b, e);
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpSolution {
    pub status: SolveStatus,
    /// Block values, row-major.
    pub blocks: Vec<Vec<Vec<f64>>>,
    pub free: Vec<f64>,
    pub dual: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub message: String,
}

impl SdpSolution {
    /// Deterministic structured-text dump.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "status {:?}", self.status);
        let _ = writeln!(s, "iterations {}", self.iterations);
        let _ = writeln!(s, "primal_objective {:?}", self.primal_objective);
        let _ = writeln!(s, "dual_objective {:?}", self.dual_objective);
        let _ = writeln!(s, "primal_residual {:?}", self.primal_residual);
        let _ = writeln!(s, "free {:?}", self.free);
        for (j, b) in self.blocks.iter().enumerate() {
            let _ = writeln!(s, "X{} {:?}", j, b);
        }
        s
    }
}

/// Symmetric Gram matrix over a monomial basis: the polynomial `bᵀ Q b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramMatrix {
    pub basis: Vec<Monomial>,
    pub matrix: Vec<Vec<f64>>,
}

impl GramMatrix {
    pub fn new(basis: Vec<Monomial>, matrix: Vec<Vec<f64>>) -> Self {
        Self { basis, matrix }
    }

    fn mat(&self) -> Mat {
        let n = self.basis.len();
        Mat::from_fn(n, n, |i, j| self.matrix[i][j])
    }

    pub fn to_polynomial(&self, nvars: usize) -> Polynomial {
        let mut p = Polynomial::zero(nvars);
        for (i, bi) in self.basis.iter().enumerate() {
            for (j, bj) in self.basis.iter().enumerate() {
                p.add_term(bi.mul(bj), self.matrix[i][j]);
            }
        }
        p
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.basis.is_empty() {
            return 0.0;
        }
        linalg::min_eigenvalue(&self.mat())
    }

    /// Explicit squares `q_j = √λ_j · v_jᵀ b` over the positive eigenvalues.
    pub fn squares(&self, nvars: usize) -> Vec<Polynomial> {
        if self.basis.is_empty() {
            return Vec::new();
        }
        let (vals, vecs) = linalg::sym_eigen(&self.mat());
        let mut out = Vec::new();
        for (k, lam) in vals.iter().enumerate() {
            if *lam <= 0.0 {
                continue;
            }
            let r = math::sqrt(*lam);
            let mut q = Polynomial::zero(nvars);
            for (i, b) in self.basis.iter().enumerate() {
                q.add_term(b.clone(), r * vecs[(i, k)]);
            }
            out.push(q);
        }
        out
    }

    pub fn is_consistent(&self) -> bool {
        let n = self.basis.len();
        self.matrix.len() == n && self.matrix.iter().all(|r| r.len() == n)
    }
}

/// Values of all unknowns of a solved [`SosProgram`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SosSolution {
    pub scalars: Vec<f64>,
    pub polys: Vec<Polynomial>,
    pub sos: Vec<GramMatrix>,
    /// Gram matrix of each SOS constraint's remainder (`None` for equalities).
    pub remainders: Vec<Option<GramMatrix>>,
    /// Phase-I margin, when solved as a feasibility problem.
    pub margin: Option<f64>,
    pub status: SolveStatus,
}

impl SosSolution {
    /// Value of an affine expression.
    pub fn evaluate(&self, expr: &AffinePoly) -> Polynomial {
        let n = expr.nvars();
        let mut acc = expr.constant_part().clone();
        for (u, f) in expr.parts() {
            let val = match u {
                Unknown::Scalar(i) => Polynomial::constant(n, self.scalars[*i]),
                Unknown::Poly(i) => self.polys[*i].clone(),
                Unknown::Sos(i) => self.sos[*i].to_polynomial(n),
            };
            acc = &acc + &(&val * f);
        }
        acc
    }
}

fn block_gram(sol: &SdpSolution, block: usize, basis: &[Monomial], shift: f64) -> GramMatrix {
    let mut m = sol.blocks[block].clone();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] += shift;
    }
    GramMatrix::new(basis.to_vec(), m)
}

/// Reads the unknowns of `prog` out of a solution of `compile(prog)`.
pub fn extract(prog: &SosProgram, problem: &SdpProblem, sol: &SdpSolution) -> SosSolution {
    let lay = &problem.layout;
    let margin = lay.margin.map(|t| sol.free[t]);
    let shift = margin.unwrap_or(0.0);
    SosSolution {
        scalars: lay.scalars.iter().map(|i| sol.free[*i]).collect(),
        polys: (0..prog.num_polys())
            .map(|i| {
                let start = lay.polys[i];
                let len = prog.poly_support(i).len();
                prog.poly_from_values(i, &sol.free[start..start + len])
            })
            .collect(),
        sos: (0..prog.num_sos())
            .map(|i| block_gram(sol, lay.sos[i], prog.sos_basis(i), shift))
            .collect(),
        remainders: lay
            .remainders
            .iter()
            .map(|r| r.as_ref().map(|(b, basis)| block_gram(sol, *b, basis, shift)))
            .collect(),
        margin,
        status: sol.status,
    }
}

/// Outcome of re-checking a certificate from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// Largest coefficient of `identity − remainder` over all constraints.
    pub max_residual: f64,
    /// Smallest eigenvalue over all Gram matrices.
    pub min_eigenvalue: f64,
    pub residuals: Vec<(String, f64)>,
    pub passed: bool,
}

impl VerificationReport {
    pub fn from_parts(residuals: Vec<(String, f64)>, min_eigenvalue: f64) -> Self {
        let max_residual = residuals.iter().map(|r| r.1).fold(0.0, f64::max);
        let passed = max_residual.is_finite()
            && min_eigenvalue.is_finite()
            && max_residual <= RESIDUAL_TOL
            && min_eigenvalue >= EIGEN_TOL;
        Self {
            max_residual,
            min_eigenvalue,
            residuals,
            passed,
        }
    }
}

/// Recomputes every identity of `prog` with the values in `sol`.
pub fn verify_certificate(prog: &SosProgram, sol: &SosSolution) -> VerificationReport {
    let n = prog.nvars();
    let mut residuals = Vec::new();
    let mut min_eig = f64::INFINITY;
    for g in &sol.sos {
        min_eig = min_eig.min(if g.is_consistent() {
            g.min_eigenvalue()
        } else {
            f64::NEG_INFINITY
        });
    }
    for (i, c) in prog.constraints().iter().enumerate() {
        let val = sol.evaluate(&c.expr);
        let res = match (c.kind, sol.remainders.get(i).and_then(|r| r.as_ref())) {
            (ConstraintKind::Zero, _) => val.max_abs_coeff(),
            (ConstraintKind::Sos, Some(g)) => {
                min_eig = min_eig.min(if g.is_consistent() {
                    g.min_eigenvalue()
                } else {
                    f64::NEG_INFINITY
                });
                (&val - &g.to_polynomial(n)).max_abs_coeff()
            }
            (ConstraintKind::Sos, None) => f64::INFINITY,
        };
        residuals.push((c.name.clone(), res));
    }
    if min_eig == f64::INFINITY {
        min_eig = 0.0;
    }
    VerificationReport::from_parts(residuals, min_eig)
}

/// Feasibility verdict of a solved SOS program.
#[derive(Debug, Clone, PartialEq)]
pub struct SosOutcome {
    pub status: SolveStatus,
    pub solution: Option<SosSolution>,
    pub report: Option<VerificationReport>,
    pub iterations: usize,
    pub message: String,
}

impl SosOutcome {
    /// True when a certificate was found and re-verified.
    pub fn certified(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.passed)
    }

    pub fn margin(&self) -> Option<f64> {
        self.solution.as_ref().and_then(|s| s.margin)
    }
}

/// Compiles, solves, extracts and verifies in one go.
pub fn solve_sos(prog: &SosProgram, opts: &SolverOptions) -> Result<SosOutcome, SdpError> {
    let problem = compile(prog)?;
    if !problem.layout.inconsistent.is_empty() {
        return Ok(SosOutcome {
            status: SolveStatus::Infeasible,
            solution: None,
            report: None,
            iterations: 0,
            message: format!("unmatched terms: {}", problem.layout.inconsistent.join("; ")),
        });
    }
    let mut sol = solve(&problem, opts);
    polish(&problem, &mut sol);
    let sos = extract(prog, &problem, &sol);
    let report = verify_certificate(prog, &sos);
    Ok(SosOutcome {
        status: sol.status,
        iterations: sol.iterations,
        message: sol.message.clone(),
        report: Some(report),
        solution: Some(sos),
    })
}

/// Moves the iterate by the smallest (Frobenius) change that satisfies the
/// equality constraints exactly. Interior-point iterates that stalled with a
/// positive margin but a visible residual become verifiable this way; the
/// eigenvalue check still decides.
pub fn polish(problem: &SdpProblem, sol: &mut SdpSolution) {
    let mut offsets = Vec::with_capacity(problem.blocks.len());
    let mut nx = 0;
    for &k in &problem.blocks {
        offsets.push(nx);
        nx += k * (k + 1) / 2;
    }
    let idx = |b: usize, p: usize, q: usize| {
        let (p, q) = if p <= q { (p, q) } else { (q, p) };
        let k = problem.blocks[b];
        offsets[b] + p * k - p * (p + 1) / 2 + q
    };
    let ncols = nx + problem.nfree;
    let m = problem.constraints.len();
    if m == 0 || sol.blocks.len() != problem.blocks.len() || sol.free.len() != problem.nfree {
        return;
    }
    // columns scaled by W^{-1/2}: off-diagonal entries count twice in ‖·‖_F
    let mut weight = alloc::vec![1.0; ncols];
    for (b, &k) in problem.blocks.iter().enumerate() {
        for p in 0..k {
            for q in p + 1..k {
                weight[idx(b, p, q)] = math::sqrt(0.5);
            }
        }
    }
    let mut a = Mat::zeros(m, ncols);
    for (i, c) in problem.constraints.iter().enumerate() {
        for &(b, p, q, v) in &c.entries {
            let f = if p == q { v } else { 2.0 * v };
            a[(i, idx(b, p, q))] += f * weight[idx(b, p, q)];
        }
        for &(j, v) in &c.free {
            a[(i, nx + j)] += v;
        }
    }
    let svd = a.clone().svd(true, true);
    for _ in 0..2 {
        let r = linalg::Vector::from_iterator(
            m,
            problem.constraints.iter().map(|c| {
                let mut lhs = 0.0;
                for &(b, p, q, v) in &c.entries {
                    let x = sol.blocks[b][p][q];
                    lhs += if p == q { v * x } else { 2.0 * v * x };
                }
                for &(j, v) in &c.free {
                    lhs += v * sol.free[j];
                }
                c.rhs - lhs
            }),
        );
        if r.amax() == 0.0 {
            return;
        }
        let Ok(dz) = svd.solve(&r, 1e-12 * svd.singular_values.max()) else {
            return;
        };
        for (b, &k) in problem.blocks.iter().enumerate() {
            for p in 0..k {
                for q in p..k {
                    let j = idx(b, p, q);
                    let d = dz[j] * weight[j];
                    sol.blocks[b][p][q] += d;
                    if p != q {
                        sol.blocks[b][q][p] += d;
                    }
                }
            }
        }
        for j in 0..problem.nfree {
            sol.free[j] += dz[nx + j];
        }
    }
}

/// Default options for feasibility probes: stop once strictly feasible.
pub fn probe_options() -> SolverOptions {
    SolverOptions {
        early_margin: Some(1e-7),
        ..SolverOptions::default()
    }
}

#[cfg(test)]
mod tests;
