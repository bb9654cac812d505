//! Infeasible-start primal-dual path following (HKM direction, Mehrotra
//! predictor-corrector) for block SDPs with free variables.
//!
//! Primal: `min ⟨C,X⟩ + cᵀy  s.t.  A(X) + B·y = b,  X ⪰ 0`.
//! Dual:   `max bᵀz  s.t.  A*(z) + S = C,  Bᵀz = c,  S ⪰ 0`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{SdpProblem, SdpSolution, SolveStatus};
use crate::linalg::{self, Mat, Vector};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Relative duality gap at which an optimum is declared.
    pub gap_tol: f64,
    /// Absolute equality residual accepted at termination.
    pub feas_tol: f64,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_factor: f64,
    /// Phase-I problems stop as soon as the margin reaches this value.
    pub early_margin: Option<f64>,
    /// Phase-I problems stop as infeasible once the dual bound on the margin
    /// drops below `−infeasibility_margin`.
    pub infeasibility_margin: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            gap_tol: 1e-8,
            feas_tol: 1e-9,
            step_factor: 0.95,
            early_margin: None,
            infeasibility_margin: 1e-6,
        }
    }
}

/// Constraint data with full symmetric entry lists, grouped per block.
struct Data {
    m: usize,
    nfree: usize,
    sizes: Vec<usize>,
    /// `per_block[j]` lists `(k, entries)` for constraints touching block `j`.
    per_block: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>>,
    /// Sparse columns of `B` per constraint.
    free: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    scale: Vec<f64>,
    c_blocks: Vec<Mat>,
    c_free: Vec<f64>,
}

impl Data {
    fn new(p: &SdpProblem) -> Self {
        let m = p.constraints.len();
        let mut per_block: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>> = vec![Vec::new(); p.blocks.len()];
        let mut free = Vec::with_capacity(m);
        let mut b = Vec::with_capacity(m);
        let mut scale = Vec::with_capacity(m);
        for (k, c) in p.constraints.iter().enumerate() {
            let s = c
                .entries
                .iter()
                .map(|e| math::abs(e.3))
                .chain(c.free.iter().map(|f| math::abs(f.1)))
                .fold(0.0, f64::max)
                .max(1e-300);
            let mut grouped: Vec<(usize, Vec<(usize, usize, f64)>)> = Vec::new();
            for &(blk, i, j, v) in &c.entries {
                let v = v / s;
                let slot = match grouped.iter_mut().find(|g| g.0 == blk) {
                    Some(g) => g,
                    None => {
                        grouped.push((blk, Vec::new()));
                        grouped.last_mut().unwrap()
                    }
                };
                slot.1.push((i, j, v));
                if i != j {
                    slot.1.push((j, i, v));
                }
            }
            for (blk, ents) in grouped {
                per_block[blk].push((k, ents));
            }
            free.push(c.free.iter().map(|(i, v)| (*i, v / s)).collect());
            b.push(c.rhs / s);
            scale.push(s);
        }
        let c_blocks = p
            .blocks
            .iter()
            .enumerate()
            .map(|(j, &n)| {
                let mut c = Mat::zeros(n, n);
                for &(blk, r, s, v) in &p.objective_blocks {
                    if blk == j {
                        c[(r, s)] += v;
                        if r != s {
                            c[(s, r)] += v;
                        }
                    }
                }
                c
            })
            .collect();
        Data {
            m,
            nfree: p.nfree,
            sizes: p.blocks.clone(),
            per_block,
            free,
            b,
            scale,
            c_blocks,
            c_free: p.objective_free.clone(),
        }
    }

    /// `A(X)`.
    fn apply(&self, x: &[Mat]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (j, list) in self.per_block.iter().enumerate() {
            for (k, ents) in list {
                out[*k] += ents.iter().map(|(p, q, v)| v * x[j][(*p, *q)]).sum::<f64>();
            }
        }
        out
    }

    /// `A*(z)` for block `j`.
    fn adjoint(&self, z: &[f64], j: usize) -> Mat {
        let n = self.sizes[j];
        let mut out = Mat::zeros(n, n);
        for (k, ents) in &self.per_block[j] {
            for (p, q, v) in ents {
                out[(*p, *q)] += z[*k] * v;
            }
        }
        out
    }

    fn bmul(&self, y: &[f64]) -> Vec<f64> {
        self.free
            .iter()
            .map(|row| row.iter().map(|(i, v)| v * y[*i]).sum())
            .collect()
    }

    fn btmul(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nfree];
        for (k, row) in self.free.iter().enumerate() {
            for (i, v) in row {
                out[*i] += v * z[k];
            }
        }
        out
    }

    /// Schur matrix `M_ik = ⟨A_i, X A_k S⁻¹⟩`.
    fn schur(&self, x: &[Mat], sinv: &[Mat]) -> Mat {
        let mut mm = Mat::zeros(self.m, self.m);
        for (j, list) in self.per_block.iter().enumerate() {
            let n = self.sizes[j];
            let mut w = Mat::zeros(n, n);
            for (k, ak) in list {
                w.fill(0.0);
                for (r, s, v) in ak {
                    for p in 0..n {
                        let xpr = x[j][(p, *r)] * v;
                        if xpr == 0.0 {
                            continue;
                        }
                        for q in 0..n {
                            w[(p, q)] += xpr * sinv[j][(*s, q)];
                        }
                    }
                }
                for (i, ai) in list {
                    if i < k {
                        continue;
                    }
                    let val: f64 = ai.iter().map(|(p, q, v)| v * w[(*p, *q)]).sum();
                    mm[(*i, *k)] += val;
                }
            }
        }
        for i in 0..self.m {
            for k in 0..i {
                mm[(k, i)] = mm[(i, k)];
            }
        }
        mm
    }
}

fn inner(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn sym(mut a: Mat) -> Mat {
    linalg::symmetrize(&mut a);
    a
}

fn inv_spd(a: &Mat) -> Option<Mat> {
    let c = a.clone().cholesky()?;
    Some(c.inverse())
}

/// Factorization of the saddle system `[[M, B], [Bᵀ, 0]]`.
struct Saddle {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    minv_b: Mat,
    schur_lu: Option<nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    bt: Mat,
}

impl Saddle {
    fn new(mut mm: Mat, data: &Data) -> Option<Self> {
        let m = mm.nrows();
        let maxdiag = (0..m).map(|i| mm[(i, i)]).fold(0.0, f64::max).max(1e-300);
        let mut chol = None;
        let mut reg = 0.0;
        for attempt in 0..8 {
            if let Some(c) = mm.clone().cholesky() {
                chol = Some(c);
                break;
            }
            let next = maxdiag * 1e-14 * 100f64.powi(attempt);
            for i in 0..m {
                mm[(i, i)] += next - reg;
            }
            reg = next;
        }
        let chol = chol?;
        let mut bmat = Mat::zeros(m, data.nfree);
        for (k, row) in data.free.iter().enumerate() {
            for (i, v) in row {
                bmat[(k, *i)] += v;
            }
        }
        let minv_b = chol.solve(&bmat);
        let bt = bmat.transpose();
        let schur_lu = if data.nfree > 0 {
            let mut s = &bt * &minv_b;
            let sd = (0..data.nfree).map(|i| s[(i, i)]).fold(0.0, f64::max).max(1e-300);
            for i in 0..data.nfree {
                s[(i, i)] += 1e-13 * sd;
            }
            Some(s.lu())
        } else {
            None
        };
        Some(Self {
            chol,
            minv_b,
            schur_lu,
            bt,
        })
    }

    fn solve(&self, r: &[f64], rf: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let rv = Vector::from_column_slice(r);
        let minv_r = self.chol.solve(&rv);
        let dy = match &self.schur_lu {
            Some(lu) => {
                let rhs = &self.bt * &minv_r - Vector::from_column_slice(rf);
                lu.solve(&rhs)?
            }
            None => Vector::zeros(0),
        };
        let dz = if dy.is_empty() {
            minv_r
        } else {
            minv_r - &self.minv_b * &dy
        };
        if dz.iter().chain(dy.iter()).any(|v| !v.is_finite()) {
            return None;
        }
        Some((dz.iter().copied().collect(), dy.iter().copied().collect()))
    }
}

struct Direction {
    dx: Vec<Mat>,
    ds: Vec<Mat>,
    dy: Vec<f64>,
    dz: Vec<f64>,
}

/// Solves `problem`, returning the final iterate whatever the status.
/// Primal residual (relative to `1 + max|b|`) below which an iterate may be
/// kept as a fallback.
const KEEP_RESIDUAL: f64 = 1e-7;

struct Kept {
    x: Vec<Mat>,
    s: Vec<Mat>,
    y: Vec<f64>,
    z: Vec<f64>,
    rel_gap: f64,
    pobj: f64,
    dobj: f64,
    pres: f64,
    dres: f64,
}

pub fn solve(problem: &SdpProblem, opts: &SolverOptions) -> SdpSolution {
    let data = Data::new(problem);
    let nb = data.sizes.len();
    let ntot: usize = data.sizes.iter().sum::<usize>().max(1);
    let margin_idx = problem.layout.margin;

    // starting point
    let bmax = data.b.iter().map(|v| math::abs(*v)).fold(0.0, f64::max);
    let cmax = data
        .c_blocks
        .iter()
        .map(|c| c.amax())
        .chain(data.c_free.iter().map(|v| math::abs(*v)))
        .fold(0.0, f64::max);
    let mut x: Vec<Mat> = data
        .sizes
        .iter()
        .map(|&n| {
            let xi = 10f64.max(math::sqrt(n as f64)).max(n as f64 * (1.0 + bmax));
            Mat::identity(n, n) * xi
        })
        .collect();
    let mut s: Vec<Mat> = data
        .sizes
        .iter()
        .map(|&n| {
            let eta = 10f64.max(math::sqrt(n as f64)).max(1.0 + cmax);
            Mat::identity(n, n) * eta
        })
        .collect();
    let mut y = vec![0.0; data.nfree];
    let mut z = vec![0.0; data.m];

    let unscaled_res = |rp: &[f64]| -> f64 {
        rp.iter()
            .zip(&data.scale)
            .map(|(r, s)| math::abs(r * s))
            .fold(0.0, f64::max)
    };

    let mut status = SolveStatus::MaxIters;
    let mut message = String::from("iteration limit reached");
    let mut iterations = 0;
    let mut stalls = 0;
    let mut pobj = 0.0;
    let mut dobj = 0.0;
    let mut pres = f64::INFINITY;
    let mut dres = f64::INFINITY;
    // Near the optimum the Newton systems lose accuracy and the primal
    // residual can creep back up; the nearly feasible iterate with the
    // smallest gap is kept and returned if the run ends without converging.
    let mut kept: Option<Kept> = None;

    for iter in 0..=opts.max_iters {
        iterations = iter;
        let ax = data.apply(&x);
        let by = data.bmul(&y);
        let rp: Vec<f64> = (0..data.m).map(|k| data.b[k] - ax[k] - by[k]).collect();
        let rd: Vec<Mat> = (0..nb)
            .map(|j| &data.c_blocks[j] - data.adjoint(&z, j) - &s[j])
            .collect();
        let btz = data.btmul(&z);
        let rf: Vec<f64> = (0..data.nfree).map(|i| data.c_free[i] - btz[i]).collect();
        pobj = (0..nb).map(|j| inner(&data.c_blocks[j], &x[j])).sum::<f64>()
            + data.c_free.iter().zip(&y).map(|(c, v)| c * v).sum::<f64>();
        dobj = data.b.iter().zip(&z).map(|(b, v)| b * v).sum();
        let gap: f64 = (0..nb).map(|j| inner(&x[j], &s[j])).sum();
        let mu = gap / ntot as f64;
        pres = unscaled_res(&rp);
        dres = rd
            .iter()
            .map(|r| r.amax())
            .chain(rf.iter().map(|v| math::abs(*v)))
            .fold(0.0, f64::max);
        let rel_gap = math::abs(pobj - dobj) / (1.0 + math::abs(pobj) + math::abs(dobj));
        let rel_pres = pres / (1.0 + bmax);
        let rel_dres = dres / (1.0 + cmax);
        if pres <= KEEP_RESIDUAL * (1.0 + bmax) && kept.as_ref().is_none_or(|k| rel_gap < k.rel_gap) {
            kept = Some(Kept {
                x: x.clone(),
                s: s.clone(),
                y: y.clone(),
                z: z.clone(),
                rel_gap,
                pobj,
                dobj,
                pres,
                dres,
            });
        }

        if let (Some(t), Some(target)) = (margin_idx, opts.early_margin) {
            if y[t] >= target && pres <= opts.feas_tol {
                status = SolveStatus::Optimal;
                message = format!("margin {:.3e} reached", y[t]);
                break;
            }
        }
        if margin_idx.is_some() && rel_dres <= 1e-8 && -dobj < -opts.infeasibility_margin {
            status = SolveStatus::Infeasible;
            message = format!("dual bound on margin {:.3e}", -dobj);
            break;
        }
        if rel_gap <= opts.gap_tol && pres <= opts.feas_tol && rel_dres <= opts.feas_tol.max(1e-9) {
            status = SolveStatus::Optimal;
            message = String::from("converged");
            break;
        }
        if let Some(msg) = farkas(&data, &z) {
            status = SolveStatus::Infeasible;
            message = msg;
            break;
        }
        if iter == opts.max_iters {
            break;
        }
        let _ = rel_pres;

        let sinv: Vec<Mat> = match s.iter().map(inv_spd).collect::<Option<Vec<_>>>() {
            Some(v) => v,
            None => {
                message = String::from("dual iterate lost definiteness");
                break;
            }
        };
        let saddle = match Saddle::new(data.schur(&x, &sinv), &data) {
            Some(f) => f,
            None => {
                message = String::from("Schur complement not positive definite");
                break;
            }
        };

        let direction = |sigma_mu: f64, corr: Option<&[Mat]>| -> Option<Direction> {
            let g: Vec<Mat> = (0..nb)
                .map(|j| {
                    let mut g = &sinv[j] * sigma_mu - &x[j] - &x[j] * &rd[j] * &sinv[j];
                    if let Some(c) = corr {
                        g -= &c[j];
                    }
                    g
                })
                .collect();
            let ag = data.apply(&g);
            let r: Vec<f64> = (0..data.m).map(|k| rp[k] - ag[k]).collect();
            let (dz, dy) = saddle.solve(&r, &rf)?;
            let mut dx = Vec::with_capacity(nb);
            let mut ds = Vec::with_capacity(nb);
            for j in 0..nb {
                let adz = data.adjoint(&dz, j);
                ds.push(&rd[j] - &adz);
                dx.push(sym(&g[j] + &x[j] * &adz * &sinv[j]));
            }
            Some(Direction { dx, ds, dy, dz })
        };

        let steps = |d: &Direction| -> Option<(f64, f64)> {
            let mut ap: f64 = 1.0;
            let mut ad: f64 = 1.0;
            for j in 0..nb {
                let lx = linalg::cholesky(&x[j])?;
                let ls = linalg::cholesky(&s[j])?;
                ap = ap.min(opts.step_factor * linalg::max_step(&lx, &d.dx[j], 1e30));
                ad = ad.min(opts.step_factor * linalg::max_step(&ls, &d.ds[j], 1e30));
            }
            Some((ap.min(1.0), ad.min(1.0)))
        };

        let pred = match direction(0.0, None) {
            Some(d) => d,
            None => {
                message = String::from("singular Newton system");
                break;
            }
        };
        let (ap, ad) = match steps(&pred) {
            Some(v) => v,
            None => {
                message = String::from("iterate lost definiteness");
                break;
            }
        };
        let mu_aff: f64 = (0..nb)
            .map(|j| inner(&(&x[j] + &pred.dx[j] * ap), &(&s[j] + &pred.ds[j] * ad)))
            .sum::<f64>()
            / ntot as f64;
        let sigma = if mu > 0.0 {
            (mu_aff / mu).clamp(0.0, 1.0).powi(3)
        } else {
            0.0
        };
        let corr: Vec<Mat> = (0..nb).map(|j| sym(&pred.dx[j] * &pred.ds[j] * &sinv[j])).collect();
        let d = direction(sigma * mu, Some(&corr)).unwrap_or(pred);
        let (ap, ad) = match steps(&d) {
            Some(v) => v,
            None => {
                message = String::from("iterate lost definiteness");
                break;
            }
        };
        for j in 0..nb {
            x[j] += &d.dx[j] * ap;
            s[j] += &d.ds[j] * ad;
            linalg::symmetrize(&mut x[j]);
            linalg::symmetrize(&mut s[j]);
        }
        for (yi, dyi) in y.iter_mut().zip(&d.dy) {
            *yi += ap * dyi;
        }
        for (zi, dzi) in z.iter_mut().zip(&d.dz) {
            *zi += ad * dzi;
        }
        if ap < 1e-9 && ad < 1e-9 {
            stalls += 1;
            if stalls >= 3 {
                message = String::from("step lengths collapsed");
                break;
            }
        } else {
            stalls = 0;
        }
    }

    if status != SolveStatus::Optimal {
        if let Some(k) = kept {
            x = k.x;
            y = k.y;
            z = k.z;
            let _ = k.s;
            pobj = k.pobj;
            dobj = k.dobj;
            pres = k.pres;
            dres = k.dres;
        }
    }
    SdpSolution {
        status,
        blocks: x
            .iter()
            .map(|m| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect())
            .collect(),
        free: y,
        dual: z.iter().zip(&data.scale).map(|(v, s)| v / s).collect(),
        primal_objective: pobj,
        dual_objective: dobj,
        primal_residual: pres,
        dual_residual: dres,
        iterations,
        message,
    }
}

/// A normalized dual ray `z` with `A*(z) ⪯ 0`, `Bᵀz = 0`, `bᵀz > 0` proves
/// the primal infeasible.
fn farkas(data: &Data, z: &[f64]) -> Option<String> {
    let bz: f64 = data.b.iter().zip(z).map(|(b, v)| b * v).sum();
    if !(bz > 1e6) {
        return None;
    }
    let btz = data.btmul(z);
    if btz.iter().any(|v| math::abs(*v) > 1e-8 * bz) {
        return None;
    }
    for j in 0..data.sizes.len() {
        let a = data.adjoint(z, j);
        let lmax = -linalg::min_eigenvalue(&(-a));
        if lmax > 1e-8 * bz {
            return None;
        }
    }
    Some(format!("dual ray with bᵀz = {:.3e}", bz))
}
