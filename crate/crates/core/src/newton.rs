//! The generalized Hessian of the inner subproblem and its linear solvers.
//!
//! `H = (tau/sigma) I + sigma Lambda + sigma X V X^T`. `Lambda` contributes a
//! diagonal (singleton blocks) plus normalized block indicators (tied
//! blocks); `V` contributes, per active group, a scaled copy of the group's
//! columns plus one rank-one term. Everything is kept in factored form so a
//! product costs `O(n r)` where `r` is the total low-rank width.

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::group_reg::ActiveGroups;
use crate::linalg::{axpy, cols_mul_add, cols_t_mul, dot, norm2};
use crate::model::{GroupStructure, NewtonStrategy, SsnOptions};
use crate::rank_loss::MonotoneBlocks;

/// Low-rank contribution of one active group `G` evaluated at `b = b_G`
/// with threshold `r`.
#[derive(Debug, Clone)]
pub struct GroupFactor {
    pub group: usize,
    pub cols: Vec<usize>,
    /// `sqrt(1 - r/||b||)`, the coefficient on `X_G`.
    pub xi_coef: f64,
    /// `sqrt(r/||b||^3)`, the coefficient on `X_G b`.
    pub upsilon_coef: f64,
    /// `X_G b`.
    pub xb: Vec<f64>,
    /// `b / ||b||`.
    pub b_unit: Vec<f64>,
    pub b_norm: f64,
}

#[derive(Debug, Clone)]
pub struct NewtonSystem<'a> {
    x: &'a DMatrix<f64>,
    pub sigma: f64,
    pub tau: f64,
    /// `tau/sigma + sigma` on singleton blocks, `tau/sigma` on tied blocks.
    pub diag: Vec<f64>,
    pub theta_blocks: MonotoneBlocks,
    pub factors: Vec<GroupFactor>,
}

/// Builds the factored Hessian at the point where `blocks` and `active`
/// were computed; `b` is the argument that was passed to the group prox.
#[allow(clippy::too_many_arguments)]
pub fn assemble_hessian<'a>(
    x: &'a DMatrix<f64>,
    groups: &GroupStructure,
    sigma: f64,
    tau: f64,
    blocks: &MonotoneBlocks,
    active: &ActiveGroups,
    b: &[f64],
) -> Result<NewtonSystem<'a>> {
    let (n, p) = x.shape();
    if blocks.len() != n {
        return Err(Error::DimensionMismatch {
            what: "rank-loss blocks",
            expected: n,
            found: blocks.len(),
        });
    }
    if b.len() != p || active.p() != p || groups.p() != p {
        return Err(Error::DimensionMismatch {
            what: "group prox argument",
            expected: p,
            found: b.len(),
        });
    }
    let base = tau / sigma;
    let diag = blocks
        .singleton_mask()
        .into_iter()
        .map(|single| if single { base + sigma } else { base })
        .collect();
    let mut factors = Vec::with_capacity(active.len());
    for ((&l, &norm), &r) in active.indices.iter().zip(&active.norms).zip(&active.radii) {
        let cols = groups.group(l).to_vec();
        let bg: Vec<f64> = cols.iter().map(|&j| b[j]).collect();
        let mut xb = vec![0.0; n];
        cols_mul_add(x, &cols, &bg, &mut xb);
        factors.push(GroupFactor {
            group: l,
            xi_coef: (1.0 - r / norm).max(0.0).sqrt(),
            upsilon_coef: (r / (norm * norm * norm)).sqrt(),
            b_unit: bg.iter().map(|v| v / norm).collect(),
            b_norm: norm,
            xb,
            cols,
        });
    }
    Ok(NewtonSystem {
        x,
        sigma,
        tau,
        diag,
        theta_blocks: blocks.clone(),
        factors,
    })
}

impl NewtonSystem<'_> {
    /// Adds `mu I`.
    pub fn shift(&mut self, mu: f64) {
        for d in &mut self.diag {
            *d += mu;
        }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    /// Number of columns contributed by the active groups' `X_G` blocks.
    pub fn group_width(&self) -> usize {
        self.factors.iter().map(|f| f.cols.len()).sum()
    }

    /// Total low-rank width: tied blocks + group columns + one per group.
    pub fn width(&self) -> usize {
        self.theta_blocks.num_tied() + self.group_width() + self.factors.len()
    }

    /// `H d` in `O(n r)`.
    pub fn matvec(&self, d: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.diag.iter().zip(d).map(|(a, b)| a * b).collect();
        for blk in self.theta_blocks.tied_blocks() {
            let mean = blk.iter().map(|&i| d[i]).sum::<f64>() / blk.len() as f64;
            for &i in blk {
                out[i] += self.sigma * mean;
            }
        }
        for f in &self.factors {
            let mut t = cols_t_mul(self.x, &f.cols, d);
            let c = self.sigma * f.xi_coef * f.xi_coef;
            t.iter_mut().for_each(|v| *v *= c);
            cols_mul_add(self.x, &f.cols, &t, &mut out);
            let s = self.sigma * f.upsilon_coef * f.upsilon_coef * dot(&f.xb, d);
            axpy(s, &f.xb, &mut out);
        }
        out
    }

    /// Dense `H`, assembled from the factors.
    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut h = DMatrix::from_diagonal(&DVector::from_column_slice(&self.diag));
        for blk in self.theta_blocks.tied_blocks() {
            let v = self.sigma / blk.len() as f64;
            for &i in blk {
                for &j in blk {
                    h[(i, j)] += v;
                }
            }
        }
        let cols: usize = self.group_width() + self.factors.len();
        if cols > 0 {
            let mut z = DMatrix::<f64>::zeros(n, cols);
            let mut c = 0;
            for f in &self.factors {
                for &j in &f.cols {
                    z.column_mut(c).axpy(f.xi_coef, &self.x.column(j), 0.0);
                    c += 1;
                }
                for i in 0..n {
                    z[(i, c)] = f.upsilon_coef * f.xb[i];
                }
                c += 1;
            }
            h.gemm(self.sigma, &z, &z.transpose(), 1.0);
        }
        h
    }

    /// Exact inverse of the block-diagonal part `A = diag + sigma Theta Theta^T`.
    pub fn apply_base_inverse(&self, v: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = v.iter().zip(&self.diag).map(|(a, b)| a / b).collect();
        for blk in self.theta_blocks.tied_blocks() {
            let a = self.diag[blk[0]];
            let mean = blk.iter().map(|&i| v[i]).sum::<f64>() / blk.len() as f64;
            let shift = self.sigma / (a + self.sigma) * mean;
            for &i in blk {
                out[i] = (v[i] - shift) / a;
            }
        }
        out
    }

    /// `W = [X_G V_G^{1/2}]_G`, with `W W^T = X V X^T`.
    fn woodbury_factor(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut w = DMatrix::<f64>::zeros(n, self.group_width());
        let mut c = 0;
        for f in &self.factors {
            let a = f.xi_coef;
            let xbu: Vec<f64> = f.xb.iter().map(|v| v / f.b_norm).collect();
            for (k, &j) in f.cols.iter().enumerate() {
                let mut col = w.column_mut(c);
                col.axpy(a, &self.x.column(j), 0.0);
                let coef = (1.0 - a) * f.b_unit[k];
                for i in 0..n {
                    col[i] += coef * xbu[i];
                }
                c += 1;
            }
        }
        w
    }
}

/// Free-function form of [`NewtonSystem::matvec`].
pub fn hessian_matvec(sys: &NewtonSystem<'_>, d: &[f64]) -> Vec<f64> {
    sys.matvec(d)
}

/// How a Newton system was actually solved.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub d: Vec<f64>,
    pub residual: f64,
    pub strategy: NewtonStrategy,
    pub cg_iters: usize,
    /// CG hit its iteration cap and the Woodbury solve was used instead.
    pub cg_fallback: bool,
}

/// The concrete strategy `auto` resolves to for this system.
pub fn resolve_strategy(sys: &NewtonSystem<'_>, requested: NewtonStrategy, opts: &SsnOptions) -> NewtonStrategy {
    match requested {
        NewtonStrategy::Auto => {
            let n = sys.n();
            if (sys.group_width() as f64) <= opts.woodbury_ratio * n as f64 {
                NewtonStrategy::Woodbury
            } else if n <= opts.direct_max_n {
                NewtonStrategy::Direct
            } else {
                NewtonStrategy::Cg
            }
        }
        other => other,
    }
}

/// Dense factorizations are refused above this size.
pub const DIRECT_MAX_N: usize = 2000;

/// Solves `H d = rhs` to `||H d - rhs|| <= tol` (best effort for CG).
pub fn solve_newton(
    sys: &NewtonSystem<'_>,
    rhs: &[f64],
    strategy: NewtonStrategy,
    tol: f64,
    opts: &SsnOptions,
) -> Result<NewtonOutcome> {
    if rhs.len() != sys.n() {
        return Err(Error::DimensionMismatch {
            what: "Newton right-hand side",
            expected: sys.n(),
            found: rhs.len(),
        });
    }
    let strategy = resolve_strategy(sys, strategy, opts);
    match strategy {
        NewtonStrategy::Direct => solve_direct(sys, rhs),
        NewtonStrategy::Woodbury => solve_woodbury(sys, rhs, tol),
        NewtonStrategy::Cg => {
            let (d, residual, iters, converged) = pcg(sys, rhs, tol, opts.cg_max_iters);
            if converged {
                Ok(NewtonOutcome {
                    d,
                    residual,
                    strategy,
                    cg_iters: iters,
                    cg_fallback: false,
                })
            } else {
                warn!("cg reached {iters} iterations (residual {residual:.3e}); falling back to woodbury");
                let mut out = solve_woodbury(sys, rhs, tol)?;
                out.cg_iters = iters;
                out.cg_fallback = true;
                Ok(out)
            }
        }
        NewtonStrategy::Auto => unreachable!("auto resolved above"),
    }
}

fn residual_norm(sys: &NewtonSystem<'_>, d: &[f64], rhs: &[f64]) -> f64 {
    let hd = sys.matvec(d);
    hd.iter().zip(rhs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn solve_direct(sys: &NewtonSystem<'_>, rhs: &[f64]) -> Result<NewtonOutcome> {
    let n = sys.n();
    if n > DIRECT_MAX_N {
        return Err(Error::param(
            "newton strategy",
            format!("direct factorization is limited to n <= {DIRECT_MAX_N}, got n = {n}"),
        ));
    }
    let chol = Cholesky::new(sys.dense())
        .ok_or_else(|| Error::Numerical("Newton matrix is not positive definite".into()))?;
    let d: Vec<f64> = chol.solve(&DVector::from_column_slice(rhs)).data.into();
    let residual = residual_norm(sys, &d, rhs);
    Ok(NewtonOutcome {
        d,
        residual,
        strategy: NewtonStrategy::Direct,
        cg_iters: 0,
        cg_fallback: false,
    })
}

fn solve_woodbury(sys: &NewtonSystem<'_>, rhs: &[f64], tol: f64) -> Result<NewtonOutcome> {
    let w = sys.woodbury_factor();
    let k = w.ncols();
    let sigma = sys.sigma;
    let (aw, chol) = if k > 0 {
        let mut aw = w.clone();
        for mut col in aw.column_iter_mut() {
            let solved = sys.apply_base_inverse(col.as_slice());
            col.copy_from_slice(&solved);
        }
        let mut inner = DMatrix::<f64>::identity(k, k);
        inner.gemm_tr(sigma, &w, &aw, 1.0);
        let chol = Cholesky::new(inner)
            .ok_or_else(|| Error::Numerical("Woodbury capacitance matrix is not positive definite".into()))?;
        (aw, Some(chol))
    } else {
        (w.clone(), None)
    };
    let apply_inverse = |v: &[f64]| -> Vec<f64> {
        let mut out = sys.apply_base_inverse(v);
        if let Some(chol) = &chol {
            let t = w.tr_mul(&DVector::from_column_slice(&out));
            let c = chol.solve(&t);
            let corr = &aw * c;
            axpy(-sigma, corr.as_slice(), &mut out);
        }
        out
    };
    let mut d = apply_inverse(rhs);
    let mut residual = residual_norm(sys, &d, rhs);
    for _ in 0..3 {
        if residual <= tol {
            break;
        }
        let hd = sys.matvec(&d);
        let r: Vec<f64> = rhs.iter().zip(&hd).map(|(a, b)| a - b).collect();
        let corr = apply_inverse(&r);
        axpy(1.0, &corr, &mut d);
        let next = residual_norm(sys, &d, rhs);
        if next >= residual {
            residual = next;
            break;
        }
        residual = next;
    }
    Ok(NewtonOutcome {
        d,
        residual,
        strategy: NewtonStrategy::Woodbury,
        cg_iters: 0,
        cg_fallback: false,
    })
}

/// Preconditioned CG from zero with the block-diagonal part of `H` as the
/// preconditioner. Returns `(d, residual, iterations, converged)`.
fn pcg(sys: &NewtonSystem<'_>, rhs: &[f64], tol: f64, max_iters: usize) -> (Vec<f64>, f64, usize, bool) {
    let n = sys.n();
    let mut d = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut rnorm = norm2(&r);
    if rnorm <= tol {
        return (d, rnorm, 0, true);
    }
    let mut z = sys.apply_base_inverse(&r);
    let mut q = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iters {
        let hq = sys.matvec(&q);
        let qhq = dot(&q, &hq);
        if qhq <= 0.0 {
            return (d, rnorm, it, false);
        }
        let alpha = rz / qhq;
        axpy(alpha, &q, &mut d);
        axpy(-alpha, &hq, &mut r);
        rnorm = norm2(&r);
        if rnorm <= tol {
            return (d, rnorm, it, true);
        }
        z = sys.apply_base_inverse(&r);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for (qi, zi) in q.iter_mut().zip(&z) {
            *qi = zi + beta * *qi;
        }
    }
    (d, rnorm, max_iters, false)
}
