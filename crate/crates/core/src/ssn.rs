//! Semismooth Newton method for the inner subproblem of the proximal ALM.
//!
//! The subproblem in the dual variable `w` is
//! `psi(w) = L_sigma(w; s_k, beta_k) + (tau / 2 sigma) ||w - w_k||^2`.
//! Writing `a = s_k + sigma w`, `u = Prox_{sigma L}(a)`,
//! `b = beta_k - sigma X^T w`, `v = Prox_{sigma lambda Psi}(b)`, positive
//! homogeneity collapses the two Moreau envelopes and gives
//! `psi(w) = <y, w> + (||u||^2 - ||s_k||^2 + ||v||^2 - ||beta_k||^2) / (2 sigma)
//!         + (tau / 2 sigma) ||w - w_k||^2`
//! with gradient `y + u - X v + (tau / sigma)(w - w_k)`.

use log::{debug, warn};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::group_reg::{prox_group, ActiveGroups};
use crate::linalg::{axpy, dot, norm2, x_mul_sparse, xt_mul};
use crate::model::{GroupStructure, NewtonStrategy, SsnOptions};
use crate::newton::{assemble_hessian, solve_newton, NewtonSystem};
use crate::rank_loss::{prox_rank_loss, MonotoneBlocks};

/// One inner subproblem: fixed data, anchors, and penalty parameters.
#[derive(Debug, Clone, Copy)]
pub struct Subproblem<'a> {
    pub x: &'a DMatrix<f64>,
    pub y: &'a [f64],
    pub groups: &'a GroupStructure,
    pub lambda: f64,
    pub s_k: &'a [f64],
    pub beta_k: &'a [f64],
    pub w_k: &'a [f64],
    pub sigma: f64,
    pub tau: f64,
}

/// Everything computed at one `w`: the prox outputs double as the
/// multiplier-update candidates and as the data for the Hessian.
#[derive(Debug, Clone)]
pub struct PointEval {
    pub w: Vec<f64>,
    pub xtw: Vec<f64>,
    /// `sigma Prox_L(s_k / sigma + w)`.
    pub s_cand: Vec<f64>,
    pub blocks: MonotoneBlocks,
    /// `beta_k - sigma X^T w`.
    pub b: Vec<f64>,
    /// `sigma lambda Prox_Psi(b / (sigma lambda))`.
    pub beta_cand: Vec<f64>,
    pub active: ActiveGroups,
    /// `X beta_cand`.
    pub x_beta: Vec<f64>,
    pub grad: Vec<f64>,
    pub grad_norm: f64,
    pub psi: f64,
}

impl Subproblem<'_> {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, p) = self.x.shape();
        let dims = [
            ("response", self.y.len(), n),
            ("s anchor", self.s_k.len(), n),
            ("w anchor", self.w_k.len(), n),
            ("beta anchor", self.beta_k.len(), p),
            ("group structure width", self.groups.p(), p),
        ];
        for (what, found, expected) in dims {
            if found != expected {
                return Err(Error::DimensionMismatch { what, expected, found });
            }
        }
        for (name, v) in [("sigma", self.sigma), ("tau", self.tau), ("lambda", self.lambda)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Evaluates the subproblem at `w`, given `xtw = X^T w`.
    pub fn eval_at(&self, w: Vec<f64>, xtw: Vec<f64>) -> PointEval {
        let sigma = self.sigma;
        let (s_cand, blocks, b, beta_cand, active) = multiplier_candidates(self, &w, &xtw);
        let x_beta = x_mul_sparse(self.x, &beta_cand);
        let ratio = self.tau / sigma;
        let grad: Vec<f64> = (0..w.len())
            .map(|i| self.y[i] + s_cand[i] - x_beta[i] + ratio * (w[i] - self.w_k[i]))
            .collect();
        let wd: f64 = w.iter().zip(self.w_k).map(|(a, b)| (a - b) * (a - b)).sum();
        let psi = dot(self.y, &w)
            + (dot(&s_cand, &s_cand) - dot(self.s_k, self.s_k) + dot(&beta_cand, &beta_cand)
                - dot(self.beta_k, self.beta_k))
                / (2.0 * sigma)
            + ratio * 0.5 * wd;
        let grad_norm = norm2(&grad);
        PointEval {
            w,
            xtw,
            s_cand,
            blocks,
            b,
            beta_cand,
            active,
            x_beta,
            grad,
            grad_norm,
            psi,
        }
    }

    /// `psi(to) - psi(from)` evaluated through differences, so the result
    /// keeps its relative accuracy when the two points are close.
    pub fn psi_change(&self, from: &PointEval, to: &PointEval) -> f64 {
        self.psi_change_with_error(from, to).0
    }

    /// `psi_change` plus a bound on its floating-point error, used to keep the
    /// line search from rejecting good steps once the decrease is below
    /// rounding level.
    pub fn psi_change_with_error(&self, from: &PointEval, to: &PointEval) -> (f64, f64) {
        let mut lin = 0.0;
        let mut prox = 0.0;
        let mut anchor = 0.0;
        let mut mag_lin = 0.0;
        let mut mag_prox = 0.0;
        let mut mag_anchor = 0.0;
        for i in 0..from.w.len() {
            let dw = to.w[i] - from.w[i];
            lin += self.y[i] * dw;
            mag_lin += (self.y[i] * dw).abs();
            let (a, c) = (to.s_cand[i], from.s_cand[i]);
            prox += (a - c) * (a + c);
            mag_prox += a.abs().max(c.abs()) * (a.abs() + c.abs());
            let far = to.w[i] + from.w[i] - 2.0 * self.w_k[i];
            anchor += dw * far;
            mag_anchor += dw.abs() * (to.w[i].abs() + from.w[i].abs() + 2.0 * self.w_k[i].abs());
        }
        for j in 0..from.beta_cand.len() {
            let (a, c) = (to.beta_cand[j], from.beta_cand[j]);
            if a != 0.0 || c != 0.0 {
                prox += (a - c) * (a + c);
                mag_prox += a.abs().max(c.abs()) * (a.abs() + c.abs());
            }
        }
        let change = lin + prox / (2.0 * self.sigma) + self.tau / (2.0 * self.sigma) * anchor;
        let err = 16.0
            * f64::EPSILON
            * (mag_lin + mag_prox / (2.0 * self.sigma) + self.tau / (2.0 * self.sigma) * mag_anchor);
        (change, err)
    }

    pub fn hessian(&self, at: &PointEval) -> Result<NewtonSystem<'_>> {
        assemble_hessian(
            self.x,
            self.groups,
            self.sigma,
            self.tau,
            &at.blocks,
            &at.active,
            &at.b,
        )
    }
}

/// The multiplier updates of the outer loop evaluated at `w`:
/// `s = sigma Prox_L(s_k / sigma + w)` and
/// `beta = sigma lambda Prox_Psi(beta_k / (sigma lambda) - X^T w / lambda)`.
/// Returns `(s, blocks, b, beta, active)` with `b = beta_k - sigma X^T w`.
#[allow(clippy::type_complexity)]
pub fn multiplier_candidates(
    sub: &Subproblem<'_>,
    w: &[f64],
    xtw: &[f64],
) -> (Vec<f64>, MonotoneBlocks, Vec<f64>, Vec<f64>, ActiveGroups) {
    let sigma = sub.sigma;
    let a: Vec<f64> = sub.s_k.iter().zip(w).map(|(s, wi)| s + sigma * wi).collect();
    let (s_cand, blocks) = prox_rank_loss(&a, sigma);
    let b: Vec<f64> = sub.beta_k.iter().zip(xtw).map(|(bk, t)| bk - sigma * t).collect();
    let (beta_cand, active) = prox_group(&b, sub.groups, sigma * sub.lambda);
    (s_cand, blocks, b, beta_cand, active)
}

/// `psi(w)`.
pub fn eval_psi(sub: &Subproblem<'_>, w: &[f64]) -> f64 {
    let xtw = xt_mul(sub.x, w);
    sub.eval_at(w.to_vec(), xtw).psi
}

/// Gradient and candidates at `w`.
pub fn grad_psi(sub: &Subproblem<'_>, w: &[f64]) -> PointEval {
    let xtw = xt_mul(sub.x, w);
    sub.eval_at(w.to_vec(), xtw)
}

/// Output of [`ssn_solve`].
#[derive(Debug, Clone)]
pub struct SsnResult {
    pub point: PointEval,
    pub iters: usize,
    /// `||grad psi||` at every iterate, starting point included.
    pub grad_trace: Vec<f64>,
    /// The iteration cap was reached before the stopping rule held.
    pub hit_max_inner: bool,
    pub cg_fallbacks: usize,
    pub max_backtracks_hit: usize,
}

/// Runs semismooth Newton from `w0` until `stop` accepts an iterate.
pub fn ssn_solve(
    sub: &Subproblem<'_>,
    w0: &[f64],
    opts: &SsnOptions,
    strategy: NewtonStrategy,
    stop: impl FnMut(&PointEval) -> bool,
) -> Result<SsnResult> {
    sub.validate()?;
    if w0.len() != sub.n() {
        return Err(Error::DimensionMismatch {
            what: "starting point",
            expected: sub.n(),
            found: w0.len(),
        });
    }
    let start = grad_psi(sub, w0);
    ssn_solve_from(sub, start, opts, strategy, stop)
}

/// [`ssn_solve`] from an already evaluated starting point.
pub fn ssn_solve_from(
    sub: &Subproblem<'_>,
    start: PointEval,
    opts: &SsnOptions,
    strategy: NewtonStrategy,
    mut stop: impl FnMut(&PointEval) -> bool,
) -> Result<SsnResult> {
    let mut cur = start;
    let mut trace = vec![cur.grad_norm];
    let mut cg_fallbacks = 0;
    let mut max_backtracks_hit = 0;
    let n = sub.n();
    // Levenberg-style shift `theta n ||g||`, relaxed after full steps.
    let mut theta = opts.shift_init;
    for iter in 0..opts.max_inner {
        if stop(&cur) {
            return Ok(SsnResult {
                point: cur,
                iters: iter,
                grad_trace: trace,
                hit_max_inner: false,
                cg_fallbacks,
                max_backtracks_hit,
            });
        }
        if !cur.grad_norm.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite subproblem gradient at inner iteration {iter}"
            )));
        }
        let mut sys = sub.hessian(&cur)?;
        if theta > 0.0 {
            sys.shift(theta * n as f64 * cur.grad_norm);
        }
        let rhs: Vec<f64> = cur.grad.iter().map(|g| -g).collect();
        let tol = opts.eta_bar.min(cur.grad_norm.powf(1.0 + opts.tau_bar));
        let outcome = solve_newton(&sys, &rhs, strategy, tol, opts)?;
        if outcome.cg_fallback {
            cg_fallbacks += 1;
        }
        let mut d = outcome.d;
        let mut gd = dot(&cur.grad, &d);
        if !(gd < 0.0) {
            warn!("Newton direction is not a descent direction (<g, d> = {gd:.3e}); using -g");
            d = rhs;
            gd = -cur.grad_norm * cur.grad_norm;
        }
        let xtd = xt_mul(sub.x, &d);

        let mut alpha = 1.0;
        let mut accepted = None;
        let mut last = None;
        for _ in 0..=opts.max_backtracks {
            let mut w = cur.w.clone();
            axpy(alpha, &d, &mut w);
            let mut xtw = cur.xtw.clone();
            axpy(alpha, &xtd, &mut xtw);
            let trial = sub.eval_at(w, xtw);
            let (change, err) = sub.psi_change_with_error(&cur, &trial);
            if change <= opts.mu_bar * alpha * gd + err {
                accepted = Some(trial);
                break;
            }
            last = Some(trial);
            alpha *= opts.delta_bar;
        }
        let next = match accepted {
            Some(t) => t,
            None => {
                max_backtracks_hit += 1;
                warn!("line search exhausted {} backtracks; accepting smallest step", opts.max_backtracks);
                last.expect("at least one trial")
            }
        };
        debug!(
            "ssn iter={} grad={:.3e} step={alpha:.3e} strategy={:?} width={}",
            iter + 1,
            next.grad_norm,
            outcome.strategy,
            sys.width()
        );
        if theta > 0.0 {
            if alpha >= 1.0 {
                theta *= 0.25;
            } else if alpha < 0.2 {
                theta = (theta * 4.0).min(opts.shift_max);
            }
        }
        cur = next;
        trace.push(cur.grad_norm);
    }
    let done = stop(&cur);
    Ok(SsnResult {
        point: cur,
        iters: opts.max_inner,
        grad_trace: trace,
        hit_max_inner: !done,
        cg_fallbacks,
        max_backtracks_hit,
    })
}
