//! Proximal augmented Lagrangian method on the dual problem.
//!
//! Primal: `min_{s, beta} L(s) + lambda Psi(beta)` s.t. `X beta - s - y = 0`.
//! Dual: `min_w <y, w> + L*(w) + lambda Psi*(-X^T w / lambda)`.
//! Each outer step minimizes the augmented Lagrangian in `w` plus a proximal
//! term by semismooth Newton, then updates `(s, beta)` from the prox outputs.

use std::time::Instant;

use log::{info, warn};

use crate::error::{Error, Result};
use crate::group_reg::{eval_group_norm, prox_group};
use crate::lambda::select_lambda;
use crate::linalg::{dot, norm2, norm_inf, x_mul_sparse, xt_mul};
use crate::model::{validate_problem, IterRecord, Lambda, ProblemData, Solution, SolverOptions};
use crate::rank_loss::{eval_rank_loss, prox_rank_loss};
use crate::ssn::{ssn_solve_from, PointEval, Subproblem};

/// Relative KKT residuals `(eta_p, eta_d, eta_kkt)` of a primal-dual triple.
pub fn kkt_residual(
    data: &ProblemData,
    lambda: f64,
    w: &[f64],
    s: &[f64],
    beta: &[f64],
) -> (f64, f64, f64) {
    let xb = x_mul_sparse(&data.x, beta);
    let xtw = xt_mul(&data.x, w);
    kkt_from_products(data, lambda, w, s, beta, &xb, &xtw)
}

fn kkt_from_products(
    data: &ProblemData,
    lambda: f64,
    w: &[f64],
    s: &[f64],
    beta: &[f64],
    xb: &[f64],
    xtw: &[f64],
) -> (f64, f64, f64) {
    let y = data.y.as_slice();
    let primal: Vec<f64> = (0..y.len()).map(|i| xb[i] - s[i] - y[i]).collect();
    let eta_p = norm2(&primal) / (1.0 + norm2(y));

    let ws: Vec<f64> = w.iter().zip(s).map(|(a, b)| a + b).collect();
    let (ps, _) = prox_rank_loss(&ws, 1.0);
    let ds: Vec<f64> = s.iter().zip(&ps).map(|(a, b)| a - b).collect();
    let eta_s = norm2(&ds) / (1.0 + norm2(s));

    let arg: Vec<f64> = beta.iter().zip(xtw).map(|(a, b)| a - b).collect();
    let (pb, _) = prox_group(&arg, &data.groups, lambda);
    let db: Vec<f64> = beta.iter().zip(&pb).map(|(a, b)| a - b).collect();
    let eta_b = norm2(&db) / (1.0 + norm2(beta));

    let eta_d = eta_s.max(eta_b);
    (eta_p, eta_d, eta_p.max(eta_d))
}

/// Objective values and duality gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objectives {
    pub pobj: f64,
    pub dobj: f64,
    pub relgap: f64,
    /// `max(||Prox_L(w)||_inf, max_l (||(X^T w)_G|| / lambda - w_l)_+)`;
    /// zero exactly when `w` is dual feasible.
    pub dual_infeas: f64,
}

/// Dual-infeasibility level above which the gap is reported as flagged.
pub const DUAL_INFEAS_TOL: f64 = 1e-8;

/// `pobj = L(X beta - y) + lambda Psi(beta)`, `dobj = -<y, w>` with the
/// conjugate indicators taken as zero; `dual_infeas` measures how far `w`
/// is from making that exact.
pub fn objectives(data: &ProblemData, lambda: f64, w: &[f64], beta: &[f64]) -> Objectives {
    let xb = x_mul_sparse(&data.x, beta);
    let xtw = xt_mul(&data.x, w);
    objectives_from_products(data, lambda, w, beta, &xb, &xtw)
}

fn objectives_from_products(
    data: &ProblemData,
    lambda: f64,
    w: &[f64],
    beta: &[f64],
    xb: &[f64],
    xtw: &[f64],
) -> Objectives {
    let y = data.y.as_slice();
    let resid: Vec<f64> = xb.iter().zip(y).map(|(a, b)| a - b).collect();
    let pobj = eval_rank_loss(&resid) + lambda * eval_group_norm(beta, &data.groups);
    let dobj = -dot(y, w);
    let (pw, _) = prox_rank_loss(w, 1.0);
    let mut infeas = norm_inf(&pw);
    let g = &data.groups;
    for l in 0..g.num_groups() {
        let nrm = g.group(l).iter().map(|&j| xtw[j] * xtw[j]).sum::<f64>().sqrt();
        infeas = infeas.max(nrm / lambda - g.weight(l));
    }
    let relgap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
    Objectives {
        pobj,
        dobj,
        relgap,
        dual_infeas: infeas.max(0.0),
    }
}

/// Robust spread of `y` (median absolute deviation, falling back to the mean
/// absolute deviation, then 1).
pub fn response_scale(y: &[f64]) -> f64 {
    fn median(v: &mut [f64]) -> f64 {
        v.sort_by(f64::total_cmp);
        let m = v.len();
        if m % 2 == 1 {
            v[m / 2]
        } else {
            0.5 * (v[m / 2 - 1] + v[m / 2])
        }
    }
    if y.is_empty() {
        return 1.0;
    }
    let med = median(&mut y.to_vec());
    let mut dev: Vec<f64> = y.iter().map(|v| (v - med).abs()).collect();
    let mad = median(&mut dev);
    if mad > 0.0 {
        return mad;
    }
    let mean = dev.iter().sum::<f64>() / dev.len() as f64;
    if mean > 0.0 {
        mean
    } else {
        1.0
    }
}

/// Mutable state of the outer loop.
#[derive(Debug, Clone)]
pub struct OuterState {
    pub w: Vec<f64>,
    pub s: Vec<f64>,
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub k: usize,
    pub trace: Vec<IterRecord>,
}

/// Solves the regularized rank regression problem at a fixed `lambda`.
pub fn palm_solve(data: &ProblemData, lambda: f64, opts: &SolverOptions) -> Result<Solution> {
    validate_problem(data)?;
    opts.validate()?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::param("lambda", format!("must be positive, got {lambda}")));
    }
    let start = Instant::now();
    let (n, p) = (data.n(), data.p());
    let y = data.y.as_slice();
    let mut st = OuterState {
        w: vec![0.0; n],
        s: y.iter().map(|v| -v).collect(),
        beta: vec![0.0; p],
        sigma: opts.sigma0,
        k: 0,
        trace: Vec::new(),
    };
    let mut xtw = vec![0.0; p];
    // `sigma` is measured in units where `y` has unit spread and the loss is
    // multiplied by `n`, so that the dual variable is O(1): the subproblem
    // sees `unit * sigma`. `tau` stays in the original units.
    let c = response_scale(y);
    let unit = c * n as f64;
    let mut total_newton = 0;
    let mut converged = false;
    let mut last: Option<(f64, f64, f64, Objectives)> = None;

    while st.k < opts.max_outer {
        let k = st.k;
        let delta = opts.delta_rule.delta(k);
        let sub = Subproblem {
            x: &data.x,
            y,
            groups: &data.groups,
            lambda,
            s_k: &st.s,
            beta_k: &st.beta,
            w_k: &st.w,
            sigma: unit * st.sigma,
            tau: opts.tau,
        };
        let start_pt = sub.eval_at(st.w.clone(), xtw.clone());
        let scale = delta * opts.tau.sqrt().min(1.0) / st.sigma;
        let tol = opts.tol;
        let stop = |e: &PointEval| {
            let mut mw = 0.0;
            let mut msb = 0.0;
            for i in 0..n {
                mw += (e.w[i] - sub.w_k[i]).powi(2);
                msb += (e.s_cand[i] - sub.s_k[i]).powi(2);
            }
            for j in 0..p {
                msb += (e.beta_cand[j] - sub.beta_k[j]).powi(2);
            }
            let mv = (opts.tau * mw + msb) / (c * c);
            if e.grad_norm / c <= scale * mv.sqrt().min(1.0) {
                return true;
            }
            let (_, _, eta) =
                kkt_from_products(data, lambda, &e.w, &e.s_cand, &e.beta_cand, &e.x_beta, &e.xtw);
            eta <= tol
                && objectives_from_products(data, lambda, &e.w, &e.beta_cand, &e.x_beta, &e.xtw)
                    .relgap
                    <= opts.gap_tol
        };
        let res = ssn_solve_from(&sub, start_pt, &opts.ssn, opts.newton_strategy, stop)?;
        if res.hit_max_inner {
            warn!(
                "inner solve hit {} iterations at k={k} (grad {:.3e}); continuing with larger sigma",
                opts.ssn.max_inner, res.point.grad_norm
            );
        }
        total_newton += res.iters;
        let pt = res.point;
        let (eta_p, eta_d, eta) =
            kkt_from_products(data, lambda, &pt.w, &pt.s_cand, &pt.beta_cand, &pt.x_beta, &pt.xtw);
        let obj = objectives_from_products(data, lambda, &pt.w, &pt.beta_cand, &pt.x_beta, &pt.xtw);
        if !(obj.pobj.is_finite() && obj.dobj.is_finite() && eta.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite objective at outer iteration {k} (pobj {}, dobj {}, eta {eta})",
                obj.pobj, obj.dobj
            )));
        }
        let record = IterRecord {
            k: k + 1,
            sigma: st.sigma,
            eta_p,
            eta_d,
            pobj: obj.pobj,
            dobj: obj.dobj,
            relgap: obj.relgap,
            newton_iters: res.iters,
        };
        info!(
            "k={} sigma={:.4e} eta_p={:.3e} eta_d={:.3e} relgap={:.3e} ssn_iters={}",
            record.k, record.sigma, eta_p, eta_d, obj.relgap, res.iters
        );
        st.trace.push(record);
        st.w = pt.w;
        st.s = pt.s_cand;
        st.beta = pt.beta_cand;
        xtw = pt.xtw;
        st.k += 1;
        let gap_ok = obj.relgap <= opts.gap_tol;
        last = Some((eta_p, eta_d, eta, obj));
        if eta <= opts.tol && gap_ok {
            converged = true;
            break;
        }
        if res.iters <= opts.sigma_hold_iters {
            st.sigma = (st.sigma * opts.sigma_growth).min(opts.sigma_max);
        }
    }

    let (eta_p, eta_d, eta_kkt, obj) = last.expect("at least one outer iteration");
    if obj.dual_infeas > DUAL_INFEAS_TOL {
        info!("dual_infeas={:.3e} exceeds {DUAL_INFEAS_TOL:e}; relgap uses the unconstrained dual value", obj.dual_infeas);
    }
    if !converged {
        warn!("stopped after {} outer iterations with eta_kkt={eta_kkt:.3e}", st.k);
    }
    Ok(Solution {
        beta: st.beta,
        s: st.s,
        w: st.w,
        lambda,
        eta_kkt,
        eta_p,
        eta_d,
        pobj: obj.pobj,
        dobj: obj.dobj,
        relgap: obj.relgap,
        dual_infeas: obj.dual_infeas,
        outer_iters: st.k,
        total_newton_iters: total_newton,
        wall_time: start.elapsed().as_secs_f64(),
        converged,
        trace: st.trace,
    })
}

/// Resolves `lambda` (simulating it if requested) and solves.
pub fn fit(data: &ProblemData, opts: &SolverOptions) -> Result<Solution> {
    let lambda = match &opts.lambda {
        Lambda::Fixed(l) => *l,
        Lambda::Auto(cfg) => select_lambda(&data.x, &data.groups, cfg)?.lambda,
    };
    palm_solve(data, lambda, opts)
}
