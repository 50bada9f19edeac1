//! Estimation metrics and the replication / timing harness.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{derive_seed, gen_design, gen_noise, gen_signal, Design, DesignSpec, Noise, Signal};
use crate::error::{Error, Result};
use crate::lambda::select_lambda;
use crate::linalg::x_mul_sparse;
use crate::model::{GroupStructure, Lambda, ProblemData, SolverOptions, WeightRule};
use crate::palm::palm_solve;

/// Coefficients with magnitude at or below this count as zero.
pub const ZERO_TOL: f64 = 1e-8;

pub fn l2_error(beta_hat: &[f64], beta_star: &[f64]) -> f64 {
    beta_hat
        .iter()
        .zip(beta_star)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// `(b - b*)^T Sigma_X (b - b*)` with `Sigma_X` the column-centered sample
/// covariance (`1/n` normalization), computed as `||X_c (b - b*)||^2 / n`.
pub fn model_error(beta_hat: &[f64], beta_star: &[f64], x: &nalgebra::DMatrix<f64>) -> f64 {
    let diff: Vec<f64> = beta_hat.iter().zip(beta_star).map(|(a, b)| a - b).collect();
    let xd = x_mul_sparse(x, &diff);
    let n = xd.len() as f64;
    let mean = xd.iter().sum::<f64>() / n;
    xd.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// `(false positives, false negatives)`.
pub fn support_errors(beta_hat: &[f64], beta_star: &[f64], zero_tol: f64) -> (usize, usize) {
    let mut fp = 0;
    let mut fn_ = 0;
    for (&h, &s) in beta_hat.iter().zip(beta_star) {
        let selected = h.abs() > zero_tol;
        if s == 0.0 && selected {
            fp += 1;
        }
        if s != 0.0 && !selected {
            fn_ += 1;
        }
    }
    (fp, fn_)
}

/// Penalty used by the estimator in a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Penalty {
    /// Contiguous groups of `group_size` with the given weight rule.
    Group(WeightRule),
    /// Singleton groups with unit weights.
    Lasso,
}

/// One simulation setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub design: Design,
    pub n: usize,
    pub p: usize,
    pub signal: Signal,
    pub noise: Noise,
    /// Size of the contiguous groups carrying the signal (and the penalty).
    pub group_size: usize,
    pub penalty: Penalty,
    pub solver: SolverOptions,
    pub reps: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(design: Design, n: usize, p: usize, signal: Signal, noise: Noise) -> Self {
        SimConfig {
            design,
            n,
            p,
            signal,
            noise,
            group_size: 20,
            penalty: Penalty::Group(WeightRule::SqrtSize),
            solver: SolverOptions::default(),
            reps: 1,
            seed: 0,
        }
    }

    pub fn signal_groups(&self) -> Result<GroupStructure> {
        GroupStructure::contiguous(self.p, self.group_size, WeightRule::SqrtSize)
    }

    pub fn penalty_groups(&self) -> Result<GroupStructure> {
        match self.penalty {
            Penalty::Group(rule) => GroupStructure::contiguous(self.p, self.group_size, rule),
            Penalty::Lasso => Ok(GroupStructure::singletons(self.p)),
        }
    }
}

/// A generated replicate: data, truth, and the seed that produced them.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub id: usize,
    pub seed: u64,
    pub data: ProblemData,
    pub beta_star: Vec<f64>,
}

/// Generates replicate `id` of `cfg`. The data depend only on the setting
/// and seed, not on the penalty, so different estimators see the same data.
pub fn generate_replicate(cfg: &SimConfig, id: usize) -> Result<Replicate> {
    let seed = derive_seed(cfg.seed, id as u64);
    let spec = DesignSpec {
        kind: cfg.design,
        n: cfg.n,
        p: cfg.p,
    };
    let x = gen_design(&spec, derive_seed(seed, 1))?;
    let beta_star = gen_signal(cfg.signal, cfg.p, &cfg.signal_groups()?)?;
    let noise = gen_noise(cfg.noise, cfg.n, derive_seed(seed, 2));
    let xb = x_mul_sparse(&x, &beta_star);
    let y = nalgebra::DVector::from_iterator(cfg.n, xb.iter().zip(&noise).map(|(a, e)| a + e));
    let data = ProblemData::new(x, y, cfg.penalty_groups()?)?;
    Ok(Replicate {
        id,
        seed,
        data,
        beta_star,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub replicate: usize,
    pub seed: u64,
    pub lambda_used: f64,
    pub l2_error: f64,
    pub model_error: f64,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub lambda_time: f64,
    pub solve_time: f64,
    pub eta_kkt: f64,
    pub relgap: f64,
    pub outer_iters: usize,
    pub converged: bool,
    /// Set when the replicate failed; metrics are then NaN.
    pub error: Option<String>,
}

fn resolve_lambda(cfg: &SimConfig, rep: &Replicate) -> Result<(f64, f64)> {
    let t = Instant::now();
    let lambda = match &cfg.solver.lambda {
        Lambda::Fixed(l) => *l,
        Lambda::Auto(lc) => {
            let mut lc = lc.clone();
            lc.seed = derive_seed(rep.seed, 3);
            select_lambda(&rep.data.x, &rep.data.groups, &lc)?.lambda
        }
    };
    Ok((lambda, t.elapsed().as_secs_f64()))
}

/// Selects `lambda` and solves one replicate, then scores it.
pub fn evaluate_replicate(cfg: &SimConfig, rep: &Replicate) -> Result<EstimationReport> {
    let (lambda, lambda_time) = resolve_lambda(cfg, rep)?;
    let sol = palm_solve(&rep.data, lambda, &cfg.solver)?;
    let (fp, fn_) = support_errors(&sol.beta, &rep.beta_star, ZERO_TOL);
    Ok(EstimationReport {
        replicate: rep.id,
        seed: rep.seed,
        lambda_used: lambda,
        l2_error: l2_error(&sol.beta, &rep.beta_star),
        model_error: model_error(&sol.beta, &rep.beta_star, &rep.data.x),
        fp,
        fn_,
        lambda_time,
        solve_time: sol.wall_time,
        eta_kkt: sol.eta_kkt,
        relgap: sol.relgap,
        outer_iters: sol.outer_iters,
        converged: sol.converged,
        error: None,
    })
}

fn failed_report(id: usize, seed: u64, err: &Error) -> EstimationReport {
    EstimationReport {
        replicate: id,
        seed,
        lambda_used: f64::NAN,
        l2_error: f64::NAN,
        model_error: f64::NAN,
        fp: 0,
        fn_: 0,
        lambda_time: 0.0,
        solve_time: 0.0,
        eta_kkt: f64::NAN,
        relgap: f64::NAN,
        outer_iters: 0,
        converged: false,
        error: Some(err.to_string()),
    }
}

/// Median and mean of one metric over successful replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub median: f64,
    pub mean: f64,
}

impl Aggregate {
    fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Aggregate {
                median: f64::NAN,
                mean: f64::NAN,
            };
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let m = v.len();
        let median = if m % 2 == 1 {
            v[m / 2]
        } else {
            0.5 * (v[m / 2 - 1] + v[m / 2])
        };
        Aggregate {
            median,
            mean: v.iter().sum::<f64>() / m as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: SimConfig,
    pub reps: usize,
    pub failures: usize,
    pub lambda: Aggregate,
    pub l2_error: Aggregate,
    pub model_error: Aggregate,
    pub fp: Aggregate,
    #[serde(rename = "fn")]
    pub fn_: Aggregate,
    pub solve_time: Aggregate,
    pub exact_support: usize,
}

pub fn summarize(cfg: &SimConfig, reports: &[EstimationReport]) -> Summary {
    let ok: Vec<&EstimationReport> = reports.iter().filter(|r| r.error.is_none()).collect();
    let pick = |f: fn(&EstimationReport) -> f64| -> Aggregate {
        Aggregate::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>())
    };
    Summary {
        config: cfg.clone(),
        reps: reports.len(),
        failures: reports.len() - ok.len(),
        lambda: pick(|r| r.lambda_used),
        l2_error: pick(|r| r.l2_error),
        model_error: pick(|r| r.model_error),
        fp: pick(|r| r.fp as f64),
        fn_: pick(|r| r.fn_ as f64),
        solve_time: pick(|r| r.solve_time),
        exact_support: ok.iter().filter(|r| r.fp == 0 && r.fn_ == 0).count(),
    }
}

/// Runs `cfg.reps` replicates in parallel. Failures are recorded in the
/// report rather than aborting the run.
pub fn run_replications(cfg: &SimConfig) -> Result<(Vec<EstimationReport>, Summary)> {
    if cfg.reps == 0 {
        return Err(Error::param("reps", "must be at least 1"));
    }
    cfg.solver.validate()?;
    let reports: Vec<EstimationReport> = (0..cfg.reps)
        .into_par_iter()
        .map(|id| {
            let seed = derive_seed(cfg.seed, id as u64);
            generate_replicate(cfg, id)
                .and_then(|rep| evaluate_replicate(cfg, &rep))
                .unwrap_or_else(|e| failed_report(id, seed, &e))
        })
        .collect();
    let summary = summarize(cfg, &reports);
    Ok((reports, summary))
}

/// One CSV row per report. Wall-clock columns are written only when
/// `timings` is set, so that the default output is reproducible byte for byte.
pub fn write_reports_csv<W: Write>(out: W, reports: &[EstimationReport], timings: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["replicate", "seed", "lambda_used", "l2_error", "model_error", "fp", "fn"];
    if timings {
        header.extend(["lambda_time", "solve_time"]);
    }
    header.extend(["eta_kkt", "relgap", "outer_iters", "converged", "error"]);
    w.write_record(&header)?;
    for r in reports {
        let mut row = vec![
            r.replicate.to_string(),
            r.seed.to_string(),
            r.lambda_used.to_string(),
            r.l2_error.to_string(),
            r.model_error.to_string(),
            r.fp.to_string(),
            r.fn_.to_string(),
        ];
        if timings {
            row.extend([r.lambda_time.to_string(), r.solve_time.to_string()]);
        }
        row.extend([
            r.eta_kkt.to_string(),
            r.relgap.to_string(),
            r.outer_iters.to_string(),
            r.converged.to_string(),
            r.error.clone().unwrap_or_default(),
        ]);
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<csv output>".into(),
        source: e,
    })?;
    Ok(())
}

/// Axis of a timing sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    N,
    P,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchPoint {
    pub n: usize,
    pub p: usize,
    pub lambda: f64,
    pub lambda_time: f64,
    pub solve_time: f64,
    pub outer_iters: usize,
    pub newton_iters: usize,
    pub eta_kkt: f64,
    pub converged: bool,
}

/// Times one solve per grid value, varying `n` or `p` from `base`.
/// Points run one after another so their timings do not interfere.
pub fn bench_sweep(base: &SimConfig, axis: SweepAxis, grid: &[usize]) -> Result<Vec<BenchPoint>> {
    let mut out = Vec::with_capacity(grid.len());
    for &size in grid {
        let mut cfg = base.clone();
        match axis {
            SweepAxis::N => cfg.n = size,
            SweepAxis::P => cfg.p = size,
        }
        let rep = generate_replicate(&cfg, 0)?;
        let (lambda, lambda_time) = resolve_lambda(&cfg, &rep)?;
        let sol = palm_solve(&rep.data, lambda, &cfg.solver)?;
        out.push(BenchPoint {
            n: cfg.n,
            p: cfg.p,
            lambda,
            lambda_time,
            solve_time: sol.wall_time,
            outer_iters: sol.outer_iters,
            newton_iters: sol.total_newton_iters,
            eta_kkt: sol.eta_kkt,
            converged: sol.converged,
        });
    }
    Ok(out)
}

/// Least-squares slope of `log(time)` against `log(size)`.
pub fn log_log_slope(sizes: &[f64], times: &[f64]) -> f64 {
    let lx: Vec<f64> = sizes.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = times.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn write_bench_csv<W: Write>(out: W, points: &[BenchPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<csv output>".into(),
        source: e,
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn l2_examples() {
        assert_eq!(l2_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(l2_error(&[1.0, 3.0], &[1.0, 2.0]), 1.0);
        let a = [0.3, -1.2, 4.0];
        let b = [1.0, 0.5, -2.0];
        let direct = ((0.3f64 - 1.0).powi(2) + (-1.2f64 - 0.5).powi(2) + 6.0f64.powi(2)).sqrt();
        assert!((l2_error(&a, &b) - direct).abs() < 1e-15);
    }

    #[test]
    fn model_error_against_explicit_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(12, 4, |_, _| rng.random_range(-2.0..2.0));
        let a: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert_eq!(model_error(&a, &a, &x), 0.0);

        let mean = x.row_mean();
        let mut xc = x.clone();
        for mut row in xc.row_iter_mut() {
            row -= &mean;
        }
        let sigma = xc.transpose() * &xc / 12.0;
        let d = nalgebra::DVector::from_iterator(4, a.iter().zip(&b).map(|(p, q)| p - q));
        let explicit = (d.transpose() * sigma * &d)[(0, 0)];
        assert!((model_error(&a, &b, &x) - explicit).abs() < 1e-12);
        assert!(model_error(&a, &b, &x) >= 0.0);

        // Centered orthogonal columns scaled to unit sample variance.
        let xi = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]);
        let me = model_error(&[0.5, -2.0], &[0.0, 0.0], &xi);
        assert!((me - l2_error(&[0.5, -2.0], &[0.0, 0.0]).powi(2)).abs() < 1e-14);
    }

    #[test]
    fn support_examples() {
        let star = [1.0, 0.0, -2.0, 0.0];
        assert_eq!(support_errors(&star, &star, ZERO_TOL), (0, 0));
        assert_eq!(support_errors(&[0.0; 4], &star, ZERO_TOL), (0, 2));
        assert_eq!(support_errors(&[1.0, 1e-3, -2.0, 0.0], &star, ZERO_TOL), (1, 0));
        assert_eq!(support_errors(&[1.0, 1e-9, -2.0, 0.0], &star, ZERO_TOL), (0, 0));
    }

    fn small_config() -> SimConfig {
        SimConfig {
            reps: 2,
            seed: 13,
            group_size: 5,
            solver: SolverOptions {
                lambda: Lambda::Auto(crate::lambda::LambdaConfig {
                    reps: 100,
                    ..Default::default()
                }),
                ..SolverOptions::default()
            },
            ..SimConfig::new(Design::C1, 40, 50, Signal::S1, Noise::E2)
        }
    }

    #[test]
    fn single_replicate_matches_manual_pipeline() {
        let cfg = SimConfig { reps: 1, ..small_config() };
        let (reports, summary) = run_replications(&cfg).unwrap();
        let rep = generate_replicate(&cfg, 0).unwrap();
        let manual = evaluate_replicate(&cfg, &rep).unwrap();
        assert_eq!(reports[0].l2_error, manual.l2_error);
        assert_eq!(reports[0].fp, manual.fp);
        assert_eq!(summary.l2_error.median, manual.l2_error);
    }

    #[test]
    fn replications_are_reproducible() {
        let cfg = small_config();
        let (a, _) = run_replications(&cfg).unwrap();
        let (b, _) = run_replications(&cfg).unwrap();
        let strip = |v: &[EstimationReport]| -> Vec<(f64, f64, usize, usize)> {
            v.iter().map(|r| (r.lambda_used, r.l2_error, r.fp, r.fn_)).collect()
        };
        assert_eq!(strip(&a), strip(&b));
        let csv = |v: &[EstimationReport], timings| {
            let mut buf = Vec::new();
            write_reports_csv(&mut buf, v, timings).unwrap();
            String::from_utf8(buf).unwrap()
        };
        let text = csv(&a, false);
        assert!(text.starts_with("replicate,seed,lambda_used"));
        assert_eq!(text.lines().count(), 3);
        assert_eq!(text, csv(&b, false));
        assert!(csv(&a, true).lines().next().unwrap().contains("solve_time"));
    }

    #[test]
    fn slope_of_power_law() {
        let sizes = [1.0, 2.0, 4.0];
        let times = [3.0, 6.0, 12.0];
        assert!((log_log_slope(&sizes, &times) - 1.0).abs() < 1e-12);
    }
}
