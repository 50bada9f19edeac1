//! Command-line front end.
//!
//! Output schemas:
//! * `solve` writes a JSON object with `beta`, `nonzero_groups` (1-based),
//!   `eta_kkt`, `eta_p`, `eta_d`, `pobj`, `dobj`, `relgap`, `iters`,
//!   `newton_iters`, `time`, `lambda`, `converged`, and the multipliers `s`, `w`.
//! * `select-lambda` writes `{lambda, quantile, c0, alpha0, reps, seed}`;
//!   `--dump` writes the simulated dual norms, one per row.
//! * `simulate` writes one CSV row per replicate and a JSON summary.
//! * `bench` writes one CSV row per grid point with `n`, `p` and timings.
//!
//! Exit status: 0 on success, 2 when a solve stops before reaching the
//! tolerance, 1 on any error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use rankreg::datagen::{Design, Noise, Signal};
use rankreg::io::{read_groups, read_matrix, read_vector, read_weights, write_vector};
use rankreg::lambda::simulate_dual_norms;
use rankreg::metrics::{
    bench_sweep, log_log_slope, run_replications, write_bench_csv, write_reports_csv, Penalty,
    SimConfig, SweepAxis,
};
use rankreg::{
    palm_solve, select_lambda, Error, GroupStructure, Lambda, LambdaConfig, NewtonStrategy,
    ProblemData, Result, SolverOptions, WeightRule,
};

#[derive(Parser)]
#[command(name = "rankreg", version, about = "Group-lasso regularized rank regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the estimator to a design matrix and response.
    Solve(SolveArgs),
    /// Compute the simulated regularization level for a design.
    SelectLambda(SelectArgs),
    /// Run seeded replications on synthetic data.
    Simulate(SimulateArgs),
    /// Time solves over a grid of sample sizes or dimensions.
    Bench(BenchArgs),
}

#[derive(Args, Serialize)]
struct CommonArgs {
    /// Echo the resolved configuration as JSON on stderr.
    #[arg(long)]
    #[serde(skip)]
    print_config: bool,
    /// Worker threads for replicates (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct LambdaArgs {
    /// `auto` for the simulated rule, or a positive number.
    #[arg(long, default_value = "auto")]
    lambda: String,
    #[arg(long, default_value_t = 1.01)]
    c0: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha0: f64,
    /// Simulated permutations for the lambda rule.
    #[arg(long, default_value_t = 500)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl LambdaArgs {
    fn config(&self) -> LambdaConfig {
        LambdaConfig {
            c0: self.c0,
            alpha0: self.alpha0,
            reps: self.reps,
            seed: self.seed,
        }
    }

    fn resolve(&self) -> Result<Lambda> {
        if self.lambda.eq_ignore_ascii_case("auto") {
            Ok(Lambda::Auto(self.config()))
        } else {
            self.lambda
                .parse::<f64>()
                .map(Lambda::Fixed)
                .map_err(|_| Error::param("lambda", format!("expected auto or a number, got {:?}", self.lambda)))
        }
    }
}

#[derive(Args, Serialize)]
struct SolverArgs {
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Relative duality gap also required for convergence.
    #[arg(long, default_value_t = 1e-5)]
    gap_tol: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma0: f64,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Newton linear solver: auto, direct, cg, or woodbury.
    #[arg(long, default_value = "auto")]
    strategy: String,
    #[arg(long, default_value_t = 500)]
    max_outer: usize,
}

impl SolverArgs {
    fn options(&self, lambda: Lambda, seed: u64) -> Result<SolverOptions> {
        let opts = SolverOptions {
            lambda,
            tol: self.tol,
            gap_tol: self.gap_tol,
            sigma0: self.sigma0,
            tau: self.tau,
            newton_strategy: self.strategy.parse::<NewtonStrategy>()?,
            max_outer: self.max_outer,
            seed,
            ..SolverOptions::default()
        };
        opts.validate()?;
        Ok(opts)
    }
}

#[derive(Args, Serialize)]
struct DataArgs {
    /// Design matrix CSV (rows are observations).
    #[arg(long)]
    data: PathBuf,
    /// Group file (JSON, 1-based indices), or `singletons` for the lasso.
    #[arg(long)]
    groups: String,
    /// Weight rule (`unit`, `sqrt`, `inv-sqrt`) or a JSON array of weights.
    /// Ignored when the group file carries weights.
    #[arg(long, default_value = "sqrt")]
    weights: String,
}

fn parse_rule(s: &str) -> Option<WeightRule> {
    match s {
        "unit" => Some(WeightRule::Unit),
        "sqrt" | "sqrt-size" => Some(WeightRule::SqrtSize),
        "inv-sqrt" | "inv-sqrt-size" => Some(WeightRule::InvSqrtSize),
        _ => None,
    }
}

impl DataArgs {
    fn groups(&self, p: usize) -> Result<GroupStructure> {
        let rule = parse_rule(&self.weights);
        if self.groups == "singletons" {
            return match rule {
                Some(_) => Ok(GroupStructure::singletons(p)),
                None => GroupStructure::new(
                    p,
                    (0..p).map(|j| vec![j]).collect(),
                    read_weights(Path::new(&self.weights))?,
                ),
            };
        }
        let spec = read_groups(Path::new(&self.groups))?;
        match (rule, spec.weights.is_some()) {
            (_, true) => spec.build(p, WeightRule::Unit),
            (Some(r), false) => spec.build(p, r),
            (None, false) => {
                let w = read_weights(Path::new(&self.weights))?;
                GroupStructure::new(p, spec.groups, w)
            }
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Response CSV (one column).
    #[arg(long)]
    response: PathBuf,
    /// Also write the coefficients as a one-column CSV.
    #[arg(long)]
    beta_out: Option<PathBuf>,
    #[command(flatten)]
    lambda: LambdaArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    lambda: LambdaArgs,
    /// Write every simulated dual norm to this CSV.
    #[arg(long)]
    dump: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Serialize)]
struct SynthArgs {
    #[arg(long, default_value = "C1")]
    design: Design,
    #[arg(long, default_value = "S1")]
    signal: Signal,
    #[arg(long, default_value = "E2")]
    noise: Noise,
    #[arg(short = 'n', long, default_value_t = 200)]
    n: usize,
    #[arg(short = 'p', long, default_value_t = 2000)]
    p: usize,
    #[arg(long, default_value_t = 20)]
    group_size: usize,
    /// `group` for the group penalty, `lasso` for singleton groups.
    #[arg(long, default_value = "group")]
    penalty: String,
    /// Weight rule for the group penalty.
    #[arg(long, default_value = "sqrt")]
    weights: String,
}

impl SynthArgs {
    fn config(&self, solver: SolverOptions, reps: usize, seed: u64) -> Result<SimConfig> {
        let rule = parse_rule(&self.weights)
            .ok_or_else(|| Error::param("weights", format!("unknown rule {:?}", self.weights)))?;
        let penalty = match self.penalty.as_str() {
            "group" => Penalty::Group(rule),
            "lasso" => Penalty::Lasso,
            other => return Err(Error::param("penalty", format!("unknown penalty {other:?}"))),
        };
        Ok(SimConfig {
            design: self.design,
            n: self.n,
            p: self.p,
            signal: self.signal,
            noise: self.noise,
            group_size: self.group_size,
            penalty,
            solver,
            reps,
            seed,
        })
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    synth: SynthArgs,
    /// Number of replicates.
    #[arg(long, default_value_t = 10)]
    replicates: usize,
    /// Write the JSON summary here (default: stderr).
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Add wall-clock columns to the per-replicate CSV.
    #[arg(long)]
    timings: bool,
    #[command(flatten)]
    lambda: LambdaArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    synth: SynthArgs,
    /// Which dimension to vary: `n` or `p`.
    #[arg(long, default_value = "p")]
    axis: String,
    /// Comma-separated grid of sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<usize>,
    #[command(flatten)]
    lambda: LambdaArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    common: CommonArgs,
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn write_json<T: Serialize>(path: &Option<PathBuf>, value: &T) -> Result<()> {
    let mut out = output(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| Error::Io {
        path: path.clone().unwrap_or_else(|| "<stdout>".into()),
        source: e,
    })
}

fn print_config<T: Serialize>(enabled: bool, cfg: &T) -> Result<()> {
    if enabled {
        eprintln!("{}", serde_json::to_string_pretty(cfg)?);
    }
    Ok(())
}

fn init_pool(jobs: Option<usize>) -> Result<()> {
    if let Some(j) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .map_err(|e| Error::param("jobs", e.to_string()))?;
    }
    Ok(())
}

fn load(data: &DataArgs, response: Option<&Path>) -> Result<ProblemData> {
    let x = read_matrix(&data.data)?;
    let y = match response {
        Some(path) => read_vector(path)?,
        None => nalgebra::DVector::zeros(x.nrows()),
    };
    let groups = data.groups(x.ncols())?;
    ProblemData::new(x, y, groups)
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    beta: &'a [f64],
    nonzero_groups: Vec<usize>,
    eta_kkt: f64,
    eta_p: f64,
    eta_d: f64,
    pobj: f64,
    dobj: f64,
    relgap: f64,
    iters: usize,
    newton_iters: usize,
    time: f64,
    lambda: f64,
    converged: bool,
    s: &'a [f64],
    w: &'a [f64],
}

#[derive(Serialize)]
struct SolveConfig<'a> {
    data: &'a DataArgs,
    response: &'a Path,
    n: usize,
    p: usize,
    groups: usize,
    options: &'a SolverOptions,
}

fn cmd_solve(args: &SolveArgs) -> Result<ExitCode> {
    init_pool(args.common.jobs)?;
    let data = load(&args.data, Some(&args.response))?;
    let opts = args.solver.options(args.lambda.resolve()?, args.lambda.seed)?;
    print_config(
        args.common.print_config,
        &SolveConfig {
            data: &args.data,
            response: &args.response,
            n: data.n(),
            p: data.p(),
            groups: data.groups.num_groups(),
            options: &opts,
        },
    )?;
    let lambda = match &opts.lambda {
        Lambda::Fixed(l) => *l,
        Lambda::Auto(cfg) => {
            let sel = select_lambda(&data.x, &data.groups, cfg)?;
            info!("lambda={:e} quantile={:e}", sel.lambda, sel.quantile);
            sel.lambda
        }
    };
    let sol = palm_solve(&data, lambda, &opts)?;
    let nonzero_groups = sol
        .nonzero_groups(&data.groups)
        .into_iter()
        .map(|l| l + 1)
        .collect();
    write_json(
        &args.common.out,
        &SolveOutput {
            beta: &sol.beta,
            nonzero_groups,
            eta_kkt: sol.eta_kkt,
            eta_p: sol.eta_p,
            eta_d: sol.eta_d,
            pobj: sol.pobj,
            dobj: sol.dobj,
            relgap: sol.relgap,
            iters: sol.outer_iters,
            newton_iters: sol.total_newton_iters,
            time: sol.wall_time,
            lambda: sol.lambda,
            converged: sol.converged,
            s: &sol.s,
            w: &sol.w,
        },
    )?;
    if let Some(path) = &args.beta_out {
        write_vector(output(&Some(path.clone()))?, &sol.beta)?;
    }
    Ok(if sol.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

#[derive(Serialize)]
struct SelectOutput {
    lambda: f64,
    quantile: f64,
    c0: f64,
    alpha0: f64,
    reps: usize,
    seed: u64,
}

fn cmd_select_lambda(args: &SelectArgs) -> Result<ExitCode> {
    init_pool(args.common.jobs)?;
    let data = load(&args.data, None)?;
    let cfg = args.lambda.config();
    cfg.validate()?;
    print_config(args.common.print_config, &cfg)?;
    let sel = select_lambda(&data.x, &data.groups, &cfg)?;
    write_json(
        &args.common.out,
        &SelectOutput {
            lambda: sel.lambda,
            quantile: sel.quantile,
            c0: cfg.c0,
            alpha0: cfg.alpha0,
            reps: cfg.reps,
            seed: cfg.seed,
        },
    )?;
    if let Some(path) = &args.dump {
        let samples = simulate_dual_norms(&data.x, &data.groups, cfg.reps, cfg.seed)?;
        write_vector(output(&Some(path.clone()))?, &samples)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<ExitCode> {
    init_pool(args.common.jobs)?;
    let solver = args.solver.options(args.lambda.resolve()?, args.lambda.seed)?;
    let cfg = args.synth.config(solver, args.replicates, args.lambda.seed)?;
    print_config(args.common.print_config, &cfg)?;
    let (reports, summary) = run_replications(&cfg)?;
    write_reports_csv(output(&args.common.out)?, &reports, args.timings)?;
    match &args.summary {
        Some(_) => write_json(&args.summary, &summary)?,
        None => eprintln!("{}", serde_json::to_string_pretty(&summary)?),
    }
    Ok(if summary.failures == 0 && reports.iter().all(|r| r.converged) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_bench(args: &BenchArgs) -> Result<ExitCode> {
    init_pool(args.common.jobs)?;
    let axis = match args.axis.as_str() {
        "n" => SweepAxis::N,
        "p" => SweepAxis::P,
        other => return Err(Error::param("axis", format!("expected n or p, got {other:?}"))),
    };
    let solver = args.solver.options(args.lambda.resolve()?, args.lambda.seed)?;
    let cfg = args.synth.config(solver, 1, args.lambda.seed)?;
    print_config(args.common.print_config, &cfg)?;
    let points = bench_sweep(&cfg, axis, &args.grid)?;
    if points.len() >= 2 {
        let sizes: Vec<f64> = points
            .iter()
            .map(|b| match axis {
                SweepAxis::N => b.n as f64,
                SweepAxis::P => b.p as f64,
            })
            .collect();
        let times: Vec<f64> = points.iter().map(|b| b.solve_time).collect();
        info!("log_log_slope={:.3}", log_log_slope(&sizes, &times));
    }
    write_bench_csv(output(&args.common.out)?, &points)?;
    Ok(if points.iter().all(|b| b.converged) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RANKREG_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::SelectLambda(a) => cmd_select_lambda(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
