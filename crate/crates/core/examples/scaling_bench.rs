//! Solve time as the dimension grows, with the fitted log-log slope.

use rankreg::datagen::{Design, Noise, Signal};
use rankreg::metrics::{bench_sweep, log_log_slope, SimConfig, SweepAxis};

fn main() -> rankreg::Result<()> {
    let cfg = SimConfig::new(Design::C1, 100, 1000, Signal::S3, Noise::E2);
    let grid = [1000, 2000, 4000, 8000];
    let points = bench_sweep(&cfg, SweepAxis::P, &grid)?;
    for pt in &points {
        println!("p={:>5}  lambda {:.3}s  solve {:.3}s  outer {}", pt.p, pt.lambda_time, pt.solve_time, pt.outer_iters);
    }
    let sizes: Vec<f64> = grid.iter().map(|&p| p as f64).collect();
    let times: Vec<f64> = points.iter().map(|pt| pt.solve_time).collect();
    println!("slope {:.2}", log_log_slope(&sizes, &times));
    Ok(())
}
