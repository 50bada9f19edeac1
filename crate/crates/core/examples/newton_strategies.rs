//! The three Newton linear solvers reach the same estimate.

use rankreg::datagen::{Design, Noise, Signal};
use rankreg::metrics::{generate_replicate, SimConfig};
use rankreg::{palm_solve, select_lambda, LambdaConfig, NewtonStrategy, SolverOptions};

fn main() -> rankreg::Result<()> {
    let mut cfg = SimConfig::new(Design::C3, 80, 300, Signal::S3, Noise::E5);
    cfg.group_size = 10;
    let rep = generate_replicate(&cfg, 0)?;
    let lambda = select_lambda(&rep.data.x, &rep.data.groups, &LambdaConfig::default())?.lambda;

    let mut reference: Option<Vec<f64>> = None;
    for strategy in [NewtonStrategy::Direct, NewtonStrategy::Woodbury, NewtonStrategy::Cg] {
        let opts = SolverOptions { tol: 1e-9, newton_strategy: strategy, ..SolverOptions::default() };
        let sol = palm_solve(&rep.data, lambda, &opts)?;
        let gap = reference.as_ref().map_or(0.0, |r| {
            r.iter().zip(&sol.beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        });
        println!("{strategy:?}: {} Newton steps, {:.3}s, max diff {gap:.1e}", sol.total_newton_iters, sol.wall_time);
        reference.get_or_insert(sol.beta);
    }
    Ok(())
}
