//! Fit the group-penalized rank estimator to synthetic heavy-tailed data.

use rankreg::datagen::{Design, Noise, Signal};
use rankreg::metrics::{generate_replicate, l2_error, SimConfig};
use rankreg::{fit, SolverOptions};

fn main() -> rankreg::Result<()> {
    let mut cfg = SimConfig::new(Design::C2, 100, 400, Signal::S1, Noise::E6);
    cfg.seed = 7;
    let rep = generate_replicate(&cfg, 0)?;

    let sol = fit(&rep.data, &SolverOptions::default())?;
    println!("lambda      {:.4}", sol.lambda);
    println!("converged   {} after {} outer iterations", sol.converged, sol.outer_iters);
    println!("eta_kkt     {:.2e}  relgap {:.2e}", sol.eta_kkt, sol.relgap);
    println!("groups      {:?}", sol.nonzero_groups(&rep.data.groups));
    println!("l2 error    {:.4}", l2_error(&sol.beta, &rep.beta_star));
    Ok(())
}
