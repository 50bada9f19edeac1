//! One inner subproblem solved by semismooth Newton, printing the gradient
//! norm per iteration.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rankreg::ssn::{ssn_solve, Subproblem};
use rankreg::{GroupStructure, NewtonStrategy, SsnOptions, WeightRule};

fn main() -> rankreg::Result<()> {
    let (n, p) = (60, 150);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    let x = DMatrix::from_fn(n, p, |_, _| draw());
    let y: Vec<f64> = (0..n).map(|i| x[(i, 0)] + x[(i, 1)] + 0.5 * draw()).collect();
    let groups = GroupStructure::contiguous(p, 5, WeightRule::SqrtSize)?;
    let (s_k, beta_k, w_k) = (vec![0.0; n], vec![0.0; p], vec![0.0; n]);
    let sub = Subproblem {
        x: &x,
        y: &y,
        groups: &groups,
        lambda: 0.05,
        s_k: &s_k,
        beta_k: &beta_k,
        w_k: &w_k,
        sigma: 2.0,
        tau: 0.5,
    };
    let res = ssn_solve(&sub, &w_k, &SsnOptions::default(), NewtonStrategy::Auto, |e| e.grad_norm <= 1e-10)?;
    for (j, g) in res.grad_trace.iter().enumerate() {
        println!("{j:>3}  {g:.3e}");
    }
    Ok(())
}
