//! Block soft-thresholding and the dual norm of the weighted group penalty.

use rankreg::group_reg::{dual_norm, eval_group_norm, prox_group};
use rankreg::{GroupStructure, WeightRule};

fn main() -> rankreg::Result<()> {
    let groups = GroupStructure::with_rule(5, vec![vec![0, 1], vec![2], vec![3, 4]], WeightRule::SqrtSize)?;
    let beta = [3.0, 4.0, 0.5, -0.2, 0.1];
    println!("penalty {:.4}, dual norm {:.4}", eval_group_norm(&beta, &groups), dual_norm(&beta, &groups));
    for scale in [0.1, 1.0, 4.0] {
        let (v, active) = prox_group(&beta, &groups, scale);
        println!("scale {scale:>3}: {v:.3?} active groups {:?}", active.indices);
    }
    Ok(())
}
