//! Proximal map of the pairwise rank loss, its tie blocks, and its Jacobian.

use rankreg::rank_loss::{eval_rank_loss, jacobian_rank_apply, project_monotone, prox_rank_loss};

fn main() -> rankreg::Result<()> {
    let s = [3.0, -1.0, 0.2, 0.25, 2.9, -4.0];
    for scale in [0.5, 2.0, 10.0] {
        let (u, blocks) = prox_rank_loss(&s, scale);
        let tied: Vec<Vec<usize>> = blocks.tied_blocks().map(|b| b.to_vec()).collect();
        println!("scale {scale:>4}: prox {u:.3?}");
        println!("            loss {:.4} -> {:.4}, tied blocks {tied:?}", eval_rank_loss(&s), eval_rank_loss(&u));
        let d = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        println!("            J e1 = {:.3?}", jacobian_rank_apply(&blocks, &d)?);
    }
    println!("isotonic fit of [1, 3, 2, 0]: {:?}", project_monotone(&[1.0, 3.0, 2.0, 0.0]));
    Ok(())
}
