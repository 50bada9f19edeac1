//! Seeded replications comparing the group penalty with its lasso
//! specialization on the same data.

use rankreg::datagen::{Design, Noise, Signal};
use rankreg::metrics::{run_replications, Penalty, SimConfig};

fn main() -> rankreg::Result<()> {
    let mut cfg = SimConfig::new(Design::C2, 100, 500, Signal::S1, Noise::E6);
    cfg.reps = 4;
    cfg.seed = 11;
    for penalty in [Penalty::Group(rankreg::WeightRule::SqrtSize), Penalty::Lasso] {
        cfg.penalty = penalty;
        let (_, s) = run_replications(&cfg)?;
        println!(
            "{penalty:?}: median l2 {:.3}, median FP {:.0}, median FN {:.0}, exact support {}/{}",
            s.l2_error.median, s.fp.median, s.fn_.median, s.exact_support, s.reps
        );
    }
    Ok(())
}
