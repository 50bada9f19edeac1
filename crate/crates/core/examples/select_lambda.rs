//! The simulated regularization level depends only on the design.

use rankreg::datagen::{gen_design, Design, DesignSpec};
use rankreg::{select_lambda, GroupStructure, LambdaConfig, WeightRule};

fn main() -> rankreg::Result<()> {
    let spec = DesignSpec { kind: Design::C1, n: 200, p: 1000 };
    let x = gen_design(&spec, 1)?;

    let lasso = GroupStructure::singletons(1000);
    let grouped = GroupStructure::contiguous(1000, 10, WeightRule::SqrtSize)?;
    for (name, groups) in [("singletons", &lasso), ("groups of 10", &grouped)] {
        for alpha0 in [0.05, 0.1, 0.2] {
            let cfg = LambdaConfig { alpha0, ..LambdaConfig::default() };
            let sel = select_lambda(&x, groups, &cfg)?;
            println!("{name:>13}  alpha0={alpha0:<4}  lambda={:.4}", sel.lambda);
        }
    }
    Ok(())
}
