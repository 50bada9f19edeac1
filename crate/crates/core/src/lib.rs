//! Group-lasso regularized Wilcoxon rank regression.
//!
//! The estimator minimizes `L(X beta - y) + lambda * Psi(beta)` where `L` is
//! the pairwise-difference rank loss and `Psi` the weighted group lasso.

pub mod datagen;
pub mod error;
pub mod group_reg;
pub mod io;
pub mod lambda;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod newton;
pub mod palm;
pub mod rank_loss;
pub mod ssn;

pub use error::{Error, Result};
pub use lambda::{select_lambda, LambdaConfig, LambdaSelection};
pub use model::{
    GroupStructure, Lambda, NewtonStrategy, ProblemData, Solution, SolverOptions, SsnOptions,
    WeightRule,
};
pub use palm::{fit, palm_solve};
