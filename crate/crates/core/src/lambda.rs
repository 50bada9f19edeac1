//! Simulation-based choice of the regularization parameter.
//!
//! Under the linear model the rank-loss subgradient at the truth is
//! `S_n = -(2 / (n(n-1))) X^T xi` with `xi = 2r - (n + 1)` and `r` the rank
//! vector of the errors, which is uniform over permutations whatever the
//! error law. The rule simulates `S_n` from random permutations and scales
//! an upper quantile of its dual norm.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group_reg::dual_norm;
use crate::model::GroupStructure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaConfig {
    /// Inflation factor, `> 1`.
    pub c0: f64,
    /// Tail probability, in `(0, 1)`.
    pub alpha0: f64,
    /// Number of simulated permutations.
    pub reps: usize,
    pub seed: u64,
}

impl Default for LambdaConfig {
    fn default() -> Self {
        LambdaConfig {
            c0: 1.01,
            alpha0: 0.1,
            reps: 500,
            seed: 0,
        }
    }
}

impl LambdaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c0 > 1.0 && self.c0.is_finite()) {
            return Err(Error::param("c0", format!("must exceed 1, got {}", self.c0)));
        }
        if !(self.alpha0 > 0.0 && self.alpha0 < 1.0) {
            return Err(Error::param(
                "alpha0",
                format!("must lie in (0, 1), got {}", self.alpha0),
            ));
        }
        if self.reps == 0 {
            return Err(Error::param("reps", "must be at least 1"));
        }
        Ok(())
    }
}

/// Result of [`select_lambda`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSelection {
    pub lambda: f64,
    /// The empirical quantile before multiplying by `c0`.
    pub quantile: f64,
    /// Simulated dual norms in replicate order.
    pub samples: Vec<f64>,
}

fn check_permutation(r: &[usize]) -> Result<()> {
    let n = r.len();
    let mut seen = vec![false; n];
    for (i, &v) in r.iter().enumerate() {
        if v == 0 || v > n {
            return Err(Error::NotAPermutation {
                n,
                reason: format!("entry {i} is {v}"),
            });
        }
        if std::mem::replace(&mut seen[v - 1], true) {
            return Err(Error::NotAPermutation {
                n,
                reason: format!("value {v} repeats at entry {i}"),
            });
        }
    }
    Ok(())
}

/// `S_n = -(2 / (n(n-1))) X^T (2r - (n+1))` for a 1-based rank vector `r`.
pub fn simulate_sn(x: &DMatrix<f64>, ranks: &[usize]) -> Result<Vec<f64>> {
    let n = x.nrows();
    if ranks.len() != n {
        return Err(Error::DimensionMismatch {
            what: "rank vector",
            expected: n,
            found: ranks.len(),
        });
    }
    if n < 2 {
        return Err(Error::TooSmall(format!("need n >= 2, got {n}")));
    }
    check_permutation(ranks)?;
    let xi = DVector::from_iterator(n, ranks.iter().map(|&r| (2 * r) as f64 - (n + 1) as f64));
    let factor = -2.0 / (n * (n - 1)) as f64;
    Ok(x.tr_mul(&xi).iter().map(|v| v * factor).collect())
}

/// Replicate `k`'s rank vector: a Fisher-Yates shuffle of `1..=n` driven by
/// its own ChaCha stream, so replicates are independent of scheduling.
pub fn replicate_ranks(n: usize, seed: u64, k: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    let mut r: Vec<usize> = (1..=n).collect();
    r.shuffle(&mut rng);
    r
}

const CHUNK: usize = 64;

/// Simulated values of `Psi^d(S_n)` for replicates `0..reps`.
pub fn simulate_dual_norms(
    x: &DMatrix<f64>,
    groups: &GroupStructure,
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let (n, p) = x.shape();
    if n < 2 {
        return Err(Error::TooSmall(format!("need n >= 2, got {n}")));
    }
    if groups.p() != p {
        return Err(Error::DimensionMismatch {
            what: "group structure width",
            expected: p,
            found: groups.p(),
        });
    }
    let factor = -2.0 / (n * (n - 1)) as f64;
    let chunks: Vec<usize> = (0..reps).step_by(CHUNK).collect();
    let per_chunk: Vec<Vec<f64>> = chunks
        .par_iter()
        .map(|&start| {
            let width = CHUNK.min(reps - start);
            let mut xi = DMatrix::<f64>::zeros(n, width);
            for c in 0..width {
                let r = replicate_ranks(n, seed, (start + c) as u64);
                for (i, &ri) in r.iter().enumerate() {
                    xi[(i, c)] = (2 * ri) as f64 - (n + 1) as f64;
                }
            }
            let sn = x.tr_mul(&xi) * factor;
            sn.column_iter()
                .map(|col| dual_norm(col.as_slice(), groups))
                .collect()
        })
        .collect();
    Ok(per_chunk.into_iter().flatten().collect())
}

/// Index of the `ceil((1 - alpha0) K)`-th order statistic, 0-based.
fn quantile_index(k: usize, alpha0: f64) -> usize {
    let target = ((1.0 - alpha0) * k as f64 - 1e-9).ceil() as usize;
    target.clamp(1, k) - 1
}

/// Empirical `(1 - alpha0)` quantile, taken as the `ceil((1 - alpha0) K)`-th
/// smallest of the `K` samples.
pub fn empirical_quantile(samples: &[f64], alpha0: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[quantile_index(sorted.len(), alpha0)]
}

/// `lambda* = c0 * Q(1 - alpha0)` of the simulated `Psi^d(S_n)`.
///
/// Depends only on the design, the groups, and the configuration; the
/// response never enters.
pub fn select_lambda(
    x: &DMatrix<f64>,
    groups: &GroupStructure,
    cfg: &LambdaConfig,
) -> Result<LambdaSelection> {
    cfg.validate()?;
    let samples = simulate_dual_norms(x, groups, cfg.reps, cfg.seed)?;
    let quantile = empirical_quantile(&samples, cfg.alpha0);
    Ok(LambdaSelection {
        lambda: cfg.c0 * quantile,
        quantile,
        samples,
    })
}
