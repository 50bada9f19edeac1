//! The Wilcoxon rank loss
//! `L(u) = (1 / (n(n-1))) * sum_{i != j} |u_i - u_j|`.
//!
//! Sorting turns the pairwise sum into a weighted ordered sum with a fixed,
//! strictly decreasing weight vector, which gives `O(n log n)` evaluation and
//! a proximal map built from one sort and one isotonic projection.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Weights `rho_k = (2n - 4k + 2) / (n(n-1))`, `k = 1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoWeights {
    rho: Vec<f64>,
}

impl RhoWeights {
    pub fn as_slice(&self) -> &[f64] {
        &self.rho
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }
}

pub fn rho_weights(n: usize) -> Result<RhoWeights> {
    if n < 2 {
        return Err(Error::TooSmall(format!("rank loss needs n >= 2, got {n}")));
    }
    Ok(RhoWeights {
        rho: rho_vec(n),
    })
}

fn rho_vec(n: usize) -> Vec<f64> {
    let denom = (n * (n - 1)) as f64;
    (1..=n)
        .map(|k| (2.0 * n as f64 - 4.0 * k as f64 + 2.0) / denom)
        .collect()
}

/// Partial sum `sum_{i <= k} rho_i = 2k(n-k) / (n(n-1))`.
fn rho_partial(n: usize, k: usize) -> f64 {
    2.0 * (k as f64) * ((n - k) as f64) / ((n * (n - 1)) as f64)
}

/// Indices of `z` in descending order of value; ties keep index order.
fn descending_order(z: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..z.len()).collect();
    idx.sort_by(|&i, &j| z[j].partial_cmp(&z[i]).unwrap_or(Ordering::Equal));
    idx
}

/// Evaluates `L(u)` in `O(n log n)`.
///
/// Uses the telescoped form `sum_k c_k (u_(k) - u_(k+1))` over the descending
/// order statistics, where every term is nonnegative; the result is therefore
/// never negative and is exactly zero on constant vectors. Returns 0 for
/// `n < 2` (there are no pairs).
pub fn eval_rank_loss(u: &[f64]) -> f64 {
    let n = u.len();
    if n < 2 {
        return 0.0;
    }
    let mut sorted = u.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    let mut total = 0.0;
    for k in 1..n {
        total += rho_partial(n, k) * (sorted[k - 1] - sorted[k]);
    }
    total
}

/// Runs PAVA for the nonincreasing cone. Returns block start offsets,
/// block sums, and block lengths. Blocks merge only on strict violation.
fn pava(z: &[f64]) -> (Vec<usize>, Vec<f64>, Vec<usize>) {
    let mut starts: Vec<usize> = Vec::with_capacity(z.len());
    let mut sums: Vec<f64> = Vec::with_capacity(z.len());
    let mut lens: Vec<usize> = Vec::with_capacity(z.len());
    for (i, &zi) in z.iter().enumerate() {
        starts.push(i);
        sums.push(zi);
        lens.push(1);
        while sums.len() >= 2 {
            let m = sums.len();
            let last = sums[m - 1] / lens[m - 1] as f64;
            let prev = sums[m - 2] / lens[m - 2] as f64;
            if prev < last {
                sums[m - 2] += sums[m - 1];
                lens[m - 2] += lens[m - 1];
                sums.pop();
                lens.pop();
                starts.pop();
            } else {
                break;
            }
        }
    }
    (starts, sums, lens)
}

/// Euclidean projection onto `{s : s_1 >= s_2 >= ... >= s_n}` by PAVA, `O(n)`.
pub fn project_monotone(z: &[f64]) -> Vec<f64> {
    let (_, sums, lens) = pava(z);
    let mut out = Vec::with_capacity(z.len());
    for (s, &m) in sums.iter().zip(&lens) {
        let v = s / m as f64;
        out.extend(std::iter::repeat_n(v, m));
    }
    out
}

/// Tied-block structure of an isotonic projection in sorted coordinates.
///
/// Block `b` covers sorted positions `block_starts[b]..block_starts[b + 1]`
/// (the last block runs to `n`); the original indices in it are
/// `perm[block_starts[b]..]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneBlocks {
    pub perm: Vec<usize>,
    pub block_starts: Vec<usize>,
    pub block_values: Vec<f64>,
}

impl MonotoneBlocks {
    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn num_blocks(&self) -> usize {
        self.block_starts.len()
    }

    fn block_range(&self, b: usize) -> std::ops::Range<usize> {
        let end = self
            .block_starts
            .get(b + 1)
            .copied()
            .unwrap_or(self.perm.len());
        self.block_starts[b]..end
    }

    /// Original indices of block `b`.
    pub fn block(&self, b: usize) -> &[usize] {
        &self.perm[self.block_range(b)]
    }

    /// Blocks of size at least two: the columns of the low-rank part of the
    /// Jacobian.
    pub fn tied_blocks(&self) -> impl Iterator<Item = &[usize]> + '_ {
        (0..self.num_blocks())
            .map(|b| self.block(b))
            .filter(|blk| blk.len() >= 2)
    }

    pub fn num_tied(&self) -> usize {
        self.tied_blocks().count()
    }

    /// `true` at original index `i` when `i` sits in a singleton block.
    pub fn singleton_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        for b in 0..self.num_blocks() {
            let blk = self.block(b);
            if blk.len() == 1 {
                mask[blk[0]] = true;
            }
        }
        mask
    }

    /// The projected vector mapped back to original coordinates.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (b, &v) in self.block_values.iter().enumerate() {
            for &i in self.block(b) {
                out[i] = v;
            }
        }
        out
    }
}

/// Proximal map of `scale * L` at `s`.
///
/// Returns the prox value and the tied-block structure of the projection
/// `Pi_D(P z - rho)` with `z = s / scale`, which determines the generalized
/// Jacobian. Adjacent PAVA blocks whose values agree to `1e-12` relative are
/// coalesced so that numerically tied blocks are recognized.
pub fn prox_rank_loss(s: &[f64], scale: f64) -> (Vec<f64>, MonotoneBlocks) {
    assert!(scale > 0.0, "prox scale must be positive, got {scale}");
    let n = s.len();
    let z: Vec<f64> = s.iter().map(|v| v / scale).collect();
    if n < 2 {
        let blocks = MonotoneBlocks {
            perm: (0..n).collect(),
            block_starts: (0..n).collect(),
            block_values: z.clone(),
        };
        return (s.to_vec(), blocks);
    }
    let perm = descending_order(&z);
    let rho = rho_vec(n);
    let shifted: Vec<f64> = perm.iter().zip(&rho).map(|(&i, r)| z[i] - r).collect();
    let (starts, sums, lens) = pava(&shifted);

    let mag = shifted.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tie_tol = 1e-12 * mag.max(f64::MIN_POSITIVE);
    let mut block_starts: Vec<usize> = Vec::with_capacity(starts.len());
    let mut block_sums: Vec<f64> = Vec::with_capacity(starts.len());
    let mut block_lens: Vec<usize> = Vec::with_capacity(starts.len());
    for ((&st, &sm), &ln) in starts.iter().zip(&sums).zip(&lens) {
        if let (Some(ps), Some(pl)) = (block_sums.last_mut(), block_lens.last_mut()) {
            let prev = *ps / *pl as f64;
            let cur = sm / ln as f64;
            if (prev - cur).abs() <= tie_tol {
                *ps += sm;
                *pl += ln;
                continue;
            }
        }
        block_starts.push(st);
        block_sums.push(sm);
        block_lens.push(ln);
    }
    let block_values: Vec<f64> = block_sums
        .iter()
        .zip(&block_lens)
        .map(|(s, &m)| s / m as f64)
        .collect();
    let blocks = MonotoneBlocks {
        perm,
        block_starts,
        block_values,
    };
    let unit = blocks.reconstruct();

    #[cfg(debug_assertions)]
    check_subgradient(&z, &unit);

    let value = unit.into_iter().map(|v| v * scale).collect();
    (value, blocks)
}

/// Debug check that `z - p` lies in `dL(p)`: the candidate subgradient must
/// be majorized by `rho` and attain `L(p)` against `p`.
#[cfg(debug_assertions)]
fn check_subgradient(z: &[f64], p: &[f64]) {
    let n = z.len();
    let g: Vec<f64> = z.iter().zip(p).map(|(a, b)| a - b).collect();
    let mag = 1.0 + z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // `g` carries cancellation error of order eps * mag per entry.
    let tol = (1e-10 + 4.0 * n as f64 * f64::EPSILON) * mag;
    let total: f64 = g.iter().sum();
    debug_assert!(total.abs() <= tol, "prox subgradient sum {total}");
    let mut sorted = g.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    let mut partial = 0.0;
    for (k, v) in sorted.iter().enumerate().take(n - 1) {
        partial += v;
        let cap = rho_partial(n, k + 1);
        debug_assert!(partial <= cap + tol, "prox subgradient partial sum {partial} > {cap}");
    }
    let inner: f64 = g.iter().zip(p).map(|(a, b)| a * b).sum();
    let scale_ip: f64 = g.iter().zip(p).map(|(a, b)| (a * b).abs()).sum();
    let loss = eval_rank_loss(p);
    let p_abs: f64 = p.iter().map(|v| v.abs()).sum();
    debug_assert!(
        (inner - loss).abs() <= 1e-10 * (1.0 + scale_ip + loss) + 8.0 * f64::EPSILON * mag * p_abs,
        "prox subgradient pairing {inner} vs {loss}"
    );
}

/// Applies the generalized Jacobian of the prox at the point that produced
/// `blocks`: `d` is averaged over each tied block and passed through on
/// singleton blocks. The same matrix serves `Prox_{cL}` for every `c > 0`.
pub fn jacobian_rank_apply(blocks: &MonotoneBlocks, d: &[f64]) -> Result<Vec<f64>> {
    if d.len() != blocks.len() {
        return Err(Error::Stale(format!(
            "rank-loss blocks cover n = {} but direction has length {}",
            blocks.len(),
            d.len()
        )));
    }
    let mut out = d.to_vec();
    for blk in blocks.tied_blocks() {
        let mean = blk.iter().map(|&i| d[i]).sum::<f64>() / blk.len() as f64;
        for &i in blk {
            out[i] = mean;
        }
    }
    Ok(out)
}
