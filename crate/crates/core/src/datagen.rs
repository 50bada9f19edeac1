//! Synthetic designs, signals, and noise for simulation studies, plus a
//! polynomial feature expansion for real data.
//!
//! Every generator is a pure function of its spec and seed. Columns (and
//! observations) draw from their own ChaCha streams, so output is identical
//! regardless of thread count.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GroupStructure;

/// Row covariance of the design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Design {
    /// Equi-correlation 0.3.
    C1,
    /// AR(1), `Sigma_ij = 0.9^|i-j|`.
    C2,
    /// Equi-correlation 0.5.
    C3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub kind: Design,
    pub n: usize,
    pub p: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Signal {
    /// `sqrt(3)` on every coefficient of the active groups.
    S1,
    /// `2 - (j - 1) / 4` at position `j` of each active group.
    S2,
    /// `k` leading coefficients equal to `sqrt(3)`.
    S3,
    /// Leading blocks `2, 1.75, ..., 0.25` of sizes `4m, 3m, ..., 3m`.
    S4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Noise {
    /// `N(0, 0.25)`.
    E1,
    /// `N(0, 1)`.
    E2,
    /// `N(0, 2)`.
    E3,
    /// `0.95 N(0, 1) + 0.05 N(0, 100)`.
    E4,
    /// `sqrt(2) t_4`.
    E5,
    /// `Cauchy(0, 1)`.
    E6,
}

macro_rules! parse_enum {
    ($ty:ident, $what:literal, [$($name:ident),+]) => {
        impl std::str::FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_uppercase().as_str() {
                    $(stringify!($name) => Ok($ty::$name),)+
                    _ => Err(Error::param($what, format!("unknown value {s:?}"))),
                }
            }
        }

        impl std::fmt::Display for $ty {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                let name = match self {
                    $($ty::$name => stringify!($name),)+
                };
                f.write_str(name)
            }
        }
    };
}

parse_enum!(Design, "design", [C1, C2, C3]);
parse_enum!(Signal, "signal", [S1, S2, S3, S4]);
parse_enum!(Noise, "noise", [E1, E2, E3, E4, E5, E6]);

impl Design {
    fn equicorrelation(self) -> Option<f64> {
        match self {
            Design::C1 => Some(0.3),
            Design::C3 => Some(0.5),
            Design::C2 => None,
        }
    }
}

/// AR(1) coefficient of design C2.
pub const AR_COEF: f64 = 0.9;

/// SplitMix64 step, used to derive independent sub-seeds.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Draws an `n x p` design whose rows are i.i.d. `N(0, Sigma)`.
///
/// Equi-correlated designs use `sqrt(1 - rho) Z + sqrt(rho) z0 1^T`; the AR(1)
/// design runs the recursion across columns. Both cost `O(np)`.
pub fn gen_design(spec: &DesignSpec, seed: u64) -> Result<DMatrix<f64>> {
    let (n, p) = (spec.n, spec.p);
    if n < 2 || p < 1 {
        return Err(Error::TooSmall(format!("design needs n >= 2 and p >= 1, got {n} x {p}")));
    }
    let mut x = DMatrix::<f64>::zeros(n, p);
    match spec.kind.equicorrelation() {
        Some(rho) => {
            let mut shared = stream(seed, 0);
            let z0: Vec<f64> = (0..n).map(|_| shared.sample(StandardNormal)).collect();
            let (a, b) = ((1.0 - rho).sqrt(), rho.sqrt());
            x.as_mut_slice()
                .par_chunks_mut(n)
                .enumerate()
                .for_each(|(j, col)| {
                    let mut rng = stream(seed, j as u64 + 1);
                    for (v, z) in col.iter_mut().zip(&z0) {
                        let e: f64 = rng.sample(StandardNormal);
                        *v = a * e + b * z;
                    }
                });
        }
        None => {
            let innov = (1.0 - AR_COEF * AR_COEF).sqrt();
            let data = x.as_mut_slice();
            let mut first = stream(seed, 1);
            for v in data[..n].iter_mut() {
                *v = first.sample(StandardNormal);
            }
            for j in 1..p {
                let mut rng = stream(seed, j as u64 + 1);
                let (prev, cur) = data[(j - 1) * n..(j + 1) * n].split_at_mut(n);
                for (c, pv) in cur.iter_mut().zip(prev.iter()) {
                    let e: f64 = rng.sample(StandardNormal);
                    *c = AR_COEF * pv + innov * e;
                }
            }
        }
    }
    Ok(x)
}

/// Number of active groups: 1% of `g`, at least one.
pub fn active_group_count(g: usize) -> usize {
    ((0.01 * g as f64).round() as usize).max(1)
}

/// Support size of S3.
pub fn s3_support(p: usize) -> usize {
    if p <= 8000 {
        3
    } else {
        p / 1000
    }
}

/// Multiplicity unit of S4.
pub fn s4_unit(p: usize) -> usize {
    if p <= 8000 {
        1
    } else {
        p.div_ceil(2500)
    }
}

/// Builds the true coefficient vector. S1 and S2 fill the first
/// `max(1, round(0.01 g))` groups of `groups`; S3 and S4 ignore the groups.
pub fn gen_signal(kind: Signal, p: usize, groups: &GroupStructure) -> Result<Vec<f64>> {
    if groups.p() != p {
        return Err(Error::DimensionMismatch {
            what: "signal group structure",
            expected: p,
            found: groups.p(),
        });
    }
    let mut beta = vec![0.0; p];
    match kind {
        Signal::S1 | Signal::S2 => {
            for l in 0..active_group_count(groups.num_groups()) {
                for (pos, &j) in groups.group(l).iter().enumerate() {
                    beta[j] = match kind {
                        Signal::S1 => 3f64.sqrt(),
                        _ => 2.0 - pos as f64 / 4.0,
                    };
                }
            }
        }
        Signal::S3 => {
            let k = s3_support(p);
            if k > p {
                return Err(Error::param("signal", format!("S3 needs p >= {k}")));
            }
            beta[..k].fill(3f64.sqrt());
        }
        Signal::S4 => {
            let m = s4_unit(p);
            let mut pos = 0;
            for step in 0..8 {
                let value = 2.0 - 0.25 * step as f64;
                let count = if step == 0 { 4 * m } else { 3 * m };
                if pos + count > p {
                    return Err(Error::param("signal", format!("S4 needs p >= {}", 25 * m)));
                }
                beta[pos..pos + count].fill(value);
                pos += count;
            }
        }
    }
    Ok(beta)
}

/// `n` i.i.d. draws; observation `i` uses stream `i` of `seed`.
pub fn gen_noise(kind: Noise, n: usize, seed: u64) -> Vec<f64> {
    let t4 = StudentT::new(4.0).expect("valid degrees of freedom");
    let cauchy = Cauchy::new(0.0, 1.0).expect("valid scale");
    (0..n)
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let z: f64 = rng.sample(StandardNormal);
            match kind {
                Noise::E1 => 0.5 * z,
                Noise::E2 => z,
                Noise::E3 => 2f64.sqrt() * z,
                Noise::E4 => {
                    if rng.random_bool(0.05) {
                        10.0 * z
                    } else {
                        z
                    }
                }
                Noise::E5 => 2f64.sqrt() * t4.sample(&mut rng),
                Noise::E6 => cauchy.sample(&mut rng),
            }
        })
        .collect()
}

/// Widest expansion [`polynomial_expand`] will build.
pub const MAX_EXPANDED_COLUMNS: usize = 5_000_000;

/// `C(p + order, order) - 1`, or `None` on overflow.
pub fn expanded_width(p: usize, order: usize) -> Option<usize> {
    let mut c: u128 = 1;
    for k in 1..=order as u128 {
        c = c.checked_mul(p as u128 + k)? / k;
    }
    usize::try_from(c - 1).ok()
}

/// All monomials of total degree `1..=order` in the columns of `x`, degree
/// by degree, each degree in lexicographic order of the exponent
/// multiset (`x1^2, x1 x2, x2^2` for two columns). No intercept column.
pub fn polynomial_expand(x: &DMatrix<f64>, order: usize) -> Result<DMatrix<f64>> {
    if order == 0 {
        return Err(Error::param("order", "must be at least 1"));
    }
    let (n, p) = x.shape();
    let width = expanded_width(p, order)
        .filter(|&w| w <= MAX_EXPANDED_COLUMNS)
        .ok_or_else(|| {
            Error::param(
                "order",
                format!("expansion of {p} columns to order {order} exceeds {MAX_EXPANDED_COLUMNS} columns"),
            )
        })?;
    let mut out = DMatrix::<f64>::zeros(n, width);
    // Monomials of the previous degree with the smallest index they may be
    // extended by (nondecreasing index lists keep each monomial unique).
    let mut prev: Vec<(usize, usize)> = Vec::with_capacity(p);
    for j in 0..p {
        out.set_column(j, &x.column(j));
        prev.push((j, j));
    }
    let mut next_col = p;
    for _ in 2..=order {
        let mut cur = Vec::new();
        for &(col, last) in &prev {
            for j in last..p {
                let prod = out.column(col).component_mul(&x.column(j));
                out.set_column(next_col, &prod);
                cur.push((next_col, j));
                next_col += 1;
            }
        }
        prev = cur;
    }
    debug_assert_eq!(next_col, width);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WeightRule;

    fn sample_cov(x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = x.nrows() as f64;
        let mean = x.row_mean();
        let mut c = x.clone();
        for mut row in c.row_iter_mut() {
            row -= &mean;
        }
        c.transpose() * &c / n
    }

    #[test]
    fn equicorrelated_covariance() {
        for (kind, rho) in [(Design::C1, 0.3), (Design::C3, 0.5)] {
            let x = gen_design(&DesignSpec { kind, n: 100_000, p: 5 }, 3).unwrap();
            let c = sample_cov(&x);
            for i in 0..5 {
                for j in 0..5 {
                    let want = if i == j { 1.0 } else { rho };
                    assert!((c[(i, j)] - want).abs() < 0.02, "{kind:?} ({i},{j}) = {}", c[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn ar1_covariance() {
        let x = gen_design(&DesignSpec { kind: Design::C2, n: 100_000, p: 5 }, 8).unwrap();
        let c = sample_cov(&x);
        for i in 0..5 {
            for j in 0..5 {
                let want = AR_COEF.powi((i as i32 - j as i32).abs());
                assert!((c[(i, j)] - want).abs() < 0.02);
            }
        }
    }

    #[test]
    fn factor_form_has_exact_covariance() {
        // Cov(a e_j + b z0, a e_k + b z0) = a^2 [j = k] + b^2.
        for rho in [0.0, 0.3, 0.5] {
            let (a, b) = ((1.0f64 - rho).sqrt(), rho.sqrt());
            for j in 0..4 {
                for k in 0..4 {
                    let cov = if j == k { a * a } else { 0.0 } + b * b;
                    let want = if j == k { 1.0 } else { rho };
                    assert!((cov - want).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn design_is_deterministic() {
        let spec = DesignSpec { kind: Design::C1, n: 30, p: 40 };
        let a = gen_design(&spec, 5).unwrap();
        let b = gen_design(&spec, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_design(&spec, 6).unwrap());
    }

    #[test]
    fn signal_examples() {
        let g = GroupStructure::contiguous(40, 20, WeightRule::SqrtSize).unwrap();
        let s1 = gen_signal(Signal::S1, 40, &g).unwrap();
        assert_eq!(s1.iter().filter(|&&v| v == 3f64.sqrt()).count(), 20);
        assert_eq!(s1.iter().filter(|&&v| v == 0.0).count(), 20);

        let s2 = gen_signal(Signal::S2, 40, &g).unwrap();
        assert_eq!(s2[0], 2.0);
        assert_eq!(s2[19], -2.75);
        assert_eq!(s2[8], 0.0);

        let single = GroupStructure::singletons(8000);
        let s3 = gen_signal(Signal::S3, 8000, &single).unwrap();
        assert_eq!(s3.iter().filter(|&&v| v != 0.0).count(), 3);
        assert_eq!(s3_support(20_000), 20);

        let s4 = gen_signal(Signal::S4, 100, &GroupStructure::singletons(100)).unwrap();
        assert_eq!(s4.iter().filter(|&&v| v != 0.0).count(), 25);
        assert_eq!(&s4[..5], &[2.0, 2.0, 2.0, 2.0, 1.75]);
        assert_eq!(s4[24], 0.25);
        assert_eq!(s4_unit(20_000), 8);
    }

    #[test]
    fn noise_moments() {
        let n = 100_000;
        let e1 = gen_noise(Noise::E1, n, 1);
        let mean = e1.iter().sum::<f64>() / n as f64;
        let var = e1.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((var - 0.25).abs() < 0.01);

        // P(|N(0,1)| > 3) = 0.0026998, P(|N(0,100)| > 3) = 0.7641772.
        let e4 = gen_noise(Noise::E4, n, 2);
        let freq = e4.iter().filter(|v| v.abs() > 3.0).count() as f64 / n as f64;
        let want = 0.05 * 0.764_177_2 + 0.95 * 0.002_699_8;
        assert!((freq - want).abs() < 0.003, "{freq} vs {want}");

        let mut e6 = gen_noise(Noise::E6, n, 3);
        e6.sort_by(f64::total_cmp);
        assert!(e6[n / 2].abs() < 0.02);

        assert_eq!(gen_noise(Noise::E5, 50, 9), gen_noise(Noise::E5, 50, 9));
    }

    #[test]
    fn polynomial_examples() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 5.0]);
        assert_eq!(polynomial_expand(&x, 1).unwrap(), x);
        let e = polynomial_expand(&x, 2).unwrap();
        assert_eq!(e.ncols(), 5);
        assert_eq!(e.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0, 1.0, 2.0, 4.0]);
        assert_eq!(e.row(1).iter().copied().collect::<Vec<_>>(), vec![3.0, 5.0, 9.0, 15.0, 25.0]);
        for p in 1..6 {
            for order in 1..5 {
                let x = DMatrix::from_element(2, p, 1.0);
                let e = polynomial_expand(&x, order).unwrap();
                assert_eq!(Some(e.ncols()), expanded_width(p, order));
            }
        }
        assert_eq!(expanded_width(17, 5), Some(26_333));
        assert!(polynomial_expand(&DMatrix::from_element(2, 300, 1.0), 5).is_err());
    }

    #[test]
    fn seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }
}
