//! The group-lasso penalty `Psi(beta) = sum_l w_l ||beta_{G_l}||_2`, its dual
//! norm, proximal map, and generalized Jacobian.

use crate::error::{Error, Result};
use crate::model::GroupStructure;

fn block_norm(v: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&j| v[j] * v[j]).sum::<f64>().sqrt()
}

pub fn eval_group_norm(beta: &[f64], groups: &GroupStructure) -> f64 {
    (0..groups.num_groups())
        .map(|l| groups.weight(l) * block_norm(beta, groups.group(l)))
        .sum()
}

/// `max_l ||y_{G_l}||_2 / w_l`.
pub fn dual_norm(y: &[f64], groups: &GroupStructure) -> f64 {
    (0..groups.num_groups())
        .map(|l| block_norm(y, groups.group(l)) / groups.weight(l))
        .fold(0.0, f64::max)
}

/// Projection onto the Euclidean ball of the given radius.
pub fn project_l2_ball(v: &[f64], radius: f64) -> Vec<f64> {
    assert!(radius > 0.0, "ball radius must be positive, got {radius}");
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let shrink = (norm / radius).max(1.0);
    v.iter().map(|x| x / shrink).collect()
}

/// Groups that survive block soft-thresholding, i.e. `||beta_G|| > radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveGroups {
    /// Group ids, increasing.
    pub indices: Vec<usize>,
    /// `||beta_G||_2` at the evaluation point.
    pub norms: Vec<f64>,
    /// Threshold `scale * w_l` that each group exceeded.
    pub radii: Vec<f64>,
    p: usize,
}

impl ActiveGroups {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Total number of coefficients in active groups.
    pub fn width(&self, groups: &GroupStructure) -> usize {
        self.indices.iter().map(|&l| groups.group(l).len()).sum()
    }
}

/// Proximal map of `scale * Psi`: block soft-thresholding with radius
/// `scale * w_l`. Groups at or inside their radius become exact zeros.
pub fn prox_group(beta: &[f64], groups: &GroupStructure, scale: f64) -> (Vec<f64>, ActiveGroups) {
    assert!(scale > 0.0, "prox scale must be positive, got {scale}");
    let mut value = vec![0.0; beta.len()];
    let mut active = ActiveGroups {
        indices: Vec::new(),
        norms: Vec::new(),
        radii: Vec::new(),
        p: beta.len(),
    };
    for l in 0..groups.num_groups() {
        let idx = groups.group(l);
        let norm = block_norm(beta, idx);
        let radius = scale * groups.weight(l);
        if norm > radius {
            let factor = 1.0 - radius / norm;
            for &j in idx {
                value[j] = factor * beta[j];
            }
            active.indices.push(l);
            active.norms.push(norm);
            active.radii.push(radius);
        }
    }
    (value, active)
}

/// Applies the generalized Jacobian of the prox at `beta`:
/// `(1 - r/||b||) d_G + (r/||b||^3) <b, d_G> b` on each active group `G`
/// with `b = beta_G`, and zero elsewhere.
///
/// Fails when `active` does not describe `beta`.
pub fn jacobian_group_apply(
    beta: &[f64],
    active: &ActiveGroups,
    groups: &GroupStructure,
    d: &[f64],
) -> Result<Vec<f64>> {
    let p = groups.p();
    if beta.len() != p || d.len() != p || active.p != p {
        return Err(Error::Stale(format!(
            "group Jacobian sizes disagree: p = {p}, beta {}, d {}, active set built for {}",
            beta.len(),
            d.len(),
            active.p
        )));
    }
    let mut out = vec![0.0; p];
    for ((&l, &norm), &r) in active.indices.iter().zip(&active.norms).zip(&active.radii) {
        let idx = groups.group(l);
        let current = block_norm(beta, idx);
        if (current - norm).abs() > 1e-12 * norm.max(1.0) || norm <= r {
            return Err(Error::Stale(format!(
                "group {l} cached norm {norm} does not match point (norm {current}, radius {r})"
            )));
        }
        let inner: f64 = idx.iter().map(|&j| beta[j] * d[j]).sum();
        let a = 1.0 - r / norm;
        let c = r / (norm * norm * norm) * inner;
        for &j in idx {
            out[j] = a * d[j] + c * beta[j];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WeightRule;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn random_groups(rng: &mut impl Rng, p: usize) -> GroupStructure {
        use rand::seq::SliceRandom;
        let mut idx: Vec<usize> = (0..p).collect();
        idx.shuffle(rng);
        let mut groups = Vec::new();
        let mut start = 0;
        while start < p {
            let len = rng.random_range(1..=4).min(p - start);
            groups.push(idx[start..start + len].to_vec());
            start += len;
        }
        let weights = groups.iter().map(|_| rng.random_range(0.2..2.0)).collect();
        GroupStructure::new(p, groups, weights).unwrap()
    }

    #[test]
    fn norm_examples() {
        let beta = [1.0, -2.0, 0.5];
        let single = GroupStructure::singletons(3);
        let whole = GroupStructure::new(3, vec![vec![0, 1, 2]], vec![1.0]).unwrap();
        assert_eq!(eval_group_norm(&[0.0; 3], &single), 0.0);
        assert!((eval_group_norm(&beta, &single) - 3.5).abs() < 1e-15);
        assert!((eval_group_norm(&beta, &whole) - 5.25f64.sqrt()).abs() < 1e-15);

        let two = GroupStructure::singletons(2);
        assert_eq!(dual_norm(&[1.0, -2.0], &two), 2.0);
        assert!((dual_norm(&beta, &whole) - 5.25f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ball_examples() {
        assert_eq!(project_l2_ball(&[0.3, 0.4], 1.0), vec![0.3, 0.4]);
        let v = project_l2_ball(&[3.0, 4.0], 1.0);
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn prox_examples() {
        let g = GroupStructure::contiguous(4, 2, WeightRule::Unit).unwrap();
        let (v, active) = prox_group(&[0.3, 0.4, -0.1, 0.0], &g, 1.0);
        assert_eq!(v, vec![0.0; 4]);
        assert!(active.is_empty());

        let g = GroupStructure::new(2, vec![vec![0, 1]], vec![1.0]).unwrap();
        let (v, active) = prox_group(&[3.0, 4.0], &g, 1.0);
        assert!((v[0] - 2.4).abs() < 1e-15 && (v[1] - 3.2).abs() < 1e-15);
        assert_eq!(active.indices, vec![0]);
        assert_eq!(active.norms, vec![5.0]);

        // Exactly on the boundary: zero output and inactive.
        let (v, active) = prox_group(&[0.6, 0.8], &g, 1.0);
        assert_eq!(v, vec![0.0, 0.0]);
        assert!(active.is_empty());
    }

    #[test]
    fn prox_subdifferential_membership() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p = rng.random_range(1..15);
            let g = random_groups(&mut rng, p);
            let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
            let scale = rng.random_range(0.1..2.0);
            let (v, _) = prox_group(&beta, &g, scale);
            for l in 0..g.num_groups() {
                let idx = g.group(l);
                let gsub: Vec<f64> = idx.iter().map(|&j| (beta[j] - v[j]) / scale).collect();
                let gn = gsub.iter().map(|x| x * x).sum::<f64>().sqrt();
                let vn = block_norm(&v, idx);
                let w = g.weight(l);
                if vn == 0.0 {
                    assert!(gn <= w * (1.0 + 1e-12));
                } else {
                    for (k, &j) in idx.iter().enumerate() {
                        assert!((gsub[k] - w * v[j] / vn).abs() <= 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn jacobian_empty_and_inactive_support() {
        let g = GroupStructure::contiguous(4, 2, WeightRule::Unit).unwrap();
        let beta = [3.0, 4.0, 0.1, 0.1];
        let (_, active) = prox_group(&beta, &g, 1.0);
        let out = jacobian_group_apply(&beta, &active, &g, &[0.0, 0.0, 1.0, -2.0]).unwrap();
        assert_eq!(out, vec![0.0; 4]);

        let (_, none) = prox_group(&[0.1; 4], &g, 1.0);
        let out = jacobian_group_apply(&[0.1; 4], &none, &g, &[1.0; 4]).unwrap();
        assert_eq!(out, vec![0.0; 4]);

        let moved = [6.0, 8.0, 0.1, 0.1];
        assert!(jacobian_group_apply(&moved, &active, &g, &[1.0; 4]).is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        while checked < 100 {
            let p = rng.random_range(1..15);
            let g = random_groups(&mut rng, p);
            let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
            let d: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, active) = prox_group(&beta, &g, 1.0);
            let margin_ok = (0..g.num_groups()).all(|l| {
                (block_norm(&beta, g.group(l)) - g.weight(l)).abs() > 1e-4
            });
            if !margin_ok {
                continue;
            }
            let h = 1e-6;
            let plus: Vec<f64> = beta.iter().zip(&d).map(|(a, b)| a + h * b).collect();
            let minus: Vec<f64> = beta.iter().zip(&d).map(|(a, b)| a - h * b).collect();
            let (vp, _) = prox_group(&plus, &g, 1.0);
            let (vm, _) = prox_group(&minus, &g, 1.0);
            let jd = jacobian_group_apply(&beta, &active, &g, &d).unwrap();
            for j in 0..p {
                let fd = (vp[j] - vm[j]) / (2.0 * h);
                assert!((fd - jd[j]).abs() <= 1e-5 * (1.0 + jd[j].abs()));
            }
            checked += 1;
        }
    }

    proptest! {
        #[test]
        fn duality_inequality_and_attainment(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let p = rng.random_range(1..20);
            let g = random_groups(&mut rng, p);
            let x: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let bound = eval_group_norm(&x, &g) * dual_norm(&y, &g);
            prop_assert!(dot(&x, &y) <= bound + 1e-12);

            // Maximizer: the best group's direction, scaled to unit penalty.
            let (best, _) = (0..g.num_groups())
                .map(|l| (l, block_norm(&y, g.group(l)) / g.weight(l)))
                .fold((0, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
            let idx = g.group(best);
            let yn = block_norm(&y, idx);
            prop_assume!(yn > 1e-9);
            let mut xm = vec![0.0; p];
            for &j in idx {
                xm[j] = y[j] / (yn * g.weight(best));
            }
            prop_assert!((eval_group_norm(&xm, &g) - 1.0).abs() < 1e-12);
            prop_assert!((dot(&xm, &y) - dual_norm(&y, &g)).abs() < 1e-12);
        }

        #[test]
        fn moreau_identity(seed in any::<u64>(), t in 0.05f64..3.0) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let p = rng.random_range(1..20);
            let g = random_groups(&mut rng, p);
            let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
            let (v, _) = prox_group(&beta, &g, t);
            let mut recon = v.clone();
            for l in 0..g.num_groups() {
                let idx = g.group(l);
                let scaled: Vec<f64> = idx.iter().map(|&j| beta[j] / t).collect();
                let proj = project_l2_ball(&scaled, g.weight(l));
                for (k, &j) in idx.iter().enumerate() {
                    recon[j] += t * proj[k];
                }
            }
            for j in 0..p {
                prop_assert!((recon[j] - beta[j]).abs() <= 1e-12 * (1.0 + beta[j].abs()));
            }
        }

        #[test]
        fn jacobian_symmetric_and_contractive(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let p = rng.random_range(1..20);
            let g = random_groups(&mut rng, p);
            let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
            let d: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let e: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, active) = prox_group(&beta, &g, 1.0);
            let vd = jacobian_group_apply(&beta, &active, &g, &d).unwrap();
            let ve = jacobian_group_apply(&beta, &active, &g, &e).unwrap();
            prop_assert!((dot(&vd, &e) - dot(&d, &ve)).abs() < 1e-12);
            prop_assert!(dot(&vd, &vd).sqrt() <= dot(&d, &d).sqrt() + 1e-12);
            prop_assert!(dot(&d, &vd) >= -1e-12);
        }
    }
}
