//! Problem, group-structure, and configuration types shared by every solver
//! component.
//!
//! All types here are plain data: once built they are never mutated by the
//! solver and can be shared freely across threads.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lambda::LambdaConfig;

/// Convention for deriving group weights from group sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightRule {
    /// `w_l = 1`.
    Unit,
    /// `w_l = sqrt(|G_l|)`, the classical group-lasso convention.
    SqrtSize,
    /// `w_l = 1 / sqrt(|G_l|)`.
    InvSqrtSize,
}

impl WeightRule {
    pub fn weight(self, size: usize) -> f64 {
        let m = size as f64;
        match self {
            WeightRule::Unit => 1.0,
            WeightRule::SqrtSize => m.sqrt(),
            WeightRule::InvSqrtSize => 1.0 / m.sqrt(),
        }
    }
}

/// A partition of the coefficient indices `0..p` into weighted groups.
///
/// Stored both as per-group index lists and as a `p`-length group-id map so
/// that row access (prox maps) and column-submatrix access (Hessian factors)
/// are both constant time per element.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStructure {
    groups: Vec<Vec<usize>>,
    weights: Vec<f64>,
    group_of: Vec<usize>,
}

impl GroupStructure {
    /// Builds a group structure over `0..p` from 0-based index lists.
    ///
    /// Fails on the first violated invariant: an out-of-range index, an empty
    /// group, two groups sharing an index, an index left uncovered, or a
    /// weight that is not strictly positive and finite.
    pub fn new(p: usize, groups: Vec<Vec<usize>>, weights: Vec<f64>) -> Result<Self> {
        if groups.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                what: "group weights",
                expected: groups.len(),
                found: weights.len(),
            });
        }
        let mut group_of = vec![usize::MAX; p];
        for (l, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::EmptyGroup { group: l });
            }
            for &j in members {
                if j >= p {
                    return Err(Error::IndexOutOfRange { group: l, index: j, p });
                }
                if group_of[j] != usize::MAX {
                    return Err(Error::OverlappingGroups {
                        index: j,
                        first: group_of[j],
                        second: l,
                    });
                }
                group_of[j] = l;
            }
        }
        if let Some(j) = group_of.iter().position(|&g| g == usize::MAX) {
            return Err(Error::UncoveredIndex { index: j });
        }
        for (l, &w) in weights.iter().enumerate() {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::NonpositiveWeight { group: l, weight: w });
            }
        }
        Ok(GroupStructure {
            groups,
            weights,
            group_of,
        })
    }

    /// Builds groups with weights derived from their sizes.
    pub fn with_rule(p: usize, groups: Vec<Vec<usize>>, rule: WeightRule) -> Result<Self> {
        let weights = groups.iter().map(|g| rule.weight(g.len())).collect();
        Self::new(p, groups, weights)
    }

    /// One group per coordinate with unit weights: the plain l1 penalty.
    pub fn singletons(p: usize) -> Self {
        GroupStructure {
            groups: (0..p).map(|j| vec![j]).collect(),
            weights: vec![1.0; p],
            group_of: (0..p).collect(),
        }
    }

    /// Consecutive groups of `size` columns; the last group takes the remainder.
    pub fn contiguous(p: usize, size: usize, rule: WeightRule) -> Result<Self> {
        if size == 0 {
            return Err(Error::param("group size", "must be at least 1"));
        }
        let groups: Vec<Vec<usize>> = (0..p)
            .step_by(size)
            .map(|start| (start..(start + size).min(p)).collect())
            .collect();
        Self::with_rule(p, groups, rule)
    }

    pub fn p(&self) -> usize {
        self.group_of.len()
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn group(&self, l: usize) -> &[usize] {
        &self.groups[l]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn weight(&self, l: usize) -> f64 {
        self.weights[l]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn group_of(&self, j: usize) -> usize {
        self.group_of[j]
    }

    pub fn is_singletons(&self) -> bool {
        self.groups.len() == self.group_of.len()
    }
}

/// One instance of the regularized rank regression problem.
#[derive(Debug, Clone)]
pub struct ProblemData {
    /// Design matrix, one row per observation.
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub groups: GroupStructure,
}

impl ProblemData {
    /// Assembles and validates a problem instance.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, groups: GroupStructure) -> Result<Self> {
        let data = ProblemData { x, y, groups };
        validate_problem(&data)?;
        Ok(data)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Subtracts each column's mean. The rank loss is shift invariant so this
    /// only changes the conditioning of the design, never the fitted `beta`.
    pub fn center_columns(&mut self) {
        let n = self.n() as f64;
        for mut col in self.x.column_iter_mut() {
            let mean = col.sum() / n;
            col.add_scalar_mut(-mean);
        }
    }
}

/// Checks every invariant of a [`ProblemData`], reporting the first violation.
pub fn validate_problem(data: &ProblemData) -> Result<()> {
    let (n, p) = data.x.shape();
    if n < 2 {
        return Err(Error::TooSmall(format!("need n >= 2 observations, got {n}")));
    }
    if p < 1 {
        return Err(Error::TooSmall("need p >= 1 columns".into()));
    }
    if data.y.len() != n {
        return Err(Error::DimensionMismatch {
            what: "response length",
            expected: n,
            found: data.y.len(),
        });
    }
    if data.groups.p() != p {
        return Err(Error::DimensionMismatch {
            what: "group structure width",
            expected: p,
            found: data.groups.p(),
        });
    }
    // Re-run the partition checks: the structure may have been built for a
    // different p or edited through `Clone`.
    GroupStructure::new(
        p,
        data.groups.groups().to_vec(),
        data.groups.weights().to_vec(),
    )?;
    for (j, col) in data.x.column_iter().enumerate() {
        if let Some(i) = col.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "design matrix",
                location: format!("row {i}, column {j}"),
            });
        }
    }
    if let Some(i) = data.y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "response",
            location: format!("row {i}"),
        });
    }
    Ok(())
}

/// How the regularization parameter is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lambda {
    /// Simulated pivotal quantile of the dual norm of the loss subgradient.
    Auto(LambdaConfig),
    Fixed(f64),
}

/// Linear solver used for the semismooth Newton system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NewtonStrategy {
    Auto,
    Direct,
    Cg,
    Woodbury,
}

impl std::str::FromStr for NewtonStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(NewtonStrategy::Auto),
            "direct" => Ok(NewtonStrategy::Direct),
            "cg" => Ok(NewtonStrategy::Cg),
            "woodbury" | "smw" => Ok(NewtonStrategy::Woodbury),
            other => Err(Error::param(
                "newton strategy",
                format!("unknown strategy {other:?} (auto|direct|cg|woodbury)"),
            )),
        }
    }
}

/// Parameters of the semismooth Newton inner solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsnOptions {
    /// Armijo sufficient-decrease constant, in (0, 1/2).
    pub mu_bar: f64,
    /// Cap on the Newton-system residual, in (0, 1).
    pub eta_bar: f64,
    /// Exponent surplus of the residual rule `||g||^(1 + tau_bar)`, in (0, 1].
    pub tau_bar: f64,
    /// Backtracking factor, in (0, 1).
    pub delta_bar: f64,
    pub max_inner: usize,
    pub max_backtracks: usize,
    pub cg_max_iters: usize,
    /// `auto` picks Woodbury while the low-rank width is at most this
    /// fraction of `n`.
    pub woodbury_ratio: f64,
    /// `auto` falls back to a dense factorization up to this many observations.
    pub direct_max_n: usize,
    /// Initial factor of the adaptive shift `mu = theta * n * ||g||` added
    /// to the Newton matrix; `theta` shrinks after full steps and grows
    /// after heavily damped ones. Zero disables the shift.
    pub shift_init: f64,
    pub shift_max: f64,
}

impl Default for SsnOptions {
    fn default() -> Self {
        SsnOptions {
            mu_bar: 1e-3,
            eta_bar: 1e-1,
            tau_bar: 1e-1,
            delta_bar: 0.5,
            max_inner: 50,
            max_backtracks: 50,
            cg_max_iters: 500,
            woodbury_ratio: 0.25,
            direct_max_n: 500,
            shift_init: 1e-2,
            shift_max: 1e3,
        }
    }
}

/// Summable tolerance sequence `delta_k = min(cap, (k + 1)^-exponent)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaRule {
    pub cap: f64,
    pub exponent: f64,
}

impl Default for DeltaRule {
    fn default() -> Self {
        DeltaRule {
            cap: 0.5,
            exponent: 1.5,
        }
    }
}

impl DeltaRule {
    pub fn delta(&self, k: usize) -> f64 {
        self.cap.min(((k + 1) as f64).powf(-self.exponent))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub lambda: Lambda,
    /// Initial penalty, relative to `c n` where `c` is the robust spread of `y`.
    pub sigma0: f64,
    /// Proximal weight on `w`, in the units of the original problem.
    pub tau: f64,
    pub sigma_growth: f64,
    pub sigma_max: f64,
    /// `sigma` only grows after an inner solve that needed at most this many
    /// Newton iterations; harder subproblems keep it fixed.
    pub sigma_hold_iters: usize,
    /// Target for the relative KKT residual.
    pub tol: f64,
    /// A run also needs its relative duality gap below this to count as
    /// converged. `f64::INFINITY` disables the check.
    pub gap_tol: f64,
    pub max_outer: usize,
    pub delta_rule: DeltaRule,
    pub ssn: SsnOptions,
    pub newton_strategy: NewtonStrategy,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            lambda: Lambda::Auto(LambdaConfig::default()),
            sigma0: 1.0,
            tau: 1.0,
            sigma_growth: 1.5,
            sigma_max: 1e6,
            sigma_hold_iters: 20,
            tol: 1e-6,
            gap_tol: 1e-5,
            max_outer: 500,
            delta_rule: DeltaRule::default(),
            ssn: SsnOptions::default(),
            newton_strategy: NewtonStrategy::Auto,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        fn positive(name: &'static str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be positive and finite, got {v}")))
            }
        }
        fn open_unit(name: &'static str, v: f64, hi: f64) -> Result<()> {
            if v > 0.0 && v < hi {
                Ok(())
            } else {
                Err(Error::param(name, format!("must lie in (0, {hi}), got {v}")))
            }
        }
        match &self.lambda {
            Lambda::Fixed(l) => positive("lambda", *l)?,
            Lambda::Auto(cfg) => cfg.validate()?,
        }
        positive("sigma0", self.sigma0)?;
        positive("tau", self.tau)?;
        positive("sigma_max", self.sigma_max)?;
        positive("tol", self.tol)?;
        if !(self.gap_tol > 0.0) {
            return Err(Error::param("gap_tol", format!("must be positive, got {}", self.gap_tol)));
        }
        if !(self.sigma_growth >= 1.0 && self.sigma_growth.is_finite()) {
            return Err(Error::param("sigma_growth", "must be >= 1"));
        }
        if self.max_outer == 0 {
            return Err(Error::param("max_outer", "must be at least 1"));
        }
        open_unit("delta_rule.cap", self.delta_rule.cap, 1.0)?;
        if self.delta_rule.exponent <= 1.0 {
            return Err(Error::param(
                "delta_rule.exponent",
                "must exceed 1 for a summable sequence",
            ));
        }
        let ssn = &self.ssn;
        open_unit("mu_bar", ssn.mu_bar, 0.5)?;
        open_unit("eta_bar", ssn.eta_bar, 1.0)?;
        if !(ssn.tau_bar > 0.0 && ssn.tau_bar <= 1.0) {
            return Err(Error::param("tau_bar", "must lie in (0, 1]"));
        }
        open_unit("delta_bar", ssn.delta_bar, 1.0)?;
        if ssn.max_inner == 0 || ssn.cg_max_iters == 0 {
            return Err(Error::param("ssn", "iteration caps must be at least 1"));
        }
        if !(ssn.shift_init >= 0.0 && ssn.shift_init.is_finite()) {
            return Err(Error::param("shift_init", "must be finite and nonnegative"));
        }
        if !(ssn.shift_max >= ssn.shift_init && ssn.shift_max.is_finite()) {
            return Err(Error::param("shift_max", "must be finite and at least shift_init"));
        }
        Ok(())
    }
}

/// One row of the outer-iteration trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub k: usize,
    pub sigma: f64,
    pub eta_p: f64,
    pub eta_d: f64,
    pub pobj: f64,
    pub dobj: f64,
    pub relgap: f64,
    pub newton_iters: usize,
}

/// Output of the proximal ALM solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Solution {
    pub beta: Vec<f64>,
    pub s: Vec<f64>,
    pub w: Vec<f64>,
    pub lambda: f64,
    pub eta_kkt: f64,
    pub eta_p: f64,
    pub eta_d: f64,
    pub pobj: f64,
    pub dobj: f64,
    pub relgap: f64,
    /// Violation of the dual constraints at `w`; `dobj` ignores them.
    pub dual_infeas: f64,
    pub outer_iters: usize,
    pub total_newton_iters: usize,
    pub wall_time: f64,
    pub converged: bool,
    pub trace: Vec<IterRecord>,
}

impl Solution {
    /// Groups whose coefficient block is not identically zero.
    pub fn nonzero_groups(&self, groups: &GroupStructure) -> Vec<usize> {
        (0..groups.num_groups())
            .filter(|&l| groups.group(l).iter().any(|&j| self.beta[j] != 0.0))
            .collect()
    }
}
