//! Hierarchical categorical state spaces and the projection operators that
//! generate their transition kernels.
//!
//! A state space is a flat index range split into ordered tiers: the clean
//! tokens `[0, K)`, then each mid level in turn, then a single absorbing mask
//! state at index `D - 1`. Level `i` (1-based) has a projection kernel mapping
//! every state of the lower tiers `T_{i-1}` onto the states of tier `i`; the
//! mask is the final level and always receives all remaining mass.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ROW_SUM_TOL;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HierarchyError {
    #[error("tier {tier} is empty")]
    EmptyTier { tier: usize },
    #[error("level {level} out of range 1..={max}")]
    LevelOutOfRange { level: usize, max: usize },
    #[error("kernel shape {found:?} does not match expected {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("row {row} sums to {sum}, not 1")]
    NotStochastic { row: usize, sum: f64 },
    #[error("entry ({row}, {col}) = {value} outside [0, 1]")]
    EntryOutOfRange { row: usize, col: usize, value: f64 },
    #[error("expected {expected} level kernels, got {found}")]
    LevelCount { expected: usize, found: usize },
    #[error("level {lower} does not factor into level {upper} (max deviation {deviation:e})")]
    InconsistentLevels { lower: usize, upper: usize, deviation: f64 },
    #[error("assignment index {index} out of range for {size} targets")]
    AssignmentOutOfRange { index: usize, size: usize },
    #[error("token {0:?} listed more than once")]
    DuplicateToken(String),
    #[error("token {0:?} is not a clean token")]
    UnknownToken(String),
    #[error("token {0:?} has no group")]
    UngroupedToken(String),
    #[error("invalid hierarchy config: {0}")]
    Config(String),
}

/// Which tier a flat state index belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tier {
    Clean,
    /// Mid level, 1-based.
    Mid(usize),
    Mask,
}

/// Partition of a categorical space into clean, mid-level and mask tiers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchySpec {
    clean_size: usize,
    mid_sizes: Vec<usize>,
}

impl HierarchySpec {
    pub fn new(clean_size: usize, mid_sizes: Vec<usize>) -> Result<Self, HierarchyError> {
        let spec = Self { clean_size, mid_sizes };
        validate_partition(&spec)?;
        Ok(spec)
    }

    /// Two-level space with `groups` mid states.
    pub fn two_level(clean_size: usize, groups: usize) -> Result<Self, HierarchyError> {
        Self::new(clean_size, vec![groups])
    }

    pub fn clean_size(&self) -> usize {
        self.clean_size
    }

    pub fn mid_sizes(&self) -> &[usize] {
        &self.mid_sizes
    }

    /// Number of mid levels `n`.
    pub fn mid_levels(&self) -> usize {
        self.mid_sizes.len()
    }

    /// Number of projection operators including the final mask operator.
    pub fn operator_count(&self) -> usize {
        self.mid_sizes.len() + 1
    }

    pub fn dim(&self) -> usize {
        self.clean_size + self.mid_sizes.iter().sum::<usize>() + 1
    }

    pub fn mask_index(&self) -> usize {
        self.dim() - 1
    }

    /// Size of tier `level` where 0 is clean, `1..=n` are mid levels and
    /// `n + 1` is the mask.
    pub fn tier_size(&self, level: usize) -> usize {
        match level {
            0 => self.clean_size,
            l if l <= self.mid_sizes.len() => self.mid_sizes[l - 1],
            _ => 1,
        }
    }

    /// First flat index of tier `level`.
    pub fn tier_offset(&self, level: usize) -> usize {
        (0..level).map(|l| self.tier_size(l)).sum()
    }

    pub fn tier_range(&self, level: usize) -> std::ops::Range<usize> {
        let start = self.tier_offset(level);
        start..start + self.tier_size(level)
    }

    /// `|T_level|`: number of states in tiers `0..=level`.
    pub fn cumulative_size(&self, level: usize) -> usize {
        self.tier_offset(level + 1)
    }

    pub fn tier_of(&self, index: usize) -> Tier {
        if index < self.clean_size {
            return Tier::Clean;
        }
        if index == self.mask_index() {
            return Tier::Mask;
        }
        let mut offset = self.clean_size;
        for (l, &size) in self.mid_sizes.iter().enumerate() {
            if index < offset + size {
                return Tier::Mid(l + 1);
            }
            offset += size;
        }
        Tier::Mask
    }

    pub fn is_clean(&self, index: usize) -> bool {
        index < self.clean_size
    }
}

/// Checks the tier invariants of a spec: every tier non-empty.
pub fn validate_partition(spec: &HierarchySpec) -> Result<(), HierarchyError> {
    if spec.clean_size == 0 {
        return Err(HierarchyError::EmptyTier { tier: 0 });
    }
    if let Some(pos) = spec.mid_sizes.iter().position(|&s| s == 0) {
        return Err(HierarchyError::EmptyTier { tier: pos + 1 });
    }
    Ok(())
}

/// Row-stochastic kernel mapping lower-tier states onto one tier.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionKernel {
    phi: DMatrix<f64>,
    deterministic: bool,
}

impl ProjectionKernel {
    pub fn new(phi: DMatrix<f64>) -> Result<Self, HierarchyError> {
        check_stochastic(&phi)?;
        let deterministic = phi
            .row_iter()
            .all(|row| row.iter().filter(|&&v| v != 0.0).count() == 1 && row.iter().any(|&v| v == 1.0));
        Ok(Self { phi, deterministic })
    }

    /// One-hot kernel sending row `r` to column `assignment[r]`.
    pub fn from_assignment(assignment: &[usize], targets: usize) -> Result<Self, HierarchyError> {
        let mut phi = DMatrix::zeros(assignment.len(), targets);
        for (r, &c) in assignment.iter().enumerate() {
            if c >= targets {
                return Err(HierarchyError::AssignmentOutOfRange {
                    index: c,
                    size: targets,
                });
            }
            phi[(r, c)] = 1.0;
        }
        Self::new(phi)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, HierarchyError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(HierarchyError::ShapeMismatch {
                expected: (rows.len(), cols),
                found: (rows.len(), rows.iter().map(Vec::len).max().unwrap_or(0)),
            });
        }
        let phi = DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]);
        Self::new(phi)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    pub fn shape(&self) -> (usize, usize) {
        self.phi.shape()
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        self.phi.row(r).iter().copied().collect()
    }

    /// For deterministic kernels, the column each row maps to.
    pub fn assignment(&self) -> Option<Vec<usize>> {
        if !self.deterministic {
            return None;
        }
        Some(
            self.phi
                .row_iter()
                .map(|row| row.iter().position(|&v| v == 1.0).unwrap_or(0))
                .collect(),
        )
    }
}

fn check_stochastic(m: &DMatrix<f64>) -> Result<(), HierarchyError> {
    for (r, row) in m.row_iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(HierarchyError::EntryOutOfRange {
                    row: r,
                    col: c,
                    value: v,
                });
            }
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(HierarchyError::NotStochastic { row: r, sum });
        }
    }
    Ok(())
}

/// Dense row-stochastic `D x D` matrix; entry `(i, j)` is the probability of
/// moving from state `i` to state `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix(DMatrix<f64>);

impl TransitionMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self, HierarchyError> {
        if m.nrows() != m.ncols() {
            return Err(HierarchyError::ShapeMismatch {
                expected: (m.nrows(), m.nrows()),
                found: m.shape(),
            });
        }
        check_stochastic(&m)?;
        Ok(Self(m))
    }

    /// Wraps a matrix the caller built from stochastic pieces. Entries are
    /// clamped to `[0, 1]` to absorb rounding.
    pub(crate) fn from_parts(mut m: DMatrix<f64>) -> Self {
        m.apply(|v| *v = v.clamp(0.0, 1.0));
        debug_assert!(check_stochastic(&m).is_ok(), "kernel rows must sum to 1");
        Self(m)
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.0[(from, to)]
    }

    pub fn row(&self, from: usize) -> Vec<f64> {
        self.0.row(from).iter().copied().collect()
    }

    /// Matrix product `self * other`: first step with `self`, then `other`.
    pub fn then(&self, other: &TransitionMatrix) -> DMatrix<f64> {
        &self.0 * &other.0
    }

    pub fn max_abs_diff(&self, other: &DMatrix<f64>) -> f64 {
        (&self.0 - other).abs().max()
    }

    pub fn max_row_sum_error(&self) -> f64 {
        self.0.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Embeds the level kernel `phi` into the full space as the operator `Q^(level)`.
pub fn build_level_operator(
    spec: &HierarchySpec,
    level: usize,
    phi: &ProjectionKernel,
) -> Result<TransitionMatrix, HierarchyError> {
    let n = spec.mid_levels();
    if level == 0 || level > n {
        return Err(HierarchyError::LevelOutOfRange { level, max: n });
    }
    let rows = spec.cumulative_size(level - 1);
    let cols = spec.tier_size(level);
    if phi.shape() != (rows, cols) {
        return Err(HierarchyError::ShapeMismatch {
            expected: (rows, cols),
            found: phi.shape(),
        });
    }
    let d = spec.dim();
    let offset = spec.tier_offset(level);
    let mut q = DMatrix::zeros(d, d);
    for x in 0..d {
        if x < rows {
            for j in 0..cols {
                q[(x, offset + j)] = phi.matrix()[(x, j)];
            }
        } else {
            q[(x, x)] = 1.0;
        }
    }
    Ok(TransitionMatrix(q))
}

/// The absorbing operator: every row is the one-hot of the mask index.
pub fn build_mask_operator(spec: &HierarchySpec) -> TransitionMatrix {
    let d = spec.dim();
    let m = spec.mask_index();
    let mut q = DMatrix::zeros(d, d);
    for x in 0..d {
        q[(x, m)] = 1.0;
    }
    TransitionMatrix(q)
}

/// A spec together with its level kernels and the induced operators
/// `Q^(1), ..., Q^(n), Q^(mask)`.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    spec: HierarchySpec,
    kernels: Vec<ProjectionKernel>,
    operators: Vec<TransitionMatrix>,
}

impl Hierarchy {
    /// `kernels[i]` maps `T_i` onto tier `i + 1` (shape `|T_i| x K_{i+1}`).
    /// For `i < j` every lower-level kernel must factor into the higher one,
    /// which is what makes the operators compose as `Q^(i) Q^(j) = Q^(j)`.
    pub fn new(spec: HierarchySpec, kernels: Vec<ProjectionKernel>) -> Result<Self, HierarchyError> {
        validate_partition(&spec)?;
        if kernels.len() != spec.mid_levels() {
            return Err(HierarchyError::LevelCount {
                expected: spec.mid_levels(),
                found: kernels.len(),
            });
        }
        let mut operators = Vec::with_capacity(spec.operator_count());
        for (i, phi) in kernels.iter().enumerate() {
            operators.push(build_level_operator(&spec, i + 1, phi)?);
        }
        operators.push(build_mask_operator(&spec));

        for i in 0..operators.len() {
            for j in i + 1..operators.len() {
                let prod = operators[i].then(&operators[j]);
                let deviation = operators[j].max_abs_diff(&prod);
                if deviation > ROW_SUM_TOL {
                    return Err(HierarchyError::InconsistentLevels {
                        lower: i + 1,
                        upper: j + 1,
                        deviation,
                    });
                }
            }
        }
        Ok(Self {
            spec,
            kernels,
            operators,
        })
    }

    /// Pure absorbing space with no mid levels.
    pub fn absorbing(clean_size: usize) -> Result<Self, HierarchyError> {
        Self::new(HierarchySpec::new(clean_size, vec![])?, vec![])
    }

    pub fn two_level(clean_size: usize, phi: ProjectionKernel) -> Result<Self, HierarchyError> {
        let groups = phi.shape().1;
        Self::new(HierarchySpec::two_level(clean_size, groups)?, vec![phi])
    }

    /// Builds the level kernels from maps between adjacent tiers only:
    /// `local[i]` has shape `K_i x K_{i+1}`, and states below tier `i` are
    /// routed through the lower maps first.
    pub fn chained(spec: HierarchySpec, local: Vec<ProjectionKernel>) -> Result<Self, HierarchyError> {
        if local.len() != spec.mid_levels() {
            return Err(HierarchyError::LevelCount {
                expected: spec.mid_levels(),
                found: local.len(),
            });
        }
        let mut full: Vec<ProjectionKernel> = Vec::with_capacity(local.len());
        for (i, step) in local.iter().enumerate() {
            let expected = (spec.tier_size(i), spec.tier_size(i + 1));
            if step.shape() != expected {
                return Err(HierarchyError::ShapeMismatch {
                    expected,
                    found: step.shape(),
                });
            }
            let mut rows: Vec<DMatrix<f64>> = Vec::new();
            if let Some(prev) = full.last() {
                rows.push(prev.matrix() * step.matrix());
            }
            rows.push(step.matrix().clone());
            let total: usize = rows.iter().map(|m| m.nrows()).sum();
            let mut phi = DMatrix::zeros(total, expected.1);
            let mut r0 = 0;
            for block in rows {
                phi.view_mut((r0, 0), block.shape()).copy_from(&block);
                r0 += block.nrows();
            }
            phi.apply(|v| *v = v.clamp(0.0, 1.0));
            for mut row in phi.row_iter_mut() {
                let s = row.sum();
                row /= s;
            }
            full.push(ProjectionKernel::new(phi)?);
        }
        Self::new(spec, full)
    }

    pub fn spec(&self) -> &HierarchySpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn kernels(&self) -> &[ProjectionKernel] {
        &self.kernels
    }

    /// `Q^(1), ..., Q^(n)` followed by the mask operator.
    pub fn operators(&self) -> &[TransitionMatrix] {
        &self.operators
    }

    pub fn is_deterministic(&self) -> bool {
        self.kernels.iter().all(ProjectionKernel::is_deterministic)
    }

    /// Distribution of the image of state `x` under operator `level` (1-based).
    pub fn project(&self, level: usize, x: usize) -> Vec<f64> {
        self.operators[level - 1].row(x)
    }

    /// First-level kernel row for clean token `x` (empty when there are no mid levels).
    pub fn group_weights(&self, x: usize) -> Vec<f64> {
        self.kernels
            .first()
            .map_or_else(Vec::new, |k| (0..k.shape().1).map(|g| k.matrix()[(x, g)]).collect())
    }
}

/// Human-readable description of a two-level hierarchy over named tokens.
/// The mask state is implicit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_version")]
    pub version: u32,
    pub clean_tokens: Vec<String>,
    pub groups: Vec<Vec<String>>,
}

fn default_version() -> u32 {
    1
}

impl HierarchyConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HierarchyError> {
        toml::from_str(text).map_err(|e| HierarchyError::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String, HierarchyError> {
        toml::to_string(self).map_err(|e| HierarchyError::Config(e.to_string()))
    }

    /// Group index of every clean token, in `clean_tokens` order.
    pub fn assignment(&self) -> Result<Vec<usize>, HierarchyError> {
        let mut index = BTreeMap::new();
        for (i, t) in self.clean_tokens.iter().enumerate() {
            if index.insert(t.as_str(), i).is_some() {
                return Err(HierarchyError::DuplicateToken(t.clone()));
            }
        }
        let mut assignment = vec![usize::MAX; self.clean_tokens.len()];
        let mut seen = BTreeSet::new();
        for (g, members) in self.groups.iter().enumerate() {
            if members.is_empty() {
                return Err(HierarchyError::EmptyTier { tier: 1 });
            }
            for m in members {
                let &i = index
                    .get(m.as_str())
                    .ok_or_else(|| HierarchyError::UnknownToken(m.clone()))?;
                if !seen.insert(i) {
                    return Err(HierarchyError::DuplicateToken(m.clone()));
                }
                assignment[i] = g;
            }
        }
        if let Some(i) = assignment.iter().position(|&g| g == usize::MAX) {
            return Err(HierarchyError::UngroupedToken(self.clean_tokens[i].clone()));
        }
        Ok(assignment)
    }

    pub fn build(&self) -> Result<Hierarchy, HierarchyError> {
        let assignment = self.assignment()?;
        let phi = ProjectionKernel::from_assignment(&assignment, self.groups.len())?;
        Hierarchy::two_level(self.clean_tokens.len(), phi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stochastic(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ProjectionKernel {
        let mut m = DMatrix::from_fn(rows, cols, |_, _| rng.gen::<f64>() + 0.05);
        for mut row in m.row_iter_mut() {
            let s = row.sum();
            row /= s;
        }
        ProjectionKernel::new(m).unwrap()
    }

    #[test]
    fn single_token_level_operator() {
        let spec = HierarchySpec::two_level(1, 1).unwrap();
        let phi = ProjectionKernel::from_assignment(&[0], 1).unwrap();
        let q = build_level_operator(&spec, 1, &phi).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[0., 1., 0., 0., 1., 0., 0., 0., 1.]);
        assert_eq!(q.matrix(), &expected);
    }

    #[test]
    fn deterministic_operator_is_idempotent() {
        let spec = HierarchySpec::two_level(5, 2).unwrap();
        let phi = ProjectionKernel::from_assignment(&[0, 1, 0, 1, 1], 2).unwrap();
        let q = build_level_operator(&spec, 1, &phi).unwrap();
        assert!(q.max_abs_diff(&q.then(&q)) <= 1e-12);
        assert!(q.matrix().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn stochastic_operators_compose_to_max_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let phi = random_stochastic(&mut rng, 5, 2);
        let h = Hierarchy::two_level(5, phi).unwrap();
        let [q1, q2] = h.operators() else { panic!() };
        assert!(q2.max_abs_diff(&q1.then(q2)) <= 1e-12);
        assert!(q2.max_abs_diff(&q2.then(q1)) <= 1e-12);
        assert!(q1.max_abs_diff(&q1.then(q1)) <= 1e-12);
    }

    #[test]
    fn mask_operator_absorbs_everything() {
        let spec = HierarchySpec::two_level(1, 1).unwrap();
        let q = build_mask_operator(&spec);
        for r in 0..3 {
            assert_eq!(q.row(r), vec![0.0, 0.0, 1.0]);
        }
        assert!(q.max_abs_diff(&q.then(&q)) <= 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 2..=12 {
            let spec = HierarchySpec::new(d - 1, vec![]).unwrap();
            let m = random_stochastic(&mut rng, d, d);
            let m = TransitionMatrix::new(m.matrix().clone()).unwrap();
            let mask = build_mask_operator(&spec);
            assert!(mask.max_abs_diff(&m.then(&mask)) <= 1e-12);
        }
    }

    #[test]
    fn partition_validation() {
        let s = HierarchySpec::new(12, vec![4]).unwrap();
        assert_eq!(s.dim(), 17);
        assert_eq!(s.mask_index(), 16);
        assert_eq!(
            HierarchySpec::new(0, vec![4]),
            Err(HierarchyError::EmptyTier { tier: 0 })
        );
        assert_eq!(
            HierarchySpec::new(3, vec![2, 0]),
            Err(HierarchyError::EmptyTier { tier: 2 })
        );
        let s = HierarchySpec::new(2, vec![]).unwrap();
        assert_eq!(s.dim(), 3);
        assert_eq!(s.tier_of(2), Tier::Mask);
    }

    #[test]
    fn tiers_are_ordered() {
        let s = HierarchySpec::new(3, vec![2, 1]).unwrap();
        assert_eq!(s.dim(), 7);
        let tiers: Vec<Tier> = (0..7).map(|i| s.tier_of(i)).collect();
        assert_eq!(
            tiers,
            vec![
                Tier::Clean,
                Tier::Clean,
                Tier::Clean,
                Tier::Mid(1),
                Tier::Mid(1),
                Tier::Mid(2),
                Tier::Mask
            ]
        );
        assert_eq!(s.cumulative_size(1), 5);
    }

    #[test]
    fn shape_and_stochasticity_errors() {
        let spec = HierarchySpec::two_level(3, 2).unwrap();
        let phi = ProjectionKernel::from_assignment(&[0, 1], 2).unwrap();
        assert!(matches!(
            build_level_operator(&spec, 1, &phi),
            Err(HierarchyError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            build_level_operator(&spec, 2, &phi),
            Err(HierarchyError::LevelOutOfRange { .. })
        ));
        let bad = DMatrix::from_row_slice(1, 2, &[0.5, 0.6]);
        assert!(matches!(
            ProjectionKernel::new(bad),
            Err(HierarchyError::NotStochastic { .. })
        ));
    }

    #[test]
    fn unchained_multilevel_kernels_are_rejected() {
        // clean 0 -> group 0 at level 1, but level 2 sends clean 0 and group 0 apart
        let spec = HierarchySpec::new(2, vec![2, 2]).unwrap();
        let l1 = ProjectionKernel::from_assignment(&[0, 1], 2).unwrap();
        let l2 = ProjectionKernel::from_assignment(&[0, 1, 1, 0], 2).unwrap();
        assert!(matches!(
            Hierarchy::new(spec.clone(), vec![l1.clone(), l2]),
            Err(HierarchyError::InconsistentLevels { .. })
        ));
        let step = ProjectionKernel::from_assignment(&[1, 0], 2).unwrap();
        let h = Hierarchy::chained(spec, vec![l1, step]).unwrap();
        assert_eq!(h.kernels()[1].assignment().unwrap(), vec![1, 0, 1, 0]);
    }

    #[test]
    fn config_round_trip_and_errors() {
        let cfg = HierarchyConfig {
            name: "toy".into(),
            version: 1,
            clean_tokens: vec!["A".into(), "B".into(), "C".into()],
            groups: vec![vec!["A".into(), "C".into()], vec!["B".into()]],
        };
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(HierarchyConfig::from_toml_str(&text).unwrap(), cfg);
        assert_eq!(cfg.assignment().unwrap(), vec![0, 1, 0]);
        let h = cfg.build().unwrap();
        assert_eq!(h.dim(), 6);

        let mut missing = cfg.clone();
        missing.groups[1].clear();
        missing.groups.pop();
        assert_eq!(missing.assignment(), Err(HierarchyError::UngroupedToken("B".into())));
    }
}
