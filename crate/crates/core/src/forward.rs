//! Closed-form forward kernels and forward sampling for atoms (hierarchical)
//! and bonds (uniform).

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::{Hierarchy, HierarchyError, TransitionMatrix};
use crate::prob::sample_categorical;
use crate::schedule::{self, Schedule, ScheduleError, ScheduleFn};

/// Edge token for "no bond"; the diagonal of every edge matrix.
pub const NO_BOND: usize = 0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForwardError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error("{schedules} schedule levels for {operators} operators")]
    LevelMismatch { schedules: usize, operators: usize },
    #[error("node {node} holds non-clean token {token}")]
    NotClean { node: usize, token: usize },
    #[error("token {token} out of range for dimension {dim}")]
    TokenOutOfRange { token: usize, dim: usize },
    #[error("edge space needs at least 2 categories, got {0}")]
    EdgeCategories(usize),
    #[error("graph with {n} nodes needs {expected} edge entries, found {found}")]
    EdgeCount { n: usize, expected: usize, found: usize },
}

/// Hierarchical forward process: a hierarchy plus one schedule per operator.
#[derive(Debug, Clone)]
pub struct HierarchicalProcess {
    hierarchy: Hierarchy,
    schedule: Schedule,
}

impl HierarchicalProcess {
    pub fn new(hierarchy: Hierarchy, schedule: Schedule) -> Result<Self, ForwardError> {
        let operators = hierarchy.spec().operator_count();
        if schedule.level_count() != operators {
            return Err(ForwardError::LevelMismatch {
                schedules: schedule.level_count(),
                operators,
            });
        }
        schedule::validate(&schedule)?;
        Ok(Self { hierarchy, schedule })
    }

    pub fn hierarchy(&self) -> &Hierarchy {
        &self.hierarchy
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn dim(&self) -> usize {
        self.hierarchy.dim()
    }

    pub fn clean_size(&self) -> usize {
        self.hierarchy.spec().clean_size()
    }

    pub fn mask_index(&self) -> usize {
        self.hierarchy.spec().mask_index()
    }

    /// Weights on `[I, Q^(1), ..., Q^(m)]` for the interval `[s, t]`.
    pub fn coefficients(&self, s: f64, t: f64) -> Result<Vec<f64>, ForwardError> {
        let ratios = self.schedule.conditional_ratios(s, t)?;
        Ok(mixture_weights(&ratios))
    }

    /// `Q_{t|s}`.
    pub fn kernel_between(&self, s: f64, t: f64) -> Result<TransitionMatrix, ForwardError> {
        let c = self.coefficients(s, t)?;
        let d = self.dim();
        let mut m = DMatrix::identity(d, d) * c[0];
        for (w, op) in c[1..].iter().zip(self.hierarchy.operators()) {
            if *w != 0.0 {
                m += op.matrix() * *w;
            }
        }
        Ok(TransitionMatrix::from_parts(m))
    }

    /// `Q_t = Q_{t|0}`.
    pub fn cumulative_kernel(&self, t: f64) -> Result<TransitionMatrix, ForwardError> {
        self.kernel_between(0.0, t)
    }

    /// Row `z` of `Q_{t|s}` without forming the dense matrix.
    pub fn transition_row(&self, z: usize, s: f64, t: f64) -> Result<Vec<f64>, ForwardError> {
        let d = self.dim();
        if z >= d {
            return Err(ForwardError::TokenOutOfRange { token: z, dim: d });
        }
        let c = self.coefficients(s, t)?;
        let mut row = vec![0.0; d];
        row[z] = c[0];
        for (w, op) in c[1..].iter().zip(self.hierarchy.operators()) {
            if *w == 0.0 {
                continue;
            }
            for (j, v) in row.iter_mut().enumerate() {
                *v += w * op.get(z, j);
            }
        }
        row.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Ok(row)
    }

    /// `q(z_t | x_0)` for a clean token.
    pub fn marginal(&self, x0: usize, t: f64) -> Result<Vec<f64>, ForwardError> {
        if !self.hierarchy.spec().is_clean(x0) {
            return Err(ForwardError::NotClean { node: 0, token: x0 });
        }
        self.transition_row(x0, 0.0, t)
    }
}

/// Two-level marginal `alpha e_x + (beta - alpha) Phi_x + (1 - beta) e_m`,
/// written out directly from the schedule values.
pub fn two_level_marginal(process: &HierarchicalProcess, x0: usize, t: f64) -> Result<Vec<f64>, ForwardError> {
    let alpha = process.schedule.value(0, t)?;
    let beta = process
        .schedule
        .levels()
        .get(1)
        .map_or(Ok(alpha), |_| process.schedule.value(1, t))?;
    let spec = process.hierarchy.spec();
    let mut v = vec![0.0; spec.dim()];
    v[x0] = alpha;
    let offset = spec.tier_offset(1);
    for (g, w) in process.hierarchy.group_weights(x0).into_iter().enumerate() {
        v[offset + g] += (beta - alpha) * w;
    }
    v[spec.mask_index()] = 1.0 - beta;
    Ok(v)
}

/// Converts ordered survival ratios `r_1 <= ... <= r_m` into weights on
/// `[I, Q^(1), ..., Q^(m)]`.
pub(crate) fn mixture_weights(ratios: &[f64]) -> Vec<f64> {
    let m = ratios.len();
    let mut c = Vec::with_capacity(m + 1);
    c.push(ratios[0]);
    for i in 1..m {
        c.push((ratios[i] - ratios[i - 1]).max(0.0));
    }
    c.push((1.0 - ratios[m - 1]).max(0.0));
    c
}

/// Builds `Q_{t|s}` for an arbitrary number of levels in one call.
pub fn build_multilevel_kernel(
    hierarchy: &Hierarchy,
    schedule: &Schedule,
    s: f64,
    t: f64,
) -> Result<TransitionMatrix, ForwardError> {
    HierarchicalProcess::new(hierarchy.clone(), schedule.clone())?.kernel_between(s, t)
}

/// Uniform-transition process over `categories` bond tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformProcess {
    categories: usize,
    schedule: Schedule,
}

impl UniformProcess {
    pub fn new(categories: usize, alpha: ScheduleFn) -> Result<Self, ForwardError> {
        if categories < 2 {
            return Err(ForwardError::EdgeCategories(categories));
        }
        let schedule = Schedule::single(alpha);
        schedule::validate(&schedule)?;
        Ok(Self { categories, schedule })
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    /// `alpha_{t|s}` of the edge schedule.
    pub fn keep_ratio(&self, s: f64, t: f64) -> Result<f64, ForwardError> {
        Ok(self.schedule.conditional_ratio(0, s, t)?)
    }

    /// `alpha_{t|s} I + (1 - alpha_{t|s}) 11^T / d`.
    pub fn kernel(&self, s: f64, t: f64) -> Result<TransitionMatrix, ForwardError> {
        let a = self.keep_ratio(s, t)?;
        let d = self.categories;
        let m = DMatrix::from_fn(d, d, |i, j| (1.0 - a) / d as f64 + if i == j { a } else { 0.0 });
        Ok(TransitionMatrix::from_parts(m))
    }

    pub fn transition_row(&self, e: usize, s: f64, t: f64) -> Result<Vec<f64>, ForwardError> {
        let d = self.categories;
        if e >= d {
            return Err(ForwardError::TokenOutOfRange { token: e, dim: d });
        }
        let a = self.keep_ratio(s, t)?;
        let mut row = vec![(1.0 - a) / d as f64; d];
        row[e] += a;
        Ok(row)
    }

    pub fn marginal(&self, e0: usize, t: f64) -> Result<Vec<f64>, ForwardError> {
        self.transition_row(e0, 0.0, t)
    }

    /// Textbook uniform-noise posterior `q(e_s | e_t, e_0)`.
    pub fn posterior(&self, e_t: usize, e0: usize, s: f64, t: f64) -> Result<Vec<f64>, ForwardError> {
        let step = self.kernel(s, t)?;
        let prior = self.marginal(e0, s)?;
        let mut v: Vec<f64> = (0..self.categories).map(|e| step.get(e, e_t) * prior[e]).collect();
        crate::prob::normalize(&mut v).ok_or(ForwardError::TokenOutOfRange {
            token: e_t,
            dim: self.categories,
        })?;
        Ok(v)
    }
}

/// Node tokens and upper-triangle edge tokens of a graph at time `t`.
///
/// `edges` lists pairs `(0,1), (0,2), ..., (0,n-1), (1,2), ...`; the matrix
/// is symmetric by construction and its diagonal is [`NO_BOND`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphState {
    pub n: usize,
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
    pub t: f64,
}

pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Position of pair `(i, j)`, `i < j`, in the upper-triangle order.
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// Iterates `(i, j)` pairs in upper-triangle order.
pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

impl GraphState {
    pub fn new(nodes: Vec<usize>, edges: Vec<usize>, t: f64) -> Result<Self, ForwardError> {
        let n = nodes.len();
        if edges.len() != pair_count(n) {
            return Err(ForwardError::EdgeCount {
                n,
                expected: pair_count(n),
                found: edges.len(),
            });
        }
        Ok(Self { n, nodes, edges, t })
    }

    /// Graph with every pair set to [`NO_BOND`].
    pub fn empty(nodes: Vec<usize>, t: f64) -> Self {
        let n = nodes.len();
        Self {
            n,
            nodes,
            edges: vec![NO_BOND; pair_count(n)],
            t,
        }
    }

    pub fn edge(&self, i: usize, j: usize) -> usize {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => NO_BOND,
            std::cmp::Ordering::Less => self.edges[pair_index(self.n, i, j)],
            std::cmp::Ordering::Greater => self.edges[pair_index(self.n, j, i)],
        }
    }

    pub fn set_edge(&mut self, i: usize, j: usize, token: usize) {
        assert_ne!(i, j, "self-loops are not representable");
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let k = pair_index(self.n, a, b);
        self.edges[k] = token;
    }

    /// Dense symmetric edge matrix.
    pub fn edge_matrix(&self) -> Vec<Vec<usize>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.edge(i, j)).collect())
            .collect()
    }

    pub fn check_ranges(&self, node_dim: usize, edge_dim: usize) -> Result<(), ForwardError> {
        if self.nodes.len() != self.n || self.edges.len() != pair_count(self.n) {
            return Err(ForwardError::EdgeCount {
                n: self.n,
                expected: pair_count(self.n),
                found: self.edges.len(),
            });
        }
        for &token in &self.nodes {
            if token >= node_dim {
                return Err(ForwardError::TokenOutOfRange { token, dim: node_dim });
            }
        }
        for &token in &self.edges {
            if token >= edge_dim {
                return Err(ForwardError::TokenOutOfRange { token, dim: edge_dim });
            }
        }
        Ok(())
    }
}

/// Atom and bond forward processes applied independently to a graph.
#[derive(Debug, Clone)]
pub struct GraphDiffusion {
    pub atoms: HierarchicalProcess,
    pub edges: UniformProcess,
}

impl GraphDiffusion {
    pub fn new(atoms: HierarchicalProcess, edges: UniformProcess) -> Self {
        Self { atoms, edges }
    }

    pub fn node_dim(&self) -> usize {
        self.atoms.dim()
    }

    pub fn edge_dim(&self) -> usize {
        self.edges.categories()
    }

    fn check_clean(&self, g: &GraphState) -> Result<(), ForwardError> {
        g.check_ranges(self.node_dim(), self.edge_dim())?;
        let k = self.atoms.clean_size();
        if let Some((node, &token)) = g.nodes.iter().enumerate().find(|(_, &x)| x >= k) {
            return Err(ForwardError::NotClean { node, token });
        }
        Ok(())
    }

    /// Draws `G_t ~ q(G_t | G_0)`. Each unordered pair is sampled once.
    pub fn sample_forward<R: Rng + ?Sized>(
        &self,
        g0: &GraphState,
        t: f64,
        rng: &mut R,
    ) -> Result<GraphState, ForwardError> {
        self.check_clean(g0)?;
        let mut out = g0.clone();
        out.t = t;
        if t == 0.0 {
            return Ok(out);
        }
        let mut node_cache: Vec<Option<Vec<f64>>> = vec![None; self.atoms.clean_size()];
        for x in out.nodes.iter_mut() {
            let row = match &node_cache[*x] {
                Some(r) => r,
                None => {
                    node_cache[*x] = Some(self.atoms.marginal(*x, t)?);
                    node_cache[*x].as_ref().unwrap()
                }
            };
            *x = sample_categorical(row, rng);
        }
        let keep = self.edges.keep_ratio(0.0, t)?;
        let d = self.edge_dim();
        for e in out.edges.iter_mut() {
            if rng.gen::<f64>() >= keep {
                *e = rng.gen_range(0..d);
            }
        }
        Ok(out)
    }

    /// Prior at `t = 1`: every atom masked, every pair uniform.
    pub fn sample_prior<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> GraphState {
        let nodes = vec![self.atoms.mask_index(); n];
        let d = self.edge_dim();
        let edges = (0..pair_count(n)).map(|_| rng.gen_range(0..d)).collect();
        GraphState {
            n,
            nodes,
            edges,
            t: 1.0,
        }
    }
}
