//! Reverse-time samplers: project-and-noise and ancestral, with optional
//! scaffold clamping and classifier-free guidance.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::denoiser::{cfg_combine, Denoiser, DenoiserError, DenoiserOutput};
use crate::forward::{pair_index, ForwardError, GraphDiffusion, GraphState};
use crate::hierarchy::Tier;
use crate::posterior::{edge_posterior, model_posterior, PosteriorError};
use crate::prob::{normalize, sample_categorical, stream_rng};

/// Temperatures below this are treated as the greedy limit.
pub const GREEDY_TAU: f64 = 1e-6;

const SIMPLEX_TOL: f64 = 1e-9;
const CUTOFF_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplerError {
    #[error(transparent)]
    Denoiser(#[from] DenoiserError),
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error("invalid sampler config: {0}")]
    Config(String),
    #[error("not a probability vector (sum {0})")]
    NotSimplex(f64),
    #[error("invalid scaffold: {0}")]
    Scaffold(String),
    #[error("size distribution: {0}")]
    Sizes(String),
    #[error("sample {sample} ended with non-clean token at node {node}")]
    NotClean { sample: usize, node: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerMode {
    /// Project the prediction to a clean graph, then re-noise it.
    Pn,
    /// Sample the model posterior step by step.
    Ancestral,
}

impl fmt::Display for SamplerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplerMode::Pn => "pn",
            SamplerMode::Ancestral => "ancestral",
        })
    }
}

impl FromStr for SamplerMode {
    type Err = SamplerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pn" => Ok(SamplerMode::Pn),
            "ancestral" => Ok(SamplerMode::Ancestral),
            other => Err(SamplerError::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub steps: usize,
    pub tau: f64,
    pub top_p: f64,
    pub mode: SamplerMode,
    /// Guidance scale; only used when a condition is supplied.
    pub guidance: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            tau: 1.0,
            top_p: 1.0,
            mode: SamplerMode::Pn,
            guidance: 1.0,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.steps == 0 {
            return Err(SamplerError::Config("steps must be at least 1".into()));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(SamplerError::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(SamplerError::Config(format!(
                "top_p must lie in (0, 1], got {}",
                self.top_p
            )));
        }
        if !self.guidance.is_finite() {
            return Err(SamplerError::Config("guidance must be finite".into()));
        }
        Ok(())
    }
}

/// Temperature followed by nucleus truncation.
///
/// Tokens tied with the last one kept are kept too; the most likely token is
/// always kept. Below [`GREEDY_TAU`] the result is one-hot at the first argmax.
pub fn apply_temperature_topp(probs: &[f64], tau: f64, top_p: f64) -> Result<Vec<f64>, SamplerError> {
    let sum: f64 = probs.iter().sum();
    if probs.is_empty() || (sum - 1.0).abs() > SIMPLEX_TOL || probs.iter().any(|p| !(*p >= 0.0)) {
        return Err(SamplerError::NotSimplex(sum));
    }
    if !(tau > 0.0) || !(top_p > 0.0 && top_p <= 1.0) {
        return Err(SamplerError::Config(format!("tau={tau}, top_p={top_p}")));
    }
    if tau < GREEDY_TAU {
        let mut best = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = i;
            }
        }
        return Ok(crate::prob::one_hot(probs.len(), best));
    }
    let mut out = if tau == 1.0 {
        probs.to_vec()
    } else {
        let logits: Vec<f64> = probs
            .iter()
            .map(|&p| if p > 0.0 { p.ln() / tau } else { f64::NEG_INFINITY })
            .collect();
        let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut v: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
        normalize(&mut v).ok_or(SamplerError::NotSimplex(0.0))?;
        v
    };
    if top_p < 1.0 {
        let mut order: Vec<usize> = (0..out.len()).collect();
        order.sort_by(|&a, &b| out[b].total_cmp(&out[a]).then(a.cmp(&b)));
        let mut acc = 0.0;
        let mut cutoff = out[order[0]];
        for &i in &order {
            acc += out[i];
            cutoff = out[i];
            if acc >= top_p - CUTOFF_TOL {
                break;
            }
        }
        out.iter_mut().for_each(|p| {
            if *p < cutoff {
                *p = 0.0
            }
        });
        normalize(&mut out).ok_or(SamplerError::NotSimplex(0.0))?;
    }
    Ok(out)
}

/// Histogram over node counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeDistribution {
    sizes: Vec<usize>,
    probs: Vec<f64>,
}

impl SizeDistribution {
    pub fn from_sizes(observed: &[usize]) -> Result<Self, SamplerError> {
        if observed.is_empty() {
            return Err(SamplerError::Sizes("no sizes observed".into()));
        }
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for &n in observed {
            *counts.entry(n).or_default() += 1.0;
        }
        Self::from_histogram(counts.into_iter().collect())
    }

    pub fn from_histogram(entries: Vec<(usize, f64)>) -> Result<Self, SamplerError> {
        let (sizes, mut probs): (Vec<usize>, Vec<f64>) = entries.into_iter().filter(|(_, w)| *w > 0.0).unzip();
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(SamplerError::Sizes("need positive sizes with positive weight".into()));
        }
        normalize(&mut probs).ok_or_else(|| SamplerError::Sizes("weights do not sum to a positive value".into()))?;
        Ok(Self { sizes, probs })
    }

    pub fn point(n: usize) -> Self {
        Self {
            sizes: vec![n],
            probs: vec![1.0],
        }
    }

    pub fn probability(&self, n: usize) -> f64 {
        self.sizes.iter().position(|&m| m == n).map_or(0.0, |i| self.probs[i])
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.sizes.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sizes[sample_categorical(&self.probs, rng)]
    }
}

/// Node and bond tokens held fixed throughout sampling.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScaffoldConstraint {
    pub nodes: Vec<(usize, usize)>,
    pub edges: Vec<(usize, usize, usize)>,
}

impl ScaffoldConstraint {
    /// Fixes `indices` of `g` and every pair among them, including absent bonds.
    pub fn from_graph(g: &GraphState, indices: &[usize]) -> Result<Self, SamplerError> {
        let mut idx = indices.to_vec();
        idx.sort_unstable();
        idx.dedup();
        if let Some(&bad) = idx.iter().find(|&&i| i >= g.n) {
            return Err(SamplerError::Scaffold(format!(
                "index {bad} outside graph of {} nodes",
                g.n
            )));
        }
        let nodes = idx.iter().map(|&i| (i, g.nodes[i])).collect();
        let mut edges = Vec::new();
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                edges.push((i, j, g.edge(i, j)));
            }
        }
        Ok(Self { nodes, edges })
    }

    pub fn check(&self, n_total: usize, clean: usize, bonds: usize) -> Result<(), SamplerError> {
        for &(i, x) in &self.nodes {
            if i >= n_total {
                return Err(SamplerError::Scaffold(format!("node {i} outside {n_total} nodes")));
            }
            if x >= clean {
                return Err(SamplerError::Scaffold(format!("node {i} holds non-clean token {x}")));
            }
        }
        for &(i, j, e) in &self.edges {
            if i == j || i >= n_total || j >= n_total || e >= bonds {
                return Err(SamplerError::Scaffold(format!("bad edge ({i}, {j}, {e})")));
            }
        }
        Ok(())
    }

    pub fn apply(&self, g: &mut GraphState) {
        for &(i, x) in &self.nodes {
            g.nodes[i] = x;
        }
        for &(i, j, e) in &self.edges {
            g.set_edge(i, j, e);
        }
    }

    pub fn holds(&self, g: &GraphState) -> bool {
        self.nodes.iter().all(|&(i, x)| g.nodes[i] == x) && self.edges.iter().all(|&(i, j, e)| g.edge(i, j) == e)
    }
}

/// Drives a denoiser through the reverse process.
pub struct Sampler<'a, D: ?Sized> {
    diffusion: &'a GraphDiffusion,
    denoiser: &'a D,
    config: SamplerConfig,
    condition: Option<Vec<f64>>,
    constraint: Option<ScaffoldConstraint>,
}

impl<'a, D: Denoiser + ?Sized> Sampler<'a, D> {
    pub fn new(diffusion: &'a GraphDiffusion, denoiser: &'a D, config: SamplerConfig) -> Result<Self, SamplerError> {
        config.validate()?;
        if denoiser.atom_classes() != diffusion.atoms.clean_size() || denoiser.bond_classes() != diffusion.edge_dim() {
            return Err(SamplerError::Config(format!(
                "denoiser predicts {} atom and {} bond classes, process has {} and {}",
                denoiser.atom_classes(),
                denoiser.bond_classes(),
                diffusion.atoms.clean_size(),
                diffusion.edge_dim()
            )));
        }
        Ok(Self {
            diffusion,
            denoiser,
            config,
            condition: None,
            constraint: None,
        })
    }

    pub fn with_condition(mut self, condition: Vec<f64>) -> Self {
        self.condition = Some(condition);
        self
    }

    pub fn with_constraint(mut self, constraint: ScaffoldConstraint) -> Self {
        self.constraint = Some(constraint);
        self
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    fn predict(&self, g: &GraphState) -> Result<DenoiserOutput, SamplerError> {
        let out = match &self.condition {
            None => self.denoiser.predict(g, None)?,
            Some(c) => {
                let cond = self.denoiser.predict(g, Some(c))?;
                if self.config.guidance == 1.0 {
                    cond
                } else {
                    let uncond = self.denoiser.predict(g, None)?;
                    cfg_combine(&cond, &uncond, self.config.guidance)?
                }
            }
        };
        out.validate(g.n, self.diffusion.atoms.clean_size(), self.diffusion.edge_dim())?;
        Ok(out)
    }

    fn filter(&self, probs: &[f64]) -> Result<Vec<f64>, SamplerError> {
        if self.config.tau == 1.0 && self.config.top_p == 1.0 {
            return Ok(probs.to_vec());
        }
        apply_temperature_topp(probs, self.config.tau, self.config.top_p)
    }

    /// Draws `count` graphs with sizes from `sizes`; sample `i` uses stream `i`.
    pub fn sample(&self, count: usize, sizes: &SizeDistribution) -> Result<Vec<GraphState>, SamplerError> {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(self.config.seed, i as u64);
                let n = sizes.sample(&mut rng);
                self.run(i, n, &mut rng)
            })
            .collect()
    }

    /// Draws `count` graphs of exactly `n` nodes.
    pub fn sample_fixed(&self, count: usize, n: usize) -> Result<Vec<GraphState>, SamplerError> {
        self.sample(count, &SizeDistribution::point(n))
    }

    fn run<R: Rng>(&self, index: usize, n: usize, rng: &mut R) -> Result<GraphState, SamplerError> {
        if let Some(c) = &self.constraint {
            c.check(n, self.diffusion.atoms.clean_size(), self.diffusion.edge_dim())?;
        }
        let mut g = self.diffusion.sample_prior(n, rng);
        self.clamp(&mut g);
        let steps = self.config.steps;
        for k in (1..=steps).rev() {
            let t = k as f64 / steps as f64;
            let s = (k - 1) as f64 / steps as f64;
            g.t = t;
            let pred = self.predict(&g)?;
            g = match self.config.mode {
                SamplerMode::Pn => self.pn_step(&pred, n, s, rng)?,
                SamplerMode::Ancestral => self.ancestral_step(&g, &pred, s, t, rng)?,
            };
            g.t = s;
            self.clamp(&mut g);
        }
        let k = self.diffusion.atoms.clean_size();
        if let Some(node) = g.nodes.iter().position(|&x| x >= k) {
            return Err(SamplerError::NotClean { sample: index, node });
        }
        Ok(g)
    }

    fn clamp(&self, g: &mut GraphState) {
        if let Some(c) = &self.constraint {
            c.apply(g);
        }
    }

    fn pn_step<R: Rng>(
        &self,
        pred: &DenoiserOutput,
        n: usize,
        s: f64,
        rng: &mut R,
    ) -> Result<GraphState, SamplerError> {
        let mut nodes = Vec::with_capacity(n);
        for row in &pred.node_probs {
            nodes.push(sample_categorical(&self.filter(row)?, rng));
        }
        let edges = pred.edge_probs.iter().map(|row| sample_categorical(row, rng)).collect();
        let mut clean = GraphState {
            n,
            nodes,
            edges,
            t: 0.0,
        };
        self.clamp(&mut clean);
        if s == 0.0 {
            return Ok(clean);
        }
        Ok(self.diffusion.sample_forward(&clean, s, rng)?)
    }

    fn ancestral_step<R: Rng>(
        &self,
        g: &GraphState,
        pred: &DenoiserOutput,
        s: f64,
        t: f64,
        rng: &mut R,
    ) -> Result<GraphState, SamplerError> {
        let atoms = &self.diffusion.atoms;
        let spec = atoms.hierarchy().spec();
        let mut next = g.clone();
        for (z, row) in next.nodes.iter_mut().zip(&pred.node_probs) {
            let x_theta = match spec.tier_of(*z) {
                Tier::Clean => continue,
                Tier::Mid(_) if spec.mid_levels() == 1 => {
                    // filter inside the group so truncation cannot empty it
                    let g_idx = *z - spec.tier_offset(1);
                    let phi = &atoms.hierarchy().kernels()[0];
                    let mut r: Vec<f64> = row
                        .iter()
                        .enumerate()
                        .map(|(x, &p)| if phi.matrix()[(x, g_idx)] > 0.0 { p } else { 0.0 })
                        .collect();
                    normalize(&mut r).ok_or(PosteriorError::InconsistentDenoiser { z_t: *z })?;
                    self.filter(&r)?
                }
                _ => self.filter(row)?,
            };
            let post = model_posterior(atoms, *z, &x_theta, s, t)?;
            *z = sample_categorical(&post, rng);
        }
        for (e, row) in next.edges.iter_mut().zip(&pred.edge_probs) {
            let post = edge_posterior(&self.diffusion.edges, *e, row, s, t)?;
            *e = sample_categorical(&post, rng);
        }
        Ok(next)
    }
}

/// Project-and-noise sampling.
pub fn pn_sample<D: Denoiser + ?Sized>(
    diffusion: &GraphDiffusion,
    denoiser: &D,
    config: SamplerConfig,
    count: usize,
    sizes: &SizeDistribution,
) -> Result<Vec<GraphState>, SamplerError> {
    Sampler::new(
        diffusion,
        denoiser,
        SamplerConfig {
            mode: SamplerMode::Pn,
            ..config
        },
    )?
    .sample(count, sizes)
}

/// Ancestral sampling through the model posterior.
pub fn ancestral_sample<D: Denoiser + ?Sized>(
    diffusion: &GraphDiffusion,
    denoiser: &D,
    config: SamplerConfig,
    count: usize,
    sizes: &SizeDistribution,
) -> Result<Vec<GraphState>, SamplerError> {
    Sampler::new(
        diffusion,
        denoiser,
        SamplerConfig {
            mode: SamplerMode::Ancestral,
            ..config
        },
    )?
    .sample(count, sizes)
}

/// Generates `count` graphs of `n_total` nodes with the scaffold held fixed.
pub fn scaffold_constrained_sample<D: Denoiser + ?Sized>(
    diffusion: &GraphDiffusion,
    denoiser: &D,
    config: SamplerConfig,
    scaffold: &ScaffoldConstraint,
    n_total: usize,
    count: usize,
) -> Result<Vec<GraphState>, SamplerError> {
    if scaffold.nodes.len() > n_total {
        return Err(SamplerError::Scaffold(format!(
            "scaffold has {} nodes but only {n_total} are generated",
            scaffold.nodes.len()
        )));
    }
    scaffold.check(n_total, diffusion.atoms.clean_size(), diffusion.edge_dim())?;
    Sampler::new(diffusion, denoiser, config)?
        .with_constraint(scaffold.clone())
        .sample_fixed(count, n_total)
}

/// Empirical distribution of graphs keyed by `(nodes, edges)`.
pub fn empirical_distribution(graphs: &[GraphState]) -> BTreeMap<(Vec<usize>, Vec<usize>), f64> {
    let mut counts = BTreeMap::new();
    let w = 1.0 / graphs.len().max(1) as f64;
    for g in graphs {
        *counts.entry((g.nodes.clone(), g.edges.clone())).or_insert(0.0) += w;
    }
    counts
}

/// Total variation between two keyed distributions.
pub fn keyed_total_variation<K: Ord>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> f64 {
    let mut tv = 0.0;
    for (k, &p) in a {
        tv += (p - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, &q) in b {
        if !a.contains_key(k) {
            tv += q;
        }
    }
    0.5 * tv
}

/// Index of pair `(i, j)` in a graph of `n` nodes, any order.
pub fn edge_slot(n: usize, i: usize, j: usize) -> usize {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    pair_index(n, a, b)
}
