//! Denoiser interface and reference implementations.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forward::{pair_count, ForwardError, GraphDiffusion, GraphState};

const ROW_TOL: f64 = 1e-9;

/// Probabilities are floored here before taking logs in guidance.
pub const CFG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DenoiserError {
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("no corpus graph has {0} nodes")]
    NoGraphsOfSize(usize),
    #[error("noisy graph is unreachable from every corpus graph")]
    Unreachable,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("row {row} sums to {sum}")]
    NotNormalized { row: String, sum: f64 },
    #[error("denoiser process: {0}")]
    Process(String),
}

/// Factorized clean-graph prediction: one row per node over clean atom
/// tokens and one row per unordered pair (upper-triangle order) over bonds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserOutput {
    pub node_probs: Vec<Vec<f64>>,
    pub edge_probs: Vec<Vec<f64>>,
}

impl DenoiserOutput {
    pub fn n(&self) -> usize {
        self.node_probs.len()
    }

    pub fn edge(&self, i: usize, j: usize) -> &[f64] {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        &self.edge_probs[crate::forward::pair_index(self.n(), a, b)]
    }

    /// Checks row counts, row lengths and normalization.
    pub fn validate(&self, n: usize, atoms: usize, bonds: usize) -> Result<(), DenoiserError> {
        if self.node_probs.len() != n || self.edge_probs.len() != pair_count(n) {
            return Err(DenoiserError::Shape(format!(
                "expected {n} node rows and {} edge rows, got {} and {}",
                pair_count(n),
                self.node_probs.len(),
                self.edge_probs.len()
            )));
        }
        let check = |rows: &[Vec<f64>], width: usize, kind: &str| -> Result<(), DenoiserError> {
            for (i, r) in rows.iter().enumerate() {
                if r.len() != width {
                    return Err(DenoiserError::Shape(format!(
                        "{kind} row {i} has {} entries, expected {width}",
                        r.len()
                    )));
                }
                let sum: f64 = r.iter().sum();
                if (sum - 1.0).abs() > ROW_TOL || r.iter().any(|v| !(*v >= 0.0)) {
                    return Err(DenoiserError::NotNormalized {
                        row: format!("{kind} {i}"),
                        sum,
                    });
                }
            }
            Ok(())
        };
        check(&self.node_probs, atoms, "node")?;
        check(&self.edge_probs, bonds, "edge")
    }
}

/// `f(G_t, t, c) -> (p(X_0), p(E_0))`. Implementations must be deterministic
/// in their inputs and safe to call from several threads.
pub trait Denoiser: Send + Sync {
    fn predict(&self, g_t: &GraphState, condition: Option<&[f64]>) -> Result<DenoiserOutput, DenoiserError>;

    fn atom_classes(&self) -> usize;

    fn bond_classes(&self) -> usize;
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn predict(&self, g_t: &GraphState, condition: Option<&[f64]>) -> Result<DenoiserOutput, DenoiserError> {
        (**self).predict(g_t, condition)
    }

    fn atom_classes(&self) -> usize {
        (**self).atom_classes()
    }

    fn bond_classes(&self) -> usize {
        (**self).bond_classes()
    }
}

fn check_corpus(diffusion: &GraphDiffusion, corpus: &[GraphState]) -> Result<(), DenoiserError> {
    if corpus.is_empty() {
        return Err(DenoiserError::EmptyCorpus);
    }
    let k = diffusion.atoms.clean_size();
    for g in corpus {
        g.check_ranges(k, diffusion.edge_dim())?;
    }
    Ok(())
}

/// Exact posterior mean over a finite corpus with uniform prior.
///
/// Graphs are grouped by node count; a noisy graph with `n` nodes is scored
/// only against corpus graphs with `n` nodes.
#[derive(Debug, Clone)]
pub struct ExactBayesDenoiser {
    diffusion: GraphDiffusion,
    by_size: BTreeMap<usize, Vec<(GraphState, f64)>>,
}

impl ExactBayesDenoiser {
    pub fn new(diffusion: GraphDiffusion, corpus: &[GraphState]) -> Result<Self, DenoiserError> {
        check_corpus(&diffusion, corpus)?;
        let mut counts: BTreeMap<(Vec<usize>, Vec<usize>), f64> = BTreeMap::new();
        for g in corpus {
            *counts.entry((g.nodes.clone(), g.edges.clone())).or_default() += 1.0;
        }
        let mut by_size: BTreeMap<usize, Vec<(GraphState, f64)>> = BTreeMap::new();
        for ((nodes, edges), c) in counts {
            let n = nodes.len();
            by_size.entry(n).or_default().push((
                GraphState {
                    n,
                    nodes,
                    edges,
                    t: 0.0,
                },
                c.ln(),
            ));
        }
        Ok(Self { diffusion, by_size })
    }

    pub fn diffusion(&self) -> &GraphDiffusion {
        &self.diffusion
    }

    /// Posterior weights over distinct corpus graphs of the right size.
    pub fn graph_posterior(&self, g_t: &GraphState) -> Result<Vec<(&GraphState, f64)>, DenoiserError> {
        g_t.check_ranges(self.diffusion.node_dim(), self.diffusion.edge_dim())?;
        let graphs = self.by_size.get(&g_t.n).ok_or(DenoiserError::NoGraphsOfSize(g_t.n))?;
        let t = g_t.t;
        let k = self.diffusion.atoms.clean_size();
        let log_rows = |rows: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            rows.into_iter().map(|r| r.into_iter().map(f64::ln).collect()).collect()
        };
        let atom_log = log_rows(
            (0..k)
                .map(|x| self.diffusion.atoms.marginal(x, t))
                .collect::<Result<_, _>>()?,
        );
        let bond_log = log_rows(
            (0..self.diffusion.edge_dim())
                .map(|e| self.diffusion.edges.marginal(e, t))
                .collect::<Result<_, _>>()?,
        );
        let scores: Vec<f64> = graphs
            .iter()
            .map(|(g, log_prior)| {
                let mut s = *log_prior;
                for (&x0, &z) in g.nodes.iter().zip(&g_t.nodes) {
                    // a clean observation only fits its own token; the common
                    // alpha_t factor cancels, which keeps clamped nodes usable at t = 1
                    s += if z < k {
                        if z == x0 {
                            0.0
                        } else {
                            f64::NEG_INFINITY
                        }
                    } else {
                        atom_log[x0][z]
                    };
                }
                for (&e0, &e) in g.edges.iter().zip(&g_t.edges) {
                    s += bond_log[e0][e];
                }
                s
            })
            .collect();
        let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return Err(DenoiserError::Unreachable);
        }
        let weights: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
        let total: f64 = weights.iter().sum();
        Ok(graphs
            .iter()
            .map(|(g, _)| g)
            .zip(weights.into_iter().map(|w| w / total))
            .collect())
    }
}

impl Denoiser for ExactBayesDenoiser {
    fn predict(&self, g_t: &GraphState, _condition: Option<&[f64]>) -> Result<DenoiserOutput, DenoiserError> {
        let post = self.graph_posterior(g_t)?;
        let n = g_t.n;
        let mut node_probs = vec![vec![0.0; self.atom_classes()]; n];
        let mut edge_probs = vec![vec![0.0; self.bond_classes()]; pair_count(n)];
        for (g, w) in post {
            if w == 0.0 {
                continue;
            }
            for (row, &x) in node_probs.iter_mut().zip(&g.nodes) {
                row[x] += w;
            }
            for (row, &e) in edge_probs.iter_mut().zip(&g.edges) {
                row[e] += w;
            }
        }
        Ok(DenoiserOutput { node_probs, edge_probs })
    }

    fn atom_classes(&self) -> usize {
        self.diffusion.atoms.clean_size()
    }

    fn bond_classes(&self) -> usize {
        self.diffusion.edge_dim()
    }
}

/// Ignores the noisy graph and predicts corpus-wide token frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMarginalDenoiser {
    atoms: Vec<f64>,
    bonds: Vec<f64>,
}

impl EmpiricalMarginalDenoiser {
    pub fn new(atom_classes: usize, bond_classes: usize, corpus: &[GraphState]) -> Result<Self, DenoiserError> {
        if corpus.is_empty() {
            return Err(DenoiserError::EmptyCorpus);
        }
        let mut atoms = vec![0.0; atom_classes];
        let mut bonds = vec![0.0; bond_classes];
        for g in corpus {
            g.check_ranges(atom_classes, bond_classes)?;
            g.nodes.iter().for_each(|&x| atoms[x] += 1.0);
            g.edges.iter().for_each(|&e| bonds[e] += 1.0);
        }
        if crate::prob::normalize(&mut atoms).is_none() {
            return Err(DenoiserError::EmptyCorpus);
        }
        if crate::prob::normalize(&mut bonds).is_none() {
            bonds = vec![0.0; bond_classes];
            bonds[crate::forward::NO_BOND] = 1.0;
        }
        Ok(Self { atoms, bonds })
    }

    pub fn atom_frequencies(&self) -> &[f64] {
        &self.atoms
    }

    pub fn bond_frequencies(&self) -> &[f64] {
        &self.bonds
    }
}

impl Denoiser for EmpiricalMarginalDenoiser {
    fn predict(&self, g_t: &GraphState, _condition: Option<&[f64]>) -> Result<DenoiserOutput, DenoiserError> {
        Ok(DenoiserOutput {
            node_probs: vec![self.atoms.clone(); g_t.n],
            edge_probs: vec![self.bonds.clone(); pair_count(g_t.n)],
        })
    }

    fn atom_classes(&self) -> usize {
        self.atoms.len()
    }

    fn bond_classes(&self) -> usize {
        self.bonds.len()
    }
}

fn guide_row(cond: &[f64], uncond: &[f64], w: f64) -> Vec<f64> {
    let logs: Vec<f64> = cond
        .iter()
        .zip(uncond)
        .map(|(&c, &u)| {
            let (lc, lu) = (c.max(CFG_FLOOR).ln(), u.max(CFG_FLOOR).ln());
            lu + w * (lc - lu)
        })
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut row: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    crate::prob::normalize(&mut row);
    row
}

/// `log p = log p_u + w (log p_c - log p_u)`, renormalized per row.
pub fn cfg_combine(cond: &DenoiserOutput, uncond: &DenoiserOutput, w: f64) -> Result<DenoiserOutput, DenoiserError> {
    let same = cond.node_probs.len() == uncond.node_probs.len()
        && cond.edge_probs.len() == uncond.edge_probs.len()
        && cond
            .node_probs
            .iter()
            .zip(&uncond.node_probs)
            .all(|(a, b)| a.len() == b.len())
        && cond
            .edge_probs
            .iter()
            .zip(&uncond.edge_probs)
            .all(|(a, b)| a.len() == b.len());
    if !same {
        return Err(DenoiserError::Shape(
            "conditional and unconditional outputs differ in shape".into(),
        ));
    }
    let mix = |a: &[Vec<f64>], b: &[Vec<f64>]| a.iter().zip(b).map(|(c, u)| guide_row(c, u, w)).collect();
    Ok(DenoiserOutput {
        node_probs: mix(&cond.node_probs, &uncond.node_probs),
        edge_probs: mix(&cond.edge_probs, &uncond.edge_probs),
    })
}

/// Wraps a denoiser with classifier-free guidance toward a fixed condition.
pub struct Guided<D> {
    pub inner: D,
    pub condition: Vec<f64>,
    pub scale: f64,
}

impl<D: Denoiser> Denoiser for Guided<D> {
    fn predict(&self, g_t: &GraphState, _condition: Option<&[f64]>) -> Result<DenoiserOutput, DenoiserError> {
        let cond = self.inner.predict(g_t, Some(&self.condition))?;
        if self.scale == 1.0 {
            return Ok(cond);
        }
        let uncond = self.inner.predict(g_t, None)?;
        cfg_combine(&cond, &uncond, self.scale)
    }

    fn atom_classes(&self) -> usize {
        self.inner.atom_classes()
    }

    fn bond_classes(&self) -> usize {
        self.inner.bond_classes()
    }
}

/// One request line of the subprocess protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseRequest {
    #[serde(flatten)]
    pub state: GraphState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Vec<f64>>,
}

struct Pipe {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// Talks to an external model over stdin/stdout, one JSON object per line:
/// a [`DenoiseRequest`] out, a [`DenoiserOutput`] back.
pub struct SubprocessDenoiser {
    pipe: Mutex<Pipe>,
    atoms: usize,
    bonds: usize,
}

impl SubprocessDenoiser {
    pub fn spawn(program: &str, args: &[String], atoms: usize, bonds: usize) -> Result<Self, DenoiserError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| DenoiserError::Process(format!("cannot start {program}: {e}")))?;
        let stdin = child
            .stdin
            .take()
            .ok_or_else(|| DenoiserError::Process("no stdin".into()))?;
        let stdout = child
            .stdout
            .take()
            .ok_or_else(|| DenoiserError::Process("no stdout".into()))?;
        Ok(Self {
            pipe: Mutex::new(Pipe {
                child,
                stdin,
                stdout: BufReader::new(stdout),
            }),
            atoms,
            bonds,
        })
    }
}

impl Denoiser for SubprocessDenoiser {
    fn predict(&self, g_t: &GraphState, condition: Option<&[f64]>) -> Result<DenoiserOutput, DenoiserError> {
        let request = DenoiseRequest {
            state: g_t.clone(),
            condition: condition.map(<[f64]>::to_vec),
        };
        let line = serde_json::to_string(&request).map_err(|e| DenoiserError::Process(e.to_string()))?;
        let mut pipe = self
            .pipe
            .lock()
            .map_err(|_| DenoiserError::Process("pipe poisoned".into()))?;
        writeln!(pipe.stdin, "{line}").map_err(|e| DenoiserError::Process(e.to_string()))?;
        pipe.stdin.flush().map_err(|e| DenoiserError::Process(e.to_string()))?;
        let mut reply = String::new();
        let read = pipe
            .stdout
            .read_line(&mut reply)
            .map_err(|e| DenoiserError::Process(e.to_string()))?;
        if read == 0 {
            return Err(DenoiserError::Process("denoiser closed its output".into()));
        }
        drop(pipe);
        let out: DenoiserOutput =
            serde_json::from_str(reply.trim()).map_err(|e| DenoiserError::Process(format!("bad reply: {e}")))?;
        out.validate(g_t.n, self.atoms, self.bonds)?;
        Ok(out)
    }

    fn atom_classes(&self) -> usize {
        self.atoms
    }

    fn bond_classes(&self) -> usize {
        self.bonds
    }
}

impl Drop for SubprocessDenoiser {
    fn drop(&mut self) {
        if let Ok(pipe) = self.pipe.get_mut() {
            let _ = pipe.child.kill();
            let _ = pipe.child.wait();
        }
    }
}
