//! Variational bounds: the discrete-time KL sum, its continuous-time limit,
//! and the cross-entropy training loss.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::denoiser::DenoiserOutput;
use crate::forward::{pair_count, ForwardError, GraphState, HierarchicalProcess};
use crate::hierarchy::{Hierarchy, ProjectionKernel, Tier};
use crate::posterior::{model_posterior, true_posterior, PosteriorError};
use crate::prob::{kl_divergence, normalize, sample_categorical, stream_rng};
use crate::schedule::Schedule;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NelboError {
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error("model posterior assigns zero mass to reachable state {state}: KL is infinite")]
    InfiniteKl { state: usize },
    #[error("zero predicted probability on true {what} token at index {index}")]
    ZeroProbability { what: &'static str, index: usize },
    #[error("integrand coefficient is singular at t={t} (beta_t equals alpha_t)")]
    Singular { t: f64 },
    #[error("continuous integrand supports at most one group tier, found {0}")]
    Unsupported(usize),
    #[error("invalid loss config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Training and evaluation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the bond term in the training loss.
    pub lambda: f64,
    /// Number of discretization steps of the discrete-time bound.
    pub steps: usize,
    pub mc_samples: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            steps: 1000,
            mc_samples: 10_000,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), NelboError> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(NelboError::Config(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.steps < 2 {
            return Err(NelboError::Config(format!("need at least 2 steps, got {}", self.steps)));
        }
        if self.mc_samples == 0 {
            return Err(NelboError::Config("mc_samples must be positive".into()));
        }
        Ok(())
    }
}

/// `KL(q(z_s | z_t, x) || p_theta(z_s | z_t))`, unscaled.
pub fn discrete_kl_term(
    process: &HierarchicalProcess,
    x: usize,
    z_t: usize,
    s: f64,
    t: f64,
    x_theta: &[f64],
) -> Result<f64, NelboError> {
    let q = true_posterior(process, z_t, x, s, t)?;
    let p = match model_posterior(process, z_t, x_theta, s, t) {
        Ok(p) => p,
        // the model puts nothing on the only reachable group
        Err(PosteriorError::InconsistentDenoiser { z_t }) => return Err(NelboError::InfiniteKl { state: z_t }),
        Err(e) => return Err(e.into()),
    };
    kl_divergence(&q, &p).map_err(|state| NelboError::InfiniteKl { state })
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl Estimate {
    fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            std_error: (var / n).sqrt(),
            samples: values.len(),
        }
    }
}

/// `sum_{i=1}^{T} E_{z_t ~ q(.|x)} KL` on the grid `t_i = i/T`, enumerated exactly.
pub fn discrete_nelbo_exact<F>(
    process: &HierarchicalProcess,
    x: usize,
    denoiser: &F,
    steps: usize,
) -> Result<f64, NelboError>
where
    F: Fn(usize, f64) -> Vec<f64> + Sync,
{
    if steps < 2 {
        return Err(NelboError::Config(format!("need at least 2 steps, got {steps}")));
    }
    let terms: Result<Vec<f64>, NelboError> = (1..=steps)
        .into_par_iter()
        .map(|i| {
            let t = i as f64 / steps as f64;
            let s = (i - 1) as f64 / steps as f64;
            let marginal = process.marginal(x, t)?;
            let mut acc = 0.0;
            for (z, &w) in marginal.iter().enumerate() {
                if w > 0.0 {
                    acc += w * discrete_kl_term(process, x, z, s, t, &denoiser(z, t))?;
                }
            }
            Ok(acc)
        })
        .collect();
    Ok(terms?.iter().sum())
}

/// Monte Carlo version: `t` uniform on the grid, `z_t ~ q(.|x)`, value `T * KL`.
pub fn discrete_nelbo_mc<F>(
    process: &HierarchicalProcess,
    x: usize,
    denoiser: &F,
    steps: usize,
    samples: usize,
    seed: u64,
) -> Result<Estimate, NelboError>
where
    F: Fn(usize, f64) -> Vec<f64> + Sync,
{
    discrete_nelbo_mc_with(process, |_| x, denoiser, steps, samples, seed)
}

/// Monte Carlo estimate where each sample draws its own clean token.
pub fn discrete_nelbo_mc_with<F, X>(
    process: &HierarchicalProcess,
    draw_x: X,
    denoiser: &F,
    steps: usize,
    samples: usize,
    seed: u64,
) -> Result<Estimate, NelboError>
where
    F: Fn(usize, f64) -> Vec<f64> + Sync,
    X: Fn(&mut rand_chacha::ChaCha8Rng) -> usize + Sync,
{
    use rand::Rng;
    if steps < 2 || samples == 0 {
        return Err(NelboError::Config(format!("steps={steps}, samples={samples}")));
    }
    let values: Result<Vec<f64>, NelboError> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let x = draw_x(&mut rng);
            let k = rng.gen_range(1..=steps);
            let t = k as f64 / steps as f64;
            let s = (k - 1) as f64 / steps as f64;
            let z = sample_categorical(&process.marginal(x, t)?, &mut rng);
            Ok(steps as f64 * discrete_kl_term(process, x, z, s, t, &denoiser(z, t))?)
        })
        .collect();
    Ok(Estimate::from_values(&values?))
}

/// Coefficients of the continuous-time bound at `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrandCoefficients {
    /// Multiplies the group-state cross-entropy term.
    pub group: f64,
    /// Multiplies `-log x_theta(x)` under the mask.
    pub mask_clean: f64,
    /// Multiplies `KL(Phi_x || Phi^T x_theta)` under the mask.
    pub mask_group: f64,
}

/// `(alpha beta' - alpha' beta) / (beta (beta - alpha))`,
/// `-alpha beta' / (beta (1 - beta))` and `-beta' (beta - alpha) / (beta (1 - beta))`.
pub fn integrand_coefficients(schedule: &Schedule, t: f64) -> Result<IntegrandCoefficients, NelboError> {
    let vals = schedule.eval(t).map_err(ForwardError::from)?;
    let (a, da) = vals[0];
    let (b, db) = *vals.last().unwrap();
    let group = if b - a > 0.0 {
        (a * db - da * b) / (b * (b - a))
    } else {
        f64::NAN
    };
    let mask_clean = -a * db / (b * (1.0 - b));
    let mask_group = -db * (b - a) / (b * (1.0 - b));
    Ok(IntegrandCoefficients {
        group,
        mask_clean,
        mask_group,
    })
}

/// Per-`(z_t, t)` integrand of the continuous-time bound, without constants.
pub fn continuous_integrand(
    process: &HierarchicalProcess,
    x: usize,
    z_t: usize,
    t: f64,
    x_theta: &[f64],
) -> Result<f64, NelboError> {
    let hierarchy = process.hierarchy();
    let spec = hierarchy.spec();
    if spec.mid_levels() > 1 {
        return Err(NelboError::Unsupported(spec.mid_levels()));
    }
    if !(t > 0.0 && t < 1.0) {
        return Err(NelboError::Config(format!("t must lie in (0, 1), got {t}")));
    }
    let k = spec.clean_size();
    if x_theta.len() != k {
        return Err(NelboError::Shape(format!(
            "x_theta has {} entries, expected {k}",
            x_theta.len()
        )));
    }
    if !spec.is_clean(x) {
        return Err(PosteriorError::NotClean(x).into());
    }
    match spec.tier_of(z_t) {
        Tier::Clean => Ok(0.0),
        Tier::Mid(_) => {
            let c = integrand_coefficients(process.schedule(), t)?;
            if !c.group.is_finite() {
                return Err(NelboError::Singular { t });
            }
            let g = z_t - spec.tier_offset(1);
            let phi = hierarchy.kernels()[0].matrix();
            let mass: f64 = (0..k).map(|y| x_theta[y] * phi[(y, g)]).sum();
            let own = x_theta[x] * phi[(x, g)];
            if !(own > 0.0) {
                return Err(NelboError::ZeroProbability { what: "atom", index: x });
            }
            Ok(c.group * (mass / own).ln())
        }
        Tier::Mask => {
            let c = integrand_coefficients(process.schedule(), t)?;
            if !(x_theta[x] > 0.0) {
                return Err(NelboError::ZeroProbability { what: "atom", index: x });
            }
            let mut value = -c.mask_clean * x_theta[x].ln();
            if spec.mid_levels() == 1 && c.mask_group != 0.0 {
                let phi = hierarchy.kernels()[0].matrix();
                let groups = phi.ncols();
                let target: Vec<f64> = (0..groups).map(|g| phi[(x, g)]).collect();
                let pushed: Vec<f64> = (0..groups)
                    .map(|g| (0..k).map(|y| x_theta[y] * phi[(y, g)]).sum())
                    .collect();
                let kl = kl_divergence(&target, &pushed).map_err(|g| NelboError::InfiniteKl {
                    state: spec.tier_offset(1) + g,
                })?;
                value += c.mask_group * kl;
            }
            Ok(value)
        }
    }
}

/// Midpoint-rule integral over `t` of the exact expectation over `z_t`.
pub fn continuous_nelbo<F>(
    process: &HierarchicalProcess,
    x: usize,
    denoiser: &F,
    points: usize,
) -> Result<f64, NelboError>
where
    F: Fn(usize, f64) -> Vec<f64> + Sync,
{
    if points == 0 {
        return Err(NelboError::Config("quadrature needs at least one point".into()));
    }
    let h = 1.0 / points as f64;
    let terms: Result<Vec<f64>, NelboError> = (0..points)
        .into_par_iter()
        .map(|i| {
            let t = (i as f64 + 0.5) * h;
            let marginal = process.marginal(x, t)?;
            let mut acc = 0.0;
            for (z, &w) in marginal.iter().enumerate() {
                if w > 0.0 && !process.hierarchy().spec().is_clean(z) {
                    acc += w * continuous_integrand(process, x, z, t, &denoiser(z, t))?;
                }
            }
            Ok(acc * h)
        })
        .collect();
    Ok(terms?.iter().sum())
}

/// `sum_i -log p(X_0i) + lambda sum_{i<j} -log p(E_0ij)`.
pub fn ce_training_loss(
    g0: &GraphState,
    g_t: &GraphState,
    prediction: &DenoiserOutput,
    lambda: f64,
) -> Result<f64, NelboError> {
    let n = g0.n;
    if g_t.n != n || prediction.node_probs.len() != n || prediction.edge_probs.len() != pair_count(n) {
        return Err(NelboError::Shape(format!(
            "graph of {n} nodes, noisy graph of {}, prediction with {} nodes and {} pairs",
            g_t.n,
            prediction.node_probs.len(),
            prediction.edge_probs.len()
        )));
    }
    let mut nodes = 0.0;
    for (i, (&x, probs)) in g0.nodes.iter().zip(&prediction.node_probs).enumerate() {
        let p = probs.get(x).copied().unwrap_or(0.0);
        if !(p > 0.0) {
            return Err(NelboError::ZeroProbability { what: "atom", index: i });
        }
        nodes -= p.ln();
    }
    let mut edges = 0.0;
    if lambda != 0.0 {
        for (k, (&e, probs)) in g0.edges.iter().zip(&prediction.edge_probs).enumerate() {
            let p = probs.get(e).copied().unwrap_or(0.0);
            if !(p > 0.0) {
                return Err(NelboError::ZeroProbability { what: "bond", index: k });
            }
            edges -= p.ln();
        }
    }
    Ok(nodes + lambda * edges)
}

/// Single-token problem with a known data distribution over clean tokens.
#[derive(Debug, Clone)]
pub struct ToyProblem {
    pub process: HierarchicalProcess,
    pub prior: Vec<f64>,
}

impl ToyProblem {
    /// Three tokens, two groups `{0, 1}` and `{2}`, prior `(0.5, 0.3, 0.2)`,
    /// linear and quadratic schedules.
    pub fn toy3() -> Self {
        let phi = ProjectionKernel::from_assignment(&[0, 0, 1], 2).expect("valid assignment");
        let hierarchy = Hierarchy::two_level(3, phi).expect("valid hierarchy");
        let process = HierarchicalProcess::new(hierarchy, Schedule::linear_quadratic()).expect("valid schedule");
        Self {
            process,
            prior: vec![0.5, 0.3, 0.2],
        }
    }

    pub fn new(process: HierarchicalProcess, prior: Vec<f64>) -> Result<Self, NelboError> {
        if prior.len() != process.clean_size() {
            return Err(NelboError::Shape(format!(
                "prior has {} entries for {} clean tokens",
                prior.len(),
                process.clean_size()
            )));
        }
        Ok(Self { process, prior })
    }

    /// `p(x | z_t) ∝ prior(x) q(z_t | x)`.
    pub fn exact_denoiser(&self, z_t: usize, t: f64) -> Vec<f64> {
        let mut p: Vec<f64> = self
            .prior
            .iter()
            .enumerate()
            .map(|(x, &w)| {
                if w > 0.0 {
                    w * self.process.marginal(x, t).map_or(0.0, |m| m[z_t])
                } else {
                    0.0
                }
            })
            .collect();
        if normalize(&mut p).is_none() {
            p = self.prior.clone();
        }
        p
    }

    pub fn discrete_nelbo(&self, steps: usize) -> Result<f64, NelboError> {
        let den = |z: usize, t: f64| self.exact_denoiser(z, t);
        let mut total = 0.0;
        for (x, &w) in self.prior.iter().enumerate() {
            if w > 0.0 {
                total += w * discrete_nelbo_exact(&self.process, x, &den, steps)?;
            }
        }
        Ok(total)
    }

    pub fn discrete_nelbo_mc(&self, steps: usize, samples: usize, seed: u64) -> Result<Estimate, NelboError> {
        let den = |z: usize, t: f64| self.exact_denoiser(z, t);
        let prior = &self.prior;
        discrete_nelbo_mc_with(
            &self.process,
            |rng| sample_categorical(prior, rng),
            &den,
            steps,
            samples,
            seed,
        )
    }

    pub fn continuous_nelbo(&self, points: usize) -> Result<f64, NelboError> {
        let den = |z: usize, t: f64| self.exact_denoiser(z, t);
        let mut total = 0.0;
        for (x, &w) in self.prior.iter().enumerate() {
            if w > 0.0 {
                total += w * continuous_nelbo(&self.process, x, &den, points)?;
            }
        }
        Ok(total)
    }
}
