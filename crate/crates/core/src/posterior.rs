//! Reverse-time posteriors `q(z_s | z_t, x)` and their denoiser-parameterized
//! counterparts.

use thiserror::Error;

use crate::forward::{ForwardError, HierarchicalProcess, UniformProcess};
use crate::hierarchy::Tier;
use crate::prob::normalize;

/// Largest state space the dense Bayes oracle accepts.
pub const ORACLE_MAX_DIM: usize = 64;

const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PosteriorError {
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error("posterior needs s < t, got s={s}, t={t}")]
    Interval { s: f64, t: f64 },
    #[error("state {z_t} at t={t} is unreachable from clean token {x}")]
    ZeroSupport { z_t: usize, x: usize, t: f64 },
    #[error("inconsistent denoiser: no mass on the group of state {z_t}")]
    InconsistentDenoiser { z_t: usize },
    #[error("token {0} is not clean")]
    NotClean(usize),
    #[error("state {state} out of range for dimension {dim}")]
    StateOutOfRange { state: usize, dim: usize },
    #[error("probability vector of length {found}, expected {expected}")]
    Shape { expected: usize, found: usize },
    #[error("probability vector sums to {0}")]
    NotSimplex(f64),
    #[error("oracle limited to {ORACLE_MAX_DIM} states, got {0}")]
    TooLarge(usize),
}

fn check_interval(s: f64, t: f64) -> Result<(), PosteriorError> {
    if !(s < t) || s < 0.0 || t > 1.0 {
        return Err(PosteriorError::Interval { s, t });
    }
    Ok(())
}

fn check_simplex(p: &[f64], expected: usize) -> Result<(), PosteriorError> {
    if p.len() != expected {
        return Err(PosteriorError::Shape {
            expected,
            found: p.len(),
        });
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL || p.iter().any(|v| !(*v >= 0.0)) {
        return Err(PosteriorError::NotSimplex(sum));
    }
    Ok(())
}

/// Schedule quantities shared by every posterior over one interval.
#[derive(Debug, Clone, Copy, PartialEq)]
struct TwoLevel {
    alpha_s: f64,
    beta_s: f64,
    alpha_t: f64,
    beta_t: f64,
    beta_ts: f64,
}

impl TwoLevel {
    fn new(process: &HierarchicalProcess, s: f64, t: f64) -> Result<Self, PosteriorError> {
        let sched = process.schedule();
        let top = sched.level_count() - 1;
        let alpha_s = sched.value(0, s).map_err(ForwardError::from)?;
        let alpha_t = sched.value(0, t).map_err(ForwardError::from)?;
        let (beta_s, beta_t) = if top == 0 {
            (alpha_s, alpha_t)
        } else {
            (
                sched.value(1, s).map_err(ForwardError::from)?,
                sched.value(1, t).map_err(ForwardError::from)?,
            )
        };
        let beta_ts = sched.conditional_ratio(top, s, t).map_err(ForwardError::from)?;
        Ok(Self {
            alpha_s,
            beta_s,
            alpha_t,
            beta_t,
            beta_ts,
        })
    }

    /// Weights on `(x, z_t)` when `z_t` is a group state.
    fn group_case(&self) -> (f64, f64) {
        let denom = self.beta_t - self.alpha_t;
        let wx = (self.alpha_s * self.beta_ts - self.alpha_t).max(0.0) / denom;
        let wg = (self.beta_t - self.beta_ts * self.alpha_s).max(0.0) / denom;
        (wx, wg)
    }

    /// Weights on `(x, Phi x, m)` when `z_t` is the mask.
    fn mask_case(&self) -> (f64, f64, f64) {
        let denom = 1.0 - self.beta_t;
        (
            self.alpha_s * (1.0 - self.beta_ts) / denom,
            (1.0 - self.beta_ts) * (self.beta_s - self.alpha_s).max(0.0) / denom,
            (1.0 - self.beta_s) / denom,
        )
    }
}

fn check_state(process: &HierarchicalProcess, z: usize) -> Result<(), PosteriorError> {
    let dim = process.dim();
    if z >= dim {
        return Err(PosteriorError::StateOutOfRange { state: z, dim });
    }
    Ok(())
}

/// Exact `q(z_s | z_t, x)`.
///
/// Two-level and purely absorbing hierarchies use closed forms; deeper
/// hierarchies fall back to enumeration over forward rows.
pub fn true_posterior(
    process: &HierarchicalProcess,
    z_t: usize,
    x: usize,
    s: f64,
    t: f64,
) -> Result<Vec<f64>, PosteriorError> {
    check_interval(s, t)?;
    check_state(process, z_t)?;
    let spec = process.hierarchy().spec();
    if !spec.is_clean(x) {
        return Err(PosteriorError::NotClean(x));
    }
    if spec.mid_levels() > 1 {
        return enumerate_posterior(process, z_t, x, s, t);
    }
    let c = TwoLevel::new(process, s, t)?;
    let d = spec.dim();
    let zero_support = PosteriorError::ZeroSupport { z_t, x, t };
    let mut out = vec![0.0; d];
    match spec.tier_of(z_t) {
        Tier::Clean => {
            if z_t != x || c.alpha_t <= 0.0 {
                return Err(zero_support);
            }
            out[x] = 1.0;
        }
        Tier::Mid(_) => {
            let g = z_t - spec.tier_offset(1);
            let phi = process.hierarchy().group_weights(x);
            if phi[g] <= 0.0 || c.beta_t - c.alpha_t <= 0.0 {
                return Err(zero_support);
            }
            let (wx, wg) = c.group_case();
            out[x] = wx;
            out[z_t] = wg;
        }
        Tier::Mask => {
            if 1.0 - c.beta_t <= 0.0 {
                return Err(zero_support);
            }
            let (wx, wg, wm) = c.mask_case();
            out[x] = wx;
            if spec.mid_levels() == 1 {
                let offset = spec.tier_offset(1);
                for (g, p) in process.hierarchy().group_weights(x).into_iter().enumerate() {
                    out[offset + g] += wg * p;
                }
            } else {
                // no group tier: the mid weight collapses onto the clean token
                out[x] += wg;
            }
            out[spec.mask_index()] = wm;
        }
    }
    Ok(out)
}

/// `q(z_s | z_t, x)` by summing over forward rows; valid for any depth.
fn enumerate_posterior(
    process: &HierarchicalProcess,
    z_t: usize,
    x: usize,
    s: f64,
    t: f64,
) -> Result<Vec<f64>, PosteriorError> {
    let prior = process.marginal(x, s)?;
    let mut out = vec![0.0; prior.len()];
    for (z_s, &p) in prior.iter().enumerate() {
        if p > 0.0 {
            out[z_s] = p * process.transition_row(z_s, s, t)?[z_t];
        }
    }
    normalize(&mut out).ok_or(PosteriorError::ZeroSupport { z_t, x, t })?;
    Ok(out)
}

/// `p_theta(z_s | z_t)` for a denoiser prediction `x_theta` over clean tokens.
///
/// The prediction acts as a prior over `x`: in the group case it is reweighted
/// by `Phi_{x g}` and renormalized within the group of `z_t`.
pub fn model_posterior(
    process: &HierarchicalProcess,
    z_t: usize,
    x_theta: &[f64],
    s: f64,
    t: f64,
) -> Result<Vec<f64>, PosteriorError> {
    check_interval(s, t)?;
    check_state(process, z_t)?;
    let spec = process.hierarchy().spec();
    let k = spec.clean_size();
    check_simplex(x_theta, k)?;
    let d = spec.dim();
    if spec.mid_levels() > 1 {
        return mixture_posterior(process, z_t, x_theta, s, t);
    }
    let c = TwoLevel::new(process, s, t)?;
    let mut out = vec![0.0; d];
    match spec.tier_of(z_t) {
        Tier::Clean => out[z_t] = 1.0,
        Tier::Mid(_) => {
            let g = z_t - spec.tier_offset(1);
            let phi = process.hierarchy().kernels()[0].matrix();
            let weights: Vec<f64> = (0..k).map(|x| x_theta[x] * phi[(x, g)]).collect();
            let mass: f64 = weights.iter().sum();
            if !(mass > 0.0) {
                return Err(PosteriorError::InconsistentDenoiser { z_t });
            }
            if c.beta_t - c.alpha_t <= 0.0 {
                return Err(PosteriorError::ZeroSupport { z_t, x: 0, t });
            }
            let (wx, wg) = c.group_case();
            for (o, w) in out.iter_mut().zip(&weights) {
                *o = wx * w / mass;
            }
            out[z_t] = wg;
        }
        Tier::Mask => {
            if 1.0 - c.beta_t <= 0.0 {
                return Err(PosteriorError::ZeroSupport { z_t, x: 0, t });
            }
            let (wx, wg, wm) = c.mask_case();
            for (o, &p) in out.iter_mut().zip(x_theta) {
                *o = wx * p;
            }
            if spec.mid_levels() == 1 {
                let offset = spec.tier_offset(1);
                let phi = process.hierarchy().kernels()[0].matrix();
                for g in 0..phi.ncols() {
                    let pushed: f64 = (0..k).map(|x| x_theta[x] * phi[(x, g)]).sum();
                    out[offset + g] = wg * pushed;
                }
            } else {
                for (o, &p) in out.iter_mut().zip(x_theta) {
                    *o += wg * p;
                }
            }
            out[spec.mask_index()] = wm;
        }
    }
    Ok(out)
}

/// `sum_x w(x) q(z_s | z_t, x)` with `w(x) ∝ x_theta(x) q(z_t | x)`.
fn mixture_posterior(
    process: &HierarchicalProcess,
    z_t: usize,
    x_theta: &[f64],
    s: f64,
    t: f64,
) -> Result<Vec<f64>, PosteriorError> {
    let d = process.dim();
    let mut weights = Vec::with_capacity(x_theta.len());
    for (x, &p) in x_theta.iter().enumerate() {
        weights.push(if p > 0.0 { p * process.marginal(x, t)?[z_t] } else { 0.0 });
    }
    normalize(&mut weights).ok_or(PosteriorError::InconsistentDenoiser { z_t })?;
    let mut out = vec![0.0; d];
    for (x, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            let post = enumerate_posterior(process, z_t, x, s, t)?;
            out.iter_mut().zip(&post).for_each(|(o, p)| *o += w * p);
        }
    }
    Ok(out)
}

/// Dense Bayes reference: `q(z_s | z_t, x) ∝ Q_{t|s}[z_s, z_t] Q_s[x, z_s]`.
pub fn bayes_posterior_oracle(
    process: &HierarchicalProcess,
    z_t: usize,
    x: usize,
    s: f64,
    t: f64,
) -> Result<Vec<f64>, PosteriorError> {
    let d = process.dim();
    if d > ORACLE_MAX_DIM {
        return Err(PosteriorError::TooLarge(d));
    }
    check_interval(s, t)?;
    check_state(process, z_t)?;
    if !process.hierarchy().spec().is_clean(x) {
        return Err(PosteriorError::NotClean(x));
    }
    let qs = process.cumulative_kernel(s)?;
    let qts = process.kernel_between(s, t)?;
    let mut out: Vec<f64> = (0..d).map(|z| qts.get(z, z_t) * qs.get(x, z)).collect();
    normalize(&mut out).ok_or(PosteriorError::ZeroSupport { z_t, x, t })?;
    Ok(out)
}

/// Reverse step for one bond: `sum_e p_hat(e) q(e_s | e_t, e)`.
pub fn edge_posterior(
    process: &UniformProcess,
    e_t: usize,
    edge_probs: &[f64],
    s: f64,
    t: f64,
) -> Result<Vec<f64>, PosteriorError> {
    check_interval(s, t)?;
    let d = process.categories();
    check_simplex(edge_probs, d)?;
    if e_t >= d {
        return Err(PosteriorError::StateOutOfRange { state: e_t, dim: d });
    }
    let a_ts = process.keep_ratio(s, t)?;
    let a_s = process.keep_ratio(0.0, s)?;
    let df = d as f64;
    let mut out = vec![0.0; d];
    for (e0, &w) in edge_probs.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        // q(e_s | e_0) q(e_t | e_s), both uniform-plus-identity
        let mut row: Vec<f64> = (0..d)
            .map(|e| {
                let prior = (1.0 - a_s) / df + if e == e0 { a_s } else { 0.0 };
                let step = (1.0 - a_ts) / df + if e == e_t { a_ts } else { 0.0 };
                prior * step
            })
            .collect();
        normalize(&mut row).ok_or(PosteriorError::ZeroSupport { z_t: e_t, x: e0, t })?;
        out.iter_mut().zip(&row).for_each(|(o, r)| *o += w * r);
    }
    Ok(out)
}
