//! Hierarchical discrete diffusion over molecular graphs.
//!
//! Atoms follow a multi-level absorbing process (clean token, coarse group,
//! mask); bonds follow a uniform-transition process.

pub mod denoiser;
pub mod forward;
pub mod hierarchy;
pub mod metrics;
pub mod molgraph;
pub mod nelbo;
pub mod posterior;
pub mod prob;
pub mod sampler;
pub mod schedule;
pub mod smiles;

/// Tolerance on row sums of stochastic matrices.
pub const ROW_SUM_TOL: f64 = 1e-12;

pub use forward::{GraphDiffusion, GraphState, HierarchicalProcess, UniformProcess};
pub use hierarchy::{Hierarchy, HierarchyConfig, HierarchySpec, ProjectionKernel, Tier, TransitionMatrix};
pub use schedule::{Schedule, ScheduleFn};
