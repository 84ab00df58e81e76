//! The `kernels check` suite: Chapman-Kolmogorov consistency, posterior
//! agreement with the dense Bayes oracle, and discrete/continuous NELBO
//! agreement on the three-token toy problem.

use std::path::PathBuf;

use clap::Args;
use rand::Rng;
use serde::{Deserialize, Serialize};

use hddm::hierarchy::HierarchyError;
use hddm::nelbo::ToyProblem;
use hddm::posterior::{bayes_posterior_oracle, model_posterior, true_posterior};
use hddm::prob::{normalize, one_hot, stream_rng};
use hddm::schedule::validate;
use hddm::{HierarchicalProcess, Hierarchy, HierarchySpec, ProjectionKernel, Schedule};

use crate::config::{Classify, ConfigFile, Failure, Outcome};
use crate::model::schedule_fn;

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CheckArgs {
    /// Noise levels before the mask: 1 (absorbing), 2 (one group level) or 3
    #[arg(long)]
    pub levels: Option<usize>,
    /// Level-1 schedule
    #[arg(long)]
    pub alpha: Option<String>,
    /// Level-2 schedule
    #[arg(long)]
    pub beta: Option<String>,
    /// Level-3 schedule
    #[arg(long)]
    pub gamma: Option<String>,
    /// Random hierarchies to draw
    #[arg(long)]
    pub specs: Option<usize>,
    /// Random (r, s, t) triples per hierarchy
    #[arg(long)]
    pub triples: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Discrete steps for the NELBO comparison
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub steps: Option<usize>,
    /// Quadrature points for the continuous NELBO
    #[arg(long)]
    pub points: Option<usize>,
    /// Allowed relative NELBO gap
    #[arg(long)]
    pub nelbo_tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct CheckReport {
    pub levels: usize,
    pub schedules: Vec<String>,
    pub specs: usize,
    pub triples: usize,
    pub tol: f64,
    pub ck_max_deviation: f64,
    pub posterior_cases: usize,
    pub posterior_max_deviation: f64,
    pub model_posterior_max_deviation: f64,
    pub nelbo_discrete: f64,
    pub nelbo_continuous: f64,
    pub nelbo_relative_error: f64,
    pub nelbo_tol: f64,
    pub pass: bool,
}

impl CheckArgs {
    pub fn schedule(&self, levels: usize) -> Outcome<Schedule> {
        let names = [
            ("alpha", self.alpha.as_deref().unwrap_or("linear")),
            ("beta", self.beta.as_deref().unwrap_or("quadratic")),
            ("gamma", self.gamma.as_deref().unwrap_or("poly:1,0,0,-1")),
        ];
        let fns = names[..levels]
            .iter()
            .map(|(flag, v)| schedule_fn(v, flag))
            .collect::<Outcome<Vec<_>>>()?;
        let schedule = Schedule::new(fns).config("schedule")?;
        validate(&schedule).invalid("schedule")?;
        Ok(schedule)
    }
}

fn random_kernel(
    rng: &mut impl Rng,
    rows: usize,
    cols: usize,
    stochastic: bool,
) -> Result<ProjectionKernel, HierarchyError> {
    if stochastic {
        let rows: Vec<Vec<f64>> = (0..rows)
            .map(|_| {
                let mut r: Vec<f64> = (0..cols).map(|_| rng.gen::<f64>() + 0.05).collect();
                normalize(&mut r).expect("positive row");
                r
            })
            .collect();
        ProjectionKernel::from_rows(&rows)
    } else {
        let mut a: Vec<usize> = (0..rows).map(|i| i % cols).collect();
        for i in (1..rows).rev() {
            a.swap(i, rng.gen_range(0..=i));
        }
        ProjectionKernel::from_assignment(&a, cols)
    }
}

/// A random hierarchy with `mid_levels` group tiers, each at most 3 wide and
/// no wider than the tier below. Stochastic maps are used on odd draws.
pub fn random_hierarchy(rng: &mut impl Rng, mid_levels: usize, draw: usize) -> Result<Hierarchy, HierarchyError> {
    let k = rng.gen_range(2..=8);
    let mut sizes = Vec::with_capacity(mid_levels);
    let mut below = k;
    for _ in 0..mid_levels {
        let g = rng.gen_range(1..=below.min(3));
        sizes.push(g);
        below = g;
    }
    let spec = HierarchySpec::new(k, sizes.clone())?;
    let mut tiers = vec![k];
    tiers.extend(&sizes);
    let stochastic = draw % 2 == 1;
    let local = tiers
        .windows(2)
        .map(|w| random_kernel(rng, w[0], w[1], stochastic))
        .collect::<Result<Vec<_>, _>>()?;
    Hierarchy::chained(spec, local)
}

fn sorted3(rng: &mut impl Rng) -> [f64; 3] {
    let mut v = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
    v.sort_by(f64::total_cmp);
    v
}

pub fn run(args: CheckArgs, config: &ConfigFile) -> Outcome<CheckReport> {
    let args = config.fill(args)?;
    let levels = args.levels.unwrap_or(2);
    if !(1..=3).contains(&levels) {
        return Err(Failure::Config(format!("--levels must be 1, 2 or 3, got {levels}")));
    }
    let schedule = args.schedule(levels)?;
    let specs = args.specs.unwrap_or(20);
    let triples = args.triples.unwrap_or(100);
    let tol = args.tol.unwrap_or(1e-12);
    let steps = args.steps.unwrap_or(2000);
    let points = args.points.unwrap_or(2000);
    let nelbo_tol = args.nelbo_tol.unwrap_or(0.02);
    let seed = crate::config::resolve_seed(args.seed)?;

    let mut ck = 0.0f64;
    let mut post = 0.0f64;
    let mut model = 0.0f64;
    let mut cases = 0;
    for d in 0..specs {
        let mut rng = stream_rng(seed, d as u64);
        let hierarchy = random_hierarchy(&mut rng, levels - 1, d).invalid("hierarchy")?;
        let p = HierarchicalProcess::new(hierarchy, schedule.clone()).invalid("process")?;
        for _ in 0..triples {
            let [r, s, t] = sorted3(&mut rng);
            let lhs = p
                .kernel_between(r, s)
                .invalid("kernel")?
                .then(&p.kernel_between(s, t).invalid("kernel")?);
            ck = ck.max(p.kernel_between(r, t).invalid("kernel")?.max_abs_diff(&lhs));
        }
        let k = p.clean_size();
        for _ in 0..4 {
            let [_, s, t] = sorted3(&mut rng);
            if t - s < 1e-9 {
                continue;
            }
            for x in 0..k {
                let reach = p.marginal(x, t).invalid("marginal")?;
                for (z, &w) in reach.iter().enumerate() {
                    if w <= 0.0 {
                        continue;
                    }
                    let exact = true_posterior(&p, z, x, s, t).invalid("posterior")?;
                    let oracle = bayes_posterior_oracle(&p, z, x, s, t).invalid("oracle")?;
                    let via_model = model_posterior(&p, z, &one_hot(k, x), s, t).invalid("model posterior")?;
                    for i in 0..exact.len() {
                        post = post.max((exact[i] - oracle[i]).abs());
                        model = model.max((exact[i] - via_model[i]).abs());
                    }
                    cases += 1;
                }
            }
        }
    }

    let toy = ToyProblem::toy3();
    let discrete = toy.discrete_nelbo(steps).invalid("discrete nelbo")?;
    let continuous = toy.continuous_nelbo(points).invalid("continuous nelbo")?;
    let rel = (continuous - discrete).abs() / discrete.abs();
    let pass = ck <= tol && post <= tol && model <= tol && rel <= nelbo_tol;
    Ok(CheckReport {
        levels,
        schedules: schedule.levels().iter().map(ToString::to_string).collect(),
        specs,
        triples,
        tol,
        ck_max_deviation: ck,
        posterior_cases: cases,
        posterior_max_deviation: post,
        model_posterior_max_deviation: model,
        nelbo_discrete: discrete,
        nelbo_continuous: continuous,
        nelbo_relative_error: rel,
        nelbo_tol,
        pass,
    })
}
