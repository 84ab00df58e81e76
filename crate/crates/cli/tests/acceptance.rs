//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rand::Rng;

use hddm::denoiser::ExactBayesDenoiser;
use hddm::forward::pairs;
use hddm::metrics::{evaluate, morgan_fingerprint, MORGAN_BITS, MORGAN_RADIUS};
use hddm::molgraph::{dae_decode, dae_encode, sanitize, Vocabulary};
use hddm::nelbo::{discrete_nelbo_exact, discrete_nelbo_mc, ToyProblem};
use hddm::posterior::{bayes_posterior_oracle, model_posterior, true_posterior};
use hddm::prob::{normalize, one_hot, stream_rng};
use hddm::sampler::{
    empirical_distribution, keyed_total_variation, scaffold_constrained_sample, Sampler, SamplerConfig, SamplerMode,
    ScaffoldConstraint, SizeDistribution,
};
use hddm::smiles::{brute_force_isomorphic, canonical_form, parse, read_smi};
use hddm::{
    GraphDiffusion, GraphState, HierarchicalProcess, Hierarchy, HierarchySpec, ProjectionKernel, Schedule, ScheduleFn,
    UniformProcess,
};

type Check = Result<String, String>;

const MOSES: &str = include_str!("../../core/data/corpora/moses_200.smi");
const GUACAMOL: &str = include_str!("../../core/data/corpora/guacamol_200.smi");

fn corpus(text: &str) -> Vec<String> {
    read_smi(text).into_iter().map(|r| r.smiles).collect()
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_budget(elapsed: Duration, budget: Duration, detail: String) -> Check {
    if elapsed <= budget {
        Ok(detail)
    } else {
        Err(format!("{detail}; took {elapsed:.1?}, budget {budget:?}"))
    }
}

fn random_kernel(rng: &mut impl Rng, rows: usize, cols: usize, stochastic: bool) -> ProjectionKernel {
    if stochastic {
        let rows: Vec<Vec<f64>> = (0..rows)
            .map(|_| {
                let mut r: Vec<f64> = (0..cols).map(|_| rng.gen::<f64>() + 0.05).collect();
                normalize(&mut r).unwrap();
                r
            })
            .collect();
        ProjectionKernel::from_rows(&rows).unwrap()
    } else {
        let mut a: Vec<usize> = (0..rows).map(|i| i % cols).collect();
        for i in (1..rows).rev() {
            a.swap(i, rng.gen_range(0..=i));
        }
        ProjectionKernel::from_assignment(&a, cols).unwrap()
    }
}

fn level_schedules(levels: usize) -> Schedule {
    let all = [
        ScheduleFn::Linear,
        ScheduleFn::Quadratic,
        ScheduleFn::Polynomial(vec![1.0, 0.0, 0.0, -1.0]),
    ];
    Schedule::new(all[..levels].to_vec()).unwrap()
}

fn chapman_kolmogorov() -> Check {
    let start = Instant::now();
    let specs = 24;
    let per_spec = 10;
    let mut worst = 0.0f64;
    let mut triples = 0;
    let mut stochastic_specs = 0;
    let mut by_levels = [0usize; 3];
    for d in 0..specs {
        let mut rng = stream_rng(0xC4, d);
        let mids = (d % 3) as usize;
        let stochastic = (d / 3) % 2 == 1;
        let k = rng.gen_range(2..=8);
        let mut tiers = vec![k];
        for _ in 0..mids {
            let below = *tiers.last().unwrap();
            tiers.push(rng.gen_range(1..=below.min(3)));
        }
        let spec = HierarchySpec::new(k, tiers[1..].to_vec()).unwrap();
        let local = tiers
            .windows(2)
            .map(|w| random_kernel(&mut rng, w[0], w[1], stochastic))
            .collect();
        let h = Hierarchy::chained(spec, local).unwrap();
        let p = HierarchicalProcess::new(h, level_schedules(mids + 1)).unwrap();
        stochastic_specs += usize::from(stochastic && mids > 0);
        by_levels[mids] += 1;
        for _ in 0..per_spec {
            let mut v = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
            v.sort_by(f64::total_cmp);
            let [r, s, t] = v;
            let lhs = p.kernel_between(r, s).unwrap().then(&p.kernel_between(s, t).unwrap());
            worst = worst.max(p.kernel_between(r, t).unwrap().max_abs_diff(&lhs));
            let lhs0 = p.cumulative_kernel(s).unwrap().then(&p.kernel_between(s, t).unwrap());
            worst = worst.max(p.cumulative_kernel(t).unwrap().max_abs_diff(&lhs0));
            triples += 1;
        }
    }
    let detail = format!(
        "{specs} specs (levels 1/2/3: {by_levels:?}, {stochastic_specs} stochastic), {triples} triples, max dev {worst:.3e}"
    );
    let ok = worst <= 1e-12 && triples >= 100 && specs >= 20;
    within_budget(start.elapsed(), Duration::from_secs(10), ensure(ok, detail)?)
}

fn posterior_exactness() -> Check {
    let start = Instant::now();
    let grid: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let mut rng = stream_rng(0xC2, 0);
    let mut worst_oracle = 0.0f64;
    let mut worst_model = 0.0f64;
    let mut cases = 0usize;
    for k in 2..=6 {
        for g in 1..=k.min(3) {
            for stochastic in [false, true] {
                let phi = random_kernel(&mut rng, k, g, stochastic);
                for sched in [Schedule::linear_quadratic(), level_schedules(2)] {
                    let h = Hierarchy::two_level(k, phi.clone()).unwrap();
                    let p = HierarchicalProcess::new(h, sched).unwrap();
                    for &s in &grid {
                        for &t in grid.iter().filter(|&&t| t > s) {
                            for x in 0..k {
                                let reach = p.marginal(x, t).unwrap();
                                for z in (0..p.dim()).filter(|&z| reach[z] > 0.0) {
                                    let exact = true_posterior(&p, z, x, s, t).unwrap();
                                    let oracle = bayes_posterior_oracle(&p, z, x, s, t).unwrap();
                                    let model = model_posterior(&p, z, &one_hot(k, x), s, t).unwrap();
                                    for i in 0..exact.len() {
                                        worst_oracle = worst_oracle.max((exact[i] - oracle[i]).abs());
                                        worst_model = worst_model.max((exact[i] - model[i]).abs());
                                    }
                                    cases += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let detail = format!("{cases} cases, oracle dev {worst_oracle:.3e}, delta-denoiser dev {worst_model:.3e}");
    let ok = worst_oracle <= 1e-12 && worst_model <= 1e-12;
    within_budget(start.elapsed(), Duration::from_secs(30), ensure(ok, detail)?)
}

/// Plain absorbing diffusion over `k` tokens plus a mask, written from scratch.
struct Absorbing<'a> {
    alpha: &'a ScheduleFn,
}

impl Absorbing<'_> {
    /// `q(z_s | z_t, x)` as `(clean row, mask probability)`.
    fn posterior(&self, k: usize, z_t_masked: bool, x: usize, s: f64, t: f64) -> (Vec<f64>, f64) {
        let (a_s, a_t) = (self.alpha.value(s), self.alpha.value(t));
        let mut row = vec![0.0; k];
        if !z_t_masked {
            row[x] = 1.0;
            return (row, 0.0);
        }
        row[x] = (a_s - a_t) / (1.0 - a_t);
        (row, (1.0 - a_s) / (1.0 - a_t))
    }

    fn model_posterior(&self, x_theta: &[f64], s: f64, t: f64) -> (Vec<f64>, f64) {
        let (a_s, a_t) = (self.alpha.value(s), self.alpha.value(t));
        let unmask = (a_s - a_t) / (1.0 - a_t);
        (x_theta.iter().map(|p| p * unmask).collect(), (1.0 - a_s) / (1.0 - a_t))
    }

    /// Only masked `z_t` contribute; each contributes `(a_s - a_t) * -log x_theta(x)`.
    fn nelbo(&self, x: usize, steps: usize, x_theta: impl Fn(f64) -> Vec<f64>) -> f64 {
        (1..=steps)
            .map(|i| {
                let t = i as f64 / steps as f64;
                let s = (i - 1) as f64 / steps as f64;
                (self.alpha.value(s) - self.alpha.value(t)) * -x_theta(t)[x].ln()
            })
            .sum()
    }
}

fn masked_degeneracy() -> Check {
    let k = 4;
    let phi = ProjectionKernel::from_assignment(&[0, 0, 1, 1], 2).unwrap();
    let grid: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let mut post_dev = 0.0f64;
    let mut nelbo_dev = 0.0f64;
    let mut zs = Vec::new();
    let mut rng = stream_rng(0xC3, 0);
    for alpha in [
        ScheduleFn::Linear,
        ScheduleFn::Quadratic,
        ScheduleFn::Polynomial(vec![1.0, -0.5, 0.0, -0.5]),
    ] {
        let h = Hierarchy::two_level(k, phi.clone()).unwrap();
        let p = HierarchicalProcess::new(h, Schedule::two_level(alpha.clone(), alpha.clone())).unwrap();
        let reference = Absorbing { alpha: &alpha };
        let mask = p.mask_index();
        let compare = |got: &[f64], (row, m): (Vec<f64>, f64)| -> f64 {
            let mut dev = (got[mask] - m).abs();
            for (i, v) in got.iter().enumerate().take(mask) {
                let want = if i < k { row[i] } else { 0.0 };
                dev = dev.max((v - want).abs());
            }
            dev
        };
        for &s in &grid {
            for &t in grid.iter().filter(|&&t| t > s) {
                for x in 0..k {
                    for z in [x, mask] {
                        let got = true_posterior(&p, z, x, s, t).map_err(|e| e.to_string())?;
                        post_dev = post_dev.max(compare(&got, reference.posterior(k, z == mask, x, s, t)));
                    }
                    let mut x_theta: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 0.01).collect();
                    normalize(&mut x_theta).unwrap();
                    let got = model_posterior(&p, mask, &x_theta, s, t).map_err(|e| e.to_string())?;
                    post_dev = post_dev.max(compare(&got, reference.model_posterior(&x_theta, s, t)));
                }
            }
        }
        let predict = |t: f64| -> Vec<f64> {
            let mut w: Vec<f64> = (0..k).map(|y| (3.0 * t + y as f64).sin().exp()).collect();
            normalize(&mut w).unwrap();
            w
        };
        let den = |z: usize, t: f64| if z < k { one_hot(k, z) } else { predict(t) };
        let steps = 200;
        for x in 0..k {
            let ours = discrete_nelbo_exact(&p, x, &den, steps).map_err(|e| e.to_string())?;
            let want = reference.nelbo(x, steps, predict);
            nelbo_dev = nelbo_dev.max((ours - want).abs() / want.abs().max(1.0));
            if x % 2 == 0 {
                let est = discrete_nelbo_mc(&p, x, &den, steps, 20_000, 11 + x as u64).map_err(|e| e.to_string())?;
                zs.push((est.mean - want) / est.std_error);
            }
        }
    }
    let worst_z = zs.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    let detail = format!(
        "posterior dev {post_dev:.3e}, exact NELBO dev {nelbo_dev:.3e}, MC z-scores {:?}",
        zs.iter().map(|z| format!("{z:+.2}")).collect::<Vec<_>>()
    );
    ensure(post_dev <= 1e-10 && nelbo_dev <= 1e-10 && worst_z <= 3.0, detail)
}

fn nelbo_consistency() -> Check {
    let start = Instant::now();
    let toy = ToyProblem::toy3();
    let discrete = toy.discrete_nelbo(2000).map_err(|e| e.to_string())?;
    let continuous = toy.continuous_nelbo(4000).map_err(|e| e.to_string())?;
    let rel = (continuous - discrete).abs() / discrete.abs();
    let detail = format!("discrete(T=2000) {discrete:.12}, continuous {continuous:.12}, rel err {rel:.3e}");
    within_budget(start.elapsed(), Duration::from_secs(120), ensure(rel <= 0.02, detail)?)
}

fn toy_diffusion() -> GraphDiffusion {
    let h = Hierarchy::two_level(3, ProjectionKernel::from_assignment(&[0, 0, 1], 2).unwrap()).unwrap();
    GraphDiffusion::new(
        HierarchicalProcess::new(h, Schedule::linear_quadratic()).unwrap(),
        UniformProcess::new(5, ScheduleFn::Linear).unwrap(),
    )
}

fn graph(nodes: Vec<usize>, bonds: &[(usize, usize, usize)]) -> GraphState {
    let mut g = GraphState::empty(nodes, 0.0);
    for &(i, j, b) in bonds {
        g.set_edge(i, j, b);
    }
    g
}

fn sampler_exactness() -> Check {
    let start = Instant::now();
    let gd = toy_diffusion();
    let corpus = vec![
        graph(vec![0, 1], &[(0, 1, 1)]),
        graph(vec![0, 2], &[(0, 1, 2)]),
        graph(vec![0, 2], &[(0, 1, 2)]),
        graph(vec![0, 0, 1], &[(0, 1, 1), (1, 2, 1)]),
    ];
    let target = empirical_distribution(&corpus);
    let den = ExactBayesDenoiser::new(gd.clone(), &corpus).map_err(|e| e.to_string())?;
    let sizes = SizeDistribution::from_sizes(&corpus.iter().map(|g| g.n).collect::<Vec<_>>()).unwrap();
    let mut tvs = Vec::new();
    for (mode, seed) in [(SamplerMode::Pn, 51), (SamplerMode::Ancestral, 52)] {
        let cfg = SamplerConfig {
            steps: 50,
            mode,
            seed,
            ..Default::default()
        };
        let out = Sampler::new(&gd, &den, cfg)
            .unwrap()
            .sample(100_000, &sizes)
            .map_err(|e| e.to_string())?;
        tvs.push((mode, keyed_total_variation(&empirical_distribution(&out), &target)));
    }
    let detail = tvs
        .iter()
        .map(|(m, tv)| format!("{m} TV {tv:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    let ok = tvs.iter().all(|(_, tv)| *tv <= 0.02);
    within_budget(start.elapsed(), Duration::from_secs(300), ensure(ok, detail)?)
}

fn dae_round_trip() -> Check {
    let mut summary = Vec::new();
    let mut failures = Vec::new();
    for (name, text, vocab) in [
        ("moses", MOSES, Vocabulary::moses()),
        ("guacamol", GUACAMOL, Vocabulary::guacamol()),
    ] {
        let smiles = corpus(text);
        let mut seen = vec![false; vocab.len()];
        let mut exact = 0;
        for s in &smiles {
            let Ok(m) = parse(s) else {
                failures.push(format!("{s}: parse"));
                continue;
            };
            let g = match dae_encode(&m, &vocab) {
                Ok(g) => g,
                Err(e) => {
                    failures.push(format!("{s}: {e}"));
                    continue;
                }
            };
            g.tokens.iter().for_each(|&t| seen[t] = true);
            match dae_decode(&g, &vocab) {
                Ok(back) if dae_encode(&back, &vocab).as_ref() == Ok(&g) && brute_force_isomorphic(&back, &m) => {
                    exact += 1
                }
                _ => failures.push(format!("{s}: decode mismatch")),
            }
        }
        let missing: Vec<&str> = (0..vocab.len())
            .filter(|&t| !seen[t])
            .map(|t| vocab.get(t).unwrap().name.as_str())
            .collect();
        if !missing.is_empty() {
            failures.push(format!("{name} tokens never exercised: {missing:?}"));
        }
        if smiles.len() != 200 {
            failures.push(format!("{name} has {} molecules", smiles.len()));
        }
        summary.push(format!(
            "{name} {exact}/{} exact, {}/{} tokens",
            smiles.len(),
            seen.iter().filter(|&&b| b).count(),
            vocab.len()
        ));
    }
    let detail = summary.join("; ");
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", failures.join(", ")))
    }
}

fn vocabulary_fidelity() -> Check {
    let moses_tokens = ["C", "N", "S", "O", "F", "Cl", "Br", "c", "n", "nH", "s", "o"];
    let moses_groups: [&[&str]; 4] = [
        &["C"],
        &["N", "O", "S"],
        &["F", "Cl", "Br"],
        &["c", "o", "n", "nH", "s"],
    ];
    let guaca_groups: [&[&str]; 6] = [
        &["F", "Cl", "Br", "I", "F-", "Cl-", "Br-"],
        &["C", "N", "O", "P", "S", "Se"],
        &["c", "n", "nH", "o", "s", "se", "p"],
        &[
            "N+", "n+", "nH+", "P+", "NH+", "NH2+", "NH3+", "Br+2", "Cl+2", "Cl+3", "I+2", "I+3",
        ],
        &[
            "O-", "N-", "NH-", "O+", "S+", "B-", "C+", "C-", "c+", "c-", "n-", "s+", "o+", "se+", "F+", "Cl+", "I+",
            "P-", "S-", "Se+", "Se-", "Si-",
        ],
        &["B", "Si"],
    ];
    let guaca_tokens = [
        "C", "N", "O", "F", "B", "Br", "Cl", "I", "P", "S", "Se", "Si", "c", "c+", "c-", "n", "nH", "n+", "nH+", "n-",
        "s", "s+", "o", "o+", "se", "se+", "p", "C+", "C-", "N+", "NH+", "NH2+", "NH3+", "N-", "NH-", "O+", "O-", "F+",
        "F-", "B-", "Br+2", "Br-", "Cl+", "Cl+2", "Cl+3", "Cl-", "I+", "I+2", "I+3", "P+", "P-", "S+", "S-", "Se+",
        "Se-", "Si-",
    ];
    let mut errors = Vec::new();
    let mut check = |v: &Vocabulary, tokens: &[&str], groups: &[&[&str]]| {
        let names: Vec<&str> = v.tokens().iter().map(|t| t.name.as_str()).collect();
        let mut a = names.clone();
        let mut b = tokens.to_vec();
        a.sort_unstable();
        b.sort_unstable();
        if a != b {
            errors.push(format!("{} tokens differ", v.name()));
        }
        let table = v.grouping();
        if table.group_count() != groups.len() {
            errors.push(format!("{}: {} groups", v.name(), table.group_count()));
        }
        let mut expected = Vec::new();
        for (gi, members) in groups.iter().enumerate() {
            for m in *members {
                expected.push((m.to_string(), gi));
            }
        }
        for (name, gi) in expected {
            match v.index_of(&name) {
                Some(t) if table.group_of(t) == Some(gi) => {}
                other => errors.push(format!(
                    "{}: {name} in {:?}, expected group {gi}",
                    v.name(),
                    other.map(|t| table.group_of(t))
                )),
            }
        }
        (names.len(), table.group_count())
    };
    let m = check(&Vocabulary::moses(), &moses_tokens, &moses_groups);
    let g = check(&Vocabulary::guacamol(), &guaca_tokens, &guaca_groups);
    let detail = format!(
        "moses {} tokens/{} groups, guacamol {} tokens/{} groups",
        m.0, m.1, g.0, g.1
    );
    let sizes_ok = m == (12, 4) && g == (56, 6);
    if errors.is_empty() && sizes_ok {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", errors.join(", ")))
    }
}

fn scaffold_constraint() -> Check {
    let vocab = Vocabulary::moses();
    let h = vocab.hierarchy().unwrap();
    let gd = GraphDiffusion::new(
        HierarchicalProcess::new(h, Schedule::linear_quadratic()).unwrap(),
        UniformProcess::new(5, ScheduleFn::Linear).unwrap(),
    );
    let encode = |s: &str| dae_encode(&parse(s).unwrap(), &vocab).unwrap().to_graph_state();
    let corpus: Vec<GraphState> = ["c1ccccc1C", "c1ccccc1O", "c1ccccc1N", "c1ccccc1F", "c1ccccc1Cl"]
        .iter()
        .map(|s| encode(s))
        .collect();
    let den = ExactBayesDenoiser::new(gd.clone(), &corpus).map_err(|e| e.to_string())?;
    let benzene = encode("c1ccccc1");
    let indices: Vec<usize> = (0..6).collect();
    let constraint = ScaffoldConstraint::from_graph(&benzene, &indices).unwrap();
    let mut violations = 0;
    let mut runs = 0;
    let mut valid = 0;
    for r in 0..1000u64 {
        let mode = if r % 2 == 0 {
            SamplerMode::Pn
        } else {
            SamplerMode::Ancestral
        };
        let cfg = SamplerConfig {
            steps: 25,
            mode,
            seed: r,
            ..Default::default()
        };
        let out = scaffold_constrained_sample(&gd, &den, cfg, &constraint, 7, 1).map_err(|e| e.to_string())?;
        for g in &out {
            runs += 1;
            let same_nodes = (0..6).all(|i| g.nodes[i] == benzene.nodes[i]);
            let same_edges = pairs(6).all(|(i, j)| g.edge(i, j) == benzene.edge(i, j));
            if !(same_nodes && same_edges) {
                violations += 1;
            }
            let mol = hddm::molgraph::MolGraph::from_graph_state(g, &vocab).and_then(|m| m.to_molecule(&vocab));
            if mol.map(|m| sanitize(&m).is_valid()).unwrap_or(false) {
                valid += 1;
            }
        }
    }
    ensure(
        violations == 0 && runs == 1000,
        format!("{runs} runs, {violations} violations, {valid} sanitized outputs"),
    )
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn metric_formulas() -> Check {
    let mut values: Vec<(&str, f64, f64)> = Vec::new();
    let mut bad = Vec::new();
    let mut expect = |name: &'static str, got: f64, want: f64| values.push((name, got, want));

    // Scaffolds benzene, cyclohexane, pyridine; one acyclic molecule.
    let r = evaluate(
        &strings(&["Cc1ccccc1", "OC1CCCCC1", "c1ccncc1", "CCO"]),
        &strings(&["C1CCCCC1"]),
        &strings(&["c1ccccc1"]),
        None,
    )
    .map_err(|e| e.to_string())?;
    expect("scaf_novel#1", r.scaf_novel, 2.0 / 4.0);
    expect("scaf_ret#1", r.scaf_ret, 1.0 / 4.0);

    let mut gen = strings(&["Nc1ccccc1", "C1CCOC1", "Cc1ccsc1"]);
    gen.extend(std::iter::repeat("CCO".to_string()).take(97));
    let r = evaluate(
        &gen,
        &strings(&["CC"]),
        &strings(&["c1ccccc1", "C1CCOC1", "c1ccsc1"]),
        None,
    )
    .map_err(|e| e.to_string())?;
    expect("scaf_ret#2", r.scaf_ret, 3.0 / 100.0);
    expect("scaf_novel#2", r.scaf_novel, 3.0 / 100.0);

    let fps: Vec<_> = ["C", "O", "N", "F"]
        .iter()
        .map(|s| morgan_fingerprint(&parse(s).unwrap(), MORGAN_RADIUS, MORGAN_BITS))
        .collect();
    let disjoint = (0..4).all(|i| (0..i).all(|j| fps[i].ones().iter().all(|b| !fps[j].ones().contains(b))));
    if !disjoint || fps.iter().any(|f| f.count_ones() == 0) {
        bad.push("fixture fingerprints are not pairwise disjoint".into());
    }
    let r = evaluate(&strings(&["C", "O", "N", "F", "C"]), &[], &[], None).map_err(|e| e.to_string())?;
    expect("diversity#3", r.diversity, 0.75);
    let r = evaluate(&strings(&["OC", "CO"]), &[], &[], None).map_err(|e| e.to_string())?;
    expect("diversity(singleton)", r.diversity, 0.0);

    let gen = strings(&["OCC", "CCC", "c1ccccc1", "C1CCCCC1", "CCN", "CNC"]);
    let r = evaluate(&gen, &[], &strings(&["CCO", "C1CCCCC1", "NCC=O"]), Some(2)).map_err(|e| e.to_string())?;
    expect("hit_at_k#4", r.hit_at_k.unwrap_or(-1.0), 2.0 / 3.0);

    let gen = strings(&["CCO", "OCC", "C1CC1", "C1CC(", "C(C)(C)(C)(C)C"]);
    let r = evaluate(&gen, &strings(&["CCO"]), &[], None).map_err(|e| e.to_string())?;
    expect("validity#5", r.validity, 3.0 / 5.0);
    expect("uniqueness#5", r.uniqueness, 2.0 / 3.0);
    expect("novelty#5", r.novelty, 1.0 / 2.0);

    let mut lines = Vec::new();
    for (name, got, want) in values {
        lines.push(format!("{name}={got}"));
        if got != want {
            bad.push(format!("{name}: got {got}, want {want}"));
        }
    }
    let detail = lines.join(" ");
    if bad.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", bad.join(", ")))
    }
}

fn canonical_soundness() -> Check {
    let mols: Vec<_> = corpus(MOSES)
        .iter()
        .chain(corpus(GUACAMOL).iter())
        .map(|s| parse(s).unwrap())
        .collect();
    let forms: Vec<String> = mols.iter().map(canonical_form).collect();
    let mut by_form: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, f) in forms.iter().enumerate() {
        by_form.entry(f).or_default().push(i);
    }
    let mut collisions = 0;
    let mut missed = 0;
    let mut pairs_checked = 0;
    let mut small_pairs = 0;
    for i in 0..mols.len() {
        for j in 0..i {
            let iso = brute_force_isomorphic(&mols[i], &mols[j]);
            let same = forms[i] == forms[j];
            pairs_checked += 1;
            if mols[i].atom_count() <= 8 && mols[j].atom_count() <= 8 {
                small_pairs += 1;
            }
            if same && !iso {
                collisions += 1;
            }
            if iso && !same {
                missed += 1;
            }
        }
    }
    let mut unstable = 0;
    let mut rng = stream_rng(0xC10, 0);
    let fuzz: Vec<usize> = (0..mols.len()).step_by(mols.len() / 50).take(50).collect();
    for &m in &fuzz {
        let n = mols[m].atom_count();
        for _ in 0..1000 {
            let mut order: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                order.swap(i, rng.gen_range(0..=i));
            }
            if canonical_form(&mols[m].permuted(&order)) != forms[m] {
                unstable += 1;
            }
        }
    }
    let detail = format!(
        "{} molecules, {} distinct forms, {pairs_checked} pairs ({small_pairs} with n<=8), {collisions} collisions, {missed} split isomorphs, {unstable}/{} unstable shuffles",
        mols.len(),
        by_form.len(),
        fuzz.len() * 1000
    );
    ensure(
        collisions == 0 && missed == 0 && unstable == 0 && fuzz.len() == 50,
        detail,
    )
}

struct Run {
    name: &'static str,
    args: Vec<String>,
    stdin: Option<String>,
    outputs: Vec<PathBuf>,
}

fn invoke(run: &Run) -> Result<Vec<Vec<u8>>, String> {
    for o in &run.outputs {
        let _ = std::fs::remove_file(o);
    }
    let mut child = Command::new(env!("CARGO_BIN_EXE_hddm"))
        .args(&run.args)
        .env_remove("HDDM_SEED")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| format!("{}: {e}", run.name))?;
    {
        use std::io::Write;
        let mut stdin = child.stdin.take().unwrap();
        if let Some(text) = &run.stdin {
            stdin.write_all(text.as_bytes()).map_err(|e| e.to_string())?;
        }
    }
    let out = child.wait_with_output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "{} exited {:?}: {}",
            run.name,
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    let mut blobs = vec![out.stdout];
    for o in &run.outputs {
        blobs.push(std::fs::read(o).map_err(|e| format!("{}: {e}", o.display()))?);
    }
    Ok(blobs)
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name);
    let s = |path: &Path| path.display().to_string();
    std::fs::write(p("toy.smi"), "c1ccccc1C\nc1ccccc1O\nc1ccccc1N\nc1ccccc1F\nc1ccccc1Cl\n").unwrap();
    std::fs::write(p("scaf.smi"), "c1ccccc1 c1ccccc1O\nc1ccccc1 c1ccccc1N\n").unwrap();
    std::fs::write(p("mols.smi"), MOSES).unwrap();
    let moses = p("mols.smi");
    let toy = p("toy.smi");
    let denoiser = format!("bayes:{}", s(&toy));
    let args = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let request = "{\"n\":7,\"nodes\":[16,16,16,16,16,16,16],\"edges\":[0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0],\"t\":0.9}\n{\"n\":7,\"nodes\":[7,7,7,7,7,7,16],\"edges\":[4,0,0,0,4,0,4,0,0,0,0,4,0,0,0,4,0,0,4,0,1],\"t\":0.5}\n";
    std::fs::write(p("gen_ref.smi"), "c1ccccc1O\nc1ccccc1N\nCCO\nc1ccccc1O\n").unwrap();
    let runs = vec![
        Run {
            name: "kernels check",
            args: args(&["kernels", "check", "--levels", "3", "--out", &s(&p("k.json"))]),
            stdin: None,
            outputs: vec![p("k.json")],
        },
        Run {
            name: "forward",
            args: args(&[
                "forward",
                "--t",
                "0.8",
                "--seed",
                "7",
                "--in",
                &s(&moses),
                "--out",
                &s(&p("f.jsonl")),
            ]),
            stdin: None,
            outputs: vec![p("f.jsonl")],
        },
        Run {
            name: "encode",
            args: args(&["encode", "--in", &s(&moses), "--out", &s(&p("e.jsonl"))]),
            stdin: None,
            outputs: vec![p("e.jsonl")],
        },
        Run {
            name: "decode",
            args: args(&[
                "decode",
                "--canonical",
                "--in",
                &s(&p("e.jsonl")),
                "--out",
                &s(&p("d.smi")),
            ]),
            stdin: None,
            outputs: vec![p("d.smi")],
        },
        Run {
            name: "sample pn",
            args: args(&[
                "sample",
                "--mode",
                "pn",
                "--T",
                "30",
                "--top-p",
                "0.9",
                "--n-samples",
                "200",
                "--seed",
                "7",
                "--denoiser",
                &denoiser,
                "--out",
                &s(&p("g.smi")),
                "--states-out",
                &s(&p("g.jsonl")),
            ]),
            stdin: None,
            outputs: vec![p("g.smi"), p("g.jsonl")],
        },
        Run {
            name: "sample ancestral",
            args: args(&[
                "sample",
                "--mode",
                "ancestral",
                "--T",
                "30",
                "--n-samples",
                "200",
                "--seed",
                "8",
                "--denoiser",
                &denoiser,
                "--out",
                &s(&p("a.smi")),
            ]),
            stdin: None,
            outputs: vec![p("a.smi")],
        },
        Run {
            name: "metrics",
            args: args(&[
                "metrics",
                "--gen",
                &s(&p("gen_ref.smi")),
                "--train",
                &s(&toy),
                "--test",
                &s(&p("toy.smi")),
                "--out",
                &s(&p("m.json")),
            ]),
            stdin: None,
            outputs: vec![p("m.json")],
        },
        Run {
            name: "nelbo",
            args: args(&[
                "nelbo",
                "--dataset",
                "toy3",
                "--T",
                "500",
                "--mc",
                "20000",
                "--seed",
                "1",
            ]),
            stdin: None,
            outputs: vec![],
        },
        Run {
            name: "scaffold-extend",
            args: args(&[
                "scaffold-extend",
                "--scaffolds",
                &s(&p("scaf.smi")),
                "--k",
                "5",
                "--T",
                "30",
                "--seed",
                "3",
                "--denoiser",
                &denoiser,
                "--out",
                &s(&p("x.smi")),
            ]),
            stdin: None,
            outputs: vec![p("x.smi")],
        },
        Run {
            name: "denoise-serve",
            args: args(&["denoise-serve", "--denoiser", &denoiser]),
            stdin: Some(request.into()),
            outputs: vec![],
        },
    ];
    let mut done = Vec::new();
    for run in &runs {
        let first = invoke(run)?;
        let second = invoke(run)?;
        if first != second {
            return Err(format!("{} differs between runs", run.name));
        }
        if first.iter().all(Vec::is_empty) {
            return Err(format!("{} produced no output", run.name));
        }
        done.push(run.name);
    }
    Ok(format!(
        "{} subcommand runs byte-identical: {}",
        done.len(),
        done.join(", ")
    ))
}

fn main() {
    let criteria: Vec<(&str, fn() -> Check)> = vec![
        ("Chapman-Kolmogorov consistency", chapman_kolmogorov),
        ("posterior exactness", posterior_exactness),
        ("masked-diffusion degeneracy", masked_degeneracy),
        ("NELBO consistency", nelbo_consistency),
        ("sampler exactness", sampler_exactness),
        ("DAE round trip", dae_round_trip),
        ("vocabulary and grouping fidelity", vocabulary_fidelity),
        ("scaffold constraint", scaffold_constraint),
        ("metric formulas", metric_formulas),
        ("canonicalization soundness", canonical_soundness),
        ("CLI determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        match result {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail}) [{elapsed:.2?}]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({detail}) [{elapsed:.2?}]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
