use std::io::{BufRead, Write};
use std::path::PathBuf;

use clap::Args;
use rand::Rng;
use serde::{Deserialize, Serialize};

use hddm::denoiser::{DenoiseRequest, Denoiser};
use hddm::metrics::evaluate;
use hddm::molgraph::{dae_decode, MolGraph, Vocabulary};
use hddm::nelbo::{Estimate, ToyProblem};
use hddm::prob::stream_rng;
use hddm::sampler::{
    scaffold_constrained_sample, Sampler, SamplerConfig, SamplerMode, ScaffoldConstraint, SizeDistribution,
};
use hddm::smiles::{canonical_form, parse, read_smi, write};
use hddm::GraphState;

use crate::config::{emit, read_text, resolve_seed, Classify, ConfigFile, Failure, Outcome};
use crate::model::{encode_smi_file, load_denoiser, read_states, smiles_list, state_lines, ModelArgs};

fn need<T>(v: Option<T>, flag: &str) -> Outcome<T> {
    v.ok_or_else(|| Failure::Config(format!("missing --{flag}")))
}

fn json_report<T: Serialize>(value: &T) -> Outcome<String> {
    let mut s = serde_json::to_string_pretty(value).config("report")?;
    s.push('\n');
    Ok(s)
}

fn smiles_of(g: &GraphState, vocab: &Vocabulary) -> Outcome<String> {
    let mg = MolGraph::from_graph_state(g, vocab).invalid("sampled graph")?;
    Ok(write(&mg.to_molecule(vocab).invalid("sampled graph")?))
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EncodeArgs {
    /// Input `.smi` file
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    /// Output JSON-lines file (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
}

pub fn encode(args: EncodeArgs, config: &ConfigFile) -> Outcome<()> {
    let args = config.fill(args)?;
    let vocab = args.model.vocabulary()?;
    let graphs = encode_smi_file(&need(args.input, "in")?, &vocab)?;
    let states: Vec<GraphState> = graphs.iter().map(MolGraph::to_graph_state).collect();
    emit(args.out.as_deref(), &state_lines(&states)?)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct DecodeArgs {
    /// Input JSON-lines file of clean graph states
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    /// Output `.smi` file (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write canonical SMILES
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub canonical: Option<bool>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
}

pub fn decode(args: DecodeArgs, config: &ConfigFile) -> Outcome<()> {
    let args = config.fill(args)?;
    let vocab = args.model.vocabulary()?;
    let path = need(args.input, "in")?;
    let canonical = args.canonical.unwrap_or(false);
    let mut out = String::new();
    for (k, g) in read_states(&path)?.iter().enumerate() {
        let at = format!("{}: graph {}", path.display(), k + 1);
        let mg = MolGraph::from_graph_state(g, &vocab).invalid(&at)?;
        let mol = dae_decode(&mg, &vocab).invalid(&at)?;
        out.push_str(&if canonical { canonical_form(&mol) } else { write(&mol) });
        out.push('\n');
    }
    emit(args.out.as_deref(), &out)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ForwardArgs {
    /// Input `.smi` file
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    /// Noise level in [0, 1]
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output JSON-lines file (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
}

pub fn forward(args: ForwardArgs, config: &ConfigFile) -> Outcome<()> {
    let args = config.fill(args)?;
    let vocab = args.model.vocabulary()?;
    let diffusion = args.model.diffusion(&vocab)?;
    let t = need(args.t, "t")?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Failure::Config(format!("--t must lie in [0, 1], got {t}")));
    }
    let seed = resolve_seed(args.seed)?;
    let graphs = encode_smi_file(&need(args.input, "in")?, &vocab)?;
    let states = graphs
        .iter()
        .enumerate()
        .map(|(i, mg)| {
            let mut rng = stream_rng(seed, i as u64);
            diffusion
                .sample_forward(&mg.to_graph_state(), t, &mut rng)
                .invalid("forward")
        })
        .collect::<Outcome<Vec<_>>>()?;
    emit(args.out.as_deref(), &state_lines(&states)?)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SamplerArgs {
    /// `bayes:<corpus.smi>`, `marginal:<corpus.smi>` or `cmd:<program> [args]`
    #[arg(long)]
    pub denoiser: Option<String>,
    /// `pn` or `ancestral`
    #[arg(long)]
    pub mode: Option<String>,
    /// Reverse steps
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub steps: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub top_p: Option<f64>,
    /// Guidance scale, used with --condition
    #[arg(long)]
    pub guidance: Option<f64>,
    /// Comma-separated condition vector passed to the denoiser
    #[arg(long)]
    pub condition: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl SamplerArgs {
    fn config(&self) -> Outcome<SamplerConfig> {
        let d = SamplerConfig::default();
        let mode: SamplerMode = match &self.mode {
            Some(m) => m.parse().config("--mode")?,
            None => d.mode,
        };
        let config = SamplerConfig {
            steps: self.steps.unwrap_or(d.steps),
            tau: self.tau.unwrap_or(d.tau),
            top_p: self.top_p.unwrap_or(d.top_p),
            mode,
            guidance: self.guidance.unwrap_or(d.guidance),
            seed: resolve_seed(self.seed)?,
        };
        config.validate().config("sampler")?;
        Ok(config)
    }

    fn condition(&self) -> Outcome<Option<Vec<f64>>> {
        self.condition
            .as_ref()
            .map(|c| {
                c.split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
            })
            .transpose()
            .config("--condition")
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SampleArgs {
    #[arg(long)]
    pub n_samples: Option<usize>,
    /// Fixed node count; otherwise sizes follow the denoiser corpus
    #[arg(long)]
    pub n_atoms: Option<usize>,
    /// Output `.smi` file (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the sampled graph states as JSON lines
    #[arg(long)]
    pub states_out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub sampler: SamplerArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
}

pub fn sample(args: SampleArgs, config: &ConfigFile) -> Outcome<()> {
    let args = config.fill(args)?;
    let vocab = args.model.vocabulary()?;
    let diffusion = args.model.diffusion(&vocab)?;
    let cfg = args.sampler.config()?;
    let loaded = load_denoiser(&need(args.sampler.denoiser.clone(), "denoiser")?, &diffusion, &vocab)?;
    let sizes = match args.n_atoms {
        Some(n) => SizeDistribution::point(n),
        None if !loaded.sizes.is_empty() => SizeDistribution::from_sizes(&loaded.sizes).invalid("sizes")?,
        None => return Err(Failure::Config("--n-atoms is required for this denoiser".into())),
    };
    let count = args.n_samples.unwrap_or(1000);
    let mut sampler = Sampler::new(&diffusion, &*loaded.denoiser, cfg).invalid("sampler")?;
    if let Some(c) = args.sampler.condition()? {
        sampler = sampler.with_condition(c);
    }
    let graphs = sampler.sample(count, &sizes).invalid("sampling")?;
    let mut out = String::new();
    for g in &graphs {
        out.push_str(&smiles_of(g, &vocab)?);
        out.push('\n');
    }
    if let Some(p) = &args.states_out {
        emit(Some(p), &state_lines(&graphs)?)?;
    }
    emit(args.out.as_deref(), &out)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct MetricsArgs {
    /// Generated molecules
    #[arg(long)]
    pub gen: Option<PathBuf>,
    /// Training molecules (novelty reference)
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Test molecules (scaffold reference and Hit@K targets)
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Samples per test molecule; enables Hit@K
    #[arg(long)]
    pub k: Option<usize>,
    /// Output JSON report (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn metrics(args: MetricsArgs, config: &ConfigFile) -> Outcome<()> {
    let args = config.fill(args)?;
    let gen = smiles_list(&need(args.gen, "gen")?)?;
    let train = smiles_list(&need(args.train, "train")?)?;
    let test = smiles_list(&need(args.test, "test")?)?;
    let report = evaluate(&gen, &train, &test, args.k).invalid("metrics")?;
    emit(args.out.as_deref(), &json_report(&report)?)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct NelboArgs {
    /// Only `toy3` is built in
    #[arg(long)]
    pub dataset: Option<String>,
    /// Discrete steps
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub steps: Option<usize>,
    /// Monte Carlo samples for the discrete estimate
    #[arg(long)]
    pub mc: Option<usize>,
    /// Quadrature points for the continuous bound
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct NelboReport {
    pub dataset: String,
    #[serde(rename = "T")]
    pub steps: usize,
    pub points: usize,
    pub seed: u64,
    pub discrete_exact: f64,
    pub discrete_mc: Estimate,
    /// `(mc - exact) / std_error`
    pub mc_z: f64,
    pub continuous: f64,
    pub relative_error: f64,
}

pub fn nelbo(args: NelboArgs, config: &ConfigFile) -> Outcome<()> {
    let args = config.fill(args)?;
    let dataset = args.dataset.unwrap_or_else(|| "toy3".into());
    if dataset != "toy3" {
        return Err(Failure::Config(format!("unknown dataset {dataset:?}; available: toy3")));
    }
    let steps = args.steps.unwrap_or(2000);
    let points = args.points.unwrap_or(4000);
    let mc = args.mc.unwrap_or(100_000);
    let seed = resolve_seed(args.seed)?;
    let toy = ToyProblem::toy3();
    let exact = toy.discrete_nelbo(steps).invalid("discrete nelbo")?;
    let est = toy.discrete_nelbo_mc(steps, mc, seed).invalid("mc nelbo")?;
    let continuous = toy.continuous_nelbo(points).invalid("continuous nelbo")?;
    let report = NelboReport {
        dataset,
        steps,
        points,
        seed,
        discrete_exact: exact,
        discrete_mc: est,
        mc_z: if est.std_error > 0.0 {
            (est.mean - exact) / est.std_error
        } else {
            0.0
        },
        continuous,
        relative_error: (continuous - exact).abs() / exact.abs(),
    };
    emit(args.out.as_deref(), &json_report(&report)?)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ScaffoldArgs {
    /// `.smi` lines of `scaffold [target]`; the target sets the output size
    #[arg(long)]
    pub scaffolds: Option<PathBuf>,
    /// Samples per scaffold
    #[arg(long)]
    pub k: Option<usize>,
    /// Output size for scaffolds without a target
    #[arg(long)]
    pub n_atoms: Option<usize>,
    /// Output `.smi` file, `k` lines per scaffold (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub sampler: SamplerArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
}

pub fn scaffold_extend(args: ScaffoldArgs, config: &ConfigFile) -> Outcome<()> {
    let args = config.fill(args)?;
    let vocab = args.model.vocabulary()?;
    let diffusion = args.model.diffusion(&vocab)?;
    let cfg = args.sampler.config()?;
    let loaded = load_denoiser(&need(args.sampler.denoiser.clone(), "denoiser")?, &diffusion, &vocab)?;
    let k = args.k.unwrap_or(1);
    let path = need(args.scaffolds, "scaffolds")?;
    let mut out = String::new();
    for (j, rec) in read_smi(&read_text(&path)?).iter().enumerate() {
        let at = format!("{}:{}", path.display(), rec.line);
        let scaffold = parse_graph_state(&rec.smiles, &vocab, &at)?;
        let n_total = match &rec.name {
            Some(target) => parse(target).invalid(&at)?.atom_count(),
            None => need(args.n_atoms, "n-atoms")?,
        };
        let indices: Vec<usize> = (0..scaffold.n).collect();
        let constraint = ScaffoldConstraint::from_graph(&scaffold, &indices).invalid(&at)?;
        let run_cfg = SamplerConfig {
            seed: stream_rng(cfg.seed, j as u64).gen(),
            ..cfg
        };
        let graphs = scaffold_constrained_sample(&diffusion, &*loaded.denoiser, run_cfg, &constraint, n_total, k)
            .invalid(&at)?;
        for g in &graphs {
            if !constraint.holds(g) {
                return Err(Failure::Invalid(format!(
                    "{at}: scaffold region changed during sampling"
                )));
            }
            out.push_str(&smiles_of(g, &vocab)?);
            out.push('\n');
        }
    }
    emit(args.out.as_deref(), &out)
}

fn parse_graph_state(smiles: &str, vocab: &Vocabulary, at: &str) -> Outcome<GraphState> {
    Ok(hddm::smiles::parse_graph(smiles, vocab).invalid(at)?.to_graph_state())
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ServeArgs {
    /// `bayes:<corpus.smi>` or `marginal:<corpus.smi>`
    #[arg(long)]
    pub denoiser: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
}

/// Answers denoising requests on stdin, one JSON object per line.
pub fn denoise_serve(args: ServeArgs, config: &ConfigFile) -> Outcome<()> {
    let args = config.fill(args)?;
    let vocab = args.model.vocabulary()?;
    let diffusion = args.model.diffusion(&vocab)?;
    let spec = need(args.denoiser, "denoiser")?;
    if spec.starts_with("cmd:") {
        return Err(Failure::Config(
            "denoise-serve needs a bayes: or marginal: denoiser".into(),
        ));
    }
    let loaded = load_denoiser(&spec, &diffusion, &vocab)?;
    serve(&*loaded.denoiser, std::io::stdin().lock(), std::io::stdout().lock())
}

fn serve(denoiser: &dyn Denoiser, input: impl BufRead, mut output: impl Write) -> Outcome<()> {
    for (k, line) in input.lines().enumerate() {
        let line = line.config("stdin")?;
        if line.trim().is_empty() {
            continue;
        }
        let at = format!("request {}", k + 1);
        let req: DenoiseRequest = serde_json::from_str(&line).invalid(&at)?;
        let reply = denoiser.predict(&req.state, req.condition.as_deref()).invalid(&at)?;
        let text = serde_json::to_string(&reply).config(&at)?;
        writeln!(output, "{text}").config("stdout")?;
        output.flush().config("stdout")?;
    }
    Ok(())
}
