use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde::{Deserialize, Serialize};

use hddm::denoiser::{Denoiser, EmpiricalMarginalDenoiser, ExactBayesDenoiser, SubprocessDenoiser};
use hddm::molgraph::{dae_encode, BondType, MolGraph, Vocabulary};
use hddm::schedule::validate;
use hddm::smiles::{parse, read_smi};
use hddm::{GraphDiffusion, GraphState, HierarchicalProcess, Schedule, ScheduleFn, UniformProcess};

use crate::config::{read_text, Classify, Failure, Outcome};

/// Vocabulary and noise schedules shared by every model-backed subcommand.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ModelArgs {
    /// `moses`, `guacamol`, or a vocabulary TOML file
    #[arg(long)]
    pub vocab: Option<String>,
    /// Clean-token survival schedule
    #[arg(long)]
    pub alpha: Option<String>,
    /// Group-or-clean survival schedule
    #[arg(long)]
    pub beta: Option<String>,
    /// Bond keep-ratio schedule
    #[arg(long)]
    pub edge_schedule: Option<String>,
}

impl ModelArgs {
    pub fn vocabulary(&self) -> Outcome<Vocabulary> {
        let name = self.vocab.as_deref().unwrap_or("moses");
        if name.ends_with(".toml") || name.contains(std::path::MAIN_SEPARATOR) {
            let text = read_text(Path::new(name))?;
            Vocabulary::from_toml_str(&text).config(&format!("vocabulary {name}"))
        } else {
            Vocabulary::by_name(name).config("vocabulary")
        }
    }

    pub fn schedule(&self) -> Outcome<Schedule> {
        let alpha = schedule_fn(self.alpha.as_deref().unwrap_or("linear"), "alpha")?;
        let beta = schedule_fn(self.beta.as_deref().unwrap_or("quadratic"), "beta")?;
        let schedule = Schedule::two_level(alpha, beta);
        validate(&schedule).invalid("schedule")?;
        Ok(schedule)
    }

    pub fn diffusion(&self, vocab: &Vocabulary) -> Outcome<GraphDiffusion> {
        let hierarchy = vocab.hierarchy().config("grouping")?;
        let atoms = HierarchicalProcess::new(hierarchy, self.schedule()?).invalid("atom process")?;
        let edge = schedule_fn(self.edge_schedule.as_deref().unwrap_or("linear"), "edge-schedule")?;
        let edges = UniformProcess::new(BondType::COUNT, edge).invalid("bond process")?;
        Ok(GraphDiffusion::new(atoms, edges))
    }
}

pub fn schedule_fn(text: &str, flag: &str) -> Outcome<ScheduleFn> {
    text.parse().config(&format!("--{flag}"))
}

/// Where denoiser predictions come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DenoiserSpec {
    /// Exact posterior mean over a `.smi` corpus.
    Bayes(PathBuf),
    /// Corpus token frequencies, ignoring the noisy input.
    Marginal(PathBuf),
    /// External process speaking the JSON-lines protocol.
    Command(Vec<String>),
}

impl FromStr for DenoiserSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| format!("expected bayes:<file>, marginal:<file> or cmd:<program>, got {s:?}"))?;
        match kind {
            "bayes" => Ok(DenoiserSpec::Bayes(rest.into())),
            "marginal" => Ok(DenoiserSpec::Marginal(rest.into())),
            "cmd" => {
                let words: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
                if words.is_empty() {
                    Err("cmd: needs a program".into())
                } else {
                    Ok(DenoiserSpec::Command(words))
                }
            }
            other => Err(format!("unknown denoiser kind {other:?}")),
        }
    }
}

pub struct LoadedDenoiser {
    pub denoiser: Box<dyn Denoiser>,
    /// Node counts of the corpus, when the denoiser has one.
    pub sizes: Vec<usize>,
}

pub fn load_denoiser(spec: &str, diffusion: &GraphDiffusion, vocab: &Vocabulary) -> Outcome<LoadedDenoiser> {
    let spec: DenoiserSpec = spec.parse().map_err(|e| Failure::Config(format!("--denoiser: {e}")))?;
    let atoms = vocab.len();
    let bonds = diffusion.edge_dim();
    let corpus = |path: &Path| -> Outcome<Vec<GraphState>> {
        let graphs = encode_smi_file(path, vocab)?;
        if graphs.is_empty() {
            return Err(Failure::Invalid(format!("{}: empty corpus", path.display())));
        }
        Ok(graphs.iter().map(MolGraph::to_graph_state).collect())
    };
    let sizes_of = |c: &[GraphState]| c.iter().map(|g| g.n).collect();
    Ok(match spec {
        DenoiserSpec::Bayes(path) => {
            let c = corpus(&path)?;
            LoadedDenoiser {
                sizes: sizes_of(&c),
                denoiser: Box::new(ExactBayesDenoiser::new(diffusion.clone(), &c).invalid("bayes denoiser")?),
            }
        }
        DenoiserSpec::Marginal(path) => {
            let c = corpus(&path)?;
            LoadedDenoiser {
                sizes: sizes_of(&c),
                denoiser: Box::new(EmpiricalMarginalDenoiser::new(atoms, bonds, &c).invalid("marginal denoiser")?),
            }
        }
        DenoiserSpec::Command(words) => LoadedDenoiser {
            sizes: Vec::new(),
            denoiser: Box::new(SubprocessDenoiser::spawn(&words[0], &words[1..], atoms, bonds).config("--denoiser")?),
        },
    })
}

/// Parses, sanitizes and encodes every record of a `.smi` file.
pub fn encode_smi_file(path: &Path, vocab: &Vocabulary) -> Outcome<Vec<MolGraph>> {
    let text = read_text(path)?;
    read_smi(&text)
        .iter()
        .map(|r| {
            let at = format!("{}:{}", path.display(), r.line);
            let mol = parse(&r.smiles).invalid(&at)?;
            dae_encode(&mol, vocab).invalid(&at)
        })
        .collect()
}

/// SMILES strings of a `.smi` file, unparsed.
pub fn smiles_list(path: &Path) -> Outcome<Vec<String>> {
    Ok(read_smi(&read_text(path)?).into_iter().map(|r| r.smiles).collect())
}

pub fn read_states(path: &Path) -> Outcome<Vec<GraphState>> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| serde_json::from_str(l).invalid(&format!("{}:{}", path.display(), k + 1)))
        .collect()
}

pub fn state_lines(states: &[GraphState]) -> Outcome<String> {
    let mut out = String::new();
    for g in states {
        out.push_str(&serde_json::to_string(g).config("graph state")?);
        out.push('\n');
    }
    Ok(out)
}
