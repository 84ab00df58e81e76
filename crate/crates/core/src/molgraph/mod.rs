//! Molecules, atom vocabularies, and the token-level molecular graph.

mod valence;
mod vocab;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forward::{pair_count, pair_index, pairs, GraphState};

pub use valence::{
    allowed_valences, hydrogen_count, implied_hydrogens, on_aromatic_cycle, sanitize, SanitizeIssue, SanitizeReport,
};
pub use vocab::{grouping_kernel, token_notation, DaeToken, GroupingTable, HydrogenRule, VocabError, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Element {
    B,
    C,
    N,
    O,
    F,
    Si,
    P,
    S,
    Cl,
    Se,
    Br,
    I,
}

impl Element {
    pub const ALL: [Element; 12] = [
        Element::B,
        Element::C,
        Element::N,
        Element::O,
        Element::F,
        Element::Si,
        Element::P,
        Element::S,
        Element::Cl,
        Element::Se,
        Element::Br,
        Element::I,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::F => "F",
            Element::Si => "Si",
            Element::P => "P",
            Element::S => "S",
            Element::Cl => "Cl",
            Element::Se => "Se",
            Element::Br => "Br",
            Element::I => "I",
        }
    }

    pub fn atomic_number(self) -> u8 {
        match self {
            Element::B => 5,
            Element::C => 6,
            Element::N => 7,
            Element::O => 8,
            Element::F => 9,
            Element::Si => 14,
            Element::P => 15,
            Element::S => 16,
            Element::Cl => 17,
            Element::Se => 34,
            Element::Br => 35,
            Element::I => 53,
        }
    }

    pub fn from_symbol(s: &str) -> Option<Element> {
        Element::ALL.into_iter().find(|e| e.symbol() == s)
    }

    /// Lowercase spelling when aromatic, if the element may be aromatic.
    pub fn aromatic_symbol(self) -> Option<&'static str> {
        match self {
            Element::B => Some("b"),
            Element::C => Some("c"),
            Element::N => Some("n"),
            Element::O => Some("o"),
            Element::P => Some("p"),
            Element::S => Some("s"),
            Element::Se => Some("se"),
            _ => None,
        }
    }

    pub fn from_aromatic_symbol(s: &str) -> Option<Element> {
        Element::ALL.into_iter().find(|e| e.aromatic_symbol() == Some(s))
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Bond tokens; the discriminant is the edge-token index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BondType {
    None = 0,
    Single = 1,
    Double = 2,
    Triple = 3,
    Aromatic = 4,
}

impl BondType {
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<BondType> {
        match i {
            0 => Some(BondType::None),
            1 => Some(BondType::Single),
            2 => Some(BondType::Double),
            3 => Some(BondType::Triple),
            4 => Some(BondType::Aromatic),
            _ => None,
        }
    }

    /// Integer order used in valence sums; aromatic bonds count 1 here and
    /// are handled separately by the valence rules.
    pub fn order(self) -> u32 {
        match self {
            BondType::None => 0,
            BondType::Single | BondType::Aromatic => 1,
            BondType::Double => 2,
            BondType::Triple => 3,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BondType::None => ".",
            BondType::Single => "-",
            BondType::Double => "=",
            BondType::Triple => "#",
            BondType::Aromatic => ":",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Hydrogens {
    /// Filled from the valence rules.
    Implicit,
    Explicit(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub element: Element,
    pub aromatic: bool,
    pub charge: i8,
    pub hydrogens: Hydrogens,
}

impl Atom {
    pub fn new(element: Element) -> Self {
        Self {
            element,
            aromatic: false,
            charge: 0,
            hydrogens: Hydrogens::Implicit,
        }
    }

    pub fn aromatic(element: Element) -> Self {
        Self {
            aromatic: true,
            ..Self::new(element)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MoleculeError {
    #[error("atom {0} does not exist")]
    NoSuchAtom(usize),
    #[error("bond from atom {0} to itself")]
    SelfBond(usize),
    #[error("atoms {0} and {1} are already bonded")]
    DuplicateBond(usize, usize),
    #[error("cannot add a bond of type none")]
    NoneBond,
}

/// Heavy-atom graph with per-atom hydrogen information.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Molecule {
    atoms: Vec<Atom>,
    adjacency: Vec<Vec<(usize, BondType)>>,
}

impl Molecule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_atom(&mut self, atom: Atom) -> usize {
        self.atoms.push(atom);
        self.adjacency.push(Vec::new());
        self.atoms.len() - 1
    }

    pub fn add_bond(&mut self, a: usize, b: usize, kind: BondType) -> Result<(), MoleculeError> {
        let n = self.atoms.len();
        for x in [a, b] {
            if x >= n {
                return Err(MoleculeError::NoSuchAtom(x));
            }
        }
        if a == b {
            return Err(MoleculeError::SelfBond(a));
        }
        if kind == BondType::None {
            return Err(MoleculeError::NoneBond);
        }
        if self.bond(a, b).is_some() {
            return Err(MoleculeError::DuplicateBond(a, b));
        }
        self.adjacency[a].push((b, kind));
        self.adjacency[b].push((a, kind));
        Ok(())
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.atoms[i]
    }

    pub fn atom_mut(&mut self, i: usize) -> &mut Atom {
        &mut self.atoms[i]
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, BondType)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn bond(&self, a: usize, b: usize) -> Option<BondType> {
        self.adjacency.get(a)?.iter().find(|(j, _)| *j == b).map(|&(_, k)| k)
    }

    /// Bonds as `(i, j, kind)` with `i < j`, sorted.
    pub fn bonds(&self) -> Vec<(usize, usize, BondType)> {
        let mut out: Vec<_> = self
            .adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, nb)| nb.iter().filter(move |(j, _)| i < *j).map(move |&(j, k)| (i, j, k)))
            .collect();
        out.sort();
        out
    }

    pub fn bond_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Connected components, each as sorted atom indices, ordered by first atom.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.atoms.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut k = 0;
            while k < comp.len() {
                for &(j, _) in &self.adjacency[comp[k]] {
                    if !seen[j] {
                        seen[j] = true;
                        comp.push(j);
                    }
                }
                k += 1;
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Sub-molecule on `keep` (in the given order) with bonds among them.
    pub fn induced(&self, keep: &[usize]) -> Molecule {
        let mut map = vec![usize::MAX; self.atoms.len()];
        let mut out = Molecule::new();
        for &i in keep {
            map[i] = out.add_atom(self.atoms[i]);
        }
        for (i, j, k) in self.bonds() {
            if map[i] != usize::MAX && map[j] != usize::MAX {
                out.add_bond(map[i], map[j], k).expect("induced bonds are unique");
            }
        }
        out
    }

    /// Same molecule with atoms reordered so that new atom `k` is old `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Molecule {
        self.induced(order)
    }

    /// Total hydrogens on atom `i` (explicit count or valence-implied).
    pub fn hydrogens(&self, i: usize) -> u8 {
        hydrogen_count(self, i)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncodeError {
    #[error("atom {atom} ({description}) is not in the {vocab} vocabulary")]
    OutOfVocabulary {
        atom: usize,
        description: String,
        vocab: String,
    },
    #[error("token {token} out of range for vocabulary of {size}")]
    TokenOutOfRange { token: usize, size: usize },
    #[error("bond token {0} out of range")]
    BondOutOfRange(usize),
    #[error("molecule fails sanitization: {0}")]
    Invalid(SanitizeReport),
    #[error("graph state has {0} edge entries for its node count")]
    EdgeCount(usize),
}

/// Molecular graph over vocabulary tokens; bonds in upper-triangle order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MolGraph {
    pub tokens: Vec<usize>,
    pub bonds: Vec<BondType>,
}

impl MolGraph {
    pub fn new(tokens: Vec<usize>) -> Self {
        let n = tokens.len();
        Self {
            tokens,
            bonds: vec![BondType::None; pair_count(n)],
        }
    }

    pub fn n(&self) -> usize {
        self.tokens.len()
    }

    pub fn bond(&self, i: usize, j: usize) -> BondType {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => BondType::None,
            std::cmp::Ordering::Less => self.bonds[pair_index(self.n(), i, j)],
            std::cmp::Ordering::Greater => self.bonds[pair_index(self.n(), j, i)],
        }
    }

    pub fn set_bond(&mut self, i: usize, j: usize, kind: BondType) {
        assert_ne!(i, j, "self-bonds are not representable");
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let k = pair_index(self.n(), a, b);
        self.bonds[k] = kind;
    }

    pub fn to_graph_state(&self) -> GraphState {
        GraphState {
            n: self.n(),
            nodes: self.tokens.clone(),
            edges: self.bonds.iter().map(|b| b.index()).collect(),
            t: 0.0,
        }
    }

    pub fn from_graph_state(g: &GraphState, vocab: &Vocabulary) -> Result<Self, EncodeError> {
        if g.edges.len() != pair_count(g.n) || g.nodes.len() != g.n {
            return Err(EncodeError::EdgeCount(g.edges.len()));
        }
        if let Some(&token) = g.nodes.iter().find(|&&x| x >= vocab.len()) {
            return Err(EncodeError::TokenOutOfRange {
                token,
                size: vocab.len(),
            });
        }
        let bonds = g
            .edges
            .iter()
            .map(|&e| BondType::from_index(e).ok_or(EncodeError::BondOutOfRange(e)))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            tokens: g.nodes.clone(),
            bonds,
        })
    }

    /// Molecule with token-defined hydrogens, without validity checks.
    pub fn to_molecule(&self, vocab: &Vocabulary) -> Result<Molecule, EncodeError> {
        let mut mol = Molecule::new();
        for &t in &self.tokens {
            let token = vocab.get(t).ok_or(EncodeError::TokenOutOfRange {
                token: t,
                size: vocab.len(),
            })?;
            mol.add_atom(token.to_atom());
        }
        for (k, (i, j)) in pairs(self.n()).enumerate() {
            let b = self.bonds[k];
            if b != BondType::None {
                mol.add_bond(i, j, b).expect("pairs are unique");
            }
        }
        Ok(mol)
    }
}

/// Maps every atom to its vocabulary token.
pub fn dae_encode(mol: &Molecule, vocab: &Vocabulary) -> Result<MolGraph, EncodeError> {
    let mut tokens = Vec::with_capacity(mol.atom_count());
    for i in 0..mol.atom_count() {
        let token = vocab.lookup(mol, i).ok_or_else(|| EncodeError::OutOfVocabulary {
            atom: i,
            description: describe_atom(mol, i),
            vocab: vocab.name().to_string(),
        })?;
        tokens.push(token);
    }
    let mut g = MolGraph::new(tokens);
    for (i, j, k) in mol.bonds() {
        g.set_bond(i, j, k);
    }
    Ok(g)
}

/// Inverse of [`dae_encode`] for graphs that pass sanitization.
pub fn dae_decode(g: &MolGraph, vocab: &Vocabulary) -> Result<Molecule, EncodeError> {
    let mol = g.to_molecule(vocab)?;
    let report = sanitize(&mol);
    if !report.is_valid() {
        return Err(EncodeError::Invalid(report));
    }
    Ok(mol)
}

/// Bracket-style description such as `[NH3+]` or `[c-]`.
pub fn describe_atom(mol: &Molecule, i: usize) -> String {
    let a = mol.atom(i);
    let sym = if a.aromatic {
        a.element
            .aromatic_symbol()
            .map_or_else(|| a.element.symbol().to_lowercase(), str::to_string)
    } else {
        a.element.symbol().to_string()
    };
    let h = hydrogen_count(mol, i);
    let hs = match h {
        0 => String::new(),
        1 => "H".to_string(),
        n => format!("H{n}"),
    };
    format!("[{sym}{hs}{}]", charge_suffix(a.charge))
}

/// `+`, `-`, `+2`, ... ; empty for neutral.
pub fn charge_suffix(charge: i8) -> String {
    match charge {
        0 => String::new(),
        1 => "+".into(),
        -1 => "-".into(),
        c if c > 0 => format!("+{c}"),
        c => format!("-{}", -c),
    }
}
