//! SMILES subset I/O and canonical forms.
//!
//! Covers the organic subset, aromatic lowercase atoms, bracket atoms with
//! hydrogen counts and charges up to three, the four bond symbols, branches,
//! ring closures (including `%nn`) and dot-separated components. Stereo marks,
//! isotopes, wildcards and atom classes are rejected with their position.

mod canon;
mod parse;
mod write;

use thiserror::Error;

use crate::molgraph::{dae_encode, hydrogen_count, EncodeError, MolGraph, Molecule, Vocabulary};

pub use canon::{canonical_form, canonical_smiles, MAX_CANONICAL_LEAVES};
pub use parse::{parse, parse_document, SmilesDocument, SmilesError, SmilesErrorKind};
pub use write::write;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmilesGraphError {
    #[error(transparent)]
    Syntax(#[from] SmilesError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

/// Parses and encodes into `vocab` tokens.
pub fn parse_graph(text: &str, vocab: &Vocabulary) -> Result<MolGraph, SmilesGraphError> {
    let mol = parse(text)?;
    Ok(dae_encode(&mol, vocab)?)
}

pub fn write_graph(g: &MolGraph, vocab: &Vocabulary) -> Result<String, EncodeError> {
    Ok(write(&g.to_molecule(vocab)?))
}

/// One `.smi` record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmiRecord {
    /// 1-based line number.
    pub line: usize,
    pub smiles: String,
    pub name: Option<String>,
}

/// Splits `.smi` text into records, skipping blank lines and `#` comments.
pub fn read_smi(text: &str) -> Vec<SmiRecord> {
    text.lines()
        .enumerate()
        .filter_map(|(k, line)| {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                return None;
            }
            let mut parts = line.splitn(2, char::is_whitespace);
            let smiles = parts.next()?.to_string();
            let name = parts.next().map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
            Some(SmiRecord {
                line: k + 1,
                smiles,
                name,
            })
        })
        .collect()
}

type AtomLabel = (u8, bool, i8, u8);

fn labels(m: &Molecule) -> Vec<AtomLabel> {
    (0..m.atom_count())
        .map(|i| {
            let a = m.atom(i);
            (a.element.atomic_number(), a.aromatic, a.charge, hydrogen_count(m, i))
        })
        .collect()
}

/// Exhaustive isomorphism test by backtracking over label-preserving maps.
///
/// Atoms match on element, aromaticity, charge and total hydrogens; bonds on type.
pub fn brute_force_isomorphic(a: &Molecule, b: &Molecule) -> bool {
    let n = a.atom_count();
    if n != b.atom_count() || a.bond_count() != b.bond_count() {
        return false;
    }
    let la = labels(a);
    let lb = labels(b);
    let mut sa = la.clone();
    let mut sb = lb.clone();
    sa.sort_unstable();
    sb.sort_unstable();
    if sa != sb {
        return false;
    }
    let mut map = vec![usize::MAX; n];
    let mut used = vec![false; n];
    extend(a, b, &la, &lb, 0, &mut map, &mut used)
}

fn extend(
    a: &Molecule,
    b: &Molecule,
    la: &[AtomLabel],
    lb: &[AtomLabel],
    i: usize,
    map: &mut [usize],
    used: &mut [bool],
) -> bool {
    if i == map.len() {
        return true;
    }
    for j in 0..map.len() {
        if used[j] || la[i] != lb[j] || a.degree(i) != b.degree(j) {
            continue;
        }
        let consistent = (0..i).all(|k| a.bond(i, k) == b.bond(j, map[k]));
        if !consistent {
            continue;
        }
        map[i] = j;
        used[j] = true;
        if extend(a, b, la, lb, i + 1, map, used) {
            return true;
        }
        used[j] = false;
    }
    map[i] = usize::MAX;
    false
}
