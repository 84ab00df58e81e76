use std::collections::BTreeMap;

use super::parse::{parse, SmilesError};
use super::write::write_ranked;
use crate::molgraph::{hydrogen_count, Molecule};

/// Upper bound on explored labelings per component.
pub const MAX_CANONICAL_LEAVES: usize = 20_000;

/// Canonical SMILES: identical for isomorphic molecules.
pub fn canonical_form(mol: &Molecule) -> String {
    let mut parts: Vec<String> = mol
        .components()
        .iter()
        .map(|comp| canonical_component(&mol.induced(comp)))
        .collect();
    parts.sort();
    parts.join(".")
}

pub fn canonical_smiles(text: &str) -> Result<String, SmilesError> {
    parse(text).map(|m| canonical_form(&m))
}

type Invariant = (u8, bool, i8, u8, usize);

fn invariants(mol: &Molecule) -> Vec<Invariant> {
    (0..mol.atom_count())
        .map(|i| {
            let a = mol.atom(i);
            (
                a.element.atomic_number(),
                a.aromatic,
                a.charge,
                hydrogen_count(mol, i),
                mol.degree(i),
            )
        })
        .collect()
}

fn dense_ranks<K: Ord + Clone>(keys: &[K]) -> Vec<usize> {
    let mut sorted: Vec<K> = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    keys.iter().map(|k| sorted.binary_search(k).unwrap()).collect()
}

fn refine(mol: &Molecule, mut classes: Vec<usize>) -> Vec<usize> {
    let mut count = classes.iter().collect::<std::collections::BTreeSet<_>>().len();
    loop {
        let keys: Vec<(usize, Vec<(usize, usize)>)> = (0..mol.atom_count())
            .map(|i| {
                let mut nb: Vec<(usize, usize)> =
                    mol.neighbors(i).iter().map(|&(j, k)| (k.index(), classes[j])).collect();
                nb.sort_unstable();
                (classes[i], nb)
            })
            .collect();
        let next = dense_ranks(&keys);
        let next_count = next.iter().max().map_or(0, |m| m + 1);
        classes = next;
        if next_count == count {
            return classes;
        }
        count = next_count;
    }
}

/// `a` and `b` have the same bonds to every other atom, so swapping them is an automorphism.
fn twins(mol: &Molecule, a: usize, b: usize) -> bool {
    let side = |x: usize, other: usize| {
        let mut v: Vec<_> = mol
            .neighbors(x)
            .iter()
            .filter(|&&(j, _)| j != other)
            .map(|&(j, k)| (j, k))
            .collect();
        v.sort_unstable();
        v
    };
    side(a, b) == side(b, a)
}

struct Search<'a> {
    mol: &'a Molecule,
    best: Option<String>,
    leaves: usize,
}

impl Search<'_> {
    fn run(&mut self, classes: Vec<usize>) {
        let classes = refine(self.mol, classes);
        let n = classes.len();
        let mut cells: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &c) in classes.iter().enumerate() {
            cells.entry(c).or_default().push(i);
        }
        if cells.len() == n {
            let start = (0..n).min_by_key(|&i| classes[i]).unwrap();
            let s = write_ranked(self.mol, start, &classes);
            if self.best.as_ref().map_or(true, |b| s < *b) {
                self.best = Some(s);
            }
            self.leaves += 1;
            return;
        }
        let (_, cell) = cells
            .iter()
            .filter(|(_, m)| m.len() > 1)
            .min_by_key(|(c, m)| (m.len(), **c))
            .unwrap();
        let mut tried: Vec<usize> = Vec::new();
        for &a in cell {
            if self.leaves >= MAX_CANONICAL_LEAVES {
                return;
            }
            if tried.iter().any(|&b| twins(self.mol, a, b)) {
                continue;
            }
            tried.push(a);
            let mut next: Vec<usize> = classes.iter().map(|&c| 2 * c + 1).collect();
            next[a] -= 1;
            self.run(next);
        }
    }
}

fn canonical_component(mol: &Molecule) -> String {
    if mol.atom_count() == 0 {
        return String::new();
    }
    let mut search = Search {
        mol,
        best: None,
        leaves: 0,
    };
    search.run(dense_ranks(&invariants(mol)));
    search.best.expect("at least one labeling")
}
