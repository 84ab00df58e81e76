//! Generation metrics: validity, uniqueness, novelty, scaffold statistics,
//! Morgan fingerprints, internal diversity and Hit@K.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::molgraph::{hydrogen_count, sanitize, Hydrogens, Molecule};
use crate::smiles::{canonical_form, parse};

pub const SCHEMA_VERSION: u32 = 1;
pub const MORGAN_RADIUS: usize = 2;
pub const MORGAN_BITS: usize = 2048;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("{samples} sample sets for {truths} targets")]
    LengthMismatch { samples: usize, truths: usize },
    #[error("sample set {index} has {found} entries, expected {expected}")]
    RaggedSamples {
        index: usize,
        expected: usize,
        found: usize,
    },
}

/// Parses and sanitizes; `None` for anything invalid.
pub fn valid_molecule(smiles: &str) -> Option<Molecule> {
    let m = parse(smiles).ok()?;
    sanitize(&m).is_valid().then_some(m)
}

fn canonical_set(smiles: &[String]) -> BTreeSet<String> {
    smiles
        .par_iter()
        .filter_map(|s| valid_molecule(s).map(|m| canonical_form(&m)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasicMetrics {
    pub n_total: usize,
    pub n_valid: usize,
    pub n_unique: usize,
    pub validity: f64,
    /// Distinct valid molecules over valid molecules.
    pub uniqueness: f64,
    /// Distinct valid molecules absent from training, over distinct valid molecules.
    pub novelty: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn basic_metrics(gen: &[String], train: &[String]) -> BasicMetrics {
    let canon: Vec<Option<String>> = gen
        .par_iter()
        .map(|s| valid_molecule(s).map(|m| canonical_form(&m)))
        .collect();
    let valid: Vec<&String> = canon.iter().flatten().collect();
    let unique: BTreeSet<&String> = valid.iter().copied().collect();
    let train = canonical_set(train);
    let novel = unique.iter().filter(|s| !train.contains(**s)).count();
    BasicMetrics {
        n_total: gen.len(),
        n_valid: valid.len(),
        n_unique: unique.len(),
        validity: ratio(valid.len(), gen.len()),
        uniqueness: ratio(unique.len(), valid.len()),
        novelty: ratio(novel, unique.len()),
    }
}

/// Ring systems plus linkers: atoms of degree at most one are removed until none remain.
///
/// Aromatic atoms and atoms with an explicit hydrogen count gain one hydrogen
/// per lost bond order; other atoms are refilled by the valence rules.
pub fn murcko_scaffold(mol: &Molecule) -> Molecule {
    let n = mol.atom_count();
    let mut alive = vec![true; n];
    let mut degree: Vec<usize> = (0..n).map(|i| mol.degree(i)).collect();
    let mut lost = vec![0u32; n];
    let mut queue: Vec<usize> = (0..n).filter(|&i| degree[i] <= 1).collect();
    while let Some(u) = queue.pop() {
        if !alive[u] {
            continue;
        }
        alive[u] = false;
        for &(v, k) in mol.neighbors(u) {
            if alive[v] {
                degree[v] -= 1;
                lost[v] += k.order();
                if degree[v] == 1 {
                    queue.push(v);
                }
            }
        }
    }
    let keep: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();
    let mut out = mol.induced(&keep);
    for (k, &i) in keep.iter().enumerate() {
        let atom = mol.atom(i);
        if lost[i] > 0 && (atom.aromatic || matches!(atom.hydrogens, Hydrogens::Explicit(_))) {
            let total = u32::from(hydrogen_count(mol, i)) + lost[i];
            out.atom_mut(k).hydrogens = Hydrogens::Explicit(total.min(u32::from(u8::MAX)) as u8);
        }
    }
    out
}

/// Canonical scaffold string, or `None` for acyclic molecules.
pub fn scaffold_key(mol: &Molecule) -> Option<String> {
    let s = murcko_scaffold(mol);
    (!s.is_empty()).then(|| canonical_form(&s))
}

/// Scaffold frequencies over the valid molecules of `smiles`.
pub fn scaffold_counts(smiles: &[String]) -> BTreeMap<String, usize> {
    let keys: Vec<String> = smiles
        .par_iter()
        .filter_map(|s| valid_molecule(s).and_then(|m| scaffold_key(&m)))
        .collect();
    let mut counts = BTreeMap::new();
    for k in keys {
        *counts.entry(k).or_insert(0) += 1;
    }
    counts
}

/// `|S_gen \ S_train| / n_total`.
pub fn scaffold_novelty(gen: &BTreeSet<String>, train: &BTreeSet<String>, n_total: usize) -> f64 {
    ratio(gen.difference(train).count(), n_total)
}

/// `|S_gen ∩ S_test| / n_total`.
pub fn scaffold_retrieval(gen: &BTreeSet<String>, test: &BTreeSet<String>, n_total: usize) -> f64 {
    ratio(gen.intersection(test).count(), n_total)
}

/// Cosine similarity of scaffold frequency vectors over the union of keys.
pub fn scaffold_similarity(a: &BTreeMap<String, usize>, b: &BTreeMap<String, usize>) -> f64 {
    let keys: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for k in keys {
        let x = *a.get(k).unwrap_or(&0) as f64;
        let y = *b.get(k).unwrap_or(&0) as f64;
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Folded bit vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fingerprint {
    bits: usize,
    words: Vec<u64>,
}

impl Fingerprint {
    pub fn new(bits: usize) -> Self {
        Self {
            bits,
            words: vec![0; bits.div_ceil(64)],
        }
    }

    pub fn len(&self) -> usize {
        self.bits
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn set(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn ones(&self) -> Vec<usize> {
        (0..self.bits).filter(|&i| self.get(i)).collect()
    }
}

/// FNV-1a over the little-endian bytes of `words`, then a splitmix64 finalizer.
pub fn hash_words(words: &[u64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for w in words {
        for b in w.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Circular-environment fingerprint.
///
/// Radius-0 identifiers hash (atomic number, aromaticity, charge, total
/// hydrogens, degree); each further radius hashes the previous identifier
/// with the sorted (bond type, neighbour identifier) pairs.
pub fn morgan_fingerprint(mol: &Molecule, radius: usize, bits: usize) -> Fingerprint {
    let mut fp = Fingerprint::new(bits);
    if bits == 0 {
        return fp;
    }
    let n = mol.atom_count();
    let mut ids: Vec<u64> = (0..n)
        .map(|i| {
            let a = mol.atom(i);
            hash_words(&[
                u64::from(a.element.atomic_number()),
                u64::from(a.aromatic),
                (i64::from(a.charge) + 8) as u64,
                u64::from(hydrogen_count(mol, i)),
                mol.degree(i) as u64,
            ])
        })
        .collect();
    for &id in &ids {
        fp.set((id % bits as u64) as usize);
    }
    for r in 1..=radius {
        let next: Vec<u64> = (0..n)
            .map(|i| {
                let mut env: Vec<(u64, u64)> = mol
                    .neighbors(i)
                    .iter()
                    .map(|&(j, k)| (k.index() as u64, ids[j]))
                    .collect();
                env.sort_unstable();
                let mut words = vec![r as u64, ids[i]];
                words.extend(env.into_iter().flat_map(|(a, b)| [a, b]));
                hash_words(&words)
            })
            .collect();
        ids = next;
        for &id in &ids {
            fp.set((id % bits as u64) as usize);
        }
    }
    fp
}

/// Intersection over union of set bits; two empty fingerprints score 1.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> f64 {
    assert_eq!(a.bits, b.bits, "fingerprint lengths differ");
    let (mut both, mut any) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        both += (x & y).count_ones();
        any += (x | y).count_ones();
    }
    if any == 0 {
        1.0
    } else {
        f64::from(both) / f64::from(any)
    }
}

/// `1 - mean pairwise Tanimoto` over all ordered pairs, self-pairs included; 0 for an empty set.
pub fn diversity(fps: &[Fingerprint]) -> f64 {
    if fps.is_empty() {
        return 0.0;
    }
    let total: f64 = fps
        .par_iter()
        .map(|u| fps.iter().map(|v| tanimoto(u, v)).sum::<f64>())
        .sum();
    let n = fps.len() as f64;
    1.0 - total / (n * n)
}

/// Fraction of targets whose canonical truth appears among its samples.
pub fn hit_at_k(samples: &[Vec<String>], truths: &[String]) -> Result<f64, MetricsError> {
    if samples.len() != truths.len() {
        return Err(MetricsError::LengthMismatch {
            samples: samples.len(),
            truths: truths.len(),
        });
    }
    if let Some(first) = samples.first() {
        let k = first.len();
        if let Some((index, s)) = samples.iter().enumerate().find(|(_, s)| s.len() != k) {
            return Err(MetricsError::RaggedSamples {
                index,
                expected: k,
                found: s.len(),
            });
        }
    }
    let hits = samples
        .par_iter()
        .zip(truths)
        .filter(|(set, truth)| {
            let Some(t) = valid_molecule(truth).map(|m| canonical_form(&m)) else {
                return false;
            };
            set.iter()
                .any(|s| valid_molecule(s).is_some_and(|m| canonical_form(&m) == t))
        })
        .count();
    Ok(ratio(hits, truths.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub n_total: usize,
    pub n_valid: usize,
    pub n_unique: usize,
    pub validity: f64,
    pub uniqueness: f64,
    pub novelty: f64,
    pub scaf_novel: f64,
    pub scaf_ret: f64,
    pub scaf_sim: f64,
    pub diversity: f64,
    /// Present when samples are grouped per test target.
    pub hit_at_k: Option<f64>,
}

/// All metrics for `gen` against `train` and `test`.
///
/// With `k`, `gen` is read as consecutive blocks of `k` samples, block `i`
/// answering `test[i]`, and Hit@K is reported.
pub fn evaluate(
    gen: &[String],
    train: &[String],
    test: &[String],
    k: Option<usize>,
) -> Result<MetricsReport, MetricsError> {
    let basic = basic_metrics(gen, train);
    let gen_counts = scaffold_counts(gen);
    let test_counts = scaffold_counts(test);
    let gen_set: BTreeSet<String> = gen_counts.keys().cloned().collect();
    let train_set: BTreeSet<String> = scaffold_counts(train).into_keys().collect();
    let test_set: BTreeSet<String> = test_counts.keys().cloned().collect();
    let unique: Vec<Molecule> = {
        let mut seen = BTreeMap::new();
        for s in gen {
            if let Some(m) = valid_molecule(s) {
                seen.entry(canonical_form(&m)).or_insert(m);
            }
        }
        seen.into_values().collect()
    };
    let fps: Vec<Fingerprint> = unique
        .par_iter()
        .map(|m| morgan_fingerprint(m, MORGAN_RADIUS, MORGAN_BITS))
        .collect();
    let hit = match k {
        None => None,
        Some(k) => {
            if gen.len() != k * test.len() {
                return Err(MetricsError::LengthMismatch {
                    samples: gen.len().checked_div(k).unwrap_or(0),
                    truths: test.len(),
                });
            }
            let blocks: Vec<Vec<String>> = gen.chunks(k.max(1)).map(<[String]>::to_vec).collect();
            Some(hit_at_k(&blocks, test)?)
        }
    };
    Ok(MetricsReport {
        schema_version: SCHEMA_VERSION,
        n_total: basic.n_total,
        n_valid: basic.n_valid,
        n_unique: basic.n_unique,
        validity: basic.validity,
        uniqueness: basic.uniqueness,
        novelty: basic.novelty,
        scaf_novel: scaffold_novelty(&gen_set, &train_set, basic.n_total),
        scaf_ret: scaffold_retrieval(&gen_set, &test_set, basic.n_total),
        scaf_sim: scaffold_similarity(&gen_counts, &test_counts),
        diversity: diversity(&fps),
        hit_at_k: hit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smiles::canonical_smiles;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn fp(s: &str) -> Fingerprint {
        morgan_fingerprint(&parse(s).unwrap(), MORGAN_RADIUS, MORGAN_BITS)
    }

    #[test]
    fn basic_counts() {
        let train = strings(&["CCO", "c1ccccc1", "CC(=O)O"]);
        let m = basic_metrics(&strings(&["OCC", "c1ccccc1"]), &train);
        assert_eq!((m.novelty, m.uniqueness, m.validity), (0.0, 1.0, 1.0));
        let m = basic_metrics(&vec!["CCN".to_string(); 10], &train);
        assert_eq!(m.uniqueness, 0.1);
        assert_eq!(m.novelty, 1.0);
        let mixed = strings(&[
            "C",
            "CC",
            "CCC",
            "CCCC",
            "O(C)(C)C",
            "C(C)(C)(C)(C)C",
            "CO",
            "CN",
            "CF",
            "CCl",
        ]);
        let m = basic_metrics(&mixed, &train);
        assert_eq!((m.n_valid, m.validity), (8, 0.8));
        assert_eq!(basic_metrics(&strings(&["C1C", "[Xe]"]), &train).validity, 0.0);
    }

    #[test]
    fn murcko_examples() {
        let s = murcko_scaffold(&parse("CCc1ccccc1").unwrap());
        assert_eq!(canonical_form(&s), canonical_smiles("c1ccccc1").unwrap());
        assert!(murcko_scaffold(&parse("CCO").unwrap()).is_empty());
        let s = murcko_scaffold(&parse("c1ccccc1Cc1ccccc1C").unwrap());
        assert_eq!(s.atom_count(), 13);
        assert_eq!(canonical_form(&s), canonical_smiles("c1ccccc1Cc1ccccc1").unwrap());
        let s = murcko_scaffold(&parse("Cn1cccc1").unwrap());
        assert_eq!(canonical_form(&s), canonical_smiles("c1cc[nH]c1").unwrap());
        let s = murcko_scaffold(&parse("O=C1CCCCC1").unwrap());
        assert_eq!(canonical_form(&s), canonical_smiles("C1CCCCC1").unwrap());
        assert_eq!(scaffold_key(&parse("CC").unwrap()), None);
    }

    #[test]
    fn scaffold_ratios() {
        let set = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        let gen = set(&["a", "b", "c"]);
        assert_eq!(scaffold_novelty(&gen, &set(&["b"]), 4), 0.5);
        assert_eq!(scaffold_novelty(&gen, &gen, 4), 0.0);
        let test = set(&["a", "b", "c"]);
        assert_eq!(scaffold_retrieval(&gen, &test, 100), 0.03);
        let inter = gen.intersection(&set(&["b"])).count();
        assert_eq!(gen.len(), gen.difference(&set(&["b"])).count() + inter);
    }

    #[test]
    fn scaffold_cosine() {
        let a: BTreeMap<String, usize> = [("x".to_string(), 1), ("y".to_string(), 1)].into();
        let b: BTreeMap<String, usize> = [("x".to_string(), 2)].into();
        assert!((scaffold_similarity(&a, &b) - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((scaffold_similarity(&a, &a) - 1.0).abs() < 1e-15);
        assert_eq!(scaffold_similarity(&a, &BTreeMap::new()), 0.0);
    }

    #[test]
    fn fingerprint_properties() {
        assert_eq!(fp("CCO"), fp("OCC"));
        assert_eq!(tanimoto(&fp("C"), &fp("c1ccccc1")), 0.0);
        assert_eq!(tanimoto(&fp("CCO"), &fp("CCO")), 1.0);
        let empty = Fingerprint::new(MORGAN_BITS);
        assert_eq!(tanimoto(&empty, &empty), 1.0);
        let t = tanimoto(&fp("CCO"), &fp("CCN"));
        assert!(t > 0.0 && t < 1.0);
        assert_eq!(hash_words(&[1, 2, 3]), hash_words(&[1, 2, 3]));
        assert_ne!(hash_words(&[1, 2, 3]), hash_words(&[3, 2, 1]));
    }

    #[test]
    fn diversity_examples() {
        assert_eq!(diversity(&[]), 0.0);
        assert_eq!(diversity(&[fp("CCO")]), 0.0);
        assert_eq!(diversity(&[fp("C"), fp("c1ccccc1")]), 0.5);
        assert_eq!(diversity(&[fp("CCO"), fp("CCO"), fp("CCO")]), 0.0);
        let fps: Vec<_> = ["C", "CC", "c1ccccc1", "CCO", "N#N"].iter().map(|s| fp(s)).collect();
        let d = diversity(&fps);
        assert!((0.0..=1.0 - 1.0 / 5.0 + 1e-15).contains(&d));
    }

    #[test]
    fn hit_counting() {
        let truths = strings(&["CCO"; 10]);
        let mut samples = vec![strings(&["CC", "CN"]); 10];
        assert_eq!(hit_at_k(&samples, &truths).unwrap(), 0.0);
        for s in samples.iter_mut().take(3) {
            s[1] = "OCC".into();
        }
        assert_eq!(hit_at_k(&samples, &truths).unwrap(), 0.3);
        assert_eq!(hit_at_k(&vec![strings(&["OCC"]); 10], &truths).unwrap(), 1.0);
        assert!(hit_at_k(&samples[..2], &truths).is_err());
    }

    #[test]
    fn report_is_permutation_invariant() {
        let gen = strings(&["CCc1ccccc1", "OCC", "C1CCCCC1", "[Xe]", "c1ccccc1Cc1ccccc1"]);
        let train = strings(&["c1ccccc1", "CCO"]);
        let test = strings(&["C1CCCCC1C", "Cc1ccccc1"]);
        let a = evaluate(&gen, &train, &test, None).unwrap();
        let mut rev = gen.clone();
        rev.reverse();
        let rewritten: Vec<String> = rev
            .iter()
            .map(|s| canonical_smiles(s).unwrap_or_else(|_| s.clone()))
            .collect();
        let b = evaluate(&rewritten, &train, &test, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_valid, 4);
        assert_eq!(a.scaf_novel, 2.0 / 5.0);
        assert_eq!(a.scaf_ret, 2.0 / 5.0);
        assert_eq!(a.schema_version, SCHEMA_VERSION);
    }
}
