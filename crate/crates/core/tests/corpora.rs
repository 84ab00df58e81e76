use std::collections::BTreeSet;

use hddm::molgraph::{dae_decode, dae_encode, sanitize, Vocabulary};
use hddm::smiles::{brute_force_isomorphic, canonical_form, parse, read_smi, write};

const MOSES: &str = include_str!("../data/corpora/moses_200.smi");
const GUACAMOL: &str = include_str!("../data/corpora/guacamol_200.smi");

fn corpus(text: &str) -> Vec<String> {
    read_smi(text).into_iter().map(|r| r.smiles).collect()
}

fn check(text: &str, vocab: &Vocabulary) {
    let smiles = corpus(text);
    assert_eq!(smiles.len(), 200);
    let mut seen_tokens = BTreeSet::new();
    let mut forms = BTreeSet::new();
    for s in &smiles {
        let m = parse(s).unwrap_or_else(|e| panic!("{s}: {e}"));
        let report = sanitize(&m);
        assert!(report.is_valid(), "{s}: {report}");
        let g = dae_encode(&m, vocab).unwrap_or_else(|e| panic!("{s}: {e}"));
        let back = dae_decode(&g, vocab).unwrap();
        assert_eq!(dae_encode(&back, vocab).unwrap(), g, "{s}");
        seen_tokens.extend(g.tokens.iter().copied());
        let w = write(&m);
        assert!(brute_force_isomorphic(&parse(&w).unwrap(), &m), "{s} -> {w}");
        assert!(forms.insert(canonical_form(&m)), "duplicate molecule {s}");
    }
    let missing: Vec<_> = (0..vocab.len())
        .filter(|t| !seen_tokens.contains(t))
        .map(|t| vocab.get(t).unwrap().name.clone())
        .collect();
    assert!(missing.is_empty(), "tokens never used: {missing:?}");
}

#[test]
fn moses_corpus_is_clean() {
    check(MOSES, &Vocabulary::moses());
}

#[test]
fn guacamol_corpus_is_clean() {
    check(GUACAMOL, &Vocabulary::guacamol());
}

#[test]
fn every_moses_molecule_fits_the_larger_vocabulary() {
    let g = Vocabulary::guacamol();
    for s in corpus(MOSES) {
        assert!(dae_encode(&parse(&s).unwrap(), &g).is_ok(), "{s}");
    }
}
