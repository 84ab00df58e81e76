//! Decoupled atom tokens, the bundled vocabularies and their grouping tables.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{charge_suffix, hydrogen_count, implied_hydrogens, Atom, Element, Hydrogens, Molecule};
use crate::hierarchy::{Hierarchy, HierarchyConfig, HierarchyError, ProjectionKernel};

const MOSES_TOML: &str = include_str!("../../data/moses.toml");
const GUACAMOL_TOML: &str = include_str!("../../data/guacamol.toml");

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VocabError {
    #[error("cannot parse atom token {0:?}")]
    BadToken(String),
    #[error("token {0:?} listed more than once")]
    DuplicateToken(String),
    #[error("unknown vocabulary {0:?}")]
    UnknownVocabulary(String),
    #[error("grouping table covers {found} tokens, vocabulary has {expected}")]
    TableSize { expected: usize, found: usize },
    #[error("grouping: {0}")]
    Hierarchy(#[from] HierarchyError),
}

/// How a token determines its hydrogen count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HydrogenRule {
    /// Filled from the valence rules given the bonds.
    Implicit,
    /// Locked to this many hydrogens.
    Fixed(u8),
}

/// One vocabulary entry: element, aromaticity, formal charge and hydrogen rule.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DaeToken {
    pub name: String,
    pub element: Element,
    pub aromatic: bool,
    pub charge: i8,
    pub hydrogens: HydrogenRule,
}

impl DaeToken {
    pub fn to_atom(&self) -> Atom {
        Atom {
            element: self.element,
            aromatic: self.aromatic,
            charge: self.charge,
            hydrogens: match self.hydrogens {
                HydrogenRule::Implicit => Hydrogens::Implicit,
                HydrogenRule::Fixed(h) => Hydrogens::Explicit(h),
            },
        }
    }

    /// Whether atom `i` of `mol` is represented by this token.
    pub fn matches(&self, mol: &Molecule, i: usize) -> bool {
        let a = mol.atom(i);
        if a.element != self.element || a.aromatic != self.aromatic || a.charge != self.charge {
            return false;
        }
        let h = hydrogen_count(mol, i);
        match self.hydrogens {
            HydrogenRule::Fixed(f) => h == f,
            HydrogenRule::Implicit => h == implied_hydrogens(mol, i),
        }
    }
}

impl FromStr for DaeToken {
    type Err = VocabError;

    /// Notation: element symbol (lowercase when aromatic), optional `H` with
    /// count, then an optional charge such as `+`, `-` or `+2`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || VocabError::BadToken(s.to_string());
        let mut rest = s;
        let mut found = None;
        for len in [2, 1] {
            let Some(head) = rest.get(..len) else { continue };
            if let Some(e) = Element::from_symbol(head) {
                found = Some((e, false));
            } else if let Some(e) = Element::from_aromatic_symbol(head) {
                found = Some((e, true));
            }
            if found.is_some() {
                rest = &rest[len..];
                break;
            }
        }
        let (element, aromatic) = found.ok_or_else(bad)?;
        let mut h = None;
        if let Some(r) = rest.strip_prefix('H') {
            let digits: String = r.chars().take_while(char::is_ascii_digit).collect();
            h = Some(if digits.is_empty() {
                1
            } else {
                digits.parse().map_err(|_| bad())?
            });
            rest = &r[digits.len()..];
        }
        let charge: i8 = match rest.chars().next() {
            None => 0,
            Some(c @ ('+' | '-')) => {
                let mag = &rest[1..];
                let m: i8 = if mag.is_empty() {
                    1
                } else {
                    mag.parse().map_err(|_| bad())?
                };
                if !(1..=3).contains(&m) {
                    return Err(bad());
                }
                if c == '+' {
                    m
                } else {
                    -m
                }
            }
            Some(_) => return Err(bad()),
        };
        let hydrogens = match (h, charge, aromatic, element) {
            (Some(h), _, _, _) => HydrogenRule::Fixed(h),
            (None, 0, true, Element::N) => HydrogenRule::Fixed(0),
            (None, 0, _, _) => HydrogenRule::Implicit,
            (None, _, _, _) => HydrogenRule::Fixed(0),
        };
        Ok(DaeToken {
            name: s.to_string(),
            element,
            aromatic,
            charge,
            hydrogens,
        })
    }
}

impl fmt::Display for DaeToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Deterministic token-to-group map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupingTable {
    pub assignment: Vec<usize>,
    pub groups: Vec<Vec<String>>,
}

impl GroupingTable {
    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn group_of(&self, token: usize) -> Option<usize> {
        self.assignment.get(token).copied()
    }
}

/// Ordered token list with its grouping table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    name: String,
    version: u32,
    tokens: Vec<DaeToken>,
    index: BTreeMap<String, usize>,
    table: GroupingTable,
}

impl Vocabulary {
    pub fn moses() -> Self {
        Self::from_toml_str(MOSES_TOML).expect("bundled vocabulary parses")
    }

    pub fn guacamol() -> Self {
        Self::from_toml_str(GUACAMOL_TOML).expect("bundled vocabulary parses")
    }

    pub fn by_name(name: &str) -> Result<Self, VocabError> {
        match name {
            "moses" => Ok(Self::moses()),
            "guacamol" => Ok(Self::guacamol()),
            other => Err(VocabError::UnknownVocabulary(other.to_string())),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, VocabError> {
        Self::from_config(&HierarchyConfig::from_toml_str(text)?)
    }

    pub fn from_config(config: &HierarchyConfig) -> Result<Self, VocabError> {
        let mut index = BTreeMap::new();
        let mut tokens = Vec::with_capacity(config.clean_tokens.len());
        for (i, name) in config.clean_tokens.iter().enumerate() {
            let t: DaeToken = name.parse()?;
            if index.insert(name.clone(), i).is_some() {
                return Err(VocabError::DuplicateToken(name.clone()));
            }
            if tokens.iter().any(|o: &DaeToken| {
                o.element == t.element && o.aromatic == t.aromatic && o.charge == t.charge && o.hydrogens == t.hydrogens
            }) {
                return Err(VocabError::DuplicateToken(name.clone()));
            }
            tokens.push(t);
        }
        let assignment = config.assignment()?;
        Ok(Self {
            name: config.name.clone(),
            version: config.version,
            tokens,
            index,
            table: GroupingTable {
                assignment,
                groups: config.groups.clone(),
            },
        })
    }

    pub fn to_config(&self) -> HierarchyConfig {
        HierarchyConfig {
            name: self.name.clone(),
            version: self.version,
            clean_tokens: self.tokens.iter().map(|t| t.name.clone()).collect(),
            groups: self.table.groups.clone(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[DaeToken] {
        &self.tokens
    }

    pub fn get(&self, i: usize) -> Option<&DaeToken> {
        self.tokens.get(i)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn grouping(&self) -> &GroupingTable {
        &self.table
    }

    /// Token representing atom `i` of `mol`, if any.
    pub fn lookup(&self, mol: &Molecule, i: usize) -> Option<usize> {
        self.tokens.iter().position(|t| t.matches(mol, i))
    }

    /// Two-level hierarchy with this vocabulary's grouping.
    pub fn hierarchy(&self) -> Result<Hierarchy, VocabError> {
        let phi = grouping_kernel(self, &self.table)?;
        Ok(Hierarchy::two_level(self.len(), phi)?)
    }
}

/// One-hot `K x G` kernel of a grouping table.
pub fn grouping_kernel(vocab: &Vocabulary, table: &GroupingTable) -> Result<ProjectionKernel, VocabError> {
    if table.assignment.len() != vocab.len() {
        return Err(VocabError::TableSize {
            expected: vocab.len(),
            found: table.assignment.len(),
        });
    }
    Ok(ProjectionKernel::from_assignment(
        &table.assignment,
        table.group_count(),
    )?)
}

/// Canonical notation for an atom state, matching the token naming scheme.
pub fn token_notation(element: Element, aromatic: bool, h: Option<u8>, charge: i8) -> String {
    let sym = if aromatic {
        element.aromatic_symbol().unwrap_or(element.symbol()).to_string()
    } else {
        element.symbol().to_string()
    };
    let hs = match h {
        None | Some(0) => String::new(),
        Some(1) => "H".into(),
        Some(n) => format!("H{n}"),
    };
    format!("{sym}{hs}{}", charge_suffix(charge))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_notation_parses() {
        let t: DaeToken = "NH3+".parse().unwrap();
        assert_eq!(
            (t.element, t.aromatic, t.charge, t.hydrogens),
            (Element::N, false, 1, HydrogenRule::Fixed(3))
        );
        let t: DaeToken = "se+".parse().unwrap();
        assert_eq!((t.element, t.aromatic, t.charge), (Element::Se, true, 1));
        let t: DaeToken = "Br+2".parse().unwrap();
        assert_eq!(
            (t.element, t.charge, t.hydrogens),
            (Element::Br, 2, HydrogenRule::Fixed(0))
        );
        let t: DaeToken = "n".parse().unwrap();
        assert_eq!(t.hydrogens, HydrogenRule::Fixed(0));
        let t: DaeToken = "Cl".parse().unwrap();
        assert_eq!((t.element, t.hydrogens), (Element::Cl, HydrogenRule::Implicit));
        for bad in ["X", "f", "C+4", "CH*", ""] {
            assert!(bad.parse::<DaeToken>().is_err(), "{bad}");
        }
        assert_eq!(token_notation(Element::N, false, Some(3), 1), "NH3+");
    }

    #[test]
    fn bundled_sizes_and_groups() {
        let m = Vocabulary::moses();
        assert_eq!((m.len(), m.grouping().group_count()), (12, 4));
        let g = Vocabulary::guacamol();
        assert_eq!((g.len(), g.grouping().group_count()), (56, 6));
        let h = g.hierarchy().unwrap();
        assert_eq!(h.dim(), 56 + 6 + 1);
        assert_eq!(
            Vocabulary::by_name("zinc").unwrap_err(),
            VocabError::UnknownVocabulary("zinc".into())
        );
    }

    #[test]
    fn config_round_trip() {
        let m = Vocabulary::moses();
        let text = m.to_config().to_toml_string().unwrap();
        assert_eq!(Vocabulary::from_toml_str(&text).unwrap(), m);
    }

    #[test]
    fn ungrouped_and_duplicate_tokens_rejected() {
        let mut c = Vocabulary::moses().to_config();
        c.groups[0].clear();
        c.groups[0].push("N".into());
        assert!(Vocabulary::from_config(&c).is_err());
        let mut c = Vocabulary::moses().to_config();
        c.clean_tokens.push("nH0".into());
        c.groups[3].push("nH0".into());
        assert!(matches!(
            Vocabulary::from_config(&c),
            Err(VocabError::DuplicateToken(_))
        ));
        let m = Vocabulary::moses();
        let short = GroupingTable {
            assignment: vec![0; 3],
            groups: vec![vec![]],
        };
        assert!(matches!(grouping_kernel(&m, &short), Err(VocabError::TableSize { .. })));
    }
}
