use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::molgraph::{Atom, BondType, Element, Hydrogens, Molecule};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SmilesErrorKind {
    Empty,
    UnexpectedChar(char),
    UnexpectedEnd,
    UnknownElement(String),
    NotAromatic(String),
    BadCharge,
    BadHydrogenCount,
    Stereo,
    Isotope,
    Wildcard,
    AtomClass,
    DanglingBond,
    UnclosedBranch,
    UnmatchedParen,
    UnclosedRing(u32),
    ConflictingRingBond(u32),
    SelfBond,
    DuplicateBond,
}

impl fmt::Display for SmilesErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use SmilesErrorKind::*;
        match self {
            Empty => f.write_str("empty input"),
            UnexpectedChar(c) => write!(f, "unexpected character {c:?}"),
            UnexpectedEnd => f.write_str("unexpected end of input"),
            UnknownElement(s) => write!(f, "unsupported element {s:?}"),
            NotAromatic(s) => write!(f, "{s:?} cannot be aromatic"),
            BadCharge => f.write_str("charge magnitude must be 1 to 3"),
            BadHydrogenCount => f.write_str("invalid hydrogen count"),
            Stereo => f.write_str("stereochemistry is not supported"),
            Isotope => f.write_str("isotopes are not supported"),
            Wildcard => f.write_str("wildcard atoms are not supported"),
            AtomClass => f.write_str("atom classes are not supported"),
            DanglingBond => f.write_str("bond symbol without a following atom"),
            UnclosedBranch => f.write_str("unclosed branch"),
            UnmatchedParen => f.write_str("unmatched ')'"),
            UnclosedRing(n) => write!(f, "ring bond {n} is never closed"),
            ConflictingRingBond(n) => write!(f, "ring bond {n} has conflicting bond symbols"),
            SelfBond => f.write_str("ring bond closes on its own atom"),
            DuplicateBond => f.write_str("atoms are already bonded"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("SMILES error at position {position}: {kind}")]
pub struct SmilesError {
    pub position: usize,
    pub kind: SmilesErrorKind,
}

/// Parsed text with the source offset of every atom.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmilesDocument {
    pub source: String,
    pub molecule: Molecule,
    /// `positions[k]` is the byte offset where atom `k` starts.
    pub positions: Vec<usize>,
}

pub fn parse(text: &str) -> Result<Molecule, SmilesError> {
    parse_document(text).map(|d| d.molecule)
}

pub fn parse_document(text: &str) -> Result<SmilesDocument, SmilesError> {
    let mut p = Parser {
        s: text.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        positions: Vec::new(),
        bonds: Vec::new(),
        bonded: BTreeSet::new(),
    };
    p.run()?;
    let molecule = p.finish();
    Ok(SmilesDocument {
        source: text.to_string(),
        molecule,
        positions: p.positions,
    })
}

struct PendingBond {
    kind: BondType,
    position: usize,
}

struct RingOpen {
    atom: usize,
    bond: Option<BondType>,
    position: usize,
}

struct ParsedBond {
    a: usize,
    b: usize,
    kind: BondType,
    explicit: bool,
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    positions: Vec<usize>,
    bonds: Vec<ParsedBond>,
    bonded: BTreeSet<(usize, usize)>,
}

fn err<T>(position: usize, kind: SmilesErrorKind) -> Result<T, SmilesError> {
    Err(SmilesError { position, kind })
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn peek_at(&self, k: usize) -> Option<u8> {
        self.s.get(self.pos + k).copied()
    }

    fn default_bond(&self, a: usize, b: usize) -> BondType {
        if self.atoms[a].aromatic && self.atoms[b].aromatic {
            BondType::Aromatic
        } else {
            BondType::Single
        }
    }

    fn connect(&mut self, a: usize, b: usize, bond: Option<BondType>, position: usize) -> Result<(), SmilesError> {
        if a == b {
            return err(position, SmilesErrorKind::SelfBond);
        }
        let key = (a.min(b), a.max(b));
        if !self.bonded.insert(key) {
            return err(position, SmilesErrorKind::DuplicateBond);
        }
        let kind = bond.unwrap_or_else(|| self.default_bond(a, b));
        self.bonds.push(ParsedBond {
            a,
            b,
            kind,
            explicit: bond.is_some(),
        });
        Ok(())
    }

    fn run(&mut self) -> Result<(), SmilesError> {
        if self.s.is_empty() {
            return err(0, SmilesErrorKind::Empty);
        }
        let mut prev: Option<usize> = None;
        let mut branches: Vec<(Option<usize>, usize)> = Vec::new();
        let mut pending: Option<PendingBond> = None;
        let mut rings: BTreeMap<u32, RingOpen> = BTreeMap::new();
        while let Some(c) = self.peek() {
            let at = self.pos;
            match c {
                b'[' | b'A'..=b'Z' | b'a'..=b'z' => {
                    let atom = if c == b'[' {
                        self.bracket_atom()?
                    } else {
                        self.organic_atom()?
                    };
                    let idx = self.atoms.len();
                    self.atoms.push(atom);
                    self.positions.push(at);
                    if let Some(p) = prev {
                        let bond = pending.take().map(|b| b.kind);
                        self.connect(p, idx, bond, at)?;
                    } else if let Some(b) = pending.take() {
                        return err(b.position, SmilesErrorKind::DanglingBond);
                    }
                    prev = Some(idx);
                }
                b'(' => {
                    if prev.is_none() {
                        return err(at, SmilesErrorKind::UnexpectedChar('('));
                    }
                    if let Some(b) = pending.take() {
                        return err(b.position, SmilesErrorKind::DanglingBond);
                    }
                    branches.push((prev, at));
                    self.pos += 1;
                }
                b')' => {
                    if let Some(b) = pending.take() {
                        return err(b.position, SmilesErrorKind::DanglingBond);
                    }
                    let Some((p, _)) = branches.pop() else {
                        return err(at, SmilesErrorKind::UnmatchedParen);
                    };
                    prev = p;
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' => {
                    if prev.is_none() || pending.is_some() {
                        return err(at, SmilesErrorKind::UnexpectedChar(c as char));
                    }
                    let kind = match c {
                        b'-' => BondType::Single,
                        b'=' => BondType::Double,
                        b'#' => BondType::Triple,
                        _ => BondType::Aromatic,
                    };
                    pending = Some(PendingBond { kind, position: at });
                    self.pos += 1;
                }
                b'/' | b'\\' => return err(at, SmilesErrorKind::Stereo),
                b'*' => return err(at, SmilesErrorKind::Wildcard),
                b'0'..=b'9' | b'%' => {
                    let Some(p) = prev else {
                        return err(at, SmilesErrorKind::UnexpectedChar(c as char));
                    };
                    let n = self.ring_number()?;
                    let bond = pending.take().map(|b| b.kind);
                    match rings.remove(&n) {
                        Some(open) => {
                            let kind = match (open.bond, bond) {
                                (Some(x), Some(y)) if x != y => {
                                    return err(at, SmilesErrorKind::ConflictingRingBond(n));
                                }
                                (x, y) => x.or(y),
                            };
                            self.connect(open.atom, p, kind, at)?;
                        }
                        None => {
                            rings.insert(
                                n,
                                RingOpen {
                                    atom: p,
                                    bond,
                                    position: at,
                                },
                            );
                        }
                    }
                }
                b'.' => {
                    if prev.is_none() || pending.is_some() {
                        return err(at, SmilesErrorKind::UnexpectedChar('.'));
                    }
                    prev = None;
                    self.pos += 1;
                }
                _ => return err(at, SmilesErrorKind::UnexpectedChar(c as char)),
            }
        }
        if let Some(b) = pending {
            return err(b.position, SmilesErrorKind::DanglingBond);
        }
        if let Some(&(_, at)) = branches.last() {
            return err(at, SmilesErrorKind::UnclosedBranch);
        }
        if let Some((&n, open)) = rings.iter().next() {
            return err(open.position, SmilesErrorKind::UnclosedRing(n));
        }
        if prev.is_none() {
            return err(self.pos, SmilesErrorKind::UnexpectedEnd);
        }
        Ok(())
    }

    fn ring_number(&mut self) -> Result<u32, SmilesError> {
        let at = self.pos;
        if self.peek() == Some(b'%') {
            let (Some(a), Some(b)) = (self.peek_at(1), self.peek_at(2)) else {
                return err(at, SmilesErrorKind::UnexpectedEnd);
            };
            if !a.is_ascii_digit() || !b.is_ascii_digit() {
                return err(at, SmilesErrorKind::UnexpectedChar('%'));
            }
            self.pos += 3;
            return Ok(u32::from(a - b'0') * 10 + u32::from(b - b'0'));
        }
        let d = self.peek().unwrap();
        self.pos += 1;
        Ok(u32::from(d - b'0'))
    }

    fn organic_atom(&mut self) -> Result<Atom, SmilesError> {
        let at = self.pos;
        let c = self.peek().unwrap();
        let two = self.peek_at(1);
        let (element, aromatic, len) = match (c, two) {
            (b'C', Some(b'l')) => (Element::Cl, false, 2),
            (b'B', Some(b'r')) => (Element::Br, false, 2),
            (b'B', _) => (Element::B, false, 1),
            (b'C', _) => (Element::C, false, 1),
            (b'N', _) => (Element::N, false, 1),
            (b'O', _) => (Element::O, false, 1),
            (b'P', _) => (Element::P, false, 1),
            (b'S', _) => (Element::S, false, 1),
            (b'F', _) => (Element::F, false, 1),
            (b'I', _) => (Element::I, false, 1),
            (b'b', _) => (Element::B, true, 1),
            (b'c', _) => (Element::C, true, 1),
            (b'n', _) => (Element::N, true, 1),
            (b'o', _) => (Element::O, true, 1),
            (b'p', _) => (Element::P, true, 1),
            (b's', _) => (Element::S, true, 1),
            _ => return err(at, SmilesErrorKind::UnexpectedChar(c as char)),
        };
        self.pos += len;
        Ok(Atom {
            element,
            aromatic,
            charge: 0,
            hydrogens: Hydrogens::Implicit,
        })
    }

    fn bracket_atom(&mut self) -> Result<Atom, SmilesError> {
        let open = self.pos;
        self.pos += 1;
        let at = self.pos;
        let Some(c) = self.peek() else {
            return err(at, SmilesErrorKind::UnexpectedEnd);
        };
        if c.is_ascii_digit() {
            return err(at, SmilesErrorKind::Isotope);
        }
        if c == b'*' {
            return err(at, SmilesErrorKind::Wildcard);
        }
        let (element, aromatic) = if c.is_ascii_uppercase() {
            let mut sym = String::from(c as char);
            if let Some(l) = self.peek_at(1).filter(u8::is_ascii_lowercase) {
                sym.push(l as char);
            }
            match Element::from_symbol(&sym) {
                Some(e) => {
                    self.pos += sym.len();
                    (e, false)
                }
                None => return err(at, SmilesErrorKind::UnknownElement(sym)),
            }
        } else if c.is_ascii_lowercase() {
            let sym2: String = self.s[at..(at + 2).min(self.s.len())]
                .iter()
                .map(|&b| b as char)
                .collect();
            if let Some(e) = Element::from_aromatic_symbol(&sym2) {
                self.pos += 2;
                (e, true)
            } else if let Some(e) = Element::from_aromatic_symbol(&(c as char).to_string()) {
                self.pos += 1;
                (e, true)
            } else {
                let upper = sym2[..1].to_uppercase() + &sym2[1..];
                let known = Element::from_symbol(&upper).or_else(|| Element::from_symbol(&upper[..1]));
                return match known {
                    Some(e) => err(at, SmilesErrorKind::NotAromatic(e.symbol().to_string())),
                    None => err(at, SmilesErrorKind::UnknownElement(sym2)),
                };
            }
        } else {
            return err(at, SmilesErrorKind::UnexpectedChar(c as char));
        };
        if self.peek() == Some(b'@') {
            return err(self.pos, SmilesErrorKind::Stereo);
        }
        let mut h = 0u8;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            let start = self.pos;
            while self.peek().is_some_and(|d| d.is_ascii_digit()) {
                self.pos += 1;
            }
            if self.pos > start {
                let digits = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
                h = digits.parse().ok().filter(|&v| v <= 8).ok_or(SmilesError {
                    position: start,
                    kind: SmilesErrorKind::BadHydrogenCount,
                })?;
            } else {
                h = 1;
            }
        }
        let mut charge: i32 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let cstart = self.pos;
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            let mut mag = 1;
            if self.peek().is_some_and(|d| d.is_ascii_digit()) {
                let start = self.pos;
                while self.peek().is_some_and(|d| d.is_ascii_digit()) {
                    self.pos += 1;
                }
                mag = std::str::from_utf8(&self.s[start..self.pos])
                    .unwrap()
                    .parse()
                    .unwrap_or(99);
            } else {
                while self.peek() == Some(sign) {
                    mag += 1;
                    self.pos += 1;
                }
            }
            if !(1..=3).contains(&mag) {
                return err(cstart, SmilesErrorKind::BadCharge);
            }
            charge = unit * mag;
        }
        match self.peek() {
            Some(b']') => self.pos += 1,
            Some(b':') => return err(self.pos, SmilesErrorKind::AtomClass),
            Some(b'@') => return err(self.pos, SmilesErrorKind::Stereo),
            Some(c) => return err(self.pos, SmilesErrorKind::UnexpectedChar(c as char)),
            None => return err(open, SmilesErrorKind::UnexpectedEnd),
        }
        Ok(Atom {
            element,
            aromatic,
            charge: charge as i8,
            hydrogens: Hydrogens::Explicit(h),
        })
    }

    /// Builds the molecule; implicit aromatic bonds that do not lie on an
    /// aromatic cycle become single bonds, as between two linked rings.
    fn finish(&self) -> Molecule {
        let build = |bonds: &[(usize, usize, BondType)]| {
            let mut m = Molecule::new();
            for &a in &self.atoms {
                m.add_atom(a);
            }
            for &(a, b, k) in bonds {
                m.add_bond(a, b, k).expect("parser rejects duplicate bonds");
            }
            m
        };
        let raw: Vec<_> = self.bonds.iter().map(|b| (b.a, b.b, b.kind)).collect();
        let draft = build(&raw);
        let fixed: Vec<_> = self
            .bonds
            .iter()
            .map(|b| {
                let demote = !b.explicit
                    && b.kind == BondType::Aromatic
                    && !crate::molgraph::on_aromatic_cycle(&draft, b.a, b.b);
                (b.a, b.b, if demote { BondType::Single } else { b.kind })
            })
            .collect();
        build(&fixed)
    }
}
