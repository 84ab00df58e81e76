//! Valence table, hydrogen filling and rule-based sanitization.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{BondType, Element, Hydrogens, Molecule};

/// Allowed total valences for `(element, charge)`.
pub fn allowed_valences(element: Element, charge: i8) -> Option<&'static [u8]> {
    use Element::*;
    let v: &'static [u8] = match (element, charge) {
        (C, 0) => &[4],
        (C, 1) | (C, -1) => &[3],
        (N, 0) => &[3],
        (N, 1) => &[4],
        (N, -1) => &[2],
        (O, 0) => &[2],
        (O, 1) => &[3],
        (O, -1) => &[1],
        (F, 0) => &[1],
        (F, 1) => &[2],
        (F, -1) => &[0],
        (Cl, 0) | (Br, 0) | (I, 0) => &[1],
        (Cl, 1) | (Br, 1) | (I, 1) => &[2, 4, 6],
        (Cl, 2) | (Br, 2) | (I, 2) => &[3, 5],
        (Cl, 3) | (Br, 3) | (I, 3) => &[4],
        (Cl, -1) | (Br, -1) | (I, -1) => &[0],
        (B, 0) => &[3],
        (B, -1) => &[4],
        (P, 0) => &[3, 5],
        (P, 1) => &[4],
        (P, -1) => &[2, 4, 6],
        (S, 0) | (Se, 0) => &[2, 4, 6],
        (S, 1) | (Se, 1) => &[3, 5],
        (S, -1) | (Se, -1) => &[1],
        (Si, 0) => &[4],
        (Si, -1) => &[3, 5],
        _ => return None,
    };
    Some(v)
}

/// `(aromatic bonds, order sum of the other bonds)` around atom `i`.
fn bond_sums(mol: &Molecule, i: usize) -> (u32, u32) {
    let mut aromatic = 0;
    let mut other = 0;
    for &(_, k) in mol.neighbors(i) {
        if k == BondType::Aromatic {
            aromatic += 1;
        } else {
            other += k.order();
        }
    }
    (aromatic, other)
}

/// Hydrogens implied by the valence rules for atom `i`, ignoring any explicit count.
///
/// Aliphatic atoms fill up to the smallest allowed valence not below their
/// bond sum. Aromatic atoms count each aromatic bond once plus one extra
/// unit for the ring's delocalized double bond when that still fits the
/// smallest allowed valence.
pub fn implied_hydrogens(mol: &Molecule, i: usize) -> u8 {
    let atom = mol.atom(i);
    let Some(allowed) = allowed_valences(atom.element, atom.charge) else {
        return 0;
    };
    let (ar, other) = bond_sums(mol, i);
    let sum = ar + other;
    if atom.aromatic && ar > 0 {
        let v = u32::from(allowed[0]);
        return if v > sum {
            (v - sum - 1) as u8
        } else {
            v.saturating_sub(sum) as u8
        };
    }
    allowed
        .iter()
        .map(|&v| u32::from(v))
        .find(|&v| v >= sum)
        .map_or(0, |v| (v - sum) as u8)
}

/// Total hydrogens on atom `i`.
pub fn hydrogen_count(mol: &Molecule, i: usize) -> u8 {
    match mol.atom(i).hydrogens {
        Hydrogens::Explicit(h) => h,
        Hydrogens::Implicit => implied_hydrogens(mol, i),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum SanitizeIssue {
    UnsupportedCharge { atom: usize },
    ValenceExceeded { atom: usize, used: u32, allowed: u32 },
    AromaticOutsideCycle { atom: usize },
    AromaticBondEndpoint { atom: usize, partner: usize },
}

impl SanitizeIssue {
    pub fn code(&self) -> &'static str {
        match self {
            SanitizeIssue::UnsupportedCharge { .. } => "unsupported_charge",
            SanitizeIssue::ValenceExceeded { .. } => "valence_exceeded",
            SanitizeIssue::AromaticOutsideCycle { .. } => "aromatic_outside_cycle",
            SanitizeIssue::AromaticBondEndpoint { .. } => "aromatic_bond_endpoint",
        }
    }
}

impl fmt::Display for SanitizeIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SanitizeIssue::UnsupportedCharge { atom } => write!(f, "atom {atom}: charge state has no valence entry"),
            SanitizeIssue::ValenceExceeded { atom, used, allowed } => {
                write!(f, "atom {atom}: valence {used} exceeds {allowed}")
            }
            SanitizeIssue::AromaticOutsideCycle { atom } => {
                write!(f, "atom {atom}: aromatic atom outside aromatic cycle")
            }
            SanitizeIssue::AromaticBondEndpoint { atom, partner } => {
                write!(f, "aromatic bond {atom}-{partner} touches a non-aromatic atom")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SanitizeReport {
    pub issues: Vec<SanitizeIssue>,
}

impl SanitizeReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn codes(&self) -> Vec<&'static str> {
        self.issues.iter().map(SanitizeIssue::code).collect()
    }
}

impl fmt::Display for SanitizeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return f.write_str("valid");
        }
        let parts: Vec<String> = self.issues.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Whether the aromatic bond `a-b` lies on a cycle of aromatic bonds.
pub fn on_aromatic_cycle(mol: &Molecule, a: usize, b: usize) -> bool {
    let mut seen = vec![false; mol.atom_count()];
    let mut stack = vec![b];
    seen[b] = true;
    while let Some(u) = stack.pop() {
        for &(v, k) in mol.neighbors(u) {
            if k != BondType::Aromatic || (u == b && v == a) {
                continue;
            }
            if v == a {
                return true;
            }
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    false
}

/// Checks valence limits, aromatic ring membership and aromatic bond endpoints.
pub fn sanitize(mol: &Molecule) -> SanitizeReport {
    let mut issues = Vec::new();
    for i in 0..mol.atom_count() {
        let atom = mol.atom(i);
        let Some(allowed) = allowed_valences(atom.element, atom.charge) else {
            issues.push(SanitizeIssue::UnsupportedCharge { atom: i });
            continue;
        };
        let (ar, other) = bond_sums(mol, i);
        let used = ar + other + u32::from(hydrogen_count(mol, i));
        let max = u32::from(*allowed.last().unwrap());
        if used > max {
            issues.push(SanitizeIssue::ValenceExceeded {
                atom: i,
                used,
                allowed: max,
            });
        }
    }
    for i in 0..mol.atom_count() {
        if !mol.atom(i).aromatic {
            continue;
        }
        let ring = mol
            .neighbors(i)
            .iter()
            .any(|&(j, k)| k == BondType::Aromatic && mol.atom(j).aromatic && on_aromatic_cycle(mol, i, j));
        if !ring {
            issues.push(SanitizeIssue::AromaticOutsideCycle { atom: i });
        }
    }
    for (i, j, k) in mol.bonds() {
        if k != BondType::Aromatic {
            continue;
        }
        if !mol.atom(i).aromatic || !mol.atom(j).aromatic {
            issues.push(SanitizeIssue::AromaticBondEndpoint { atom: i, partner: j });
        }
    }
    SanitizeReport { issues }
}
