use crate::molgraph::{
    charge_suffix, hydrogen_count, implied_hydrogens, on_aromatic_cycle, BondType, Element, Molecule,
};

/// SMILES text in atom-index order, components joined by `.`.
pub fn write(mol: &Molecule) -> String {
    let rank: Vec<usize> = (0..mol.atom_count()).collect();
    mol.components()
        .iter()
        .map(|comp| write_ranked(mol, comp[0], &rank))
        .collect::<Vec<_>>()
        .join(".")
}

fn organic(element: Element, aromatic: bool) -> bool {
    use Element::*;
    if aromatic {
        matches!(element, B | C | N | O | P | S)
    } else {
        matches!(element, B | C | N | O | P | S | F | Cl | Br | I)
    }
}

pub(crate) fn atom_text(mol: &Molecule, i: usize) -> String {
    let a = mol.atom(i);
    let sym = if a.aromatic {
        a.element
            .aromatic_symbol()
            .map_or_else(|| a.element.symbol().to_lowercase(), str::to_string)
    } else {
        a.element.symbol().to_string()
    };
    let h = hydrogen_count(mol, i);
    if a.charge == 0 && organic(a.element, a.aromatic) && h == implied_hydrogens(mol, i) {
        return sym;
    }
    let hs = match h {
        0 => String::new(),
        1 => "H".into(),
        n => format!("H{n}"),
    };
    format!("[{sym}{hs}{}]", charge_suffix(a.charge))
}

fn bond_text(mol: &Molecule, a: usize, b: usize, kind: BondType) -> &'static str {
    let both = mol.atom(a).aromatic && mol.atom(b).aromatic;
    match kind {
        BondType::Single if both => "-",
        BondType::Single | BondType::None => "",
        BondType::Aromatic if both && on_aromatic_cycle(mol, a, b) => "",
        BondType::Aromatic => ":",
        BondType::Double => "=",
        BondType::Triple => "#",
    }
}

fn ring_label(d: usize) -> String {
    if d < 10 {
        d.to_string()
    } else {
        format!("%{d:02}")
    }
}

struct Tree {
    order: Vec<usize>,
    children: Vec<Vec<usize>>,
    /// Per atom, ring partners as `(partner, opens_here)` in visit order.
    rings: Vec<Vec<(usize, bool)>>,
}

/// Writes the component containing `start`, visiting neighbours in `rank` order.
pub(crate) fn write_ranked(mol: &Molecule, start: usize, rank: &[usize]) -> String {
    let n = mol.atom_count();
    let mut tree = Tree {
        order: vec![usize::MAX; n],
        children: vec![Vec::new(); n],
        rings: vec![Vec::new(); n],
    };
    let mut counter = 0;
    explore(mol, rank, start, usize::MAX, &mut tree, &mut counter);
    for r in &mut tree.rings {
        let order = &tree.order;
        r.sort_by_key(|&(p, opens)| (opens, order[p]));
    }
    let mut out = String::new();
    let mut digits: Vec<Option<usize>> = Vec::new();
    let mut open: Vec<((usize, usize), usize)> = Vec::new();
    emit(mol, &tree, start, &mut out, &mut digits, &mut open);
    out
}

fn explore(mol: &Molecule, rank: &[usize], u: usize, parent: usize, tree: &mut Tree, counter: &mut usize) {
    tree.order[u] = *counter;
    *counter += 1;
    let mut nb: Vec<usize> = mol.neighbors(u).iter().map(|&(v, _)| v).collect();
    nb.sort_by_key(|&v| rank[v]);
    for v in nb {
        if v == parent {
            continue;
        }
        if tree.order[v] == usize::MAX {
            tree.children[u].push(v);
            explore(mol, rank, v, u, tree, counter);
        } else if tree.order[v] < tree.order[u] {
            tree.rings[v].push((u, true));
            tree.rings[u].push((v, false));
        }
    }
}

fn emit(
    mol: &Molecule,
    tree: &Tree,
    u: usize,
    out: &mut String,
    digits: &mut Vec<Option<usize>>,
    open: &mut Vec<((usize, usize), usize)>,
) {
    out.push_str(&atom_text(mol, u));
    for &(p, opens) in &tree.rings[u] {
        if opens {
            let d = (1..).find(|&k| digits.get(k).map_or(true, Option::is_none)).unwrap();
            if d >= digits.len() {
                digits.resize(d + 1, None);
            }
            digits[d] = Some(u);
            open.push(((u, p), d));
            let kind = mol.bond(u, p).expect("ring partner is bonded");
            out.push_str(bond_text(mol, u, p, kind));
            out.push_str(&ring_label(d));
        } else {
            let k = open
                .iter()
                .position(|&(key, _)| key == (p, u))
                .expect("ring opened earlier");
            let (_, d) = open.remove(k);
            digits[d] = None;
            out.push_str(&ring_label(d));
        }
    }
    let kids = &tree.children[u];
    for (k, &v) in kids.iter().enumerate() {
        let kind = mol.bond(u, v).expect("tree edge is bonded");
        let last = k + 1 == kids.len();
        if !last {
            out.push('(');
        }
        out.push_str(bond_text(mol, u, v, kind));
        emit(mol, tree, v, out, digits, open);
        if !last {
            out.push(')');
        }
    }
}
