#!/usr/bin/env python3
"""Generate the bundled MOSES-style and GuacaMol-style SMILES corpora.

Molecules are assembled from ring cores and substituents with a fixed seed,
so rerunning the script reproduces the files byte for byte.
"""

import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "crates" / "core" / "data" / "corpora"

# Cores carry "(X)" attachment slots on aromatic or aliphatic carbons.
MOSES_CORES = [
    "c1cc(X)ccc1(X)",
    "c1ccc(X)nc1",
    "c1cc(X)[nH]c1",
    "c1cc(X)oc1",
    "c1cc(X)sc1",
    "c1nc(X)c[nH]1",
    "c1csc(X)n1",
    "c1coc(X)n1",
    "c1ccc2c(c1)cc(X)[nH]2",
    "c1ccc2c(c1)oc(X)c2",
    "c1ccc2c(c1)sc(X)n2",
    "c1cc(X)c2ccccc2c1",
    "c1cnc(X)nc1",
    "C1CCC(X)CC1",
    "C1CCN(X)CC1",
    "C1COCCN1(X)",
    "C1CC(X)CO1",
    "C1CCS(=O)(=O)C1(X)",
    "c1cc(X)n(C)c1",
    "c1cc(X)ccc1N1CCN(X)CC1",
    "c1cc(X)ccc1Oc1ccc(X)cc1",
    "c1cc(X)ccc1C(=O)Nc1ccc(X)cn1",
]

MOSES_SUBS = [
    "C", "CC", "CCC", "C(C)C", "O", "OC", "OCC", "N", "NC", "N(C)C", "F", "Cl", "Br",
    "C(F)(F)F", "C#N", "C(=O)O", "C(=O)N", "C(=O)OC", "C(=O)C", "NC(=O)C", "S(=O)(=O)N",
    "SC", "CO", "CN", "CCl", "C=C", "C#C", "OC(F)F", "CS(C)(=O)=O", "N=C=O",
]

MOSES_SMALL = [
    "CCO", "OCC(C)C", "CCCO", "CC(C)O", "COCC", "CCN", "CNC", "CC(C)N", "CSC", "CCS",
    "CC(=O)O", "COC=O", "FCCF", "ClCBr", "CC=O", "NCC=O", "c1ccoc1", "c1ccsc1",
    "c1cc[nH]c1", "c1ccncc1", "Cc1ccccc1", "Oc1ccccc1", "Nc1ccccc1", "Fc1ccccc1",
    "Clc1ccccc1", "Brc1ccccc1", "C1CCCCC1", "C1CCOC1", "C1CCNC1", "C1CCSC1",
    "Cn1cccc1", "O=C1CCCN1", "c1cncnc1", "c1cnc[nH]1", "c1cocn1", "c1cscn1",
    "C#CCO", "N#CC#N", "CC(C)(C)C", "CCCCCCCC",
]

GUACA_CORES = MOSES_CORES + [
    "c1cc(X)[se]c1",
    "c1ccc(X)pc1",
]

# Cores whose two slots are exchanged by a symmetry of the ring system.
SYMMETRIC = {"c1cc(X)ccc1(X)", "c1cc(X)ccc1Oc1ccc(X)cc1"}

GUACA_SUBS = MOSES_SUBS + ["I", "[Si](C)(C)C", "B(O)O", "P(C)C", "[Se]C", "OP(=O)(O)O"]

# One or more molecules exercising each charged or rare token.
GUACA_SPECIAL = [
    "C[c+]1cccccc1",
    "C[c-]1cccc1",
    "C[n+]1ccccc1",
    "c1cc[nH+]cc1",
    "c1cc[n-]c1",
    "C[s+]1cccc1",
    "c1cc[o+]cc1",
    "C[se+]1cccc1",
    "Cp1cccc1",
    "c1ccpcc1",
    "c1cc[se]c1",
    "C[C+](C)C",
    "C[C-](C)C",
    "[C-]#[O+]",
    "C[N+]#[C-]",
    "C[N+](=O)[O-]",
    "O=[N+]([O-])c1ccccc1",
    "C[NH+](C)C",
    "C[NH2+]C",
    "C[NH3+]",
    "CN=[N+]=[N-]",
    "CC(=O)[NH-]",
    "C[O+](C)C",
    "CC(=O)[O-]",
    "C[F+]C",
    "[F-].C[NH3+]",
    "CB(C)C",
    "OB(O)c1ccccc1",
    "F[B-](F)(F)F",
    "C[Br+2]([O-])[O-]",
    "[Br-].C[n+]1ccccc1",
    "C[Cl+]C",
    "C[Cl+2]([O-])[O-]",
    "[O-][Cl+3]([O-])([O-])[O-]",
    "[Cl-].C[NH3+]",
    "c1ccc(cc1)[I+]c1ccccc1",
    "C[I+2]([O-])[O-]",
    "[O-][I+3]([O-])([O-])[O-]",
    "Ic1ccccc1",
    "C[P+](C)(C)C",
    "F[P-](F)(F)(F)(F)F",
    "CP(C)C",
    "OP(=O)(O)O",
    "C[S+](C)C",
    "CC(=O)[S-]",
    "C[Se+](C)C",
    "C[Se-]",
    "C[Se]C",
    "C[Si-](C)C",
    "C[Si](C)(C)C",
    "Cc1cc[nH+]cc1",
    "CC[n+]1ccn(C)c1",
    "OC(=O)C[NH3+]",
]


def fill(core, subs, rng):
    picks = [rng.choice(subs) for _ in range(core.count("(X)"))]
    if core in SYMMETRIC:
        picks.sort()
    out = core
    for p in picks:
        out = out.replace("(X)", "(" + p + ")", 1)
    return out


def build(cores, subs, fixed, total, seed):
    rng = random.Random(seed)
    seen = set()
    out = []
    for s in fixed:
        if s not in seen:
            seen.add(s)
            out.append(s)
    attempts = 0
    while len(out) < total:
        attempts += 1
        assert attempts < 100000, "not enough distinct molecules"
        s = fill(rng.choice(cores), subs, rng)
        if s in seen:
            continue
        seen.add(s)
        out.append(s)
    return out[:total]


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    moses = build(MOSES_CORES, MOSES_SUBS, MOSES_SMALL, 200, 20240611)
    guaca = build(GUACA_CORES, GUACA_SUBS, GUACA_SPECIAL + MOSES_SMALL[:20], 200, 20240612)
    (OUT / "moses_200.smi").write_text("\n".join(moses) + "\n")
    (OUT / "guacamol_200.smi").write_text("\n".join(guaca) + "\n")


if __name__ == "__main__":
    main()
