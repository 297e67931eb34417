#!/usr/bin/env python3
"""Regenerate the bundled truss failure-mode dataset.

The structure is a three-panel through-truss bridge: bottom chord nodes at
(0,0), (L,0), (2L,0), (3L,0) with a pin at the left support and a vertical
roller at the right, top chord nodes at (L,H) and (2L,H), and crossing
diagonals in the middle panel.  Unit downward loads act at the two interior
bottom nodes.  Member numbering walks left to right:

    1 left end post      (0,0)-(L,H)       6 right diagonal  (2L,0)-(L,H)
    2 left bottom chord  (0,0)-(L,0)       7 middle bottom   (L,0)-(2L,0)
    3 left vertical      (L,0)-(L,H)       8 right vertical  (2L,0)-(2L,H)
    4 top chord          (L,H)-(2L,H)      9 right bottom    (2L,0)-(3L,0)
    5 left diagonal      (L,0)-(2L,H)     10 right end post  (3L,0)-(2L,H)

Cross-section groups: {1,2,9,10}, {3,8}, {4,7}, {5,6}.

Failure modes are ordered sequences of at most three member removals.  All
members are analyzed with equal axial stiffness; after each removal the
truss is re-solved for the unit loads, taking the minimum-norm displacement
solution when an inextensional mechanism unrelated to the load has opened.
A sequence terminates (and is recorded as a mode) once the applied load can
no longer be equilibrated.  Any remaining member may fail next regardless
of its current force; the recorded force coefficient is the magnitude of
the member's axial force per unit load in the state just before its
failure.  This yields 108 modes: 4 single-member, 46 two-member and 58
three-member sequences.

Usage: python scripts/generate_truss_modes.py [output.json]
"""

import json
import sys
from pathlib import Path

import numpy as np

H = 1.6
L = 2.0

NODES = np.array(
    [(0, 0), (L, 0), (2 * L, 0), (3 * L, 0), (L, H), (2 * L, H)], dtype=float
)
# 0-based (i, j) node pairs in member-number order 1..10
MEMBERS = [
    (0, 4), (0, 1), (1, 4), (4, 5), (1, 5),
    (2, 4), (1, 2), (2, 5), (2, 3), (3, 5),
]
GROUPS = [1, 1, 2, 3, 4, 4, 3, 2, 1, 1]     # per member, 1-based group ids
SUPPORTS = {0, 1, 7}                         # pin at node 0 (both dofs), roller-y at node 3
LOADS = np.zeros((6, 2))
LOADS[1, 1] = -1.0
LOADS[2, 1] = -1.0

MAX_SEQUENCE = 3
SING_TOL = 1e-9
DELTA_FLOOR = 1e-12


def member_length(m):
    i, j = MEMBERS[m]
    return float(np.hypot(*(NODES[j] - NODES[i])))


def solve_forces(removed):
    """Axial force per unit load in each remaining member.

    Returns None once the applied load is no longer equilibrable; while a
    mechanism exists but stays orthogonal to the load, the minimum-norm
    displacement solution is used.
    """
    ndof = 2 * len(NODES)
    stiffness = np.zeros((ndof, ndof))
    for m in range(len(MEMBERS)):
        if m in removed:
            continue
        i, j = MEMBERS[m]
        d = NODES[j] - NODES[i]
        length = np.hypot(*d)
        c, s = d / length
        b = np.array([-c, -s, c, s])
        dofs = [2 * i, 2 * i + 1, 2 * j, 2 * j + 1]
        stiffness[np.ix_(dofs, dofs)] += np.outer(b, b) / length
    free = [d for d in range(ndof) if d not in SUPPORTS]
    kff = stiffness[np.ix_(free, free)]
    load = LOADS.ravel()[free]
    eigvals, eigvecs = np.linalg.eigh(kff)
    tol = SING_TOL * max(eigvals[-1], 1.0)
    null = eigvecs[:, eigvals <= tol]
    if null.size and np.linalg.norm(null.T @ load) > SING_TOL * np.linalg.norm(load):
        return None
    disp = np.linalg.lstsq(kff, load, rcond=SING_TOL)[0]
    full = np.zeros(ndof)
    full[free] = disp
    forces = np.zeros(len(MEMBERS))
    for m in range(len(MEMBERS)):
        if m in removed:
            continue
        i, j = MEMBERS[m]
        d = NODES[j] - NODES[i]
        length = np.hypot(*d)
        c, s = d / length
        du = full[2 * j] - full[2 * i]
        dv = full[2 * j + 1] - full[2 * i + 1]
        forces[m] = (c * du + s * dv) / length
    return forces


def enumerate_modes():
    modes = []

    def recurse(removed, sequence, deltas):
        forces = solve_forces(removed)
        if forces is None:
            modes.append((tuple(sequence), tuple(deltas)))
            return
        if len(sequence) >= MAX_SEQUENCE:
            return
        for m in range(len(MEMBERS)):
            if m in removed:
                continue
            delta = abs(float(forces[m]))
            if delta < DELTA_FLOOR:
                delta = 0.0
            recurse(removed | {m}, sequence + [m], deltas + [delta])

    recurse(frozenset(), [], [])
    return modes


def main():
    out_path = Path(sys.argv[1]) if len(sys.argv) > 1 else (
        Path(__file__).resolve().parents[1] / "src" / "sborm" / "data" / "truss_modes.json"
    )
    modes = enumerate_modes()
    lengths = {1: 0, 2: 0, 3: 0}
    for seq, _ in modes:
        lengths[len(seq)] += 1
    payload = {
        "members": [
            {"id": m + 1, "group": GROUPS[m], "length": round(member_length(m), 12)}
            for m in range(len(MEMBERS))
        ],
        "modes": [
            {
                "members": [m + 1 for m in seq],
                "delta": [round(d, 12) for d in deltas],
            }
            for seq, deltas in modes
        ],
    }
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")
    print(f"wrote {len(modes)} modes ({lengths}) to {out_path}")


if __name__ == "__main__":
    main()
