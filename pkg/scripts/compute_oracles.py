#!/usr/bin/env python3
"""Refined-mesh oracle values for the effective-coefficient fixtures.

Run this before touching frozen constants in tests/test_acceptance.py: it
prints the effective conductivity and stiffness entries on the coarse working
mesh and on the refined oracle mesh, together with their relative gap.  The
frozen fixture records the refined values verbatim.
"""

import argparse

import numpy as np

from thermohom.cell import CellContext
from thermohom.effective import EffectiveProvider
from thermohom.kinematics import IdentityTransform, default_material, isotropic_stiffness
from thermohom.mesh import build_cell_mesh


def effective_entries(radius, resolution, lam=1.0, mu=1.0):
    mesh = build_cell_mesh(radius, resolution, dim=2)
    material = default_material(
        2, stiffness_a=isotropic_stiffness(lam, mu, 2),
        stiffness_b=isotropic_stiffness(lam, mu, 2),
    )
    ctx = CellContext(mesh, material, IdentityTransform(dim=2, inclusion_radius=radius))
    eff = EffectiveProvider(ctx).at(0.0, np.zeros(2))
    eff.validate()
    return eff


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--radius", type=float, default=0.25)
    parser.add_argument("--coarse", type=int, default=16)
    parser.add_argument("--fine", type=int, default=64)
    args = parser.parse_args()

    coarse = effective_entries(args.radius, args.coarse)
    fine = effective_entries(args.radius, args.fine)
    print(f"radius = {args.radius}, lambda = mu = 1, identity transformation")
    for label, get in (
        ("conductivity_11", lambda e: e.conductivity[0, 0]),
        ("stiffness_1111", lambda e: e.stiffness[0, 0, 0, 0]),
    ):
        c, f = get(coarse), get(fine)
        print(f"{label}: n={args.coarse}: {c:.17g}")
        print(f"{label}: n={args.fine}: {f:.17g}   gap {(abs(c - f) / f):.4%}")

    small = effective_entries(0.05, 16)
    small_fine = effective_entries(0.05, 64)
    for tag, e in (("n=16", small), ("n=64", small_fine)):
        defect = np.linalg.norm(e.conductivity - np.eye(2), 2)
        print(f"small inclusion r=0.05 {tag}: |K_eff - K_A| = {defect:.6g}")


if __name__ == "__main__":
    main()
