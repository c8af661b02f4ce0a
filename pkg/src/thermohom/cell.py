"""Periodic cell problems on the perforated unit cell.

At a fixed (t, x) the transformed coefficients are frozen on the matrix part
of the cell and three families of correctors are solved for: one vector field
per independent symmetric unit strain, one vector field driven by thermal
expansion, and one scalar field per coordinate direction for heat flux.  All
correctors live in the periodic zero-mean space on the matrix phase; the
inclusion boundary carries the natural condition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import (
    ConstraintSet,
    P1Space,
    apply_constraints,
    assemble_gradient_load,
    assemble_operator,
    assemble_scalar_load,
    assemble_strain_load,
    solve_spd,
)
from .kinematics import PHASE_A, PHASE_B, pullback_fields, sym_index_pairs
from .mesh import extract_phase_submesh


def strain_pads(dim):
    """Independent symmetric unit strains E_jk = sym(e_j otimes e_k), j <= k."""
    pads = {}
    for j, k in sym_index_pairs(dim):
        E = np.zeros((dim, dim))
        E[j, k] += 0.5
        E[k, j] += 0.5
        pads[(j, k)] = E
    return pads


def pad_displacement(space: P1Space, j, k):
    """Nodal values of the linear pad d_jk(y) = y_j e_k, symmetrized over (j, k)."""
    y = space.mesh.vertices
    d = space.dim
    out = np.zeros(space.n_vector)
    out[k::d] += 0.5 * y[:, j]
    out[j::d] += 0.5 * y[:, k]
    return out


class CellContext:
    """Meshes, spaces, and constraint bookkeeping shared by all cell solves."""

    def __init__(self, cell_mesh, material, transformation):
        self.mesh = cell_mesh
        self.material = material
        self.transformation = transformation
        self.dim = cell_mesh.dim

        self.sub_a = extract_phase_submesh(cell_mesh, PHASE_A)
        self.sub_b = extract_phase_submesh(cell_mesh, PHASE_B)
        self.space_a = P1Space(self.sub_a.mesh)
        self.space_b = P1Space(self.sub_b.mesh)

        d = self.dim
        pairs = self.sub_a.mesh.periodic_pairs
        self.periodic_scalar = pairs
        self.periodic_vector = np.concatenate(
            [pairs * d + c for c in range(d)], axis=0
        ) if len(pairs) else np.zeros((0, 2), dtype=int)

        self.volume_weights = assemble_scalar_load(self.space_a, 1.0)
        self.vector_weights = []
        for c in range(d):
            w = np.zeros(self.space_a.n_vector)
            w[c::d] = self.volume_weights
            self.vector_weights.append(w)

        # interface data lives on the full cell mesh
        self.facet_centroids = cell_mesh.facet_centroids()
        self.facet_areas = cell_mesh.facet_areas()
        self.facet_normals = cell_mesh.interface_normals

    # -- coefficient fields --------------------------------------------------

    def matrix_fields(self, t, x):
        """Pulled-back coefficient fields at the matrix-phase quadrature points."""
        pts = self.space_a.qpoints.reshape(-1, self.dim)
        F, J, v = self.transformation.kinematics_batch(t, x, pts)
        fields = pullback_fields(F, J, v, self.material, PHASE_A)
        e, nq = len(self.space_a.cells), len(self.space_a.qweights)
        return {
            name: arr.reshape((e, nq) + arr.shape[1:]) for name, arr in fields.items()
        }

    def inclusion_fields(self, t, x):
        pts = self.space_b.qpoints.reshape(-1, self.dim)
        F, J, v = self.transformation.kinematics_batch(t, x, pts)
        fields = pullback_fields(F, J, v, self.material, PHASE_B)
        e, nq = len(self.space_b.cells), len(self.space_b.qweights)
        return {
            name: arr.reshape((e, nq) + arr.shape[1:]) for name, arr in fields.items()
        }

    def scalar_constraints(self):
        return ConstraintSet(periodic=self.periodic_scalar,
                             zero_mean_weights=[self.volume_weights])

    def vector_constraints(self):
        return ConstraintSet(periodic=self.periodic_vector,
                             zero_mean_weights=list(self.vector_weights))


@dataclass
class Correctors:
    """Cell-problem solutions at one (t, x): all periodic with zero mean on Y_A."""

    t: float
    x: np.ndarray
    mechanical: dict          # (j, k) -> nodal vector field on the matrix submesh
    thermal_stress: np.ndarray
    thermal: list             # per direction, nodal scalar fields
    pads: dict                # (j, k) -> constant symmetric strain
    residuals: dict


def solve_elastic_correctors(ctx: CellContext, t, x, fields=None, tol=1e-10):
    """Strain correctors for every independent pad plus the expansion corrector."""
    fields = fields if fields is not None else ctx.matrix_fields(t, x)
    space = ctx.space_a
    A = assemble_operator(ctx.sub_a.mesh, "elasticity", fields["stiffness"], space=space)
    cs = ctx.vector_constraints()
    pads = strain_pads(ctx.dim)

    residuals = {}
    mechanical = {}
    for (j, k), E in pads.items():
        S = np.einsum("eqabcd,cd->eqab", fields["stiffness"], E)
        rhs = -assemble_strain_load(space, S)
        red = apply_constraints(A, rhs, cs)
        sol, info = solve_spd(red.matrix, red.rhs, tol=tol, constraints=red.constraints)
        mechanical[(j, k)] = red.recover(sol)
        residuals[("mechanical", j, k)] = info.residuals[-1]

    rhs = assemble_strain_load(space, fields["expansion"])
    red = apply_constraints(A, rhs, cs)
    sol, info = solve_spd(red.matrix, red.rhs, tol=tol, constraints=red.constraints)
    thermal_stress = red.recover(sol)
    residuals["thermal_stress"] = info.residuals[-1]
    return mechanical, thermal_stress, pads, residuals


def solve_thermal_correctors(ctx: CellContext, t, x, fields=None, tol=1e-10):
    """Flux correctors: K^ref (grad tau_j + e_j) weakly divergence free."""
    fields = fields if fields is not None else ctx.matrix_fields(t, x)
    space = ctx.space_a
    A = assemble_operator(ctx.sub_a.mesh, "scalar_diffusion", fields["conductivity"],
                          space=space)
    cs = ctx.scalar_constraints()
    thermal = []
    residuals = {}
    for j in range(ctx.dim):
        w = -fields["conductivity"][:, :, :, j]
        rhs = assemble_gradient_load(space, w)
        red = apply_constraints(A, rhs, cs)
        sol, info = solve_spd(red.matrix, red.rhs, tol=tol, constraints=red.constraints)
        thermal.append(red.recover(sol))
        residuals[("thermal", j)] = info.residuals[-1]
    return thermal, residuals


def solve_correctors(ctx: CellContext, t, x, tol=1e-10) -> Correctors:
    fields = ctx.matrix_fields(t, x)
    mechanical, thermal_stress, pads, res_m = solve_elastic_correctors(
        ctx, t, x, fields=fields, tol=tol
    )
    thermal, res_t = solve_thermal_correctors(ctx, t, x, fields=fields, tol=tol)
    res_m.update(res_t)
    return Correctors(
        t=float(t), x=np.asarray(x, dtype=float), mechanical=mechanical,
        thermal_stress=thermal_stress, thermal=thermal, pads=pads, residuals=res_m,
    )


# -- helpers used by the effective-coefficient assembly ----------------------


def element_vector_gradients(space: P1Space, field):
    """Per-element gradient (d x d) of a P1 vector field."""
    d = space.dim
    nodal = field.reshape(-1, d)[space.cells]              # (e, nloc, d)
    return np.einsum("eia,eib->eab", nodal, space.gradients)


def element_scalar_gradients(space: P1Space, field):
    nodal = field[space.cells]
    return np.einsum("ei,eib->eb", nodal, space.gradients)


def mean_over_matrix(space: P1Space, nodal_field):
    """Volume average of a P1 scalar field (exact integration)."""
    vals = np.einsum("qi,ei->eq", space.shape_values, nodal_field[space.cells])
    total = np.einsum("eq,q,e->", vals, space.qweights, space.volumes)
    return total / space.volumes.sum()
