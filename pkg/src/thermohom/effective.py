"""Homogenized coefficients assembled from cell correctors and kinematics.

Every quantity is a plain (t, x)-sample; the provider caches correctors and
coefficient bundles keyed by the transformation's own sample key, so macro
sweeps over many quadrature points reuse one cell solve whenever the growth
amplitude does not vary in x.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cell import (
    CellContext,
    Correctors,
    element_scalar_gradients,
    element_vector_gradients,
    solve_correctors,
    strain_pads,
)
from .kinematics import interface_batch, mandel_matrix, sym_index_pairs

_PROBE_SEED = 20240517


def probe_vectors(dim, n_random=20, seed=_PROBE_SEED):
    """Canonical basis plus a fixed set of pseudo-random unit probes."""
    rng = np.random.default_rng(seed)
    probes = [np.eye(dim)[i] for i in range(dim)]
    while len(probes) < dim + n_random:
        q = rng.standard_normal(dim)
        probes.append(q / np.linalg.norm(q))
    return np.array(probes)


@dataclass
class EffectiveCoefficients:
    """All homogenized tensors, scalars, and sources at a single (t, x)."""

    t: float
    x: np.ndarray
    stiffness: np.ndarray        # rank 4
    expansion: np.ndarray        # d x d
    conductivity: np.ndarray     # d x d
    heat_capacity: float
    dissipation: np.ndarray      # d x d
    curvature_force: np.ndarray  # d vector
    latent_source: float         # includes the latent-heat factor when enabled
    interface_speed: float       # raw surface integral of the normal velocity
    source_u: np.ndarray
    source_theta: float
    matrix_measure: float        # deformed measure of the matrix part
    inclusion_measure: float
    voigt_bound: np.ndarray      # d x d upper-bound matrix for the conductivity

    def validate(self, tol=1e-10, probes=None):
        """Raise AssertionError on any violated structural invariant."""
        d = self.conductivity.shape[0]
        C = self.stiffness
        defect = max(
            np.max(np.abs(C - np.einsum("ijkl->jikl", C))),
            np.max(np.abs(C - np.einsum("ijkl->ijlk", C))),
            np.max(np.abs(C - np.einsum("ijkl->klij", C))),
        )
        assert defect < tol, f"effective stiffness symmetry defect {defect:.2e}"
        eig = np.linalg.eigvalsh(mandel_matrix(C))
        assert eig.min() > 0.0, f"effective stiffness not positive definite ({eig.min():.2e})"
        K = self.conductivity
        assert np.max(np.abs(K - K.T)) < tol, "effective conductivity not symmetric"
        keig = np.linalg.eigvalsh(0.5 * (K + K.T))
        assert keig.min() > 0.0, "effective conductivity not positive definite"
        if probes is None:
            probes = probe_vectors(d)
        for q in probes:
            lhs = q @ K @ q
            rhs = q @ self.voigt_bound @ q
            assert lhs <= rhs + tol, f"Voigt bound violated: {lhs:.12g} > {rhs:.12g}"
        assert self.heat_capacity > 0.0, "effective heat capacity not positive"


def _element_average(space, field):
    """Quadrature average over q of an (e, nq, ...) coefficient array."""
    return np.einsum("eq...,q->e...", field, space.qweights)


def compute_effective_mechanics(ctx: CellContext, correctors: Correctors, t, x,
                                fields=None, source_u=None):
    """Effective stiffness, expansion, curvature force, and mechanical source."""
    fields = fields if fields is not None else ctx.matrix_fields(t, x)
    space = ctx.space_a
    d = ctx.dim
    vols = space.volumes
    Cbar = _element_average(space, fields["stiffness"])  # (e, d, d, d, d)

    pairs = sym_index_pairs(d)
    pads = strain_pads(d)
    strains = []
    for jk in pairs:
        g = element_vector_gradients(space, correctors.mechanical[jk])
        strains.append(0.5 * (g + np.transpose(g, (0, 2, 1))) + pads[jk])
    strains = np.stack(strains)                            # (nv, e, d, d)

    stress = np.einsum("eabcd,vecd->veab", Cbar, strains, optimize=True)
    C_voigt = np.einsum("veab,weab,e->vw", stress, strains, vols, optimize=True)

    C_eff = np.zeros((d, d, d, d))
    for a, (j, k) in enumerate(pairs):
        for b, (m, n) in enumerate(pairs):
            val = C_voigt[a, b]
            for (p, q) in {(j, k), (k, j)}:
                for (r, s) in {(m, n), (n, m)}:
                    C_eff[p, q, r, s] = val

    g_ts = element_vector_gradients(space, correctors.thermal_stress)
    e_ts = 0.5 * (g_ts + np.transpose(g_ts, (0, 2, 1)))
    alpha_bar = _element_average(space, fields["expansion"])
    alpha_eff = np.einsum("eab,e->ab", alpha_bar, vols) - np.einsum(
        "eabcd,ecd,e->ab", Cbar, e_ts, vols, optimize=True
    )

    # curvature force density: surface integral of the pulled-back stress normal
    n, W, H, F, J = interface_batch(
        ctx.transformation, t, x, ctx.facet_centroids, ctx.facet_normals
    )
    Finv = np.linalg.inv(F)
    sigma0 = ctx.material.surface_tension
    integrand = sigma0 * (J * H)[:, None] * np.einsum(
        "fab,fb->fa", Finv, ctx.facet_normals
    )
    curvature_force = np.einsum("fa,f->a", integrand, ctx.facet_areas)

    matrix_measure = float(np.einsum("eq,q,e->", fields["jacobian"], space.qweights, vols))
    return C_eff, alpha_eff, curvature_force, matrix_measure


def compute_effective_heat(ctx: CellContext, correctors: Correctors, t, x,
                           fields=None, latent_in_source=True,
                           include_inclusion_dissipation=True):
    """Effective conductivity, heat capacity, dissipation, and interface sources."""
    fields = fields if fields is not None else ctx.matrix_fields(t, x)
    space = ctx.space_a
    d = ctx.dim
    vols = space.volumes
    Kbar = _element_average(space, fields["conductivity"])

    fluxes = []
    for j in range(d):
        g = element_scalar_gradients(space, correctors.thermal[j])
        g = g + np.eye(d)[j]
        fluxes.append(g)
    fluxes = np.stack(fluxes)                              # (d, e, d)
    K_eff = np.einsum("jea,eab,ieb,e->ij", fluxes, Kbar, fluxes, vols, optimize=True)

    matrix_measure = float(np.einsum("eq,q,e->", fields["jacobian"], space.qweights, vols))
    g_ts = element_vector_gradients(space, correctors.thermal_stress)
    div_ts = np.einsum("eaa,e->", g_ts, vols)
    c_eff = (ctx.material.density_a * ctx.material.heat_capacity_a * matrix_measure
             + ctx.material.expansion_a * div_ts)

    gamma_bar = _element_average(space, fields["dissipation"])
    gamma_eff = np.einsum("eab,e->ab", gamma_bar, vols)
    for (j, k) in sym_index_pairs(d):
        g = element_vector_gradients(space, correctors.mechanical[(j, k)])
        coupling = np.einsum("eab,eab,e->", gamma_bar, g, vols)
        gamma_eff[j, k] += coupling
        if j != k:
            gamma_eff[k, j] += coupling

    fields_b = ctx.inclusion_fields(t, x)
    inclusion_measure = float(
        np.einsum("eq,q,e->", fields_b["jacobian"], ctx.space_b.qweights,
                  ctx.space_b.volumes)
    )
    if include_inclusion_dissipation:
        gamma_eff += ctx.material.dissipation_b * inclusion_measure * np.eye(d)

    _, W, _, F, J = interface_batch(
        ctx.transformation, t, x, ctx.facet_centroids, ctx.facet_normals
    )
    interface_speed = float(np.einsum("f,f->", J * W, ctx.facet_areas))
    latent_source = (ctx.material.latent_heat if latent_in_source else 1.0) * interface_speed

    voigt_bound = np.einsum("eab,e->ab", Kbar, vols)
    return (K_eff, c_eff, gamma_eff, latent_source, interface_speed,
            inclusion_measure, voigt_bound)


class EffectiveProvider:
    """Caches correctors and effective bundles keyed by the transformation sample."""

    def __init__(self, ctx: CellContext, sources=None, latent_in_source=True,
                 include_inclusion_dissipation=True, solver_tol=1e-10):
        self.ctx = ctx
        self.sources = sources
        self.latent_in_source = latent_in_source
        self.include_inclusion_dissipation = include_inclusion_dissipation
        self.solver_tol = solver_tol
        self._cache = {}

    def source_values(self, t):
        """Spatially constant phase sources (f_u_A, f_u_B, f_th_A, f_th_B) at time t."""
        d = self.ctx.dim
        if self.sources is None:
            return np.zeros(d), np.zeros(d), 0.0, 0.0
        return self.sources(t)

    def _bundle(self, t, x):
        """Geometry-derived quantities, cached by the transformation sample key.

        Within one key the kinematic fields, correctors, and every effective
        quantity except the time-dependent sources are identical.
        """
        key = self.ctx.transformation.sample_key(t, x)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        cors = solve_correctors(self.ctx, t, x, tol=self.solver_tol)
        fields = self.ctx.matrix_fields(t, x)
        C_eff, alpha_eff, curvature_force, matrix_measure = compute_effective_mechanics(
            self.ctx, cors, t, x, fields=fields
        )
        (K_eff, c_eff, gamma_eff, latent_source, interface_speed, inclusion_measure,
         voigt_bound) = compute_effective_heat(
            self.ctx, cors, t, x, fields=fields,
            latent_in_source=self.latent_in_source,
            include_inclusion_dissipation=self.include_inclusion_dissipation,
        )
        bundle = dict(
            correctors=cors, stiffness=C_eff, expansion=alpha_eff,
            conductivity=K_eff, heat_capacity=c_eff, dissipation=gamma_eff,
            curvature_force=curvature_force, latent_source=latent_source,
            interface_speed=interface_speed, matrix_measure=matrix_measure,
            inclusion_measure=inclusion_measure, voigt_bound=voigt_bound,
        )
        self._cache[key] = bundle
        return bundle

    def correctors(self, t, x) -> Correctors:
        return self._bundle(t, x)["correctors"]

    def at(self, t, x) -> EffectiveCoefficients:
        b = self._bundle(t, x)
        f_u_a, f_u_b, f_th_a, f_th_b = self.source_values(t)
        return EffectiveCoefficients(
            t=float(t), x=np.asarray(x, dtype=float),
            stiffness=b["stiffness"], expansion=b["expansion"],
            conductivity=b["conductivity"], heat_capacity=b["heat_capacity"],
            dissipation=b["dissipation"], curvature_force=b["curvature_force"],
            latent_source=b["latent_source"], interface_speed=b["interface_speed"],
            source_u=(b["matrix_measure"] * np.asarray(f_u_a)
                      + b["inclusion_measure"] * np.asarray(f_u_b)),
            source_theta=b["matrix_measure"] * f_th_a + b["inclusion_measure"] * f_th_b,
            matrix_measure=b["matrix_measure"],
            inclusion_measure=b["inclusion_measure"],
            voigt_bound=b["voigt_bound"],
        )


# ---------------------------------------------------------------------------
# tabulation


def effective_header(dim):
    cols = ["t"] + [f"x{i}" for i in range(dim)]
    for j, k, m, n in np.ndindex(dim, dim, dim, dim):
        cols.append(f"stiffness_{j}{k}{m}{n}")
    for j, k in np.ndindex(dim, dim):
        cols.append(f"expansion_{j}{k}")
    for j, k in np.ndindex(dim, dim):
        cols.append(f"conductivity_{j}{k}")
    cols.append("heat_capacity")
    for j, k in np.ndindex(dim, dim):
        cols.append(f"dissipation_{j}{k}")
    cols += [f"curvature_force_{j}" for j in range(dim)]
    cols += ["latent_source", "interface_speed"]
    cols += [f"source_u_{j}" for j in range(dim)]
    cols += ["source_theta", "matrix_measure", "inclusion_measure"]
    return cols


def effective_row(eff: EffectiveCoefficients):
    dim = eff.conductivity.shape[0]
    row = [eff.t] + list(eff.x)
    row += [eff.stiffness[idx] for idx in np.ndindex(dim, dim, dim, dim)]
    row += [eff.expansion[idx] for idx in np.ndindex(dim, dim)]
    row += [eff.conductivity[idx] for idx in np.ndindex(dim, dim)]
    row.append(eff.heat_capacity)
    row += [eff.dissipation[idx] for idx in np.ndindex(dim, dim)]
    row += list(eff.curvature_force)
    row += [eff.latent_source, eff.interface_speed]
    row += list(eff.source_u)
    row += [eff.source_theta, eff.matrix_measure, eff.inclusion_measure]
    return row


def tabulate_effective(provider: EffectiveProvider, times, points, validate=True):
    """One row of every effective quantity per (t, x) sample."""
    header = effective_header(provider.ctx.dim)
    rows = []
    for t in times:
        for x in points:
            eff = provider.at(t, np.asarray(x, dtype=float))
            if validate:
                eff.validate()
            rows.append(effective_row(eff))
    return header, rows
