"""Resolved solver on the periodic fine mesh plus the verification harness.

This side of the suite discretizes the fixed-domain thermoelastic system
directly on the eps-periodic mesh: inclusion-phase stiffness and conductivity
carry eps^2, thermal expansion and dissipation carry eps, the interface loads
carry their own powers of eps, and all coefficients oscillate with the cell
variable.  The harness assembles discrete versions of the operators the
analysis reasons about (elastic form, thermal-stress coupling, their
Schur-type composition), computes the a priori norm bundles, and compares the
resolved temperature against the homogenized two-scale solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .fem import (
    ConstraintSet,
    P1Space,
    SolverError,
    apply_constraints,
    assemble_gradient_load,
    assemble_interface_load,
    assemble_operator,
    assemble_scalar_load,
    assemble_vector_load,
    solve_spd,
    vector_mass,
)
from .kinematics import (
    PHASE_A,
    PHASE_B,
    interface_batch,
    pullback_fields,
    scaled_coefficients,
)
from .mesh import build_epsilon_mesh, tile_anchors
from .twoscale import SolverSettings, TwoScaleSolver


# ---------------------------------------------------------------------------
# oscillatory coefficient evaluation


class EpsilonCoefficients:
    """Transformed coefficient fields on an epsilon mesh, phase by phase.

    Quadrature points are pulled back to cell coordinates through their tile;
    the macro argument of the transformation is the tile anchor (cell corner),
    matching the periodic lattice construction of the moving geometry.
    """

    def __init__(self, mesh, material, transformation):
        self.mesh = mesh
        self.eps = mesh.eps
        self.material = material
        self.scaled = scaled_coefficients(material, mesh.eps)
        self.transformation = transformation
        self.anchors = tile_anchors(mesh)
        self.space_a = P1Space(mesh, element_mask=mesh.phase == PHASE_A)
        self.space_b = P1Space(mesh, element_mask=mesh.phase == PHASE_B)
        self._facet_cache = None

    def _cell_coords(self, space):
        pts = space.qpoints.reshape(-1, self.mesh.dim)
        tiles = np.repeat(self.mesh.cell_tile[space.elements], len(space.qweights))
        X = self.anchors[tiles]
        y = pts / self.eps - np.round(X / self.eps)
        return X, np.clip(y, 0.0, 1.0)

    def phase_fields(self, t, phase):
        """Pulled-back, eps-scaled coefficient arrays on one phase."""
        space = self.space_a if phase == PHASE_A else self.space_b
        X, y = self._cell_coords(space)
        F, J, v = self.transformation.kinematics_batch(t, X, y)
        fields = pullback_fields(F, J, v, self.scaled, phase)
        fields["velocity"] = self.eps * fields["velocity"]  # cell velocity is O(eps)
        e, nq = len(space.cells), len(space.qweights)
        return {k: a.reshape((e, nq) + a.shape[1:]) for k, a in fields.items()}

    def interface_data(self, t):
        """Per-facet J, normal velocity, curvature and F at facet centroids."""
        mesh = self.mesh
        centroids = mesh.facet_centroids()
        tiles = mesh.facet_tile
        X = self.anchors[tiles]
        y = centroids / self.eps - np.round(X / self.eps)
        n, W, H, F, J = interface_batch(self.transformation, t, X, y,
                                        mesh.interface_normals)
        return dict(J=J, W=W, H=H, F=F, n0=mesh.interface_normals)

    def surface_loads(self, t, latent_factor):
        """Curvature load (vector dofs) and latent-heat load (scalar dofs).

        The eps-level surface densities are eps * (J sigma0 H F^{-1} n0) and
        eps * latent * (J W): one power of eps from the interface fields and
        the rest absorbed by the prescribed scalings of the jump conditions.
        """
        data = self.interface_data(t)
        Finv = np.linalg.inv(data["F"])
        sigma0 = self.material.surface_tension
        mech_density = self.eps * sigma0 * (data["J"] * data["H"])[:, None] * np.einsum(
            "fab,fb->fa", Finv, data["n0"]
        )
        heat_density = self.eps * latent_factor * data["J"] * data["W"]
        mech = assemble_interface_load(self.mesh, None, values=mech_density)
        heat = assemble_interface_load(self.mesh, None, values=heat_density)
        return mech, heat


# ---------------------------------------------------------------------------
# resolved solver


@dataclass
class EpsilonSolution:
    eps: float
    times: list
    theta: list          # nodal temperature per step
    u: list              # nodal deformation per step
    mesh: object
    fixed_point_iterations: list
    heat_solver: str
    config: dict


class EpsilonSolver:
    def __init__(self, cell_mesh, material, transformation, eps,
                 settings: SolverSettings | None = None, sources=None,
                 latent_in_load=True):
        self.cell = cell_mesh
        self.material = material
        self.transformation = transformation
        self.eps = float(eps)
        self.settings = settings if settings is not None else SolverSettings()
        self.sources = sources
        self.latent_in_load = latent_in_load

        self.mesh = build_epsilon_mesh(cell_mesh, eps)
        self.coeffs = EpsilonCoefficients(self.mesh, material, transformation)
        self.space = P1Space(self.mesh)
        bdofs = np.flatnonzero(np.repeat(self.mesh.boundary_vertex_mask(),
                                         self.mesh.dim))
        self.mech_constraints = ConstraintSet.dirichlet_only(bdofs)
        self._bundles = {}

    def source_values(self, t):
        d = self.mesh.dim
        if self.sources is None:
            return np.zeros(d), np.zeros(d), 0.0, 0.0
        return self.sources(t)

    def _latent_factor(self):
        f = self.settings.latent_sign
        if self.latent_in_load:
            f = f * self.material.latent_heat
        return f

    def static_transform(self):
        key0 = self.transformation.sample_key(0.0, np.zeros(self.mesh.dim))
        key1 = self.transformation.sample_key(1.0, np.full(self.mesh.dim, 0.3))
        return key0 == key1

    def bundle(self, t):
        key = round(float(t), 12)
        hit = self._bundles.get(key)
        if hit is not None:
            return hit
        mesh = self.mesh
        fa = self.coeffs.phase_fields(t, PHASE_A)
        fb = self.coeffs.phase_fields(t, PHASE_B)
        sa, sb = self.coeffs.space_a, self.coeffs.space_b

        def both(kind, name):
            A = assemble_operator(mesh, kind, fa[name], space=sa)
            B = assemble_operator(mesh, kind, fb[name], space=sb)
            return (A + B).tocsr()

        M_c = both("mass", "heat_capacity")
        A_K = both("scalar_diffusion", "conductivity")
        E = both("elasticity", "stiffness")
        G_alpha = both("coupling", "expansion")
        G_gamma = both("coupling", "dissipation")
        flux_a = fa["heat_capacity"][:, :, None] * fa["velocity"]
        flux_b = fb["heat_capacity"][:, :, None] * fb["velocity"]
        N = (assemble_operator(mesh, "advection", flux_a, space=sa)
             + assemble_operator(mesh, "advection", flux_b, space=sb)).tocsr()
        mech_surface, heat_surface = self.coeffs.surface_loads(t, self._latent_factor())

        f_u_a, f_u_b, f_th_a, f_th_b = self.source_values(t)
        f_theta = np.zeros(self.space.n_scalar)
        f_u = np.zeros(self.space.n_vector)
        if f_th_a != 0.0 or np.any(np.asarray(f_u_a) != 0.0):
            f_theta += assemble_scalar_load(sa, fa["jacobian"] * f_th_a)
            f_u += assemble_vector_load(sa, fa["jacobian"][:, :, None] * np.asarray(f_u_a))
        if f_th_b != 0.0 or np.any(np.asarray(f_u_b) != 0.0):
            f_theta += assemble_scalar_load(sb, fb["jacobian"] * f_th_b)
            f_u += assemble_vector_load(sb, fb["jacobian"][:, :, None] * np.asarray(f_u_b))

        bundle = dict(fields_a=fa, fields_b=fb, M_c=M_c, A_K=A_K, E=E,
                      G_alpha=G_alpha, G_gamma=G_gamma, N=N,
                      mech_surface=mech_surface, heat_surface=heat_surface,
                      f_theta=f_theta, f_u=f_u, advective=abs(N).max() > 0.0)
        self._bundles[key] = bundle
        if len(self._bundles) > 4:  # keep the current step pair only
            for k in sorted(self._bundles)[:-4]:
                if k != key:
                    self._bundles.pop(k, None)
        return bundle

    # -- solves ----------------------------------------------------------------

    def _solve_heat(self, lhs, rhs, advective):
        if advective:
            return spla.spsolve(lhs.tocsc(), rhs), "direct"
        try:
            x, _ = solve_spd(lhs, rhs, tol=self.settings.cg_tol,
                             max_iter=self.settings.cg_max_iter)
            return x, "cg"
        except SolverError:
            return spla.spsolve(lhs.tocsc(), rhs), "direct"

    def _mech_reduced(self, b):
        rhs0 = b["f_u"] + b["mech_surface"]
        red = apply_constraints(b["E"], rhs0, self.mech_constraints)
        lu = spla.splu(red.matrix.tocsc())
        return red, lu, rhs0

    def _solve_mech(self, red, lu, rhs_full):
        # homogeneous Dirichlet: the offset vanishes, reduce directly
        x = lu.solve(red.restriction.T @ rhs_full)
        return red.restriction @ x

    def _dissipation_load(self, b, u, dt_scale=None):
        return b["G_gamma"].T @ u

    def _advective_dissipation_load(self, b, u):
        d = self.mesh.dim
        out = np.zeros(self.space.n_scalar)
        for fields, space in ((b["fields_a"], self.coeffs.space_a),
                              (b["fields_b"], self.coeffs.space_b)):
            nodal = u.reshape(-1, d)[space.cells]
            grads = np.einsum("eia,eib->eab", nodal, space.gradients)
            vals = np.einsum("eqab,eab->eq", fields["dissipation"], grads)
            out += assemble_gradient_load(space, vals[:, :, None] * fields["velocity"])
        return out

    # -- time stepping -----------------------------------------------------------

    def solve(self, t_final, dt, theta0, observer=None) -> EpsilonSolution:
        s = self.settings
        mesh = self.mesh
        theta = np.asarray(theta0(mesh.vertices), dtype=float)
        b0 = self.bundle(0.0)
        red, lu, _ = self._mech_reduced(b0)
        u = self._solve_mech(red, lu, b0["G_alpha"] @ theta + b0["f_u"]
                             + b0["mech_surface"])

        times = [0.0]
        thetas = [theta.copy()]
        us = [u.copy()]
        fp_counts = []
        heat_solver_used = "cg"

        n_steps = max(0, math.ceil(t_final / dt - 1e-12))
        t = 0.0
        for _ in range(n_steps):
            step = min(dt, t_final - t)
            t_new = t + step
            b_new = self.bundle(t_new)
            b_old = self.bundle(t)
            heat_lhs = (b_new["M_c"] / step + b_new["N"] + b_new["A_K"]).tocsr()
            base = ((b_old["M_c"] @ theta) / step + b_new["f_theta"]
                    - b_new["heat_surface"]
                    + self._dissipation_load(b_old, u) / step)
            red, lu, mech_rhs0 = self._mech_reduced(b_new)

            theta_k, u_k = theta.copy(), u.copy()
            converged = False
            iterations = 0
            for it in range(1, s.fixed_point_max_iter + 1):
                iterations = it
                rhs = (base - self._dissipation_load(b_new, u_k) / step
                       - self._advective_dissipation_load(b_new, u_k))
                theta_next, heat_solver_used = self._solve_heat(
                    heat_lhs, rhs, b_new["advective"])
                u_next = self._solve_mech(
                    red, lu, b_new["G_alpha"] @ theta_next + mech_rhs0)
                d_theta = np.linalg.norm(theta_next - theta_k) / max(
                    1.0, np.linalg.norm(theta_next))
                d_u = np.linalg.norm(u_next - u_k) / max(1.0, np.linalg.norm(u_next))
                theta_k, u_k = theta_next, u_next
                if d_theta + d_u < s.fixed_point_tol:
                    converged = True
                    break
            if not converged:
                raise RuntimeError(
                    f"resolved solver: staggered loop stalled at t = {t_new:.6g}"
                )
            theta, u, t = theta_k, u_k, t_new
            times.append(t)
            thetas.append(theta.copy())
            us.append(u.copy())
            fp_counts.append(iterations)
            if observer is not None:
                observer(t, theta, u)

        return EpsilonSolution(
            eps=self.eps, times=times, theta=thetas, u=us, mesh=mesh,
            fixed_point_iterations=fp_counts, heat_solver=heat_solver_used,
            config=dict(dt=dt, t_final=t_final, latent_in_load=self.latent_in_load,
                        latent_sign=s.latent_sign),
        )


# ---------------------------------------------------------------------------
# a priori norm bundle


@dataclass
class NormBundle:
    linf_theta: float
    grad_theta_matrix: float
    grad_theta_inclusion_scaled: float
    linf_u: float
    linf_grad_u_matrix: float
    linf_grad_u_inclusion_scaled: float

    def as_array(self):
        return np.array([
            self.linf_theta, self.grad_theta_matrix,
            self.grad_theta_inclusion_scaled, self.linf_u,
            self.linf_grad_u_matrix, self.linf_grad_u_inclusion_scaled,
        ])

    names = ("linf_theta", "grad_theta_matrix", "grad_theta_inclusion_scaled",
             "linf_u", "linf_grad_u_matrix", "linf_grad_u_inclusion_scaled")


def interface_trace_norm(mesh, field):
    """L2 norm of a P1 scalar field over the interface (centroid rule)."""
    vals = field[mesh.interface_facets].mean(axis=1)
    return math.sqrt(float(np.sum(mesh.facet_areas() * vals**2)))


def gradient_matrices(mesh):
    """Phase-restricted scalar and full-gradient vector stiffness, unit coefficient."""
    d = mesh.dim
    eye = np.eye(d)
    full_grad = np.einsum("ab,qs->aqbs", eye, eye)  # C_{aqbs} = delta_ab delta_qs
    out = {}
    for phase, tag in ((PHASE_A, "a"), (PHASE_B, "b")):
        mask = mesh.phase == phase
        out[f"scalar_{tag}"] = assemble_operator(mesh, "scalar_diffusion", eye,
                                                 element_mask=mask)
        out[f"vector_{tag}"] = assemble_operator(mesh, "elasticity", full_grad,
                                                 element_mask=mask)
    return out


def apriori_norm_bundle(sol: EpsilonSolution) -> NormBundle:
    mesh = sol.mesh
    dt = sol.config["dt"]
    M = assemble_operator(mesh, "mass", 1.0)
    Mv = vector_mass(mesh, 1.0)
    G = gradient_matrices(mesh)

    def q(A, v):
        return float(max(v @ (A @ v), 0.0))

    linf_theta = max(math.sqrt(q(M, th)) for th in sol.theta)
    linf_u = max(math.sqrt(q(Mv, u)) for u in sol.u)
    grad_a = math.sqrt(sum(dt * q(G["scalar_a"], th) for th in sol.theta[1:]))
    grad_b = sol.eps * math.sqrt(sum(dt * q(G["scalar_b"], th) for th in sol.theta[1:]))
    grad_u_a = max(math.sqrt(q(G["vector_a"], u)) for u in sol.u)
    grad_u_b = sol.eps * max(math.sqrt(q(G["vector_b"], u)) for u in sol.u)
    return NormBundle(linf_theta, grad_a, grad_b, linf_u, grad_u_a, grad_u_b)


# ---------------------------------------------------------------------------
# discrete operator-structure checks


@dataclass
class OperatorStructureReport:
    eps: float
    t_samples: list
    elastic_min_rayleigh: float
    composition_symmetry_defect: float
    composition_min_quadform: float
    time_difference_bound: float
    passed: bool

    def summary(self):
        lines = [
            f"operator structure at eps = {self.eps}: "
            f"{'PASS' if self.passed else 'FAIL'}",
            f"  elastic form min Rayleigh quotient: {self.elastic_min_rayleigh:.6g}",
            f"  coupling composition symmetry defect: "
            f"{self.composition_symmetry_defect:.3e}",
            f"  coupling composition min quadratic form: "
            f"{self.composition_min_quadform:.6g}",
            f"  |d/dt <B f, g>| bound over samples: {self.time_difference_bound:.6g}",
        ]
        return "\n".join(lines)


def operator_structure_checks(cell_mesh, material, transformation, eps,
                              t_samples=(0.0, 0.5, 1.0), n_random=100,
                              sym_tol=1e-8, cg_tol=1e-12, seed=7) -> OperatorStructureReport:
    solver = EpsilonSolver(cell_mesh, material, transformation, eps)
    mesh = solver.mesh
    d = mesh.dim
    rng = np.random.default_rng(seed)
    free = ~np.repeat(mesh.boundary_vertex_mask(), d)

    min_rayleigh = np.inf
    sym_defect = 0.0
    min_quad = np.inf
    time_bound = 0.0

    # the same random fields are reused at every time sample so that the
    # difference quotients of <B f, g> are meaningful
    fs = rng.standard_normal((n_random, mesh.vertices.shape[0]))
    vs = rng.standard_normal((n_random, mesh.vertices.shape[0] * d)) * free
    M_plain = assemble_operator(mesh, "mass", 1.0)
    f_norms = np.sqrt(np.einsum("ij,ij->i", fs, (M_plain @ fs.T).T))

    prev_products = None
    for t in t_samples:
        b = solver.bundle(t)
        E = b["E"]
        red = apply_constraints(E, np.zeros(E.shape[0]), solver.mech_constraints)
        E_red = red.matrix
        R = red.restriction

        for v in vs:
            min_rayleigh = min(min_rayleigh, float(v @ (E @ v) / (v @ v)))

        Ga = b["G_alpha"]
        Gg = b["G_gamma"]
        us = np.empty((n_random, E.shape[0]))
        for i, f in enumerate(fs):
            u_r, _ = solve_spd(E_red, R.T @ (Ga @ f), tol=cg_tol)
            us[i] = R @ u_r
        gs = np.stack([Gg @ f for f in fs])
        products = gs @ us.T                       # <B2 f_j, f_i>
        scale = np.max(np.abs(products)) or 1.0
        sym_defect = max(sym_defect, float(np.max(np.abs(products - products.T)) / scale))
        min_quad = min(min_quad, float(np.min(np.diag(products)) / scale))

        M_c = b["M_c"]
        B_products = products + fs @ (M_c @ fs.T)
        if prev_products is not None:
            delta_t = t - prev_products[0]
            quot = np.abs(B_products - prev_products[1]) / np.outer(f_norms, f_norms)
            time_bound = max(time_bound, float(np.max(quot) / delta_t))
        prev_products = (t, B_products)

    passed = (min_rayleigh > 0.0 and sym_defect < sym_tol and min_quad > -sym_tol)
    return OperatorStructureReport(
        eps=eps, t_samples=list(t_samples),
        elastic_min_rayleigh=min_rayleigh,
        composition_symmetry_defect=sym_defect,
        composition_min_quadform=min_quad,
        time_difference_bound=time_bound,
        passed=passed,
    )


# ---------------------------------------------------------------------------
# two-scale comparison


def interpolate_macro(macro_mesh, macro_field, points):
    """Evaluate a P1 field of the uniform macro mesh at arbitrary points."""
    n = macro_mesh.resolution
    pts = np.clip(points, 0.0, 1.0)
    cells = np.minimum((pts * n).astype(int), n - 1)
    local = pts * n - cells
    if macro_mesh.dim != 2:
        raise NotImplementedError("macro interpolation implemented for d = 2")
    i, j = cells[:, 0], cells[:, 1]
    xi, et = local[:, 0], local[:, 1]
    idx = lambda a, b: a * (n + 1) + b
    v00 = macro_field[idx(i, j)]
    v10 = macro_field[idx(i + 1, j)]
    v11 = macro_field[idx(i + 1, j + 1)]
    v01 = macro_field[idx(i, j + 1)]
    even = (i + j) % 2 == 0
    # even squares split along the (0,0)-(1,1) diagonal, odd along the other
    e_lo = v00 + xi * (v10 - v00) + et * (v11 - v10)   # et <= xi
    e_hi = v00 + xi * (v11 - v01) + et * (v01 - v00)
    o_lo = v00 + xi * (v10 - v00) + et * (v01 - v00)   # xi + et <= 1
    o_hi = (v01 + v10 - v11) + xi * (v11 - v01) + et * (v11 - v10)
    return np.where(
        even,
        np.where(et <= xi, e_lo, e_hi),
        np.where(xi + et <= 1.0, o_lo, o_hi),
    )


@dataclass
class CompareRow:
    eps: float
    error_matrix: float       # L2(S x Omega_A) temperature mismatch
    error_inclusion: float    # L2(S x Omega_B) against the micro reconstruction
    interp_floor: float       # macro-interpolation transfer error


def two_scale_compare(cell_mesh, material, transformation, eps_list, t_final, dt,
                      theta0, macro_resolution=8, settings=None, sources=None,
                      latent_in_load=True, hom_solver=None, hom_states=None):
    """Temperature error between the resolved and homogenized solutions.

    Returns one row per eps plus the homogenized solver/states (reused when
    passed in, so sweeps share a single homogenized run).
    """
    from .mesh import build_uniform_mesh
    from .cell import CellContext
    from .effective import EffectiveProvider

    settings = settings if settings is not None else SolverSettings()
    if hom_solver is None:
        ctx = CellContext(cell_mesh, material, transformation)
        provider = EffectiveProvider(ctx, sources=sources,
                                     latent_in_source=latent_in_load)
        macro = build_uniform_mesh(macro_resolution, dim=cell_mesh.dim)
        hom_solver = TwoScaleSolver(macro, provider, settings)
        hom_states = hom_solver.run(t_final, dt, theta0)

    rows = []
    for eps in eps_list:
        solver = EpsilonSolver(cell_mesh, material, transformation, eps,
                               settings=settings, sources=sources,
                               latent_in_load=latent_in_load)
        sol = solver.solve(t_final, dt, theta0)
        rows.append(_compare_one(sol, hom_solver, hom_states, dt))
    return rows, hom_solver, hom_states


def _compare_one(sol: EpsilonSolution, hom_solver, hom_states, dt) -> CompareRow:
    mesh = sol.mesh
    d = mesh.dim
    M_a = assemble_operator(mesh, "mass", 1.0, element_mask=mesh.phase == PHASE_A)
    M_b = assemble_operator(mesh, "mass", 1.0, element_mask=mesh.phase == PHASE_B)

    # micro reconstruction bookkeeping
    micro_mesh = hom_solver.micro_model.mesh
    lookup = {tuple(np.round(v, 10)): i for i, v in enumerate(micro_mesh.vertices)}
    b_ids = np.flatnonzero(_vertex_phase_mask(mesh, PHASE_B))
    tiles = np.floor(mesh.vertices[b_ids] * (1.0 / sol.eps) - 1e-12).astype(int)
    tiles = np.clip(tiles, 0, round(1.0 / sol.eps) - 1)
    ycoords = mesh.vertices[b_ids] / sol.eps - tiles
    micro_ids = np.array([lookup[tuple(np.round(y, 10))] for y in ycoords])
    centers = (tiles + 0.5) * sol.eps
    host_ids = np.array([_nearest_host(hom_solver, c) for c in centers])

    err_a2 = 0.0
    err_b2 = 0.0
    floor2 = 0.0
    space = P1Space(mesh, element_mask=mesh.phase == PHASE_A)
    for k in range(1, len(sol.times)):
        theta_eps = sol.theta[k]
        state = hom_states[k]
        macro_at_nodes = interpolate_macro(hom_solver.mesh, state.theta, mesh.vertices)
        diff = theta_eps - macro_at_nodes
        err_a2 += dt * float(diff @ (M_a @ diff))

        # transfer floor: interpolant vs exact P1 macro field at quadrature points
        qp = space.qpoints.reshape(-1, d)
        interp_at_qp = np.einsum(
            "qi,ei->eq", space.shape_values, macro_at_nodes[space.cells]
        ).reshape(-1)
        exact_at_qp = interpolate_macro(hom_solver.mesh, state.theta, qp)
        floor_vals = (interp_at_qp - exact_at_qp).reshape(len(space.cells), -1)
        floor2 += dt * float(np.einsum("eq,q,e->", floor_vals**2, space.qweights,
                                       space.volumes))

        micro_theta = np.zeros(len(mesh.vertices))
        recon = np.array([state.micro[h].theta[m]
                          for h, m in zip(host_ids, micro_ids)])
        micro_theta[b_ids] = recon
        diff_b = np.zeros(len(mesh.vertices))
        diff_b[b_ids] = theta_eps[b_ids] - recon
        err_b2 += dt * float(diff_b @ (M_b @ diff_b))

    return CompareRow(eps=sol.eps, error_matrix=math.sqrt(err_a2),
                      error_inclusion=math.sqrt(err_b2),
                      interp_floor=math.sqrt(floor2))


def _vertex_phase_mask(mesh, phase):
    mask = np.zeros(len(mesh.vertices), dtype=bool)
    mask[np.unique(mesh.cells[mesh.phase == phase])] = True
    return mask


def _nearest_host(hom_solver, point):
    d2 = np.einsum("id,id->i", hom_solver.host_points - point,
                   hom_solver.host_points - point)
    return int(np.argmin(d2))
