"""Time integration of the homogenized two-scale thermoelastic system.

Macro scale: quasi-static elasticity and a heat balance with effective
coefficients on the unit square/cube.  Micro scale: every macro quadrature
point hosts a heat/elasticity problem on the reference inclusion, solved in
reference coordinates with pulled-back coefficients and constant Dirichlet
traces taken from the macro fields.  Coupling runs both ways: traces
downward, inclusion heat content upward (inside the time derivative of the
macro balance).

Time stepping is implicit Euler with a staggered fixed-point loop per step
(macro heat, macro elasticity, micro sweep).  After convergence one more
macro heat and elasticity solve against the final micro content makes the
accepted state satisfy the discrete macro balance exactly, which is what the
conservation diagnostics check.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .cell import CellContext
from .effective import EffectiveProvider
from .fem import (
    ConstraintSet,
    P1Space,
    SolverError,
    apply_constraints,
    assemble_gradient_load,
    assemble_operator,
    assemble_scalar_load,
    assemble_vector_load,
    solve_spd,
)
from .kinematics import PHASE_B, pullback_fields


@dataclass
class SolverSettings:
    cg_tol: float = 1e-12
    cg_max_iter: int = 50_000
    fixed_point_tol: float = 1e-8
    fixed_point_max_iter: int = 50
    latent_sign: float = 1.0
    micro_per_element: bool = False
    workers: int = 1


@dataclass
class MicroState:
    theta: np.ndarray
    u: np.ndarray
    heat_content: float
    dissipation_avg: float


@dataclass
class TwoScaleState:
    t: float
    theta: np.ndarray               # macro nodal temperature
    u: np.ndarray                   # macro nodal deformation (interleaved)
    micro: list                     # MicroState per hosting point
    heat_content: float = 0.0
    macro_heat_content: float = 0.0
    micro_heat_content: float = 0.0
    fixed_point_iterations: int = 0
    mech_residual: float = 0.0
    trace_defect: float = 0.0
    heat_solver: str = "cg"


class FixedPointError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# micro problems on the reference inclusion


class MicroModel:
    """Shared matrices and factorizations for the inclusion problems.

    All quadrature points with the same transformation sample share one
    factorization; only right-hand sides differ.
    """

    def __init__(self, ctx: CellContext, sources=None):
        self.ctx = ctx
        self.space = ctx.space_b
        self.mesh = ctx.sub_b.mesh
        self.dim = ctx.dim
        self.sources = sources
        d = self.dim

        boundary = np.unique(self.mesh.interface_facets)
        self.boundary_nodes = boundary
        mask = np.zeros(self.space.n_scalar, dtype=bool)
        mask[boundary] = True
        self.interior_scalar = np.flatnonzero(~mask)
        self.boundary_scalar = np.flatnonzero(mask)
        vmask = np.repeat(mask, d)
        self.interior_vector = np.flatnonzero(~vmask)
        self.boundary_vector = np.flatnonzero(vmask)
        self._cache = {}

    def source_values(self, t):
        if self.sources is None:
            d = self.dim
            return np.zeros(d), np.zeros(d), 0.0, 0.0
        return self.sources(t)

    def fields(self, t, x):
        pts = self.space.qpoints.reshape(-1, self.dim)
        F, J, v = self.ctx.transformation.kinematics_batch(t, x, pts)
        raw = pullback_fields(F, J, v, self.ctx.material, PHASE_B)
        e, nq = len(self.space.cells), len(self.space.qweights)
        return {k: a.reshape((e, nq) + a.shape[1:]) for k, a in raw.items()}

    def bundle(self, t, x, dt):
        key = (self.ctx.transformation.sample_key(t, x), round(float(dt), 14))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        f = self.fields(t, x)
        mesh, space = self.mesh, self.space
        M_c = assemble_operator(mesh, "mass", f["heat_capacity"], space=space)
        flux = f["heat_capacity"][:, :, None] * f["velocity"]
        N = assemble_operator(mesh, "advection", flux, space=space)
        A_K = assemble_operator(mesh, "scalar_diffusion", f["conductivity"], space=space)
        heat_lhs = (M_c / dt + N + A_K).tocsr()
        I, B = self.interior_scalar, self.boundary_scalar
        heat_lu = spla.splu(heat_lhs[I][:, I].tocsc())
        heat_bd = np.asarray(heat_lhs[I][:, B].sum(axis=1)).ravel()

        E = assemble_operator(mesh, "elasticity", f["stiffness"], space=space)
        G = assemble_operator(mesh, "coupling", f["expansion"], space=space)
        Iv, Bv = self.interior_vector, self.boundary_vector
        mech_lu = spla.splu(E[Iv][:, Iv].tocsc())
        mech_bd = []
        d = self.dim
        for c in range(d):
            ones = np.zeros(len(Bv))
            ones[c::d] = 1.0
            mech_bd.append(np.asarray(E[Iv][:, Bv] @ ones).ravel())

        bundle = dict(fields=f, M_c=M_c, heat_lu=heat_lu, heat_bd=heat_bd,
                      mech_lu=mech_lu, mech_bd=mech_bd, G=G, t=float(t))
        self._cache[key] = bundle
        return bundle

    # -- evaluation helpers --------------------------------------------------

    def _qp_scalar(self, nodal):
        return np.einsum("qi,ei->eq", self.space.shape_values, nodal[self.space.cells])

    def _dissipation_values(self, fields, u):
        d = self.dim
        nodal = u.reshape(-1, d)[self.space.cells]
        grads = np.einsum("eia,eib->eab", nodal, self.space.gradients)
        return np.einsum("eqab,eab->eq", fields["dissipation"], grads)

    def heat_content(self, fields, theta):
        vals = self._qp_scalar(theta) * fields["jacobian"]
        total = np.einsum("eq,q,e->", vals, self.space.qweights, self.space.volumes)
        cap = self.ctx.material.density_b * self.ctx.material.heat_capacity_b
        return cap * total

    def dissipation_average(self, fields, u):
        vals = self._dissipation_values(fields, u)
        return float(np.einsum("eq,q,e->", vals, self.space.qweights, self.space.volumes))

    def initial_state(self, t, x, trace_theta, trace_u, theta_field=None) -> MicroState:
        """Consistent micro state: given temperature, quasi-static deformation."""
        b = self.bundle(t, x, dt=1.0)
        theta = np.full(self.space.n_scalar, trace_theta) if theta_field is None \
            else theta_field.copy()
        theta[self.boundary_scalar] = trace_theta
        u = self._solve_mech(b, theta, trace_u, t)
        return MicroState(
            theta=theta, u=u,
            heat_content=self.heat_content(b["fields"], theta),
            dissipation_avg=self.dissipation_average(b["fields"], u),
        )

    def _solve_mech(self, b, theta, trace_u, t):
        d = self.dim
        rhs = b["G"] @ theta
        _, f_u_b, _, _ = self.source_values(t)
        if np.any(np.asarray(f_u_b) != 0.0):
            load = b["fields"]["jacobian"][:, :, None] * np.asarray(f_u_b)
            rhs = rhs + assemble_vector_load(self.space, load)
        r = rhs[self.interior_vector].copy()
        for c in range(d):
            r -= trace_u[c] * b["mech_bd"][c]
        u = np.zeros(self.space.n_vector)
        u[self.interior_vector] = b["mech_lu"].solve(r)
        u[self.boundary_vector] = np.tile(trace_u, len(self.boundary_nodes))
        return u

    def step(self, t_new, dt, x, trace_theta, trace_u, prev: MicroState,
             u_lag=None) -> MicroState:
        """One implicit Euler step of the inclusion heat problem, then the
        quasi-static elasticity update."""
        b_new = self.bundle(t_new, x, dt)
        b_old = self.bundle(t_new - dt, x, dt)
        f_new, f_old = b_new["fields"], b_old["fields"]
        u_lag = prev.u if u_lag is None else u_lag

        rhs = (b_old["M_c"] @ prev.theta) / dt
        diss_new = self._dissipation_values(f_new, u_lag)
        diss_old = self._dissipation_values(f_old, prev.u)
        rhs -= assemble_scalar_load(self.space, (diss_new - diss_old) / dt)
        rhs -= assemble_gradient_load(self.space,
                                      diss_new[:, :, None] * f_new["velocity"])
        _, _, _, f_th_b = self.source_values(t_new)
        if f_th_b != 0.0:
            rhs += assemble_scalar_load(self.space, f_new["jacobian"] * f_th_b)

        r = rhs[self.interior_scalar] - trace_theta * b_new["heat_bd"]
        theta = np.empty(self.space.n_scalar)
        theta[self.interior_scalar] = b_new["heat_lu"].solve(r)
        theta[self.boundary_scalar] = trace_theta

        u = self._solve_mech(b_new, theta, trace_u, t_new)
        return MicroState(
            theta=theta, u=u,
            heat_content=self.heat_content(f_new, theta),
            dissipation_avg=self.dissipation_average(f_new, u),
        )


# ---------------------------------------------------------------------------
# macro solver


class TwoScaleSolver:
    def __init__(self, macro_mesh, provider: EffectiveProvider,
                 settings: SolverSettings | None = None):
        self.mesh = macro_mesh
        self.provider = provider
        self.settings = settings if settings is not None else SolverSettings()
        self.space = P1Space(macro_mesh)
        self.dim = macro_mesh.dim
        self.micro_model = MicroModel(provider.ctx, sources=provider.sources)

        e, nq = len(self.space.cells), len(self.space.qweights)
        if self.settings.micro_per_element:
            self.host_points = self.space.qpoints.mean(axis=1)      # element centroids
            self.host_of_qp = np.repeat(np.arange(e), nq)
        else:
            self.host_points = self.space.qpoints.reshape(-1, self.dim)
            self.host_of_qp = np.arange(e * nq)
        self.n_hosts = len(self.host_points)

        bdofs = np.flatnonzero(np.repeat(macro_mesh.boundary_vertex_mask(), self.dim))
        self.mech_constraints = ConstraintSet.dirichlet_only(bdofs)

    # -- effective coefficient fields -----------------------------------------

    def effective_fields(self, t):
        """Per-quadrature-point arrays of every effective quantity at time t."""
        e, nq = len(self.space.cells), len(self.space.qweights)
        d = self.dim
        pts = self.space.qpoints.reshape(-1, d)
        keys = [self.provider.ctx.transformation.sample_key(t, p) for p in pts]
        uniq = {}
        for i, k in enumerate(keys):
            uniq.setdefault(k, []).append(i)
        out = dict(
            conductivity=np.empty((e * nq, d, d)),
            heat_capacity=np.empty(e * nq),
            stiffness=np.empty((e * nq, d, d, d, d)),
            expansion=np.empty((e * nq, d, d)),
            dissipation=np.empty((e * nq, d, d)),
            curvature_force=np.empty((e * nq, d)),
            latent=np.empty(e * nq),
            source_u=np.empty((e * nq, d)),
            source_theta=np.empty(e * nq),
        )
        for k, idx in uniq.items():
            eff = self.provider.at(t, pts[idx[0]])
            out["conductivity"][idx] = eff.conductivity
            out["heat_capacity"][idx] = eff.heat_capacity
            out["stiffness"][idx] = eff.stiffness
            out["expansion"][idx] = eff.expansion
            out["dissipation"][idx] = eff.dissipation
            out["curvature_force"][idx] = eff.curvature_force
            out["latent"][idx] = self.settings.latent_sign * eff.latent_source
            out["source_u"][idx] = eff.source_u
            out["source_theta"][idx] = eff.source_theta
        return {k: v.reshape((e, nq) + v.shape[1:]) for k, v in out.items()}

    def macro_operators(self, fields):
        mesh, space = self.mesh, self.space
        M_c = assemble_operator(mesh, "mass", fields["heat_capacity"], space=space)
        A_K = assemble_operator(mesh, "scalar_diffusion", fields["conductivity"],
                                space=space)
        E = assemble_operator(mesh, "elasticity", fields["stiffness"], space=space)
        G_alpha = assemble_operator(mesh, "coupling", fields["expansion"], space=space)
        G_gamma = assemble_operator(mesh, "coupling", fields["dissipation"], space=space)
        heat_load = assemble_scalar_load(
            space, fields["source_theta"] - fields["latent"])
        mech_load = assemble_vector_load(
            space, fields["source_u"] + fields["curvature_force"])
        return dict(M_c=M_c, A_K=A_K, E=E, G_alpha=G_alpha, G_gamma=G_gamma,
                    heat_load=heat_load, mech_load=mech_load)

    # -- micro coupling --------------------------------------------------------

    def _content_field(self, micro_states):
        """Inclusion heat content as an (e, nq) coefficient field."""
        e, nq = len(self.space.cells), len(self.space.qweights)
        values = np.array([m.heat_content for m in micro_states])
        return values[self.host_of_qp].reshape(e, nq)

    def content_load(self, micro_states):
        return assemble_scalar_load(self.space, self._content_field(micro_states))

    def traces_at_hosts(self, theta, u):
        """Macro temperature/deformation evaluated at the hosting points."""
        e, nq = len(self.space.cells), len(self.space.qweights)
        d = self.dim
        th_q = np.einsum("qi,ei->eq", self.space.shape_values, theta[self.space.cells])
        u_q = np.einsum("qi,eid->eqd", self.space.shape_values,
                        u.reshape(-1, d)[self.space.cells])
        if self.settings.micro_per_element:
            return th_q.mean(axis=1), u_q.mean(axis=1)
        return th_q.reshape(-1), u_q.reshape(-1, d)

    def micro_sweep(self, t_new, dt, theta, u, prev_micro, lag_micro):
        traces_th, traces_u = self.traces_at_hosts(theta, u)
        pts = self.host_points
        model = self.micro_model
        # warm the factorization cache serially (thread safe reuse afterwards)
        model.bundle(t_new, pts[0], dt)
        model.bundle(t_new - dt, pts[0], dt)

        def run(i):
            return model.step(t_new, dt, pts[i], traces_th[i], traces_u[i],
                              prev_micro[i], u_lag=lag_micro[i].u)

        if self.settings.workers > 1:
            with ThreadPoolExecutor(max_workers=self.settings.workers) as pool:
                results = list(pool.map(run, range(self.n_hosts)))
        else:
            results = [run(i) for i in range(self.n_hosts)]
        return results

    # -- initialization ---------------------------------------------------------

    def init_state(self, theta0, micro_theta0=None) -> TwoScaleState:
        """State at t = 0 with consistent traces and quasi-static deformation.

        micro_theta0 may give inclusion temperatures per hosting point; the
        Dirichlet trace rows are overwritten by the macro values.
        """
        theta = np.asarray(theta0(self.mesh.vertices), dtype=float)
        fields = self.effective_fields(0.0)
        ops = self.macro_operators(fields)
        u = self._solve_mech(ops, theta)

        traces_th, traces_u = self.traces_at_hosts(theta, u)
        micro = []
        for i in range(self.n_hosts):
            theta_field = None
            if micro_theta0 is not None:
                theta_field = np.asarray(
                    micro_theta0(self.host_points[i],
                                 self.micro_model.mesh.vertices), dtype=float)
            micro.append(self.micro_model.initial_state(
                0.0, self.host_points[i], traces_th[i], traces_u[i],
                theta_field=theta_field))
        state = TwoScaleState(t=0.0, theta=theta, u=u, micro=micro)
        self._record_content(state, ops)
        return state

    def _record_content(self, state, ops):
        q_load = self.content_load(state.micro)
        macro = float((ops["M_c"] @ state.theta).sum())
        micro = float(q_load.sum())
        state.macro_heat_content = macro
        state.micro_heat_content = micro
        state.heat_content = macro + micro

    # -- solves -----------------------------------------------------------------

    def _solve_heat(self, lhs, rhs):
        try:
            x, _ = solve_spd(lhs, rhs, tol=self.settings.cg_tol,
                             max_iter=self.settings.cg_max_iter)
            return x, "cg"
        except SolverError:
            return spla.spsolve(lhs.tocsc(), rhs), "direct"

    def _solve_mech(self, ops, theta):
        rhs = ops["G_alpha"] @ theta + ops["mech_load"]
        red = apply_constraints(ops["E"], rhs, self.mech_constraints)
        sol, _ = solve_spd(red.matrix, red.rhs, tol=self.settings.cg_tol,
                           max_iter=self.settings.cg_max_iter)
        return red.recover(sol)

    def _mech_residual(self, ops, theta, u):
        rhs = ops["G_alpha"] @ theta + ops["mech_load"]
        red = apply_constraints(ops["E"], rhs, self.mech_constraints)
        x_r = red.restriction.T @ u
        r = red.matrix @ x_r - red.rhs
        scale = np.linalg.norm(red.rhs)
        return float(np.linalg.norm(r) / (scale if scale > 0 else 1.0))

    # -- time stepping ------------------------------------------------------------

    def macro_step(self, state: TwoScaleState, dt) -> TwoScaleState:
        s = self.settings
        t_new = state.t + dt
        fields_new = self.effective_fields(t_new)
        fields_old = self.effective_fields(state.t)
        ops_new = self.macro_operators(fields_new)
        ops_old = self.macro_operators(fields_old)

        heat_lhs = (ops_new["M_c"] / dt + ops_new["A_K"]).tocsr()
        base_rhs = (ops_old["M_c"] @ state.theta) / dt + ops_new["heat_load"]
        q_old = self.content_load(state.micro)
        diss_old = ops_old["G_gamma"].T @ state.u

        theta_k = state.theta.copy()
        u_k = state.u.copy()
        micro_k = state.micro
        heat_solver = "cg"

        converged = False
        iterations = 0
        for it in range(1, s.fixed_point_max_iter + 1):
            iterations = it
            rhs = (base_rhs + (q_old - self.content_load(micro_k)) / dt
                   + (diss_old - ops_new["G_gamma"].T @ u_k) / dt)
            theta_next, heat_solver = self._solve_heat(heat_lhs, rhs)
            u_next = self._solve_mech(ops_new, theta_next)
            micro_next = self.micro_sweep(t_new, dt, theta_next, u_next,
                                          state.micro, micro_k)
            d_theta = self._l2(theta_next - theta_k, ops_new["M_c"])
            d_u = np.linalg.norm(u_next - u_k) / max(1.0, np.linalg.norm(u_next))
            theta_k, u_k, micro_k = theta_next, u_next, micro_next
            if d_theta + d_u < s.fixed_point_tol:
                converged = True
                break
        if not converged:
            raise FixedPointError(
                f"staggered loop did not converge within {s.fixed_point_max_iter} "
                f"sweeps at t = {t_new:.6g}"
            )

        # closing solves: the accepted state satisfies the macro balance
        # against the final micro content exactly
        rhs = (base_rhs + (q_old - self.content_load(micro_k)) / dt
               + (diss_old - ops_new["G_gamma"].T @ u_k) / dt)
        theta_new, heat_solver = self._solve_heat(heat_lhs, rhs)
        u_new = self._solve_mech(ops_new, theta_new)

        traces_th, _ = self.traces_at_hosts(theta_new, u_new)
        used = np.array([m.theta[self.micro_model.boundary_scalar[0]]
                         for m in micro_k])
        new_state = TwoScaleState(
            t=t_new, theta=theta_new, u=u_new, micro=micro_k,
            fixed_point_iterations=iterations,
            mech_residual=self._mech_residual(ops_new, theta_new, u_new),
            trace_defect=float(np.max(np.abs(used - traces_th))),
            heat_solver=heat_solver,
        )
        self._record_content(new_state, ops_new)
        return new_state

    def _l2(self, vec, mass):
        return float(np.sqrt(max(vec @ (mass @ vec), 0.0)))

    def run(self, t_final, dt, theta0, micro_theta0=None, observer=None):
        """March from 0 to t_final; returns the per-step states."""
        state = self.init_state(theta0, micro_theta0=micro_theta0)
        states = [state]
        if observer is not None:
            observer(state)
        n_steps = max(0, math.ceil(t_final / dt - 1e-12))
        for k in range(n_steps):
            step = min(dt, t_final - state.t)
            state = self.macro_step(state, step)
            states.append(state)
            if observer is not None:
                observer(state)
        return states


def diagnostics_header(dim):
    return ["t", "fixed_point_iterations", "theta_l2", "u_l2",
            "macro_heat_content", "micro_heat_content", "heat_content",
            "mech_residual", "trace_defect", "heat_solver_direct"]


def diagnostics_row(solver: TwoScaleSolver, state: TwoScaleState):
    from .fem import vector_mass

    M = assemble_operator(solver.mesh, "mass", 1.0, space=solver.space)
    Mv = vector_mass(solver.mesh, 1.0, space=solver.space)
    return [
        state.t,
        state.fixed_point_iterations,
        float(np.sqrt(max(state.theta @ (M @ state.theta), 0.0))),
        float(np.sqrt(max(state.u @ (Mv @ state.u), 0.0))),
        state.macro_heat_content,
        state.micro_heat_content,
        state.heat_content,
        state.mech_residual,
        state.trace_defect,
        1.0 if state.heat_solver == "direct" else 0.0,
    ]
