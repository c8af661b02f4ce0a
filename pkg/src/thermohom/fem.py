"""First-order conforming finite elements on simplicial meshes.

Scalar fields carry one degree of freedom per vertex; vector fields use the
interleaved ordering ``dof = vertex * dim + component``.  Sparse matrices are
scipy CSR; assembly batches all elements with einsum and scatters in a fixed
element order, so results do not depend on any worker count.

Coefficient fields passed to the assemblers may be constants (scalar, matrix,
or rank-4 tensor), per-quadrature-point arrays of shape ``(n_elements, n_qp,
...)``, or callables mapping an ``(m, d)`` array of points to values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals if residuals is not None else []


class ConstraintError(ValueError):
    pass


# ---------------------------------------------------------------------------
# quadrature (order 2, exact for quadratic integrands on affine simplices)

_TRI_BARY = np.array([
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
])
_TRI_W = np.full(3, 1.0 / 3.0)

_a, _b = 0.5854101966249685, 0.1381966011250105
_TET_BARY = np.array([
    [_a, _b, _b, _b],
    [_b, _a, _b, _b],
    [_b, _b, _a, _b],
    [_b, _b, _b, _a],
])
_TET_W = np.full(4, 0.25)


def simplex_rule(dim):
    if dim == 2:
        return _TRI_BARY, _TRI_W
    if dim == 3:
        return _TET_BARY, _TET_W
    raise ValueError("dimension must be 2 or 3")


# ---------------------------------------------------------------------------
# P1 spaces


class P1Space:
    """Precomputed P1 geometry for (a subset of) a simplicial mesh."""

    def __init__(self, mesh, element_mask=None):
        self.mesh = mesh
        self.dim = mesh.dim
        if element_mask is None:
            self.elements = np.arange(len(mesh.cells))
        else:
            self.elements = np.flatnonzero(element_mask)
        self.cells = mesh.cells[self.elements]
        self.n_vertices = len(mesh.vertices)

        v = mesh.vertices[self.cells]                      # (e, d+1, d)
        edges = np.transpose(v[:, 1:, :] - v[:, :1, :], (0, 2, 1))  # column edges
        det = np.linalg.det(edges)
        if np.any(det <= 0.0):
            raise ValueError("mesh contains non-positively oriented cells")
        self.volumes = det / math.factorial(self.dim)
        inv = np.linalg.inv(edges)                         # rows are grad lambda_i, i >= 1
        grads = np.empty((len(self.cells), self.dim + 1, self.dim))
        grads[:, 1:, :] = inv
        grads[:, 0, :] = -inv.sum(axis=1)
        self.gradients = grads

        bary, w = simplex_rule(self.dim)
        self.shape_values = bary                           # (nq, d+1)
        self.qweights = w
        self.qpoints = np.einsum("qi,eid->eqd", bary, v)   # (e, nq, d)

    # dof maps -------------------------------------------------------------

    def scalar_dofs(self):
        return self.cells

    def vector_dofs(self):
        d = self.dim
        return (self.cells[:, :, None] * d + np.arange(d)).reshape(len(self.cells), -1)

    @property
    def n_scalar(self):
        return self.n_vertices

    @property
    def n_vector(self):
        return self.n_vertices * self.dim

    # coefficient evaluation -------------------------------------------------

    def eval_coefficient(self, coeff, value_shape):
        """Normalize a coefficient to an (e, nq) + value_shape array."""
        e, nq = len(self.cells), len(self.qweights)
        if callable(coeff):
            flat = self.qpoints.reshape(-1, self.dim)
            vals = np.asarray(coeff(flat), dtype=float)
            return vals.reshape((e, nq) + value_shape)
        vals = np.asarray(coeff, dtype=float)
        if vals.shape == (e, nq) + value_shape:
            return vals
        if vals.ndim == 0 and value_shape == ():
            return np.broadcast_to(vals, (e, nq)).copy()
        if vals.ndim == 0 and len(value_shape) == 2:
            vals = vals * np.eye(self.dim)
        if vals.shape == value_shape:
            return np.broadcast_to(vals, (e, nq) + value_shape).copy()
        raise ValueError(f"coefficient with shape {vals.shape} not understood")


# ---------------------------------------------------------------------------
# operator assembly


def _scatter(space, loc, dofs, n):
    if not np.all(np.isfinite(loc)):
        raise ValueError("assembly produced non-finite entries")
    rows = np.repeat(dofs, dofs.shape[1], axis=1).ravel()
    cols = np.tile(dofs, (1, dofs.shape[1])).ravel()
    A = sp.coo_matrix((loc.ravel(), (rows, cols)), shape=(n, n))
    return A.tocsr()


def assemble_operator(mesh, kind, coeff, element_mask=None, space=None):
    """Galerkin matrix of one of the standard bilinear forms.

    kind: "scalar_diffusion" (matrix coefficient), "mass" (scalar),
    "elasticity" (rank-4), "advection" (vector flux w; assembles
    ``int phi_j w . grad phi_i``), or "coupling" (matrix alpha; assembles
    the thermal-stress map ``<G theta, v> = int theta alpha : grad v`` from
    scalar trials to vector tests).
    """
    s = space if space is not None else P1Space(mesh, element_mask)
    G, N, w, vol = s.gradients, s.shape_values, s.qweights, s.volumes
    d = s.dim

    if kind == "scalar_diffusion":
        K = s.eval_coefficient(coeff, (d, d))
        loc = np.einsum("eia,eqab,ejb,q,e->eij", G, K, G, w, vol, optimize=True)
        return _scatter(s, loc, s.scalar_dofs(), s.n_scalar)
    if kind == "mass":
        c = s.eval_coefficient(coeff, ())
        loc = np.einsum("eq,qi,qj,q,e->eij", c, N, N, w, vol, optimize=True)
        return _scatter(s, loc, s.scalar_dofs(), s.n_scalar)
    if kind == "elasticity":
        C = s.eval_coefficient(coeff, (d, d, d, d))
        loc = np.einsum("eqacbd,eic,ejd,q,e->eiajb", C, G, G, w, vol, optimize=True)
        loc = loc.reshape(len(s.cells), (d + 1) * d, (d + 1) * d)
        return _scatter(s, loc, s.vector_dofs(), s.n_vector)
    if kind == "advection":
        W = s.eval_coefficient(coeff, (d,))
        loc = np.einsum("eqa,eia,qj,q,e->eij", W, G, N, w, vol, optimize=True)
        return _scatter(s, loc, s.scalar_dofs(), s.n_scalar)
    if kind == "coupling":
        alpha = s.eval_coefficient(coeff, (d, d))
        loc = np.einsum("eqac,eic,qj,q,e->eiaj", alpha, G, N, w, vol, optimize=True)
        loc = loc.reshape(len(s.cells), (d + 1) * d, d + 1)
        rows = np.repeat(s.vector_dofs(), d + 1, axis=1).ravel()
        cols = np.tile(s.scalar_dofs(), (1, (d + 1) * d)).ravel()
        A = sp.coo_matrix((loc.ravel(), (rows, cols)), shape=(s.n_vector, s.n_scalar))
        return A.tocsr()
    raise ValueError(f"unknown operator kind: {kind}")


def vector_mass(mesh, coeff, element_mask=None, space=None):
    """Block-diagonal mass matrix for vector fields (interleaved dofs)."""
    M = assemble_operator(mesh, "mass", coeff, element_mask, space)
    return sp.kron(M, sp.eye(mesh.dim, format="csr"), format="csr")


# ---------------------------------------------------------------------------
# load assembly


def _scatter_load(loc, dofs, n):
    out = np.zeros(n)
    np.add.at(out, dofs.ravel(), loc.ravel())
    return out


def assemble_scalar_load(space: P1Space, f):
    """l_i = int f phi_i."""
    vals = space.eval_coefficient(f, ())
    loc = np.einsum("eq,qi,q,e->ei", vals, space.shape_values, space.qweights,
                    space.volumes, optimize=True)
    return _scatter_load(loc, space.scalar_dofs(), space.n_scalar)


def assemble_vector_load(space: P1Space, f):
    """l_(i,a) = int f_a phi_i."""
    vals = space.eval_coefficient(f, (space.dim,))
    loc = np.einsum("eqa,qi,q,e->eia", vals, space.shape_values, space.qweights,
                    space.volumes, optimize=True)
    return _scatter_load(loc.reshape(len(space.cells), -1), space.vector_dofs(),
                         space.n_vector)


def assemble_gradient_load(space: P1Space, w):
    """l_i = int w . grad phi_i for a vector-valued integrand w."""
    vals = space.eval_coefficient(w, (space.dim,))
    loc = np.einsum("eqa,eia,q,e->ei", vals, space.gradients, space.qweights,
                    space.volumes, optimize=True)
    return _scatter_load(loc, space.scalar_dofs(), space.n_scalar)


def assemble_strain_load(space: P1Space, S):
    """l_(i,a) = int S : grad(phi_i e_a) for a matrix-valued integrand S."""
    vals = space.eval_coefficient(S, (space.dim, space.dim))
    loc = np.einsum("eqac,eic,q,e->eia", vals, space.gradients, space.qweights,
                    space.volumes, optimize=True)
    return _scatter_load(loc.reshape(len(space.cells), -1), space.vector_dofs(),
                         space.n_vector)


def assemble_interface_load(mesh, density, values=None):
    """Facet-quadrature load from a density living on the interface.

    ``density`` is a callable (centroids, normals) -> values, or an array of
    per-facet values; scalar densities produce a scalar-dof load, vector
    densities a vector-dof load.  Midpoint/centroid rule on the facets.
    """
    if len(mesh.interface_facets) == 0:
        raise ValueError("mesh has no interface facets")
    centroids = mesh.facet_centroids()
    areas = mesh.facet_areas()
    if values is None:
        values = np.asarray(density(centroids, mesh.interface_normals), dtype=float)
    else:
        values = np.asarray(values, dtype=float)
    nf, dfac = mesh.interface_facets.shape
    trace = 1.0 / dfac  # P1 value at the facet centroid
    if values.ndim == 1:
        out = np.zeros(len(mesh.vertices))
        contrib = np.repeat((values * areas * trace)[:, None], dfac, axis=1)
        np.add.at(out, mesh.interface_facets.ravel(), contrib.ravel())
        return out
    out = np.zeros(len(mesh.vertices) * mesh.dim)
    contrib = (values * (areas * trace)[:, None])[:, None, :]  # (nf, 1, d)
    dofs = mesh.interface_facets[:, :, None] * mesh.dim + np.arange(mesh.dim)
    np.add.at(out, dofs.ravel(), np.broadcast_to(
        contrib, (nf, dfac, mesh.dim)).ravel())
    return out


# ---------------------------------------------------------------------------
# constraints


@dataclass
class ConstraintSet:
    """Dirichlet pins, periodic identifications, and optional zero-mean constraints."""

    dirichlet_dofs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    dirichlet_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    periodic: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=int))
    zero_mean_weights: list = field(default_factory=list)

    @staticmethod
    def dirichlet_only(dofs, values=0.0):
        dofs = np.asarray(dofs, dtype=int)
        values = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape).copy()
        return ConstraintSet(dirichlet_dofs=dofs, dirichlet_values=values)


@dataclass
class ReducedSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    restriction: sp.csr_matrix       # full -> reduced basis (n_full x n_red)
    offset: np.ndarray               # pinned values lifted into the full vector
    constraints: list                # reduced zero-mean weight vectors

    def recover(self, x_reduced):
        return self.restriction @ x_reduced + self.offset

    def augmented(self):
        """Explicit Lagrange-multiplier rows/columns for the zero-mean constraints."""
        if not self.constraints:
            return self.matrix.tocsr(), self.rhs
        M = sp.csr_matrix(np.column_stack(self.constraints))
        k = M.shape[1]
        A = sp.bmat([[self.matrix, M], [M.T, None]], format="csr")
        b = np.concatenate([self.rhs, np.zeros(k)])
        return A, b


def apply_constraints(A, b, cs: ConstraintSet) -> ReducedSystem:
    n = A.shape[0]
    pinned = np.zeros(n, dtype=bool)
    pinned[cs.dirichlet_dofs] = True

    # resolve periodic chains to final leaders
    leader = np.arange(n)
    for f, l in cs.periodic:
        leader[f] = l
    for f, _ in cs.periodic:
        seen = {f}
        while leader[leader[f]] != leader[f]:
            leader[f] = leader[leader[f]]
            if leader[f] in seen:
                raise ConstraintError("cyclic periodic identification")
            seen.add(leader[f])
    followers = leader != np.arange(n)
    if np.any(pinned & followers):
        raise ConstraintError("pinned dof is also periodically identified")
    if np.any(pinned[leader[followers]]):
        raise ConstraintError("follower identified with a pinned dof")

    free = ~(pinned | followers)
    red_index = -np.ones(n, dtype=int)
    red_index[free] = np.arange(free.sum())

    rows = np.flatnonzero(~pinned)
    cols = red_index[leader[rows]]
    if np.any(cols < 0):
        raise ConstraintError("follower chain ends in a pinned dof")
    R = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, free.sum())).tocsr()

    x0 = np.zeros(n)
    x0[cs.dirichlet_dofs] = cs.dirichlet_values

    A_r = (R.T @ A @ R).tocsr()
    b_r = R.T @ (b - A @ x0)
    reduced_constraints = [R.T @ np.asarray(m, dtype=float) for m in cs.zero_mean_weights]
    return ReducedSystem(matrix=A_r, rhs=b_r, restriction=R, offset=x0,
                         constraints=reduced_constraints)


# ---------------------------------------------------------------------------
# solvers


@dataclass
class SolveInfo:
    iterations: int
    residuals: list
    converged: bool


def _projector(constraints, n):
    if not constraints:
        return lambda v: v
    M = np.column_stack(constraints)
    Q, _ = np.linalg.qr(M)
    return lambda v: v - Q @ (Q.T @ v)


def solve_spd(A, b, tol=1e-10, max_iter=None, constraints=None, x0=None):
    """Jacobi-preconditioned conjugate gradients for SPD systems.

    Optional linear constraints m^T x = 0 (zero-mean spaces) are enforced by
    projection each iteration, which reproduces the Lagrange-multiplier
    solution of :meth:`ReducedSystem.augmented` without losing positive
    definiteness.  Raises SolverError with the residual history on breakdown,
    detected indefiniteness, or too many iterations.
    """
    n = A.shape[0]
    if n == 0:
        return np.zeros(0), SolveInfo(0, [], True)
    if max_iter is None:
        max_iter = max(1000, 10 * n)
    P = _projector(constraints or [], n)
    diag = A.diagonal()
    inv_diag = np.where(diag > 0.0, 1.0 / np.maximum(diag, 1e-300), 1.0)

    b_p = P(np.asarray(b, dtype=float))
    scale = np.linalg.norm(b_p)
    if scale == 0.0:
        return np.zeros(n), SolveInfo(0, [0.0], True)

    x = P(np.asarray(x0, dtype=float)) if x0 is not None else np.zeros(n)
    r = P(b_p - P(A @ x)) if x0 is not None else b_p.copy()
    z = P(inv_diag * r)
    p = z.copy()
    rz = r @ z
    residuals = [np.linalg.norm(r) / scale]
    if residuals[-1] <= tol:
        return x, SolveInfo(0, residuals, True)

    for it in range(1, max_iter + 1):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0.0:
            if np.linalg.norm(p) * np.linalg.norm(r) < 1e-28 * scale:
                break
            raise SolverError(
                f"negative curvature encountered (p^T A p = {pAp:.3e}); "
                "matrix is not positive definite on the constrained space",
                residuals,
            )
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        r = P(r)
        res = np.linalg.norm(r) / scale
        residuals.append(res)
        if res <= tol:
            return x, SolveInfo(it, residuals, True)
        z = P(inv_diag * r)
        rz_new = r @ z
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
    raise SolverError(
        f"conjugate gradients did not reach {tol:g} within {max_iter} iterations "
        f"(last residual {residuals[-1]:.3e})",
        residuals,
    )


def solve_direct(A, b, constraints=None):
    """Sparse direct solve; zero-mean constraints via explicit multipliers."""
    if constraints:
        M = sp.csr_matrix(np.column_stack(constraints))
        k = M.shape[1]
        K = sp.bmat([[A, M], [M.T, None]], format="csc")
        rhs = np.concatenate([np.asarray(b, dtype=float), np.zeros(k)])
        x = spla.spsolve(K, rhs)
        return x[: A.shape[0]]
    return spla.spsolve(A.tocsc(), np.asarray(b, dtype=float))


def dense_oracle_solve(A, b, constraints=None):
    """Dense factorization path for small verification problems."""
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    if A.shape[0] > 500:
        raise ValueError("dense oracle reserved for problems below 500 dofs")
    if constraints:
        M = np.column_stack(constraints)
        k = M.shape[1]
        K = np.block([[A, M], [M.T, np.zeros((k, k))]])
        rhs = np.concatenate([b, np.zeros(k)])
        return np.linalg.solve(K, rhs)[: A.shape[0]]
    return np.linalg.solve(A, b)


# ---------------------------------------------------------------------------
# diagnostics


def symmetry_defect(A):
    """max |A - A^T| relative to max |A|."""
    d = abs(A - A.T)
    denom = abs(A).max() if A.nnz else 1.0
    return (d.max() / denom) if d.nnz else 0.0


def export_coordinate_text(path, A):
    A = A.tocoo()
    with open(path, "w") as f:
        f.write(f"{A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for i, j, v in zip(A.row, A.col, A.data):
            f.write(f"{i} {j} {format(v, '.17g')}\n")
