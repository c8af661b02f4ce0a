import numpy as np
import pytest

from thermohom.fem import P1Space, assemble_operator
from thermohom.kinematics import (
    IdentityTransform,
    PolynomialAmplitude,
    RadialGrowth,
    default_material,
)
from thermohom.mesh import build_cell_mesh, build_uniform_mesh
from thermohom.reference import (
    EpsilonSolver,
    apriori_norm_bundle,
    interpolate_macro,
    operator_structure_checks,
    two_scale_compare,
)
from thermohom.twoscale import SolverSettings


def growth(rate=0.1):
    return RadialGrowth(dim=2, inclusion_radius=0.25,
                        amplitude=PolynomialAmplitude((0.0, rate)))


def decoupled_material():
    return default_material(
        2, expansion_a=0.0, expansion_b=0.0, dissipation_a=0.0,
        dissipation_b=0.0, surface_tension=0.0, latent_heat=0.0,
    )


@pytest.fixture(scope="module")
def cell8():
    return build_cell_mesh(0.25, 8, dim=2)


class TestEpsilonSolver:
    def test_constant_state_static_transform(self, cell8):
        mat = default_material(2, dissipation_a=0.0, dissipation_b=0.0)
        solver = EpsilonSolver(cell8, mat, IdentityTransform(dim=2), 0.5)
        sol = solver.solve(0.2, 0.05, lambda x: np.full(len(x), 3.0))
        for th in sol.theta:
            assert np.max(np.abs(th - 3.0)) < 1e-10

    def test_decoupled_heat_ignores_elastic_loads(self, cell8):
        mat = decoupled_material()
        theta0 = lambda x: np.cos(np.pi * x[:, 0])

        def run(load):
            sources = lambda t: (np.array([load, 0.0]), np.zeros(2), 0.0, 0.0)
            solver = EpsilonSolver(cell8, mat, IdentityTransform(dim=2), 0.5,
                                   sources=sources)
            return solver.solve(0.1, 0.05, theta0)

        a, b = run(0.0), run(3.0)
        for ta, tb in zip(a.theta, b.theta):
            assert np.array_equal(ta, tb)
        assert not np.array_equal(a.u[-1], b.u[-1])

    def test_manufactured_diffusion_convergence(self):
        # manufactured theta = exp(-t) cos(pi x) cos(pi y): phase-wise bulk
        # sources plus the interface flux-jump load (the smooth field does not
        # satisfy the eps^2-scaled transmission condition by itself)
        import scipy.sparse.linalg as spla

        from thermohom.fem import assemble_interface_load, assemble_scalar_load

        mat = decoupled_material()
        tr = IdentityTransform(dim=2)
        eps = 0.5
        t_final, dt = 0.05, 1e-3

        def profile(p):
            return np.cos(np.pi * p[:, 0]) * np.cos(np.pi * p[:, 1])

        def grad_profile(p):
            gx = -np.pi * np.sin(np.pi * p[:, 0]) * np.cos(np.pi * p[:, 1])
            gy = -np.pi * np.cos(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])
            return np.stack([gx, gy], axis=1)

        errors = []
        resolutions = (4, 8, 16)
        for n in resolutions:
            cell = build_cell_mesh(0.25, n, dim=2)
            solver = EpsilonSolver(cell, mat, tr, eps)
            mesh = solver.mesh
            lhs = None
            theta = profile(mesh.vertices)
            b = solver.bundle(0.0)
            lhs = (b["M_c"] / dt + b["A_K"]).tocsc()
            lu = spla.splu(lhs)
            sa, sb = solver.coeffs.space_a, solver.coeffs.space_b
            load_a = assemble_scalar_load(sa, profile)
            load_b = assemble_scalar_load(sb, profile)
            centroids = mesh.facet_centroids()
            jump = -(1.0 - eps**2) * np.einsum(
                "fd,fd->f", grad_profile(centroids), mesh.interface_normals)
            load_jump = assemble_interface_load(mesh, None, values=jump)
            smooth = 2.0 * np.pi**2

            t = 0.0
            while t < t_final - 1e-12:
                t += dt
                amp = np.exp(-t)
                rhs = (b["M_c"] @ theta) / dt
                rhs += amp * ((smooth - 1.0) * load_a
                              + (eps**2 * smooth - 1.0) * load_b + load_jump)
                theta = lu.solve(rhs)
            exact = np.exp(-t_final) * profile(mesh.vertices)
            M = assemble_operator(mesh, "mass", 1.0)
            diff = theta - exact
            errors.append(np.sqrt(diff @ (M @ diff)))
        order = -np.polyfit(np.log(resolutions), np.log(errors), 1)[0]
        assert order > 1.8


class TestNormBundle:
    def test_constant_one_zero_displacement(self, cell8):
        # hand evaluation: theta = 1, u = 0 gives (|Omega|^(1/2), 0, 0, 0, 0, 0)
        from thermohom.mesh import build_epsilon_mesh
        from thermohom.reference import EpsilonSolution

        mesh = build_epsilon_mesh(cell8, 0.5)
        ones = np.ones(len(mesh.vertices))
        zeros = np.zeros(2 * len(mesh.vertices))
        sol = EpsilonSolution(
            eps=0.5, times=[0.0, 0.05], theta=[ones, ones], u=[zeros, zeros],
            mesh=mesh, fixed_point_iterations=[1], heat_solver="cg",
            config=dict(dt=0.05, t_final=0.05),
        )
        nb = apriori_norm_bundle(sol)
        assert nb.linf_theta == pytest.approx(1.0, abs=1e-10)
        # zero norms sit at the sqrt of the quadratic-form rounding floor
        assert np.max(np.abs(nb.as_array()[1:])) < 1e-6

    def test_zero_solution(self, cell8):
        mat = decoupled_material()
        solver = EpsilonSolver(cell8, mat, IdentityTransform(dim=2), 0.5)
        sol = solver.solve(0.1, 0.05, lambda x: np.zeros(len(x)))
        assert np.max(np.abs(apriori_norm_bundle(sol).as_array())) < 1e-12

    def test_random_field_matches_dense_quadrature(self, cell8):
        from thermohom.mesh import build_epsilon_mesh

        mesh = build_epsilon_mesh(cell8, 0.5)
        rng = np.random.default_rng(3)
        theta = rng.standard_normal(len(mesh.vertices))
        M = assemble_operator(mesh, "mass", 1.0)
        fast = theta @ (M @ theta)
        # dense quadrature oracle: high-order rule per element
        space = P1Space(mesh)
        # degree-4 rule on triangles (6 points)
        pts = np.array([
            [0.44594849091597, 0.44594849091597, 0.10810301816807],
            [0.44594849091597, 0.10810301816807, 0.44594849091597],
            [0.10810301816807, 0.44594849091597, 0.44594849091597],
            [0.09157621350977, 0.09157621350977, 0.81684757298046],
            [0.09157621350977, 0.81684757298046, 0.09157621350977],
            [0.81684757298046, 0.09157621350977, 0.09157621350977],
        ])
        w = np.array([0.22338158967801] * 3 + [0.10995174365532] * 3)
        vals = np.einsum("qi,ei->eq", pts, theta[mesh.cells])
        slow = np.einsum("eq,q,e->", vals**2, w, space.volumes)
        assert np.isclose(fast, slow, rtol=1e-12)


class TestOperatorStructure:
    def test_identity_transform_time_frozen(self, cell8):
        rep = operator_structure_checks(
            cell8, default_material(2), IdentityTransform(dim=2), 0.5,
            t_samples=(0.0, 0.5), n_random=20,
        )
        assert rep.passed
        assert rep.time_difference_bound < 1e-10
        assert rep.elastic_min_rayleigh > 0.0

    def test_growth_transform_structure(self, cell8):
        rep = operator_structure_checks(
            cell8, default_material(2), growth(0.1), 0.5,
            t_samples=(0.0, 0.5, 1.0), n_random=20,
        )
        assert rep.passed, rep.summary()
        assert rep.composition_symmetry_defect < 1e-8
        assert rep.composition_min_quadform > -1e-10
        assert np.isfinite(rep.time_difference_bound)

    def test_zero_dissipation_kills_composition(self, cell8):
        mat = default_material(2, dissipation_a=0.0, dissipation_b=0.0)
        rep = operator_structure_checks(
            cell8, mat, IdentityTransform(dim=2), 0.5,
            t_samples=(0.0,), n_random=10,
        )
        assert rep.composition_symmetry_defect == 0.0


class TestTraceEstimate:
    def test_eps_scaled_trace_constant_transfers(self, cell8):
        # fit C on the coarsest tiling, reuse it (with a fitting margin) on
        # the finer ones: eps ||th||^2_Gamma <= C (||th||^2 + eps^2 ||grad th||^2)
        from thermohom.mesh import build_epsilon_mesh
        from thermohom.reference import gradient_matrices, interface_trace_norm

        rng = np.random.default_rng(11)

        def ratios(eps, n_fields=40):
            mesh = build_epsilon_mesh(cell8, eps)
            M = assemble_operator(mesh, "mass", 1.0)
            G = gradient_matrices(mesh)
            A_full = G["scalar_a"] + G["scalar_b"]
            out = []
            for _ in range(n_fields):
                th = rng.standard_normal(len(mesh.vertices))
                # include smooth fields too: nodal noise alone is atypical
                th += 3.0 * np.cos(np.pi * mesh.vertices[:, 0])
                trace2 = eps * interface_trace_norm(mesh, th) ** 2
                bulk2 = th @ (M @ th) + eps**2 * (th @ (A_full @ th))
                out.append(trace2 / bulk2)
            return np.array(out)

        fitted = ratios(0.5).max() * 1.1  # fitting margin, documented
        for eps in (0.25, 0.125):
            assert ratios(eps).max() <= fitted


class TestMacroInterpolation:
    def test_reproduces_nodal_field(self):
        mesh = build_uniform_mesh(4, dim=2)
        rng = np.random.default_rng(0)
        field = rng.standard_normal(len(mesh.vertices))
        vals = interpolate_macro(mesh, field, mesh.vertices)
        assert np.max(np.abs(vals - field)) < 1e-12

    def test_exact_on_linears(self):
        mesh = build_uniform_mesh(8, dim=2)
        field = 2.0 * mesh.vertices[:, 0] - 0.7 * mesh.vertices[:, 1] + 0.3
        rng = np.random.default_rng(1)
        pts = rng.random((100, 2))
        vals = interpolate_macro(mesh, field, pts)
        exact = 2.0 * pts[:, 0] - 0.7 * pts[:, 1] + 0.3
        assert np.max(np.abs(vals - exact)) < 1e-12


class TestTwoScaleCompare:
    def test_constant_solution_all_errors_vanish(self, cell8):
        mat = default_material(2, dissipation_a=0.0, dissipation_b=0.0,
                               latent_heat=0.0, surface_tension=0.0)
        rows, _, _ = two_scale_compare(
            cell8, mat, IdentityTransform(dim=2), [0.5], 0.1, 0.05,
            lambda x: np.full(len(x), 2.0), macro_resolution=4,
        )
        assert rows[0].error_matrix < 1e-9
        assert rows[0].error_inclusion < 1e-9

    def test_one_row_per_eps(self, cell8):
        mat = decoupled_material()
        rows, _, _ = two_scale_compare(
            cell8, mat, IdentityTransform(dim=2), [0.5, 0.25], 0.05, 0.05,
            lambda x: np.cos(np.pi * x[:, 0]), macro_resolution=4,
        )
        assert len(rows) == 2
        assert rows[0].eps == 0.5 and rows[1].eps == 0.25
