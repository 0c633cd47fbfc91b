"""Grid construction, stencils, and residuals: exactness and convergence."""

import numpy as np
import pytest

from nconvex.discretize import (
    DiscreteField,
    Grid,
    ProblemSpec,
    gradient_batch,
    hessian_batch,
    hessian_stencil,
    homotopy_constant,
    interior_residual,
    normal_derivative,
    robin_residual,
    sample_problem,
    second_normal_derivative,
)
from nconvex.geometry import DomainSpec

BALL = DomainSpec.ball(1.0, n=3)


def quad_seed(pts):
    return 0.5 * np.sum(pts**2, axis=1)


def constant_problem(n=3):
    c0 = homotopy_constant(n)
    return ProblemSpec(
        n=n,
        f=lambda pts: np.full(pts.shape[0], c0),
        phi=lambda pts: np.einsum("ij,ij->i", pts, pts / np.linalg.norm(pts, axis=1)[:, None])
        + 0.5 * np.sum(pts**2, axis=1),
        name="ball-constant",
    )


@pytest.fixture(scope="module")
def grid9():
    return Grid(BALL, 9)


@pytest.fixture(scope="module")
def grid17():
    return Grid(BALL, 17)


class TestGridBuild:
    def test_active_points_strictly_inside(self, grid17):
        assert np.all(grid17.active_d > 0.5 * grid17.h)

    def test_counts_scale_with_resolution(self, grid9, grid17):
        # active count grows like h^-n
        ratio = grid17.n_active / grid9.n_active
        assert 4.0 < ratio < 16.0

    def test_deterministic_build(self):
        a = Grid(BALL, 9)
        b = Grid(BALL, 9)
        assert np.array_equal(a.active_idx, b.active_idx)
        assert np.array_equal(a.colloc_y, b.colloc_y)
        assert (a.W1 - b.W1).nnz == 0
        assert (a.C - b.C).nnz == 0

    def test_collocation_on_boundary(self, grid17):
        level = np.linalg.norm(grid17.colloc_y, axis=1)
        assert np.max(np.abs(level - 1.0)) < 1e-12
        assert np.allclose(np.linalg.norm(grid17.colloc_nu, axis=1), 1.0)

    def test_too_coarse_rejected(self):
        with pytest.raises(ValueError):
            Grid(BALL, 5)


class TestHessianStencil:
    def test_quadratic_exact(self, grid9):
        field = DiscreteField.from_function(grid9, quad_seed)
        d2 = hessian_batch(field, grid9)
        err = np.max(np.abs(d2 - np.eye(3)))
        assert err < 1e-12

    def test_cross_term_exact(self, grid9):
        field = DiscreteField.from_function(grid9, lambda p: p[:, 0] * p[:, 1])
        d2 = hessian_batch(field, grid9)
        want = np.zeros((3, 3))
        want[0, 1] = want[1, 0] = 1.0
        assert np.max(np.abs(d2 - want)) < 1e-12

    def test_single_point_matches_batch(self, grid9):
        field = DiscreteField.from_function(grid9, lambda p: np.sin(p[:, 0]))
        got = hessian_stencil(field, grid9, 7)
        assert np.allclose(got, hessian_batch(field, grid9)[7])

    def test_second_order_richardson(self):
        errs = []
        for res in (17, 33):
            grid = Grid(BALL, res)
            field = DiscreteField.from_function(
                grid, lambda p: np.sin(p[:, 0] + 0.3 * p[:, 1])
            )
            d2 = hessian_batch(field, grid)
            want = -np.sin(grid.active_pts[:, 0] + 0.3 * grid.active_pts[:, 1])
            # fixed interior region: away from the closure layer
            deep = grid.active_d > 0.35
            errs.append(np.max(np.abs(d2[deep, 0, 0] - want[deep])))
        ratio = errs[0] / errs[1]
        assert 3.0 < ratio < 5.0  # h halves, second order gives ~4

    def test_gradient_quadratic_exact(self, grid9):
        field = DiscreteField.from_function(grid9, quad_seed)
        g = gradient_batch(field, grid9)
        assert np.max(np.abs(g - grid9.active_pts)) < 1e-12


class TestRobinResidual:
    def test_quadratic_seed_exact_any_resolution(self):
        for res in (9, 17, 33):
            grid = Grid(BALL, res)
            problem = sample_problem(constant_problem(), grid)
            field = DiscreteField.from_function(grid, quad_seed)
            r = robin_residual(field, grid, problem, t=0.0)
            assert np.max(np.abs(r)) < 1e-11

    def test_constant_field(self, grid9):
        problem = sample_problem(
            ProblemSpec(n=3, f=lambda p: np.ones(p.shape[0]),
                        phi=lambda p: np.full(p.shape[0], 4.5)),
            grid9,
        )
        field = DiscreteField(
            values=np.full(grid9.n_active, 4.5), trace=np.full(grid9.n_colloc, 4.5)
        )
        r = robin_residual(field, grid9, problem, t=1.0)
        assert np.max(np.abs(r)) < 1e-12

    def test_normal_derivatives_quadratic_exact(self, grid9):
        field = DiscreteField.from_function(grid9, quad_seed)
        # u = |x|^2/2 on the unit ball: u_nu = 1 and u_nunu = 1 on the boundary
        assert np.max(np.abs(normal_derivative(field, grid9) - 1.0)) < 1e-11
        assert np.max(np.abs(second_normal_derivative(field, grid9) - 1.0)) < 1e-10

    def test_manufactured_second_order(self):
        amp = 0.05

        def u_star(pts):
            return 0.5 * np.sum(pts**2, axis=1) + amp * np.exp(pts[:, 0])

        def u_star_phi(pts):
            nu = pts / np.linalg.norm(pts, axis=1)[:, None]
            grad = pts + np.stack(
                [amp * np.exp(pts[:, 0]), np.zeros(pts.shape[0]), np.zeros(pts.shape[0])],
                axis=1,
            )
            return np.einsum("ij,ij->i", grad, nu) + u_star(pts)

        errs = []
        for res in (9, 17):
            grid = Grid(BALL, res)
            problem = sample_problem(
                ProblemSpec(n=3, f=lambda p: np.ones(p.shape[0]), phi=u_star_phi), grid
            )
            field = DiscreteField.from_function(grid, u_star)
            r = robin_residual(field, grid, problem, t=1.0)
            errs.append(np.max(np.abs(r)))
        assert errs[0] / errs[1] > 2.0  # at least ~first order in the sup norm


class TestInteriorResidual:
    def test_quadratic_seed_t0(self):
        for res in (9, 17):
            grid = Grid(BALL, res)
            problem = sample_problem(constant_problem(), grid)
            field = DiscreteField.from_function(grid, quad_seed)
            r = interior_residual(field, grid, problem, t=0.0)
            assert np.max(np.abs(r)) < 1e-11

    def test_t1_is_det_minus_f(self, grid9):
        problem = sample_problem(constant_problem(), grid9)
        field = DiscreteField.from_function(grid9, quad_seed)
        r = interior_residual(field, grid9, problem, t=1.0)
        # det(W) = 8 = f everywhere for the quadratic seed
        assert np.max(np.abs(r)) < 1e-11

    def test_homotopy_constant_value(self):
        assert homotopy_constant(3) == 8.0
        assert homotopy_constant(4) == 81.0

    def test_manufactured_second_order(self):
        amp = 0.05

        def u_star(pts):
            return 0.5 * np.sum(pts**2, axis=1) + amp * np.exp(pts[:, 0])

        def f_star(pts):
            a = amp * np.exp(pts[:, 0])
            return 2.0 * (2.0 + a) ** 2  # lifted eigenvalues 2+a, 2+a, 2

        errs = []
        for res in (17, 33):
            grid = Grid(BALL, res)
            problem = sample_problem(
                ProblemSpec(n=3, f=f_star, phi=lambda p: np.zeros(p.shape[0])), grid
            )
            field = DiscreteField.from_function(grid, u_star)
            r = interior_residual(field, grid, problem, t=1.0)
            errs.append(np.max(np.abs(r[grid.active_d > 0.35])))
        ratio = errs[0] / errs[1]
        assert 3.0 < ratio < 5.0

    def test_positivity_gate(self, grid9):
        bad = ProblemSpec(
            n=3, f=lambda p: p[:, 0], phi=lambda p: np.zeros(p.shape[0])
        )
        with pytest.raises(ValueError):
            sample_problem(bad, grid9)

    def test_t_out_of_range(self, grid9):
        problem = sample_problem(constant_problem(), grid9)
        field = DiscreteField.from_function(grid9, quad_seed)
        with pytest.raises(ValueError):
            interior_residual(field, grid9, problem, t=1.5)


class TestFieldPlumbing:
    def test_pack_unpack_roundtrip(self, grid9):
        field = DiscreteField.from_function(grid9, quad_seed)
        again = DiscreteField.unpack(field.pack(), grid9)
        assert np.array_equal(field.values, again.values)
        assert np.array_equal(field.trace, again.trace)

    def test_length_mismatch_rejected(self, grid9):
        field = DiscreteField(values=np.zeros(3), trace=np.zeros(grid9.n_colloc))
        with pytest.raises(ValueError):
            field.check(grid9)
