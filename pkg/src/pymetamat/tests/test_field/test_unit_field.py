import math

import numpy as np
import pytest

from pymetamat.design.expr import constant_field
from pymetamat.design.recipe import DesignParams, boundary_h, target_p
from pymetamat.exceptions import InvalidParameterError, ProximityError, SingularKernelError
from pymetamat.solvers.broker import SolverBroker
from pymetamat.solvers.field import (
    FieldSolution,
    Quadrature,
    ball_self_integral,
    collocation_operator,
    convergence_study,
    effective_operator,
    evaluate_effective,
    green_kernel,
    incident_field,
    is_nested,
    kernel_cell_integral,
    loglog_slope,
    model_bound,
    piecewise_constant,
    plane_wave,
    pyramid_self_integral,
    reference_solution,
    restrict,
    self_cell_integral,
    solve_collocation,
    solve_effective,
    subcell_offsets,
    sup_distance,
)

pytestmark = pytest.mark.unit


def linear_values(lattice):
    """A field that is affine in x, so interpolation of any order reproduces it."""
    c = lattice.centers()
    return (c[:, 0] + 2.0 * c[:, 1] + 3.0 * c[:, 2]) + 1j * (1.0 - c[:, 0] + 0.5 * c[:, 2])


# ──────────────────────────────────────────────
#  Incident wave and kernel
# ──────────────────────────────────────────────

class TestIncidentAndKernel:
    def test_plane_wave(self, small_params):
        points = np.array([[0.0, 0.3, 0.9], [0.25, 0.0, 0.0], [1.0, 1.0, 1.0]])
        solution = incident_field(small_params, points)
        np.testing.assert_allclose(solution.values, np.exp(1j * points[:, 0]), rtol=1e-15)
        assert solution.kind == "incident"
        assert solution.residual == 0.0

    def test_plane_wave_direction(self):
        alpha = (0.0, 0.6, 0.8)
        value = plane_wave(5.0, alpha, np.array([[0.1, 0.2, 0.3]]))
        assert value[0] == pytest.approx(np.exp(1j * 5.0 * (0.12 + 0.24)))

    def test_plane_wave_rejects_non_unit_direction(self):
        with pytest.raises(InvalidParameterError):
            plane_wave(1.0, (1.0, 1.0, 0.0), np.zeros((1, 3)))

    def test_green_kernel(self):
        value = green_kernel(2.0, [0.0, 0.0, 0.0], [0.0, 0.3, 0.4])
        assert value == pytest.approx(np.exp(1j) / (4 * math.pi * 0.5))

    def test_green_kernel_is_symmetric(self):
        x, y = [0.1, 0.2, 0.3], [0.7, 0.1, 0.5]
        assert green_kernel(3.0, x, y) == green_kernel(3.0, y, x)

    def test_green_kernel_singular(self):
        with pytest.raises(SingularKernelError):
            green_kernel(1.0, [0.5, 0.5, 0.5], [0.5, 0.5, 0.5])


# ──────────────────────────────────────────────
#  Cell integrals
# ──────────────────────────────────────────────

class TestSelfCell:
    @pytest.mark.parametrize("k,h", [(1.0, 0.5), (5.0, 0.1), (1.0, 0.05)])
    def test_pyramid_rule_matches_oracle(self, oracles, k, h):
        expected = oracles.cube_self(k, h)
        assert abs(pyramid_self_integral(k, h) - expected) <= 1e-8 * abs(expected)

    @pytest.mark.parametrize("k,h", [(1.0, 0.5), (5.0, 0.1)])
    def test_ball_rule_is_close(self, oracles, k, h):
        expected = oracles.cube_self(k, h)
        assert abs(self_cell_integral(k, h, "ball") - expected) <= 0.05 * abs(expected)

    def test_ball_closed_form(self):
        k, R = 2.0, 0.3
        c = k * R
        closed = (np.exp(1j * c) * (1 - 1j * c) - 1) / k ** 2
        assert ball_self_integral(k, R) == pytest.approx(closed, rel=1e-12)

    def test_ball_series_branch(self):
        k, R = 1.0, 0.05
        c = k * R
        closed = (np.exp(1j * c) * (1 - 1j * c) - 1) / k ** 2
        assert ball_self_integral(k, R) == pytest.approx(closed, rel=1e-9)

    def test_static_limit(self):
        assert ball_self_integral(1e-9, 1.0) == 0.5
        assert ball_self_integral(1.0, 1e-7) == pytest.approx(0.5e-14)

    def test_unknown_rule(self):
        with pytest.raises(InvalidParameterError):
            self_cell_integral(1.0, 0.1, "sphere")

    def test_quadrature_validation(self):
        with pytest.raises(InvalidParameterError):
            Quadrature(subdivisions=0)
        with pytest.raises(InvalidParameterError):
            Quadrature(self_cell="sphere")

    def test_subcell_offsets(self):
        offsets = subcell_offsets(0.5, 2)
        assert offsets.shape == (8, 3)
        np.testing.assert_allclose(offsets.mean(axis=0), 0.0, atol=1e-15)
        np.testing.assert_allclose(np.abs(offsets), 0.125)
        np.testing.assert_array_equal(subcell_offsets(0.5, 1), np.zeros((1, 3)))


class TestKernelCellIntegral:
    def test_all_pairs_refined(self, small_params, oracles):
        lattice = small_params.lattice(1)
        p = target_p(small_params)
        h = lattice.spacing
        for l in range(lattice.M):
            for j in range(lattice.M):
                approx = kernel_cell_integral(l, j, lattice, p, 1.0, subdivisions=8, self_cell="pyramid")
                if l == j:
                    expected = -4.0 * oracles.cube_self(1.0, h)
                else:
                    expected = oracles.cell(1.0, lattice.center(l), lattice.center(j), h, p.evaluate, rtol=1e-6)
                assert abs(approx - expected) <= 1e-3 * abs(expected), (l, j)

    def test_all_pairs_default_rule(self, small_params, oracles):
        lattice = small_params.lattice(1)
        p = target_p(small_params)
        h = lattice.spacing
        for l in range(lattice.M):
            for j in range(lattice.M):
                approx = kernel_cell_integral(l, j, lattice, p, 1.0)
                if l == j:
                    expected = -4.0 * oracles.cube_self(1.0, h)
                else:
                    expected = oracles.cell(1.0, lattice.center(l), lattice.center(j), h, p.evaluate, rtol=1e-6)
                assert abs(approx - expected) <= 0.05 * abs(expected), (l, j)

    def test_midpoint_is_point_value(self, small_params):
        lattice = small_params.lattice(1)
        p = target_p(small_params)
        value = kernel_cell_integral(0, 7, lattice, p, 1.0)
        expected = green_kernel(1.0, lattice.center(0), lattice.center(7)) * -4.0 * lattice.spacing ** 3
        assert value == pytest.approx(expected, rel=1e-13)

    def test_refinement_gap_is_second_order(self, example_params):
        """s=1 against s=3 at a fixed separation shrinks like h^2 when h halves."""
        params = example_params("ex1", k=2.0, P=2)
        p = target_p(params)

        def relative_gap(m):
            lattice = params.lattice(m)
            h = lattice.spacing
            l, j = lattice.cell_index(np.array([[0.5 * h] * 3, [0.5 * h + 0.5] * 3]))
            plain = kernel_cell_integral(int(l), int(j), lattice, p, 2.0, subdivisions=1)
            refined = kernel_cell_integral(int(l), int(j), lattice, p, 2.0, subdivisions=3)
            return abs(plain - refined) / abs(refined)

        ratio = relative_gap(2) / relative_gap(1)
        assert 0.15 <= ratio <= 0.35, ratio

    def test_operator_matches_entries(self, example_params):
        params = example_params("ex3", k=5.0, P=2)
        lattice = params.lattice(1)
        quadrature = Quadrature(subdivisions=2, self_cell="pyramid")
        matrix = collocation_operator(lattice, params, quadrature).dense()
        p = target_p(params)
        for l in range(lattice.M):
            for j in range(lattice.M):
                entry = kernel_cell_integral(l, j, lattice, p, 5.0, 2, "pyramid")
                assert matrix[l, j] == pytest.approx(entry, rel=1e-12)


# ──────────────────────────────────────────────
#  Operators
# ──────────────────────────────────────────────

class TestOperators:
    def test_matvec_matches_dense(self, example_params):
        params = example_params("ex2", k=1.0, P=3)
        lattice = params.lattice(1)
        op = collocation_operator(lattice, params, Quadrature(subdivisions=2))
        v = np.exp(1j * np.arange(lattice.M) / 3.0)
        np.testing.assert_allclose(op.matvec(v), op.dense() @ v, rtol=1e-11, atol=1e-12)

    def test_threaded_matvec_matches_serial(self, example_params, mocker):
        params = example_params("ex3", k=1.0, P=3)
        lattice = params.lattice(2)
        mocker.patch("pymetamat.solvers.field.BLOCK_ELEMENTS", 216 * 20)
        serial = effective_operator(lattice, params, workers=1)
        threaded = effective_operator(lattice, params, workers=4)
        assert len(threaded._blocks()) > 1
        v = np.linspace(0.0, 1.0, lattice.M) + 0.5j
        np.testing.assert_allclose(threaded.matvec(v), serial.matvec(v), rtol=1e-14, atol=0.0)

    def test_effective_operator_has_zero_diagonal(self, small_params):
        matrix = effective_operator(small_params.lattice(1), small_params).dense()
        np.testing.assert_array_equal(np.diag(matrix), np.zeros(8))

    def test_vacuum_operators_are_zero(self, vacuum_params):
        params = vacuum_params()
        lattice = params.lattice(2)
        assert effective_operator(lattice, params).is_zero()
        assert collocation_operator(lattice, params).is_zero()
        assert not effective_operator(lattice, DesignParams(k=1.0, n2=constant_field(2.0), P=2)).is_zero()


# ──────────────────────────────────────────────
#  Solves against brute-force inverses
# ──────────────────────────────────────────────

class TestSolves:
    def test_effective_matches_dense_inverse(self, small_params, oracles):
        lattice = small_params.lattice(1)
        h = boundary_h(small_params)
        scale = 4.0 * math.pi * lattice.a ** (2.0 - small_params.kappa)

        def entry(l, j):
            if l == j:
                return 0.0
            x_j = lattice.center(j)
            return scale * oracles.green(1.0, lattice.center(l), x_j) * complex(h.evaluate(x_j))

        u0 = np.exp(1j * lattice.centers()[:, 0])
        expected = oracles.dense_inverse(entry, lattice.M, u0)
        solution = solve_effective(lattice, small_params)
        np.testing.assert_allclose(solution.values, expected, rtol=1e-10, atol=1e-12)
        assert solution.kind == "effective"
        assert solution.method == "dense"
        assert solution.residual <= 1e-10

    def test_collocation_matches_dense_inverse(self, example_params, oracles):
        params = example_params("ex2", k=5.0, P=2)
        lattice = params.lattice(1)
        p = target_p(params)
        expected = oracles.dense_inverse(lambda l, j: kernel_cell_integral(l, j, lattice, p, 5.0),
                                         lattice.M, np.exp(5j * lattice.centers()[:, 0]))
        solution = solve_collocation(lattice, params)
        np.testing.assert_allclose(solution.values, expected, rtol=1e-10, atol=1e-12)
        assert solution.kind == "collocation"

    def test_single_ball(self, example_params):
        params = example_params("ex1", k=1.0, P=1)
        lattice = params.lattice(1)
        assert lattice.M == 1
        effective = solve_effective(lattice, params)
        assert effective.values[0] == pytest.approx(np.exp(0.5j), rel=1e-14)

        collocation = solve_collocation(lattice, params)
        diagonal = -4.0 * self_cell_integral(1.0, 1.0, "ball")
        assert collocation.values[0] == pytest.approx(np.exp(0.5j) / (1.0 + diagonal), rel=1e-12)

    def test_vacuum_solves_are_incident_wave(self, vacuum_params):
        params = vacuum_params(k=5.0)
        lattice = params.lattice(2)
        u0 = np.exp(5j * lattice.centers()[:, 0])
        for solution in (solve_effective(lattice, params), solve_collocation(lattice, params)):
            assert solution.method == "trivial"
            np.testing.assert_array_equal(solution.values, u0)

    def test_dense_and_gmres_agree(self, example_params):
        params = example_params("ex3", k=1.0, P=3)
        lattice = params.lattice(2)
        dense = solve_collocation(lattice, params, SolverBroker())
        iterative = solve_collocation(lattice, params, SolverBroker(dense_cutoff=0))
        assert dense.method == "dense"
        assert iterative.method == "gmres"
        assert sup_distance(dense, iterative) <= 1e-8 * dense.sup_norm

    def test_workers_do_not_change_solution(self, example_params):
        params = example_params("ex4", k=1.0, P=2)
        lattice = params.lattice(2)
        serial = solve_effective(lattice, params, workers=1)
        threaded = solve_effective(lattice, params, workers=3)
        np.testing.assert_allclose(threaded.values, serial.values, rtol=1e-13)

    def test_solution_values_are_read_only(self, small_params):
        solution = solve_effective(small_params.lattice(1), small_params)
        with pytest.raises(ValueError):
            solution.values[0] = 0.0

    def test_unknown_kind(self):
        with pytest.raises(InvalidParameterError):
            FieldSolution(values=np.zeros(2), residual=0.0, kind="scattered")


class TestEvaluateEffective:
    def test_inside_a_ball(self, small_params):
        lattice = small_params.lattice(1)
        solution = solve_effective(lattice, small_params)
        with pytest.raises(ProximityError):
            evaluate_effective(solution, lattice, small_params, lattice.center(3))
        near = lattice.center(3) + np.array([0.5 * lattice.a, 0.0, 0.0])
        with pytest.raises(ProximityError):
            evaluate_effective(solution, lattice, small_params, near)

    def test_matches_direct_sum(self, small_params):
        lattice = small_params.lattice(1)
        solution = solve_effective(lattice, small_params)
        x = np.array([0.5, 0.5, 0.5])
        h = boundary_h(small_params)
        total = 0.0j
        for j in range(lattice.M):
            x_j = lattice.center(j)
            total += green_kernel(1.0, x, x_j) * complex(h.evaluate(x_j)) * solution.values[j]
        expected = np.exp(0.5j) - 4.0 * math.pi * lattice.a ** (2.0 - small_params.kappa) * total
        assert evaluate_effective(solution, lattice, small_params, x) == pytest.approx(expected, rel=1e-12)

    def test_center_order_does_not_matter(self, small_params):
        lattice = small_params.lattice(2)
        solution = solve_effective(lattice, small_params)
        x = np.array([0.51, 0.52, 0.49])
        h = boundary_h(small_params).evaluate(lattice.centers())
        weights = 4.0 * math.pi * h * lattice.a ** (2.0 - small_params.kappa) * solution.values
        order = np.random.default_rng(7).permutation(lattice.M)
        total = 0.0j
        for j in order:
            total += green_kernel(1.0, x, lattice.center(int(j))) * weights[j]
        expected = plane_wave(1.0, (1.0, 0.0, 0.0), x) - total
        assert evaluate_effective(solution, lattice, small_params, x) == pytest.approx(complex(expected), rel=1e-12)

    def test_array_of_points(self, small_params):
        lattice = small_params.lattice(1)
        solution = solve_effective(lattice, small_params)
        points = np.array([[0.1, 0.1, 0.9], [0.6, 0.4, 0.2]])
        values = evaluate_effective(solution, lattice, small_params, points)
        assert values.shape == (2,)
        assert np.all(np.isfinite(values))

    def test_vacuum_is_incident_wave(self, vacuum_params):
        params = vacuum_params()
        lattice = params.lattice(1)
        solution = solve_effective(lattice, params)
        x = np.array([0.5, 0.5, 0.5])
        assert evaluate_effective(solution, lattice, params, x) == pytest.approx(np.exp(0.5j), rel=1e-15)

    def test_length_mismatch(self, small_params):
        solution = solve_effective(small_params.lattice(1), small_params)
        with pytest.raises(InvalidParameterError):
            evaluate_effective(solution, small_params.lattice(2), small_params, np.array([0.5, 0.5, 0.5]))


# ──────────────────────────────────────────────
#  Reference restriction and error metrics
# ──────────────────────────────────────────────

class TestRestriction:
    def test_nesting(self, small_params):
        coarse = small_params.lattice(1)
        assert is_nested(small_params.lattice(3), coarse)
        assert is_nested(small_params.lattice(9), small_params.lattice(3))
        assert not is_nested(small_params.lattice(2), coarse)
        assert not is_nested(small_params.lattice(9), small_params.lattice(2))

    def test_nested_copy_is_exact(self, small_params):
        fine, coarse = small_params.lattice(3), small_params.lattice(1)
        solution = FieldSolution(values=linear_values(fine), residual=0.0, kind="collocation", method="dense",
                                 lattice=fine)
        restricted = restrict(solution, coarse, small_params)
        assert restricted.method == "nested"
        assert restricted.kind == "reference"
        np.testing.assert_allclose(restricted.values, linear_values(coarse), rtol=1e-13)
        assert set(restricted.values.tolist()) <= set(solution.values.tolist())

    def test_interpolation_reproduces_affine_field(self, small_params):
        fine, coarse = small_params.lattice(4), small_params.lattice(1)
        solution = FieldSolution(values=linear_values(fine), residual=0.0, kind="collocation", method="dense",
                                 lattice=fine)
        restricted = restrict(solution, coarse, small_params)
        assert restricted.method == "interpolated"
        np.testing.assert_allclose(restricted.values, linear_values(coarse), rtol=1e-10, atol=1e-12)

    def test_trivial_fine_solve(self, vacuum_params):
        params = vacuum_params()
        coarse = params.lattice(1)
        restricted = reference_solution(params, 4, coarse)
        np.testing.assert_array_equal(restricted.values, np.exp(1j * coarse.centers()[:, 0]))

    def test_reference_must_be_finer(self, small_params):
        with pytest.raises(InvalidParameterError):
            reference_solution(small_params, 2, small_params.lattice(2))

    def test_piecewise_constant(self, small_params):
        lattice = small_params.lattice(1)
        solution = FieldSolution(values=np.arange(8.0), residual=0.0, kind="collocation", lattice=lattice)
        values = piecewise_constant(solution, lattice, np.array([[0.1, 0.1, 0.1], [0.9, 0.1, 0.6]]))
        np.testing.assert_array_equal(values, [0.0, 5.0])

    def test_sup_distance(self):
        assert sup_distance(np.array([1.0, 2.0j]), np.array([1.0, 0.0])) == 2.0
        with pytest.raises(InvalidParameterError):
            sup_distance(np.zeros(3), np.zeros(4))


class TestConvergenceHelpers:
    def test_slope_of_power_law(self):
        sizes = [8, 64, 216, 512]
        errors = [m ** -0.5 for m in sizes]
        assert loglog_slope(sizes, errors) == pytest.approx(-0.5, abs=1e-12)

    def test_slope_undefined(self):
        assert loglog_slope([8], [0.1]) is None
        assert loglog_slope([8, 64], [0.1, 0.0]) is None

    def test_model_bound(self, small_params):
        lattice = small_params.lattice(2)
        expected = math.log(64) / 16.0
        assert model_bound(lattice, small_params.gamma, small_params.kappa) >= expected

    def test_vacuum_errors_are_zero(self, vacuum_params):
        report = convergence_study(vacuum_params(), [1, 2], 3)
        assert [row.e_effective for row in report.rows] == [0.0, 0.0]
        assert [row.e_collocation for row in report.rows] == [0.0, 0.0]
        assert report.slope is None
        assert report.slope_collocation is None

    @pytest.mark.parametrize("m_list,fine_m", [([2, 1], 5), ([1, 1], 5), ([], 5), ([1, 2], 2)])
    def test_study_validation(self, small_params, m_list, fine_m):
        with pytest.raises(InvalidParameterError):
            convergence_study(small_params, m_list, fine_m)
