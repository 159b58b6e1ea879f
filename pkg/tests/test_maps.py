import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from saddlescope.maps import (
    MapError,
    MapSpec,
    Symmetry,
    apply_symmetry,
    eval_inverse,
    eval_inverse_lift,
    eval_lift,
    evaluate,
    jacobian,
    jacobian_method,
    torus_distance,
    torus_reduce,
)

coord = st.floats(-3, 3, allow_nan=False)
unit = st.floats(0, 1, allow_nan=False, exclude_max=True)
mus = st.floats(0.1, 10, allow_nan=False)


def standard_by_hand(mu, x, y):
    # Independent evaluation of the defining formula with the math module.
    k = mu / (2 * math.pi) * math.sin(2 * math.pi * x)
    return x + y + k, y + k


class TestEvaluate:
    def test_origin_is_fixed(self):
        assert np.allclose(evaluate(MapSpec.standard(1.0), [0.0, 0.0]), [0.0, 0.0])

    def test_quarter_point(self):
        got = evaluate(MapSpec.standard(1.0), [0.25, 0.0])
        want = np.mod(standard_by_hand(1.0, 0.25, 0.0), 1.0)
        assert np.allclose(got, want, atol=1e-15)
        assert np.allclose(got, [0.40915494, 0.15915494], atol=1e-8)

    def test_half_point_is_fixed(self):
        assert torus_distance(evaluate(MapSpec.standard(1.0), [0.5, 0.0]), [0.5, 0.0]) < 1e-15

    def test_reduction_maps_one_to_zero(self):
        # -1e-300 % 1 rounds to exactly 1.0 in floating point.
        assert np.array_equal(torus_reduce(np.array([1.0, -1e-300])), [0.0, 0.0])

    @given(coord, coord)
    def test_reduction_idempotent(self, x, y):
        z = torus_reduce(np.array([x, y]))
        assert np.array_equal(torus_reduce(z), z)
        assert np.all((z >= 0) & (z < 1))


class TestLift:
    def test_deck_shift_x(self):
        spec = MapSpec.standard(1.0)
        assert np.allclose(eval_lift(spec, [1.25, 0.0]), eval_lift(spec, [0.25, 0.0]) + [1, 0], atol=1e-14)

    def test_deck_shift_y(self):
        # (m, n) = (0, 1) shifts the image by (m + n, n) = (1, 1).
        spec = MapSpec.standard(1.0)
        assert np.allclose(eval_lift(spec, [0.25, 1.0]), eval_lift(spec, [0.25, 0.0]) + [1, 1], atol=1e-14)

    def test_cat_map_matrix_action(self):
        assert np.allclose(eval_lift(MapSpec.linear(2, 1, 1, 1), [1.0, 0.0]), [2.0, 1.0])

    def test_linear_needs_unit_determinant(self):
        with pytest.raises(MapError):
            MapSpec.linear(2, 0, 0, 1)

    @given(mus, coord, coord, st.integers(-3, 3), st.integers(-3, 3))
    def test_equivariance(self, mu, x, y, m, n):
        spec = MapSpec.standard(mu)
        lhs = eval_lift(spec, [x + m, y + n])
        rhs = eval_lift(spec, [x, y]) + [m + n, n]
        assert np.allclose(lhs, rhs, atol=1e-12)


class TestInverse:
    def test_inverse_formula(self):
        assert np.allclose(eval_inverse(MapSpec.standard(2.0), [0.5, 0.5]), [0.0, 0.5], atol=1e-15)

    def test_round_trip_quarter(self):
        spec = MapSpec.standard(1.0)
        assert torus_distance(eval_inverse(spec, evaluate(spec, [0.25, 0.0])), [0.25, 0.0]) < 1e-12

    @given(mus, coord, coord)
    def test_round_trip_standard(self, mu, x, y):
        spec = MapSpec.standard(mu)
        z = np.array([x, y])
        assert np.allclose(eval_inverse_lift(spec, eval_lift(spec, z)), z, atol=1e-12)

    def test_round_trip_hamiltonian(self, rng):
        spec = MapSpec.hamiltonian()
        z = rng.random((200, 2))
        assert np.abs(eval_inverse_lift(spec, eval_lift(spec, z)) - z).max() < 1e-8


class TestJacobian:
    def test_at_saddle(self):
        assert np.allclose(jacobian(MapSpec.standard(1.0), [0.0, 0.0]), [[2, 1], [1, 1]])

    def test_at_elliptic_point(self):
        assert np.allclose(jacobian(MapSpec.standard(1.0), [0.5, 0.0]), [[0, 1], [-1, 1]])

    def test_methods(self):
        assert jacobian_method(MapSpec.standard(1.0)) == "analytic"
        assert jacobian_method(MapSpec.hamiltonian()) == "variational"

    @given(mus, unit, unit)
    def test_matches_finite_difference(self, mu, x, y):
        spec = MapSpec.standard(mu)
        h = 1e-6
        z = np.array([x, y])
        fd = np.column_stack([(eval_lift(spec, z + e) - eval_lift(spec, z - e)) / (2 * h)
                              for e in (np.array([h, 0]), np.array([0, h]))])
        assert np.allclose(jacobian(spec, z), fd, atol=1e-6 * max(1.0, mu))

    def test_hamiltonian_jacobian_matches_finite_difference(self, rng):
        # Near the separatrices the stretching is large; a small step keeps
        # the central difference accurate to a relative 1e-5.
        spec = MapSpec.hamiltonian()
        h = 1e-7
        for z in rng.random((5, 2)):
            fd = np.column_stack([(eval_lift(spec, z + e) - eval_lift(spec, z - e)) / (2 * h)
                                  for e in (np.array([h, 0]), np.array([0, h]))])
            assert np.allclose(jacobian(spec, z), fd, rtol=1e-5, atol=1e-6)

    @pytest.mark.parametrize("spec", [MapSpec.standard(1.5), MapSpec.cat(), MapSpec.hamiltonian()],
                             ids=["standard", "cat", "hamiltonian"])
    def test_unit_determinant(self, spec, rng):
        J = jacobian(spec, rng.random((1000, 2)))
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        assert np.abs(det - 1).max() <= 1e-9


class TestSymmetry:
    def test_negate_origin(self):
        assert np.allclose(apply_symmetry(Symmetry.NEGATE, [0.0, 0.0]), [0.0, 0.0])

    def test_phi_half(self):
        assert np.allclose(apply_symmetry(Symmetry.CONJUGACY_PHI, [0.5, 0.0]), [0.0, 0.0])

    def test_negate_reduces(self):
        assert np.allclose(apply_symmetry(Symmetry.NEGATE, [0.25, 0.75]), [0.75, 0.25])

    @given(mus, unit, unit)
    def test_negate_equivariance(self, mu, x, y):
        spec = MapSpec.standard(mu)
        z = np.array([x, y])
        lhs = evaluate(spec, apply_symmetry(Symmetry.NEGATE, z))
        rhs = apply_symmetry(Symmetry.NEGATE, evaluate(spec, z))
        assert torus_distance(lhs, rhs) <= 1e-12

    @given(mus, unit, unit)
    def test_phi_conjugacy(self, mu, x, y):
        z = np.array([x, y])
        lhs = evaluate(MapSpec.standard(-mu), apply_symmetry(Symmetry.CONJUGACY_PHI, z))
        rhs = apply_symmetry(Symmetry.CONJUGACY_PHI, evaluate(MapSpec.standard(mu), z))
        assert torus_distance(lhs, rhs) <= 1e-12
