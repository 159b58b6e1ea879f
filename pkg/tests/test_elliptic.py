import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from saddlescope.elliptic import (
    BadN,
    NonMonotone,
    NotElliptic,
    PolarLiftState,
    RadiusEscape,
    arc_trap,
    epsilon_bounds_hold,
    lift_step,
    measure_epsilon,
    minimal_n,
    rigid_chart,
    rotation_angle,
    rotation_number,
    rotation_number_report,
    verify_epsilon_conditions,
    winding_number,
    write_xi_csv,
)
from saddlescope.fixed_points import find_saddle
from saddlescope.maps import MapSpec, eval_lift, jacobian

Q = (0.5, 0.0)


def chart_at(mu):
    spec = MapSpec.standard(mu)
    return spec, rotation_angle(spec, find_saddle(spec, Q))[1]


class TestRotationAngle:
    @pytest.mark.parametrize("mu", [1.0, 2.0, 3.99])
    def test_trace_formula(self, mu):
        chart = chart_at(mu)[1]
        alpha = chart.alpha
        assert alpha == pytest.approx(math.acos((2 - mu) / 2), abs=1e-10)
        assert 0 < alpha < 2 * math.pi
        assert np.allclose(chart.center, Q)

    def test_named_values(self):
        assert chart_at(1.0)[1].alpha == pytest.approx(math.pi / 3, abs=1e-12)
        assert chart_at(2.0)[1].alpha == pytest.approx(math.pi / 2, abs=1e-12)
        assert math.cos(chart_at(3.99)[1].alpha) == pytest.approx(-0.995, abs=1e-12)

    @pytest.mark.parametrize("mu", [0.5, 1.0, 3.0])
    def test_conjugation_is_rotation(self, mu):
        spec, chart = chart_at(mu)
        a = chart.alpha
        rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
        assert np.allclose(chart.P_inv @ jacobian(spec, np.asarray(Q)) @ chart.P, rot, atol=1e-12)
        assert abs(abs(np.linalg.det(chart.P)) - 1) <= 1e-12
        # The standard map's conjugating chart reverses orientation.
        assert chart.orientation == -1

    def test_saddle_rejected(self):
        spec = MapSpec.standard(1.0)
        with pytest.raises(NotElliptic):
            rotation_angle(spec, find_saddle(spec))


class TestLift:
    @given(st.floats(0.1, 6.0), st.floats(-10, 10), st.floats(1e-6, 0.9))
    def test_rigid_rotation_exact(self, alpha, theta, r):
        out = lift_step(None, PolarLiftState(theta, r, rigid_chart(alpha)))
        assert out.theta == pytest.approx(theta + alpha, abs=1e-12)
        assert out.r == pytest.approx(r, rel=1e-14)

    def test_standard_map_bounds(self):
        spec, chart = chart_at(1.0)
        rep = epsilon_bounds_hold(spec, chart, 1e-4)
        assert rep["radial_ok"] and rep["angular_ok"]
        eps = rep["epsilon"]
        for theta in np.linspace(0, 2 * np.pi, 37):
            out = lift_step(spec, PolarLiftState(theta, 1e-4, chart))
            assert abs(out.r - 1e-4) <= eps * 1e-4
            assert abs(out.theta - theta - chart.alpha) <= math.pi / 2 * eps

    def test_epsilon_decay(self):
        spec, chart = chart_at(1.0)
        assert measure_epsilon(spec, chart, 1e-3) / measure_epsilon(spec, chart, 1e-2) <= 0.2

    def test_epsilon_monotone_over_dyadic_radii(self):
        spec, chart = chart_at(1.0)
        eps = [measure_epsilon(spec, chart, 0.02 / 2 ** j) for j in range(8)]
        assert all(b <= a * 1.1 for a, b in zip(eps, eps[1:]))

    def test_epsilon_oracle(self):
        # Brute force in plane coordinates: |P^-1 (f(q + P w) - f(q)) - df w| / r, with df
        # taken from the Jacobian rather than the chart's rotation.
        spec, chart = chart_at(1.0)
        r = 1e-3
        phi = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
        w = r * np.column_stack([np.cos(phi), np.sin(phi)])
        q = np.asarray(Q)
        fz = np.array([eval_lift(spec, q + chart.P @ v) - eval_lift(spec, q) for v in w])
        df = jacobian(spec, q)
        oracle = np.max(np.linalg.norm((fz - w @ (df @ chart.P).T) @ chart.P_inv.T, axis=1)) / r
        assert measure_epsilon(spec, chart, r) == pytest.approx(oracle, rel=0.05)

    def test_radius_escape(self):
        spec, chart = chart_at(1.0)
        with pytest.raises(RadiusEscape):
            arc_trap(spec, chart, 2 * chart.radius)

    def test_nonpositive_radius(self):
        with pytest.raises(ValueError):
            PolarLiftState(0.0, 0.0, rigid_chart(1.0))


class TestConditions:
    def test_worked_example(self):
        assert verify_epsilon_conditions(math.pi / 3, 7, 0.01)

    def test_boundary_n(self):
        with pytest.raises(BadN):
            verify_epsilon_conditions(math.pi / 3, 6, 0.01)

    def test_large_epsilon_fails(self):
        # 7 (pi/2) eps < pi/3 fails once eps >= 2/21.
        assert not verify_epsilon_conditions(math.pi / 3, 7, 0.1)

    @given(st.floats(0.05, 2 * math.pi - 0.05))
    def test_zero_epsilon(self, alpha):
        n = minimal_n(alpha)
        assert n * alpha > 2 * math.pi and n * (2 * math.pi - alpha) > 2 * math.pi
        assert verify_epsilon_conditions(alpha, n, 0.0)

    def test_minimal_n(self):
        assert minimal_n(math.pi / 3) == 7
        assert minimal_n(math.pi / 2) == 5


class TestArcTrap:
    def test_rigid_narrow_arc(self):
        rep = arc_trap(None, rigid_chart(math.pi / 3), 0.1, arc=(0.0, 0.1), n=7)
        # Total rotation 7 pi / 3 passes one full turn, but the thin images never overlap.
        assert rep.turns == 1
        assert rep.consecutive == ["none"] * 7
        assert not rep.closed

    def test_rigid_single_step(self):
        with pytest.raises(BadN):
            arc_trap(None, rigid_chart(math.pi / 3), 0.1, arc=(0.0, 0.1), n=1)

    def test_rigid_wide_arc_closes(self):
        rep = arc_trap(None, rigid_chart(math.pi / 3), 0.1, n=7)
        assert rep.closed and rep.k == 1
        assert rep.winding_number == 1

    def test_standard_map_closes(self, tmp_path):
        spec, chart = chart_at(1.0)
        rep = arc_trap(spec, chart, 1e-3, n=7)
        assert rep.conditions_hold
        assert rep.closed and rep.k == 1
        assert rep.winding_number == 1
        assert abs(winding_number(rep.xi, chart.center)) == 1
        path = tmp_path / "xi.csv"
        write_xi_csv(rep, path)
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        assert data.shape == rep.xi.shape

    def test_winding_oracle(self):
        phi = np.linspace(0, 4 * np.pi, 200, endpoint=False)
        assert winding_number(np.column_stack([np.cos(phi), np.sin(phi)])) == 2
        assert winding_number(np.column_stack([np.cos(phi), np.sin(phi)]) + 3) == 0


class TestRotationNumber:
    @pytest.mark.parametrize("alpha", [0.3, 1.0, 2.5])
    def test_rigid(self, alpha):
        rho = rotation_number(lambda x: x + alpha / (2 * math.pi), iterations=500)
        assert abs(rho - alpha / (2 * math.pi)) <= 1 / 500

    def test_sine_lift(self):
        rep = rotation_number_report(lambda x: x + 0.3 + 0.05 * math.sin(2 * math.pi * x), iterations=2000)
        assert 0.25 < rep["rotation_number"] < 0.35
        assert rep["spread"] <= 2 / 2000

    def test_identity(self):
        assert rotation_number(lambda x: x) == 0.0

    def test_non_monotone(self):
        with pytest.raises(NonMonotone):
            rotation_number(lambda x: x + 0.3 * math.sin(2 * math.pi * x))
        with pytest.raises(NonMonotone):
            rotation_number(lambda x: 2 * x)

    @given(st.floats(-0.1, 0.1), st.floats(0.0, 1.0))
    def test_conjugacy_invariance(self, c, phase):
        def h(x):
            return x + c / (2 * math.pi) * math.sin(2 * math.pi * (x + phase))

        def h_inv(y):
            return brentq(lambda x: h(x) - y, y - 0.1, y + 0.1, xtol=1e-14)

        def f(x):
            return x + 0.21 + 0.04 * math.sin(2 * math.pi * x)

        n = 300
        rho_f = rotation_number(f, iterations=n, starts=4)
        rho_g = rotation_number(lambda x: h(f(h_inv(x))), iterations=n, starts=4)
        assert abs(rho_f - rho_g) <= 2 / n
