import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from saddlescope.fixed_points import (
    Classification,
    NotFixedError,
    classify,
    classify_matrix,
    find_fixed_points,
    find_saddle,
)
from saddlescope.maps import MapSpec, eval_lift, jacobian


def quadratic_roots(trace, det):
    # Oracle independent of the classifier: numpy's companion-matrix roots.
    return np.sort_complex(np.roots([1.0, -trace, det]).astype(complex))


def locations(records):
    return [tuple(np.round(r.location, 9)) for r in records]


@pytest.mark.parametrize("mu", [0.5, 1, 2, 3, 5])
def test_two_fixed_points(mu):
    recs = find_fixed_points(MapSpec.standard(mu))
    assert locations(recs) == [(0.0, 0.0), (0.5, 0.0)]
    assert all(r.residual <= 1e-10 for r in recs)


def test_mu_ten_has_extra_fixed_points():
    # For mu > 2π the curve y = 0 meets sin 2πx = ±2π/mu away from 0 and 1/2.
    recs = find_fixed_points(MapSpec.standard(10.0))
    assert len(recs) == 6
    xs = sorted(float(r.location[0]) for r in recs)
    extra = [x for x in xs if min(abs(x), abs(x - 0.5)) > 1e-6]
    assert np.allclose(np.abs(np.sin(2 * np.pi * np.array(extra))), 2 * np.pi / 10.0, atol=1e-10)


@pytest.mark.parametrize("mu,cls", [(3.0, Classification.ELLIPTIC), (5.0, Classification.SADDLE_NEGATIVE)])
def test_q_classification(mu, cls):
    q = [r for r in find_fixed_points(MapSpec.standard(mu)) if np.allclose(r.location, [0.5, 0])]
    assert q[0].classification is cls


def test_saddle_eigenvalues_mu_one():
    rec = classify(MapSpec.standard(1.0), [0.0, 0.0])
    want = quadratic_roots(3.0, 1.0)
    assert rec.classification is Classification.SADDLE_POSITIVE
    assert abs(rec.eigenvalues[0] - want[1]) < 1e-10
    assert abs(rec.eigenvalues[1] - want[0]) < 1e-10


def test_degenerate_at_four():
    rec = classify(MapSpec.standard(4.0), [0.5, 0.0])
    assert rec.classification is Classification.DEGENERATE
    assert np.allclose([e.real for e in rec.eigenvalues], [-1, -1])


def test_elliptic_angle_mu_one():
    rec = classify(MapSpec.standard(1.0), [0.5, 0.0])
    assert rec.classification is Classification.ELLIPTIC
    assert abs(rec.eigenvalues[0] - np.exp(1j * np.pi / 3)) < 1e-12


def test_not_fixed():
    with pytest.raises(NotFixedError):
        classify(MapSpec.standard(1.0), [0.25, 0.1])


def test_resolution_guard():
    with pytest.raises(ValueError):
        find_fixed_points(MapSpec.standard(1.0), resolution=4)


def test_hamiltonian_fixed_points():
    recs = find_fixed_points(MapSpec.hamiltonian())
    classes = sorted(r.classification.value for r in recs)
    assert classes.count("SaddlePositive") == 4
    assert classes.count("Elliptic") == 4


@given(st.floats(0.05, 12.0))
def test_record_invariants(mu):
    spec = MapSpec.standard(mu)
    for r in find_fixed_points(spec):
        assert r.residual <= 1e-10
        prod = r.eigenvalues[0] * r.eigenvalues[1]
        assert abs(prod - 1) <= 1e-9
        tau = r.trace
        if r.classification.is_saddle:
            assert abs(tau) > 2
            lam = r.eigenvalues[0].real
            assert np.sign(lam) == np.sign(tau)
            J = jacobian(spec, r.location)
            v = r.unstable_direction
            assert np.linalg.norm(J @ v - lam * v) <= 1e-8 * abs(lam)
        elif r.classification is Classification.ELLIPTIC:
            assert abs(tau) < 2


@given(st.floats(0.05, 12.0))
def test_origin_is_positive_saddle(mu):
    assert find_saddle(MapSpec.standard(mu)).classification is Classification.SADDLE_POSITIVE


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_classify_matrix_by_trace(a, b):
    # Unimodular matrices [[1+ab, a], [b, 1]] cover all traces 2 + ab.
    J = np.array([[1 + a * b, a], [b, 1.0]])
    cls, eig, _, _ = classify_matrix(J)
    tau = 2 + a * b
    if abs(abs(tau) - 2) <= 1e-9:
        assert cls is Classification.DEGENERATE
    elif abs(tau) > 2:
        assert cls.is_saddle
    else:
        assert cls is Classification.ELLIPTIC


def test_translation_class():
    spec = MapSpec.standard(1.0)
    rec = classify(spec, [0.0, 0.0])
    assert np.allclose(eval_lift(spec, rec.location), rec.location + rec.translation)
