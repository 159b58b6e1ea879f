"""Fixed points of torus maps: Newton on the lift, spectral classification."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .maps import MapKind, MapSpec, eval_lift, jacobian, torus_distance, torus_reduce

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50
TOL_DEGENERATE = 1e-9
MERGE_DISTANCE = 1e-6
MAX_TRANSLATION = 2


class Classification(str, enum.Enum):
    SADDLE_POSITIVE = "SaddlePositive"
    SADDLE_NEGATIVE = "SaddleNegative"
    ELLIPTIC = "Elliptic"
    DEGENERATE = "Degenerate"

    @property
    def is_saddle(self) -> bool:
        return self in (Classification.SADDLE_POSITIVE, Classification.SADDLE_NEGATIVE)


class InternalError(RuntimeError):
    """Raised when a computation contradicts a proven fact about the map."""


class NotFixedError(ValueError):
    pass


@dataclass(frozen=True)
class FixedPointRecord:
    location: np.ndarray
    translation: tuple[int, int]
    classification: Classification
    eigenvalues: tuple[complex, complex]
    residual: float
    trace: float
    unstable_direction: np.ndarray | None = None
    stable_direction: np.ndarray | None = None
    jacobian: np.ndarray = field(default=None, repr=False)

    @property
    def unstable_eigenvalue(self) -> float:
        return float(self.eigenvalues[0].real)

    def to_dict(self) -> dict:
        def vec(v):
            return None if v is None else [float(v[0]), float(v[1])]

        return {
            "location": vec(self.location),
            "translation": list(self.translation),
            "classification": self.classification.value,
            "eigenvalues": [[float(e.real), float(e.imag)] for e in self.eigenvalues],
            "trace": float(self.trace),
            "residual": float(self.residual),
            "unstable_direction": vec(self.unstable_direction),
            "stable_direction": vec(self.stable_direction),
        }


def _canonical_direction(v):
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    # First nonzero component positive; branch signs are defined relative to this.
    lead = v[0] if abs(v[0]) > 1e-14 else v[1]
    return v if lead > 0 else -v


def _eigenvector(J, lam):
    a, b = J[0, 0] - lam, J[0, 1]
    c, d = J[1, 0], J[1, 1] - lam
    # Use the better-conditioned row of (J - lam I).
    if abs(a) + abs(b) >= abs(c) + abs(d):
        v = np.array([-b, a])
    else:
        v = np.array([-d, c])
    return _canonical_direction(v)


def classify_matrix(J) -> tuple[Classification, tuple[complex, complex], np.ndarray | None, np.ndarray | None]:
    J = np.asarray(J, dtype=float)
    tau = J[0, 0] + J[1, 1]
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    if abs(tau - 2.0) <= TOL_DEGENERATE or abs(tau + 2.0) <= TOL_DEGENERATE:
        lam = tau / 2.0
        return Classification.DEGENERATE, (complex(lam), complex(lam)), None, None
    disc = tau * tau - 4.0 * det
    if abs(tau) > 2.0:
        root = np.sqrt(disc)
        # Numerically stable pair: large root directly, small one from det.
        big = (tau + np.copysign(root, tau)) / 2.0
        small = det / big
        v_u = _eigenvector(J, big)
        v_s = _eigenvector(J, small)
        cls = Classification.SADDLE_POSITIVE if tau > 0 else Classification.SADDLE_NEGATIVE
        return cls, (complex(big), complex(small)), v_u, v_s
    im = np.sqrt(-disc) / 2.0
    return Classification.ELLIPTIC, (complex(tau / 2.0, im), complex(tau / 2.0, -im)), None, None


def classify(spec: MapSpec, p, translation=None, fixed_tol: float = 1e-8) -> FixedPointRecord:
    """Classify a fixed point from the eigenvalues of the Jacobian."""
    z = torus_reduce(np.asarray(p, dtype=float))
    disp = eval_lift(spec, z) - z
    if translation is None:
        translation = tuple(int(v) for v in np.round(disp))
    residual = float(np.linalg.norm(disp - np.asarray(translation, dtype=float)))
    if residual > fixed_tol:
        raise NotFixedError(f"point {z} is not fixed: residual {residual:.3e}")
    J = jacobian(spec, z)
    cls, eig, v_u, v_s = classify_matrix(J)
    return FixedPointRecord(
        location=z,
        translation=(int(translation[0]), int(translation[1])),
        classification=cls,
        eigenvalues=eig,
        residual=residual,
        trace=float(J[0, 0] + J[1, 1]),
        unstable_direction=v_u,
        stable_direction=v_s,
        jacobian=J,
    )


SEAM_SNAP = 1e-12


def _newton(spec, z, shift):
    """Damped Newton on G(z) = F(z) - z - shift for a batch of seeds."""
    z = z.copy()
    eye = np.eye(2)
    g = eval_lift(spec, z) - z - shift
    res = np.linalg.norm(g, axis=-1)
    active = np.ones(len(z), dtype=bool)
    for _ in range(NEWTON_MAX_ITER):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        A = jacobian(spec, z[idx]) - eye
        det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
        ok = np.abs(det) > 1e-14
        step = np.zeros((len(idx), 2))
        gi = g[idx]
        step[ok, 0] = -(A[ok, 1, 1] * gi[ok, 0] - A[ok, 0, 1] * gi[ok, 1]) / det[ok]
        step[ok, 1] = -(-A[ok, 1, 0] * gi[ok, 0] + A[ok, 0, 0] * gi[ok, 1]) / det[ok]
        scale = np.ones(len(idx))
        new_z = z[idx] + step
        new_g = eval_lift(spec, new_z) - new_z - shift[idx]
        new_res = np.linalg.norm(new_g, axis=-1)
        for _ in range(30):
            worse = new_res > res[idx]
            if not worse.any():
                break
            scale[worse] *= 0.5
            new_z[worse] = z[idx][worse] + scale[worse, None] * step[worse]
            new_g[worse] = eval_lift(spec, new_z[worse]) - new_z[worse] - shift[idx][worse]
            new_res[worse] = np.linalg.norm(new_g[worse], axis=-1)
        z[idx], g[idx], res[idx] = new_z, new_g, new_res
        step_norm = scale * np.linalg.norm(step, axis=-1)
        done = (step_norm <= NEWTON_TOL) | ~ok | (scale < 1e-6) | (np.abs(new_z).max(axis=-1) > 10)
        active[idx[done]] = False
    return z, res


def find_fixed_points(spec: MapSpec, resolution: int = 16) -> list[FixedPointRecord]:
    """Locate fixed points from a grid of seeds and classify them.

    Seeds that do not converge are dropped.  The list is deduplicated on the
    torus and sorted by location.
    """
    if resolution < 8:
        raise ValueError("seed resolution must be at least 8")
    g = np.arange(resolution) / resolution
    seeds = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    shift = np.round(eval_lift(spec, seeds) - seeds)
    keep = np.all(np.abs(shift) <= MAX_TRANSLATION, axis=-1)
    seeds, shift = seeds[keep], shift[keep]
    z, _ = _newton(spec, seeds, shift)

    records: list[FixedPointRecord] = []
    for zi in z:
        if not np.all(np.isfinite(zi)):
            continue
        loc = torus_reduce(zi)
        # Newton can land a rounding error below a seam; snap to the integer point.
        loc = np.where(np.abs(loc - np.round(loc)) < SEAM_SNAP, 0.0, loc)
        disp = eval_lift(spec, loc) - loc
        trans = np.round(disp)
        if np.linalg.norm(disp - trans) > 1e-10 or np.any(np.abs(trans) > MAX_TRANSLATION):
            continue
        if any(torus_distance(loc, r.location) < MERGE_DISTANCE for r in records):
            continue
        records.append(classify(spec, loc, translation=trans))
    # Snap locations that sit on the seam so (1 - eps, y) and (0, y) sort together.
    records.sort(key=lambda r: (round(float(r.location[0]), 9) % 1.0, round(float(r.location[1]), 9) % 1.0))
    if spec.kind is MapKind.STANDARD and spec.mu != 0.0 and not records:
        raise InternalError(f"no fixed points found for the standard map at mu={spec.mu}")
    return records


def find_saddle(spec: MapSpec, guess=(0.0, 0.0)) -> FixedPointRecord:
    """Polish a single fixed point near ``guess`` and classify it."""
    z0 = np.asarray(guess, dtype=float)[None, :]
    shift = np.round(eval_lift(spec, z0) - z0)
    z, _ = _newton(spec, z0, shift)
    return classify(spec, z[0], translation=shift[0])
