"""Area-preserving maps of the torus T^2 = R^2/Z^2 and their lifts.

Three families are supported:

* the standard map  f(x, y) = (x + y + k sin 2πx, y + k sin 2πx),  k = μ/2π,
* linear torus automorphisms given by an integer matrix of determinant one,
* the time-one map of the cellular Hamiltonian  H(X, Y) = sin(πX) sin(πY),
  rescaled by X = 2x so that it descends to R^2/Z^2.

Every evaluation routine accepts points as arrays of shape ``(2,)`` or
``(N, 2)`` and returns an array of the same shape.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


class MapKind(str, enum.Enum):
    STANDARD = "standard"
    LINEAR = "linear"
    HAMILTONIAN = "hamiltonian"


class Symmetry(str, enum.Enum):
    NEGATE = "negate"
    CONJUGACY_PHI = "conjugacy_phi"


class MapError(ValueError):
    pass


@dataclass(frozen=True)
class MapSpec:
    """A parameterized torus map.

    Use the constructors :meth:`standard`, :meth:`linear` and
    :meth:`hamiltonian` rather than filling the fields by hand.
    """

    kind: MapKind
    mu: float = 0.0
    matrix: tuple[int, int, int, int] = (1, 0, 0, 1)
    step_count: int = 20
    orientation: int = field(default=1, init=False)

    def __post_init__(self):
        if self.kind is MapKind.LINEAR:
            a, b, c, d = self.matrix
            if a * d - b * c != 1:
                raise MapError(f"linear map must have determinant 1, got {a * d - b * c}")
        if self.kind is MapKind.HAMILTONIAN and self.step_count < 1:
            raise MapError("step_count must be a positive integer")

    @classmethod
    def standard(cls, mu: float) -> "MapSpec":
        return cls(MapKind.STANDARD, mu=float(mu))

    @classmethod
    def linear(cls, a: int, b: int, c: int, d: int) -> "MapSpec":
        return cls(MapKind.LINEAR, matrix=(int(a), int(b), int(c), int(d)))

    @classmethod
    def cat(cls) -> "MapSpec":
        return cls.linear(2, 1, 1, 1)

    @classmethod
    def hamiltonian(cls, step_count: int = 20) -> "MapSpec":
        return cls(MapKind.HAMILTONIAN, step_count=int(step_count))

    @property
    def kick(self) -> float:
        return self.mu / TWO_PI

    def describe(self) -> dict:
        out = {"kind": self.kind.value}
        if self.kind is MapKind.STANDARD:
            out["mu"] = self.mu
        elif self.kind is MapKind.LINEAR:
            out["matrix"] = list(self.matrix)
        else:
            out["step_count"] = self.step_count
            out["integrator"] = "implicit_midpoint"
        return out

    # Deck transformation: F(z + (m, n)) = F(z) + deck_shift(m, n).
    def deck_shift(self, m, n):
        if self.kind is MapKind.STANDARD:
            return np.array([m + n, n], dtype=float)
        if self.kind is MapKind.LINEAR:
            a, b, c, d = self.matrix
            return np.array([a * m + b * n, c * m + d * n], dtype=float)
        return np.array([m, n], dtype=float)


# ---------------------------------------------------------------- torus utils

def torus_reduce(z):
    """Reduce coordinates into [0, 1); exact 1.0 (after rounding) maps to 0.0."""
    r = np.mod(np.asarray(z, dtype=float), 1.0)
    return np.where(r >= 1.0, 0.0, r)


def torus_delta(a, b):
    """Componentwise wrap-around difference a - b, in [-1/2, 1/2)."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return d - np.floor(d + 0.5)


def torus_distance(a, b):
    """Euclidean length of the wrap-around difference."""
    return np.linalg.norm(torus_delta(a, b), axis=-1)


# ------------------------------------------------------------- hamiltonian

_HALF_PI = 0.5 * np.pi


def _ham_field(z):
    # G(x, y) = sin(2πx) sin(2πy) / 4 is H(2x, 2y)/4, the rescaled Hamiltonian.
    sx, cx = np.sin(TWO_PI * z[..., 0]), np.cos(TWO_PI * z[..., 0])
    sy, cy = np.sin(TWO_PI * z[..., 1]), np.cos(TWO_PI * z[..., 1])
    return np.stack([_HALF_PI * sx * cy, -_HALF_PI * cx * sy], axis=-1)


def _ham_field_jac(z):
    sx, cx = np.sin(TWO_PI * z[..., 0]), np.cos(TWO_PI * z[..., 0])
    sy, cy = np.sin(TWO_PI * z[..., 1]), np.cos(TWO_PI * z[..., 1])
    k = _HALF_PI * TWO_PI
    J = np.empty(z.shape[:-1] + (2, 2))
    J[..., 0, 0] = k * cx * cy
    J[..., 0, 1] = -k * sx * sy
    J[..., 1, 0] = k * sx * sy
    J[..., 1, 1] = -k * cx * cy
    return J


def _midpoint_step(z, h, tol=1e-15, max_iter=100):
    # Solve z1 = z + h X((z + z1)/2) by fixed-point iteration; h·Lip(X) < 1.
    z1 = z + h * _ham_field(z)
    for _ in range(max_iter):
        z_new = z + h * _ham_field(0.5 * (z + z1))
        if np.max(np.abs(z_new - z1), initial=0.0) <= tol:
            return z_new
        z1 = z_new
    return z1


def _cayley(A):
    # (I - A)^{-1} (I + A) for a batch of 2x2 matrices, via the adjugate.
    a, b, c, d = 1.0 - A[..., 0, 0], -A[..., 0, 1], -A[..., 1, 0], 1.0 - A[..., 1, 1]
    det = a * d - b * c
    inv = np.stack([np.stack([d, -b], -1), np.stack([-c, a], -1)], -2) / det[..., None, None]
    return inv @ (np.eye(2) + A)


def _ham_flow(z, step_count, direction=1.0, with_jacobian=False):
    h = direction / step_count
    J_total = None
    if with_jacobian:
        J_total = np.broadcast_to(np.eye(2), z.shape[:-1] + (2, 2)).copy()
    for _ in range(step_count):
        z1 = _midpoint_step(z, h)
        if with_jacobian:
            # Derivative of the midpoint step: (I - A)^{-1}(I + A), A = h/2 DX(mid).
            A = 0.5 * h * _ham_field_jac(0.5 * (z + z1))
            J_total = _cayley(A) @ J_total
        z = z1
    return z, J_total


# ------------------------------------------------------------- evaluation

def _as_points(p):
    z = np.asarray(p, dtype=float)
    if z.shape[-1] != 2:
        raise MapError(f"points must have trailing dimension 2, got shape {z.shape}")
    return z


def eval_lift(spec: MapSpec, p):
    """Evaluate the continuous lift F on the universal cover R^2."""
    z = _as_points(p)
    x, y = z[..., 0], z[..., 1]
    if spec.kind is MapKind.STANDARD:
        s = spec.kick * np.sin(TWO_PI * x)
        return np.stack([x + y + s, y + s], axis=-1)
    if spec.kind is MapKind.LINEAR:
        a, b, c, d = spec.matrix
        return np.stack([a * x + b * y, c * x + d * y], axis=-1)
    out, _ = _ham_flow(z, spec.step_count)
    return out


def eval_inverse_lift(spec: MapSpec, w):
    """Exact inverse of the lift."""
    z = _as_points(w)
    w1, w2 = z[..., 0], z[..., 1]
    if spec.kind is MapKind.STANDARD:
        z1 = w1 - w2
        return np.stack([z1, w2 - spec.kick * np.sin(TWO_PI * z1)], axis=-1)
    if spec.kind is MapKind.LINEAR:
        a, b, c, d = spec.matrix
        return np.stack([d * w1 - b * w2, -c * w1 + a * w2], axis=-1)
    out, _ = _ham_flow(z, spec.step_count, direction=-1.0)
    return out


def evaluate(spec: MapSpec, p):
    """Evaluate f on the torus; result reduced into [0, 1)^2."""
    return torus_reduce(eval_lift(spec, p))


def eval_inverse(spec: MapSpec, w):
    return torus_reduce(eval_inverse_lift(spec, w))


def iterate_lift(spec: MapSpec, p, n: int):
    """Apply F^n (n may be negative)."""
    z = _as_points(p)
    step = eval_lift if n >= 0 else eval_inverse_lift
    for _ in range(abs(int(n))):
        z = step(spec, z)
    return z


def jacobian(spec: MapSpec, p):
    """Derivative matrix of f at p, shape ``(..., 2, 2)``.

    Analytic for the standard and linear maps; for the Hamiltonian map it is
    the exact derivative of the discrete integrator (variational equations).
    """
    z = _as_points(p)
    if spec.kind is MapKind.STANDARD:
        mc = spec.mu * np.cos(TWO_PI * z[..., 0])
        J = np.empty(z.shape[:-1] + (2, 2))
        J[..., 0, 0] = 1.0 + mc
        J[..., 0, 1] = 1.0
        J[..., 1, 0] = mc
        J[..., 1, 1] = 1.0
        return J
    if spec.kind is MapKind.LINEAR:
        a, b, c, d = spec.matrix
        return np.broadcast_to(np.array([[a, b], [c, d]], dtype=float), z.shape[:-1] + (2, 2)).copy()
    _, J = _ham_flow(z, spec.step_count, with_jacobian=True)
    return J


def jacobian_method(spec: MapSpec) -> str:
    return "variational" if spec.kind is MapKind.HAMILTONIAN else "analytic"


def apply_symmetry(op: Symmetry | str, p):
    """Negate: z -> -z.  ConjugacyPhi: (x, y) -> (1/2 - x, -y).  Both mod 1."""
    op = Symmetry(op)
    z = _as_points(p)
    if op is Symmetry.NEGATE:
        return torus_reduce(-z)
    return torus_reduce(np.stack([0.5 - z[..., 0], -z[..., 1]], axis=-1))


def negate_lift(p):
    return -_as_points(p)
