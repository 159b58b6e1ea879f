"""Polar lift of a map around an elliptic fixed point.

Near an elliptic fixed point q we work in the chart w = P^-1 (z - q), where
P is the real Jordan similarity with P^-1 J P = R(α), α = arccos(τ/2).  In
that chart the map is a rotation up to a remainder, and the polar lift
F(θ, r) = (θ', r') is well defined for small r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .fixed_points import Classification, FixedPointRecord
from .maps import MapSpec, eval_lift

EPS_SAMPLES = 4096
DEFAULT_CHART_RADIUS = 0.05
_STRICT = 1e-12


class NotElliptic(ValueError):
    pass


class RadiusEscape(RuntimeError):
    pass


class BadN(ValueError):
    pass


class NonMonotone(ValueError):
    pass


@dataclass(frozen=True)
class EllipticChart:
    """Linear chart at q in which df_q is the rotation by ``alpha``."""

    center: np.ndarray
    translation: np.ndarray
    alpha: float
    P: np.ndarray
    P_inv: np.ndarray
    radius: float = DEFAULT_CHART_RADIUS

    @property
    def orientation(self) -> int:
        """Sign of det P: +1 if the chart preserves the orientation of the torus."""
        return 1 if np.linalg.det(self.P) > 0 else -1

    def to_chart(self, z):
        return (np.asarray(z, dtype=float) - self.center) @ self.P_inv.T

    def from_chart(self, w):
        return self.center + np.asarray(w, dtype=float) @ self.P.T

    def map(self, spec: MapSpec, w):
        """The map written in chart coordinates."""
        return (eval_lift(spec, self.from_chart(w)) - self.translation - self.center) @ self.P_inv.T

    def rotation(self, w):
        c, s = math.cos(self.alpha), math.sin(self.alpha)
        w = np.asarray(w, dtype=float)
        return np.stack([c * w[..., 0] - s * w[..., 1], s * w[..., 0] + c * w[..., 1]], axis=-1)


def _conjugation(J):
    tau = float(np.trace(J))
    if abs(tau) >= 2.0:
        raise NotElliptic(f"trace {tau} is not in (-2, 2)")
    alpha = math.acos(tau / 2.0)
    lam = complex(math.cos(alpha), math.sin(alpha))
    a, b = J[0, 0] - lam, J[0, 1]
    c, d = J[1, 0], J[1, 1] - lam
    v = np.array([-b, a]) if abs(a) + abs(b) >= abs(c) + abs(d) else np.array([-d, c])
    P = np.column_stack([v.real, -v.imag]).astype(float)
    P /= math.sqrt(abs(np.linalg.det(P)))
    return alpha, P


def rotation_angle(spec: MapSpec, q: FixedPointRecord, chart_radius: float = DEFAULT_CHART_RADIUS):
    """Return (α, chart) with α = arccos(τ/2) in (0, π) and the conjugating chart.

    The chart matrix P is normalized to |det P| = 1.  When det P < 0 the
    chart reverses orientation; ``chart.orientation`` records this.
    """
    if q.classification is not Classification.ELLIPTIC:
        raise NotElliptic(f"fixed point is {q.classification.value}")
    J = np.asarray(q.jacobian, dtype=float)
    alpha, P = _conjugation(J)
    chart = EllipticChart(np.asarray(q.location, dtype=float), np.asarray(q.translation, dtype=float),
                          alpha, P, np.linalg.inv(P), chart_radius)
    return alpha, chart


def rigid_chart(alpha: float, radius: float = 1.0) -> EllipticChart:
    """Chart of the rigid rotation by ``alpha`` about the origin (for tests and demos)."""
    eye = np.eye(2)
    return EllipticChart(np.zeros(2), np.zeros(2), alpha, eye, eye, radius)


@dataclass(frozen=True)
class PolarLiftState:
    theta: float
    r: float
    chart: EllipticChart

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("radius must be positive")

    @property
    def alpha(self) -> float:
        return self.chart.alpha

    @property
    def center(self) -> np.ndarray:
        return self.chart.center

    def point(self) -> np.ndarray:
        return self.chart.from_chart(np.array([self.r * math.cos(self.theta), self.r * math.sin(self.theta)]))


def _chart_step(spec, chart, w):
    if spec is None:
        return chart.rotation(w)
    return chart.map(spec, w)


def _lift_angles(theta, w_new, alpha):
    # Unique lift of arg(w_new) within π of θ + α.
    target = theta + alpha
    phi = np.arctan2(w_new[..., 1], w_new[..., 0])
    return phi + 2.0 * np.pi * np.round((target - phi) / (2.0 * np.pi))


def lift_step(spec: MapSpec | None, state: PolarLiftState) -> PolarLiftState:
    """Apply the map in polar coordinates of the chart.

    ``spec=None`` applies the rigid rotation of the chart exactly.
    """
    if state.r >= state.chart.radius:
        raise RadiusEscape(f"r = {state.r} is outside the chart radius {state.chart.radius}")
    if spec is None:
        return replace(state, theta=state.theta + state.alpha)
    w = np.array([state.r * math.cos(state.theta), state.r * math.sin(state.theta)])
    w_new = _chart_step(spec, state.chart, w)
    r_new = float(np.hypot(*w_new))
    if r_new >= state.chart.radius:
        raise RadiusEscape(f"image radius {r_new} left the chart")
    theta_new = float(_lift_angles(state.theta, w_new, state.alpha))
    return PolarLiftState(theta_new, r_new, state.chart)


def _lift_batch(spec, chart, theta, r):
    if np.any(r >= chart.radius):
        raise RadiusEscape("arc left the chart")
    if spec is None:
        return theta + chart.alpha, r.copy()
    w = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)
    w_new = _chart_step(spec, chart, w)
    r_new = np.hypot(w_new[:, 0], w_new[:, 1])
    if np.any(r_new >= chart.radius):
        raise RadiusEscape("arc image left the chart")
    return _lift_angles(theta, w_new, chart.alpha), r_new


def measure_epsilon(spec: MapSpec | None, chart: EllipticChart, r: float, samples: int = EPS_SAMPLES) -> float:
    """max |f(w) - R(α) w| / |w| over ``samples`` points of the circle |w| = r."""
    phi = 2.0 * np.pi * np.arange(samples) / samples
    w = r * np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    if spec is None:
        return 0.0
    diff = chart.map(spec, w) - chart.rotation(w)
    return float(np.max(np.hypot(diff[:, 0], diff[:, 1])) / r)


def epsilon_bounds_hold(spec: MapSpec, chart: EllipticChart, r: float, samples: int = EPS_SAMPLES) -> dict:
    """Check |r' - r| ≤ ε r and |θ' - (θ + α)| ≤ (π/2) ε on a circle sample."""
    eps = measure_epsilon(spec, chart, r, samples)
    theta = 2.0 * np.pi * np.arange(samples) / samples
    theta_new, r_new = _lift_batch(spec, chart, theta, np.full(samples, r))
    dr = float(np.max(np.abs(r_new - r)) / r)
    dtheta = float(np.max(np.abs(theta_new - theta - chart.alpha)))
    return {
        "r": r,
        "epsilon": eps,
        "max_radial": dr,
        "max_angular": dtheta,
        "radial_ok": dr <= eps * (1 + 1e-12),
        "angular_ok": dtheta <= 0.5 * np.pi * eps * (1 + 1e-12),
    }


def _check_n(alpha, n):
    if not (n * alpha - 2 * np.pi > _STRICT and n * (2 * np.pi - alpha) - 2 * np.pi > _STRICT):
        raise BadN(f"n = {n} needs n*alpha > 2pi and n*(2pi - alpha) > 2pi for alpha = {alpha}")


def verify_epsilon_conditions(alpha: float, n: int, epsilon: float) -> bool:
    """The three smallness conditions on ε for a given α and n."""
    _check_n(alpha, n)
    half = 0.5 * np.pi * epsilon
    c1 = n * half < n * alpha - 2 * np.pi
    c2 = n * half < n * (2 * np.pi - alpha) - 2 * np.pi
    c3 = alpha + half < 2 * np.pi and alpha - half > 0
    return bool(c1 and c2 and c3)


def minimal_n(alpha: float) -> int:
    """Smallest n with nα > 2π and n(2π − α) > 2π."""
    if not 0 < alpha < 2 * np.pi:
        raise ValueError("alpha must lie in (0, 2pi)")
    n = 1
    while True:
        try:
            _check_n(alpha, n)
            return n
        except BadN:
            n += 1


@dataclass
class ArcTrapReport:
    alpha: float
    n: int
    r0: float
    arc: tuple[float, float]
    epsilon: float
    conditions_hold: bool
    consecutive: list[str]
    k: int | None
    turns: int
    closed: bool
    xi: np.ndarray | None = None
    winding_number: int | None = None
    orientation: int = 1

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "n": self.n,
            "r0": self.r0,
            "arc": list(self.arc),
            "epsilon": self.epsilon,
            "conditions_hold": self.conditions_hold,
            "consecutive": self.consecutive,
            "k": self.k,
            "turns": self.turns,
            "closed": self.closed,
            "winding_number": self.winding_number,
            "chart_orientation": self.orientation,
            "xi_vertices": None if self.xi is None else int(len(self.xi)),
        }


def _overlap(a, b):
    lo, hi = max(a[0], b[0]), min(a[1], b[1])
    return (lo, hi) if lo < hi else None


def _along(curve, t0, t1):
    # Sub-polyline of a curve (θ samples increasing) between angles t0 and t1.
    th, r = curve
    lo, hi = min(t0, t1), max(t0, t1)
    inner = (th > lo) & (th < hi)
    ts = np.concatenate([[lo], th[inner], [hi]])
    pts = np.column_stack([ts, np.interp(ts, th, r)])
    return pts if t0 <= t1 else pts[::-1]


def winding_number(points, center=(0.0, 0.0)) -> int:
    """Winding number of a closed polyline around ``center`` by angle summation."""
    d = np.asarray(points, dtype=float) - np.asarray(center, dtype=float)
    ang = np.arctan2(d[:, 1], d[:, 0])
    step = np.diff(np.concatenate([ang, ang[:1]]))
    step = (step + np.pi) % (2 * np.pi) - np.pi
    return int(round(step.sum() / (2 * np.pi)))


def arc_trap(spec: MapSpec | None, chart: EllipticChart, r0: float, arc=None, n: int | None = None,
             samples: int = 2048) -> ArcTrapReport:
    """Iterate the lifted arc β̂ = arc × {r0} and try to close the curve ξ.

    Two lifted curves are taken to meet when their angular ranges overlap;
    the path ξ̂ joins overlapping images by radial segments of length
    O(ε r0).  ``consecutive[j]`` is "same" if F^{j+1}β̂ overlaps F^jβ̂,
    "shifted" if it overlaps F^jβ̂ + 2π, and "none" otherwise.  The closing
    integer k ≥ 1 is the smallest with F^nβ̂ overlapping β̂ + 2kπ.  ``turns``
    is the number of full turns of the mean angle after n steps.
    """
    alpha = chart.alpha
    if n is None:
        n = minimal_n(alpha)
    _check_n(alpha, n)
    if arc is None:
        width = 1.5 * min(alpha, 2 * np.pi - alpha)
        arc = (0.0, width)
    a, b = float(arc[0]), float(arc[1])
    if not 0 < b - a < 2 * np.pi:
        raise ValueError("arc must have length in (0, 2pi)")
    if not 0 < r0 < chart.radius:
        raise RadiusEscape(f"r0 = {r0} is outside the chart radius {chart.radius}")
    eps = measure_epsilon(spec, chart, r0)

    theta = np.linspace(a, b, samples)
    r = np.full(samples, r0)
    curves = [(theta.copy(), r.copy())]
    for _ in range(n):
        theta, r = _lift_batch(spec, chart, theta, r)
        curves.append((theta.copy(), r.copy()))
    for th, _ in curves:
        if np.any(np.diff(th) <= 0):
            raise RuntimeError("lifted arc lost angular monotonicity; reduce r0")

    rng = [(float(th[0]), float(th[-1])) for th, _ in curves]
    consecutive = []
    for j in range(n):
        nxt = rng[j + 1]
        if _overlap(rng[j], nxt):
            consecutive.append("same")
        elif _overlap((rng[j][0] + 2 * np.pi, rng[j][1] + 2 * np.pi), nxt):
            consecutive.append("shifted")
        else:
            consecutive.append("none")
    k = None
    for kk in range(1, n + 1):
        if _overlap(rng[n], (a + 2 * kk * np.pi, b + 2 * kk * np.pi)):
            k = kk
            break
    mean_turn = float(np.mean(curves[n][0] - curves[0][0]))
    turns = int(math.floor(mean_turn / (2 * np.pi)))

    closed = k is not None and all(c == "same" for c in consecutive)
    xi = wn = None
    if closed:
        pieces = []
        end = _overlap(rng[n], (a + 2 * k * np.pi, b + 2 * k * np.pi))
        t_star = 0.5 * (end[0] + end[1])
        cur = t_star - 2 * k * np.pi
        for j in range(n):
            ov = _overlap(rng[j], rng[j + 1])
            t_j = 0.5 * (ov[0] + ov[1])
            pieces.append(_along(curves[j], cur, t_j))
            cur = t_j
        pieces.append(_along(curves[n], cur, t_star))
        polar = np.vstack(pieces)
        w = np.column_stack([polar[:, 1] * np.cos(polar[:, 0]), polar[:, 1] * np.sin(polar[:, 0])])
        wn = winding_number(w)
        xi = chart.from_chart(w)
    return ArcTrapReport(alpha, n, r0, (a, b), eps, verify_epsilon_conditions(alpha, n, eps), consecutive,
                         k, turns, closed, xi, wn, chart.orientation)


def write_xi_csv(report: ArcTrapReport, path) -> None:
    if report.xi is None:
        raise ValueError("no closed curve to write")
    np.savetxt(path, report.xi, delimiter=",", header="x,y", comments="", fmt="%.17g")


# ----------------------------------------------------------- rotation numbers

def _check_degree_one(lift, grid: int = 1024, tol: float = 1e-9):
    x = np.linspace(0.0, 1.0, grid + 1)
    y = np.array([lift(v) for v in x])
    if np.any(np.diff(y) < -tol):
        raise NonMonotone("sampled lift is not monotone")
    if abs(y[-1] - y[0] - 1.0) > 1e-6:
        raise NonMonotone("sampled lift does not satisfy F(x + 1) = F(x) + 1")


def rotation_number_report(lift, iterations: int = 1000, starts: int = 8) -> dict:
    """Birkhoff average (F^n(x) − x)/n, averaged over equally spaced starts."""
    if iterations < 1:
        raise ValueError("iterations must be positive")
    _check_degree_one(lift)
    x0 = np.arange(starts) / starts
    vals = []
    for x in x0:
        y = float(x)
        for _ in range(iterations):
            y = lift(y)
        vals.append((y - x) / iterations)
    vals = np.array(vals)
    return {
        "rotation_number": float(vals.mean()),
        "spread": float(vals.max() - vals.min()),
        "error_bound": 1.0 / iterations,
        "iterations": iterations,
        "starts": starts,
    }


def rotation_number(lift, iterations: int = 1000, starts: int = 8) -> float:
    """Rotation number of a degree-one circle-map lift (period 1)."""
    return rotation_number_report(lift, iterations, starts)["rotation_number"]
